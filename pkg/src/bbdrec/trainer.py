"""Multi-task training loop: batching, AdamW updates, early stopping,
checkpointing, structured training logs."""

from __future__ import annotations

import copy
import io
from dataclasses import asdict, dataclass, field, fields

import numpy as np
import torch

from .data import DatasetSplits
from .evaluate import evaluate
from .model import BBDRecModel
from .schedule import BridgeSchedule, build_schedule

__all__ = ["TrainConfig", "ModelCheckpoint", "TrainState", "train_step",
           "train", "build_model"]


class TrainingDivergedError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    """All hyper-parameters, loss weights, and ablation switches."""
    T: int
    m: float
    d: int = 64
    L: int = 10
    lambda1: float = 1.0
    lambda2: float = 1.0
    lr: float = 1e-3
    weight_decay: float = 0.0
    batch_size: int = 1024
    max_epochs: int = 200
    patience: int = 20
    seed: int = 0
    dropout: float = 0.1
    encoder_mode: str = "transformer"          # "transformer" | "mean_pool"
    conditional_denoiser: bool = False
    stop_grad_target: bool = False
    retrieval: str = "diffusion"               # "diffusion" | "encoder"
    selection_metric: str = "ndcg@20"

    def __post_init__(self):
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ValueError("loss weights must be nonnegative")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        metric, _, k = self.selection_metric.partition("@")
        if metric not in ("hr", "ndcg") or not k.isdigit():
            raise ValueError(f"bad selection metric {self.selection_metric!r}")

    def selection_k(self) -> int:
        return int(self.selection_metric.partition("@")[2])


ABLATION_PRESETS = {
    "w_con": {"conditional_denoiser": True},
    "wo_bb": {"lambda1": 0.0, "retrieval": "encoder"},
    "wo_enc": {"encoder_mode": "mean_pool"},
    "wo_ldiff": {"lambda1": 0.0},
    "wo_lrec": {"lambda2": 0.0},
}


def apply_ablation(config: TrainConfig, name: str) -> TrainConfig:
    if name not in ABLATION_PRESETS:
        raise ValueError(f"unknown ablation {name!r}; known: {sorted(ABLATION_PRESETS)}")
    return TrainConfig(**{**asdict(config), **ABLATION_PRESETS[name]})


def config_from_dict(data: dict) -> TrainConfig:
    """Strict construction from a flat key-value document.

    Every problem (unknown keys, missing required keys) is reported in one
    error rather than failing on the first.
    """
    import dataclasses
    known = {f.name for f in fields(TrainConfig)}
    required = {f.name for f in fields(TrainConfig)
                if f.default is dataclasses.MISSING
                and f.default_factory is dataclasses.MISSING}
    problems = [f"unknown config key: {k}" for k in sorted(set(data) - known)]
    problems += [f"missing required config key: {k}"
                 for k in sorted(required - set(data))]
    if problems:
        raise ValueError("; ".join(problems))
    return TrainConfig(**data)


@dataclass
class ModelCheckpoint:
    """Serializable training result; parameter round-trips are bit-exact.

    Saved with ``torch.save`` as a dict with keys: model_state,
    optimizer_state, config, n_items, epoch, val_history.
    """
    model_state: dict
    optimizer_state: dict
    config: TrainConfig
    n_items: int
    epoch: int
    val_history: list = field(default_factory=list)

    def save(self, path):
        torch.save({
            "model_state": self.model_state,
            "optimizer_state": self.optimizer_state,
            "config": asdict(self.config),
            "n_items": self.n_items,
            "epoch": self.epoch,
            "val_history": self.val_history,
        }, path)

    @classmethod
    def load(cls, path) -> "ModelCheckpoint":
        blob = torch.load(path, weights_only=False)
        return cls(blob["model_state"], blob["optimizer_state"],
                   TrainConfig(**blob["config"]), blob["n_items"],
                   blob["epoch"], blob["val_history"])

    def build_model(self) -> BBDRecModel:
        model = build_model(self.config, self.n_items)
        model.load_state_dict(self.model_state)
        model.eval()
        return model

    def schedule(self) -> BridgeSchedule:
        return build_schedule(self.config.T, self.config.m)


def build_model(config: TrainConfig, n_items: int) -> BBDRecModel:
    torch.manual_seed(config.seed)
    return BBDRecModel(
        n_items, d=config.d, max_len=config.L,
        encoder_mode=config.encoder_mode, dropout=config.dropout,
        conditional_denoiser=config.conditional_denoiser,
    )


@dataclass
class TrainState:
    model: BBDRecModel
    optimizer: torch.optim.Optimizer
    schedule: BridgeSchedule
    config: TrainConfig


def make_state(config: TrainConfig, n_items: int) -> TrainState:
    model = build_model(config, n_items)
    optimizer = torch.optim.AdamW(model.parameters(), lr=config.lr,
                                  betas=(0.9, 0.999), eps=1e-8,
                                  weight_decay=config.weight_decay)
    return TrainState(model, optimizer, build_schedule(config.T, config.m), config)


def batch_tensors(samples) -> tuple[torch.Tensor, torch.Tensor]:
    histories = torch.as_tensor(
        np.array([s.history for s in samples], dtype=np.int64))
    targets = torch.as_tensor(
        np.array([s.target for s in samples], dtype=np.int64))
    return histories, targets


def train_step(state: TrainState, batch, rng: np.random.Generator) -> dict:
    """One optimizer step on a batch of samples.

    Draws one diffusion step (uniform on [1, T]) and one standard-normal
    noise vector per sample, forms the combined loss, and applies a single
    AdamW update.  Raises if the loss goes non-finite.
    """
    if len(batch) == 0:
        raise ValueError("empty batch")
    cfg = state.config
    histories, targets = batch_tensors(batch)
    t_draws = torch.as_tensor(rng.integers(1, cfg.T + 1, size=len(batch)))
    eps = torch.as_tensor(rng.standard_normal((len(batch), cfg.d)),
                          dtype=torch.get_default_dtype())
    state.model.train()
    loss, l_diff, l_rec = state.model.training_loss(
        state.schedule, histories, targets, t_draws, eps,
        cfg.lambda1, cfg.lambda2, cfg.stop_grad_target)
    if not torch.isfinite(loss):
        raise TrainingDivergedError(
            f"non-finite loss (diff={l_diff.item()}, rec={l_rec.item()})")
    state.optimizer.zero_grad()
    loss.backward()
    state.optimizer.step()
    return {"loss": loss.item(), "l_diff": l_diff.item(), "l_rec": l_rec.item()}


def _validation_metric(state: TrainState, samples, epoch: int) -> float:
    # Fixed generator per run: reusing the same reverse-process noise every
    # epoch keeps the selection metric comparable across epochs.
    cfg = state.config
    gen = torch.Generator().manual_seed(cfg.seed * 100003 + 1)
    k = cfg.selection_k()
    report = evaluate(state.model, state.schedule, samples, ks=(k,),
                      generator=gen, retrieval=cfg.retrieval,
                      batch_size=cfg.batch_size, with_slices=False)
    return report.metrics[cfg.selection_metric]


def train(config: TrainConfig, splits: DatasetSplits,
          log_stream: io.TextIOBase | None = None) -> ModelCheckpoint:
    """Train until the validation metric stalls for ``patience`` epochs.

    Returns the checkpoint of the best-validation epoch.  Training-log
    lines (epoch, losses, validation metric) are appended to
    ``log_stream`` when given.
    """
    if not splits.train or not splits.validation:
        raise ValueError("empty train or validation split")
    cfg = config
    state = make_state(cfg, splits.n_items)
    rng = np.random.default_rng(cfg.seed)

    best_metric = -np.inf
    best_state, best_epoch = None, -1
    val_history = []
    stall = 0
    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(len(splits.train))
        losses = []
        for start in range(0, len(order), cfg.batch_size):
            batch = [splits.train[i] for i in order[start:start + cfg.batch_size]]
            losses.append(train_step(state, batch, rng))
        metric = _validation_metric(state, splits.validation, epoch)
        val_history.append(metric)
        if log_stream is not None:
            mean = {k: float(np.mean([l[k] for l in losses])) for k in losses[0]}
            log_stream.write(
                f"epoch={epoch} loss={mean['loss']:.6f} l_diff={mean['l_diff']:.6f} "
                f"l_rec={mean['l_rec']:.6f} {cfg.selection_metric}={metric:.6f}\n")
        if metric > best_metric:
            best_metric = metric
            best_state = copy.deepcopy(state.model.state_dict())
            best_epoch = epoch
            stall = 0
        else:
            stall += 1
            if stall >= cfg.patience:
                break

    return ModelCheckpoint(best_state, state.optimizer.state_dict(), cfg,
                           splits.n_items, best_epoch, val_history)
