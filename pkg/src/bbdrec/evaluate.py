"""Reverse-diffusion inference, top-K retrieval, metrics, slicing, timing."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import torch

from .model import BBDRecModel
from .schedule import BridgeSchedule

__all__ = ["EvalReport", "recommend", "evaluate", "rank_targets",
           "time_inference", "hit_rate", "ndcg"]


def hit_rate(ranks: np.ndarray, k: int) -> float:
    """Fraction of samples whose target ranks in the top k."""
    return float(np.mean(ranks <= k))


def ndcg(ranks: np.ndarray, k: int) -> float:
    """Mean of 1/log2(rank + 1) for targets ranked within k, else 0."""
    gains = np.where(ranks <= k, 1.0 / np.log2(ranks + 1.0), 0.0)
    return float(np.mean(gains))


@dataclass
class EvalReport:
    """Metric values overall and per slice, plus inference timing."""
    metrics: dict = field(default_factory=dict)          # "hr@10" -> value
    slices: dict = field(default_factory=dict)           # slice -> {"hr@10": ...}
    slice_counts: dict = field(default_factory=dict)
    n_samples: int = 0
    total_seconds: float = 0.0
    seconds_per_sample: float = 0.0

    def lines(self) -> list[str]:
        out = []
        for name in sorted(self.metrics):
            metric, k = name.split("@")
            out.append(f"{metric}\toverall\t{k}\t{self.metrics[name]:.6f}")
        for slc in sorted(self.slices):
            for name in sorted(self.slices[slc]):
                metric, k = name.split("@")
                out.append(f"{metric}\t{slc}\t{k}\t{self.slices[slc][name]:.6f}")
        out.append(f"n_samples\toverall\t-\t{self.n_samples}")
        out.append(f"total_seconds\toverall\t-\t{self.total_seconds:.6f}")
        out.append(f"seconds_per_sample\toverall\t-\t{self.seconds_per_sample:.9f}")
        return out

    def to_text(self) -> str:
        """Stable tab-separated table: metric, slice, K, value."""
        return "\n".join(["metric\tslice\tK\tvalue"] + self.lines()) + "\n"

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_text())


def _histories_tensor(samples, device=None) -> torch.Tensor:
    return torch.as_tensor(np.array([s.history for s in samples], dtype=np.int64),
                           device=device)


def _scores(model: BBDRecModel, schedule: BridgeSchedule, histories: torch.Tensor,
            generator=None, deterministic=False, retrieval="diffusion") -> torch.Tensor:
    """Retrieval scores over the vocabulary for a batch of histories."""
    reps = model.encode(histories)
    if retrieval == "diffusion":
        reps = model.generate_batch(schedule, reps, generator=generator,
                                    deterministic=deterministic)
    elif retrieval != "encoder":
        raise ValueError(f"unknown retrieval mode: {retrieval!r}")
    return model.item_logits(reps)


@torch.no_grad()
def recommend(model: BBDRecModel, schedule: BridgeSchedule, history, k: int,
              generator=None, deterministic=False, retrieval="diffusion"):
    """Top-k item ids for one history, ties broken by ascending item id."""
    model.eval()
    history = torch.as_tensor(np.asarray(history, dtype=np.int64))
    if history.dim() == 1:
        history = history[None]
    if bool(history.gt(model.n_items).any()) or bool(history.lt(0).any()):
        raise ValueError("history contains unknown item ids")
    scores = _scores(model, schedule, history, generator, deterministic,
                     retrieval)[0].double().numpy()
    ids = np.arange(1, model.n_items + 1)
    order = np.lexsort((ids, -scores))
    top = ids[order[:k]]
    return top.tolist(), scores[order[:k]].tolist()


@torch.no_grad()
def rank_targets(model: BBDRecModel, schedule: BridgeSchedule, samples,
                 generator=None, deterministic=False, retrieval="diffusion",
                 batch_size: int = 1024) -> np.ndarray:
    """1-based rank of each sample's target over the full vocabulary.

    Equal scores are broken by ascending item id, so the rank of item j is
    1 + #{better scores} + #{equal scores with smaller id}.
    """
    model.eval()
    ranks = []
    for start in range(0, len(samples), batch_size):
        chunk = samples[start:start + batch_size]
        histories = _histories_tensor(chunk)
        targets = torch.as_tensor([s.target for s in chunk])
        scores = _scores(model, schedule, histories, generator, deterministic,
                         retrieval)
        target_scores = scores.gather(1, (targets - 1)[:, None])
        better = (scores > target_scores).sum(dim=1)
        ids = torch.arange(1, model.n_items + 1)
        tied_before = ((scores == target_scores) & (ids[None, :] < targets[:, None])).sum(dim=1)
        ranks.append((better + tied_before + 1).numpy())
    return np.concatenate(ranks)


def _popular_item_set(popularity: np.ndarray) -> set:
    """Top 20% most frequently interacted items (by training-split counts)."""
    counts = popularity[1:]
    n_top = max(1, int(np.ceil(0.2 * len(counts))))
    order = np.lexsort((np.arange(1, len(popularity)), -counts))
    return set((order[:n_top] + 1).tolist())


@torch.no_grad()
def evaluate(model: BBDRecModel, schedule: BridgeSchedule, samples,
             ks=(10, 20), popularity: np.ndarray | None = None,
             generator=None, deterministic=False, retrieval="diffusion",
             batch_size: int = 1024, with_slices: bool = True) -> EvalReport:
    """Full-vocabulary ranking evaluation with optional slicing.

    No seen-item exclusion is applied: every non-padding item is a
    candidate.  Popularity slices require training-split counts.
    """
    if not samples:
        raise ValueError("empty evaluation split")
    start = time.perf_counter()
    ranks = rank_targets(model, schedule, samples, generator, deterministic,
                         retrieval, batch_size)
    elapsed = time.perf_counter() - start

    report = EvalReport(n_samples=len(samples), total_seconds=elapsed,
                        seconds_per_sample=elapsed / len(samples))
    for k in ks:
        report.metrics[f"hr@{k}"] = hit_rate(ranks, k)
        report.metrics[f"ndcg@{k}"] = ndcg(ranks, k)

    if with_slices:
        masks = {}
        lengths = np.array([sum(1 for i in s.history if i) for s in samples])
        masks["short_history"] = lengths <= 5
        masks["long_history"] = lengths > 5
        if popularity is not None:
            popular = _popular_item_set(popularity)
            is_pop = np.array([s.target in popular for s in samples])
            masks["popular"] = is_pop
            masks["long_tail"] = ~is_pop
        for name, mask in masks.items():
            report.slice_counts[name] = int(mask.sum())
            if not mask.any():
                continue
            sliced = ranks[mask]
            report.slices[name] = {}
            for k in ks:
                report.slices[name][f"hr@{k}"] = hit_rate(sliced, k)
                report.slices[name][f"ndcg@{k}"] = ndcg(sliced, k)
    return report


@torch.no_grad()
def time_inference(model: BBDRecModel, schedule: BridgeSchedule, samples,
                   repeats: int = 5, batch_size: int = 1024,
                   generator_seed: int = 0) -> dict:
    """Mean wall-clock seconds over ``repeats`` full passes of the split.

    Reports the encoder-only time (history representation alone) and the
    full-diffusion time (encoder plus the reverse chain) separately.
    """
    model.eval()
    histories = _histories_tensor(samples)
    encoder_times, full_times = [], []
    for rep in range(repeats):
        gen = torch.Generator().manual_seed(generator_seed + rep)
        start = time.perf_counter()
        for s0 in range(0, len(samples), batch_size):
            model.encode(histories[s0:s0 + batch_size])
        encoder_times.append(time.perf_counter() - start)

        start = time.perf_counter()
        for s0 in range(0, len(samples), batch_size):
            reps_ = model.encode(histories[s0:s0 + batch_size])
            model.generate_batch(schedule, reps_, generator=gen)
        full_times.append(time.perf_counter() - start)
    return {
        "encoder_seconds": float(np.mean(encoder_times)),
        "full_seconds": float(np.mean(full_times)),
        "repeats": repeats,
        "n_samples": len(samples),
    }
