"""Command-line interface: train, eval, recommend, verify, synth, sweep."""

from __future__ import annotations

import logging
import os
import sys
from dataclasses import asdict
from pathlib import Path

import click
import numpy as np
import torch
import yaml

from . import data as data_mod
from .evaluate import evaluate as run_evaluate
from .evaluate import recommend as run_recommend
from .evaluate import time_inference
from .trainer import (ABLATION_PRESETS, ModelCheckpoint, TrainConfig,
                      apply_ablation, config_from_dict, train)
from .verify import run_suite

log = logging.getLogger("bbdrec")
logging.basicConfig(level=os.environ.get("BBDREC_LOG_LEVEL", "INFO"),
                    format="%(message)s")


def _load_config(path: str, seed: int | None) -> TrainConfig:
    raw = yaml.safe_load(Path(path).read_text())
    if not isinstance(raw, dict):
        raise click.ClickException(f"{path}: config must be a flat key-value mapping")
    try:
        cfg = config_from_dict(raw)
    except (ValueError, TypeError) as exc:
        raise click.ClickException(f"{path}: {exc}")
    if seed is not None:
        cfg.seed = seed
    return cfg


def _load_dataset(path: str, L: int) -> data_mod.DatasetSplits:
    log_ = data_mod.load_csv(path)
    log_ = data_mod.preprocess(log_)
    samples = data_mod.build_samples(log_, L=L)
    splits = data_mod.split_chronological(samples)
    splits.item_map = dict(log_.item_map)
    return splits


@click.group()
def main():
    """Brownian-bridge diffusion sequential recommender."""


@main.command("train")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--data", "data_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--seed", type=int, default=None, help="Override the config seed.")
@click.option("--ablation", type=click.Choice(sorted(ABLATION_PRESETS)), default=None)
def train_cmd(config_path, data_path, out_dir, seed, ablation):
    """Run the full pipeline: load, preprocess, split, train, checkpoint."""
    cfg = _load_config(config_path, seed)
    if ablation:
        cfg = apply_ablation(cfg, ablation)
    splits = _load_dataset(data_path, cfg.L)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with (out / "train.log").open("a", encoding="utf-8") as log_stream:
        ckpt = train(cfg, splits, log_stream=log_stream)
    ckpt.save(out / "checkpoint.pt")
    best = ckpt.val_history[ckpt.epoch - 1]
    click.echo(f"best epoch {ckpt.epoch}: {cfg.selection_metric}={best:.6f}")
    click.echo(f"checkpoint written to {out / 'checkpoint.pt'}")


@main.command("eval")
@click.option("--checkpoint", "ckpt_path", required=True, type=click.Path(exists=True))
@click.option("--data", "data_path", required=True, type=click.Path(exists=True))
@click.option("--ks", default="10,20", help="Comma-separated cutoffs.")
@click.option("--out", "out_path", type=click.Path(), default=None)
@click.option("--deterministic", is_flag=True, help="Zero-noise reverse process.")
@click.option("--timing/--no-timing", default=False)
def eval_cmd(ckpt_path, data_path, ks, out_path, deterministic, timing):
    """Evaluate a checkpoint on the test split of a dataset."""
    ckpt = ModelCheckpoint.load(ckpt_path)
    splits = _load_dataset(data_path, ckpt.config.L)
    if not splits.test:
        raise click.ClickException("empty test split")
    model, schedule = ckpt.build_model(), ckpt.schedule()
    gen = torch.Generator().manual_seed(ckpt.config.seed)
    report = run_evaluate(model, schedule, splits.test,
                          ks=tuple(int(k) for k in ks.split(",")),
                          popularity=splits.popularity, generator=gen,
                          deterministic=deterministic,
                          retrieval=ckpt.config.retrieval)
    if timing:
        times = time_inference(model, schedule, splits.test)
        report.metrics["encoder_seconds@0"] = times["encoder_seconds"]
        report.metrics["full_seconds@0"] = times["full_seconds"]
    text = report.to_text()
    if out_path:
        Path(out_path).write_text(text)
    click.echo(text, nl=False)


@main.command("recommend")
@click.option("--checkpoint", "ckpt_path", required=True, type=click.Path(exists=True))
@click.option("--history", required=True, help='Comma-separated item ids, e.g. "3,17,42".')
@click.option("--k", default=10, type=int)
@click.option("--deterministic", is_flag=True)
@click.option("--seed", type=int, default=0)
def recommend_cmd(ckpt_path, history, k, deterministic, seed):
    """Print the top-K items for one history."""
    ckpt = ModelCheckpoint.load(ckpt_path)
    model, schedule = ckpt.build_model(), ckpt.schedule()
    try:
        ids = [int(x) for x in history.split(",") if x.strip()]
    except ValueError:
        raise click.ClickException(f"malformed history: {history!r}")
    if not ids:
        raise click.ClickException("history must contain at least one item id")
    bad = [i for i in ids if not 1 <= i <= ckpt.n_items]
    if bad:
        raise click.ClickException(f"unknown item ids: {bad}")
    L = ckpt.config.L
    padded = [0] * (L - len(ids)) + ids[-L:]
    gen = torch.Generator().manual_seed(seed)
    top, scores = run_recommend(model, schedule, padded, k, generator=gen,
                                deterministic=deterministic,
                                retrieval=ckpt.config.retrieval)
    for item, score in zip(top, scores):
        click.echo(f"{item}\t{score:.6f}")


@main.command("verify")
@click.option("--suite", default="all",
              type=click.Choice(["all", "schedule", "bayes", "moments", "grad"]))
@click.option("--seed", type=int, default=0)
@click.option("--out", "out_path", type=click.Path(), default=None)
def verify_cmd(suite, seed, out_path):
    """Run the brute-force verification oracles; exit 1 on any failure."""
    reports = run_suite(suite, seed=seed)
    lines = []
    for report in reports:
        lines.extend(report.lines())
    text = "\n".join(lines) + "\n"
    if out_path:
        Path(out_path).write_text(text)
    click.echo(text, nl=False)
    if not all(r.passed for r in reports):
        sys.exit(1)


@main.command("synth")
@click.option("--n-items", default=100, type=int)
@click.option("--p-noise", default=0.0, type=float)
@click.option("--n-users", default=2000, type=int)
@click.option("--len-min", default=15, type=int)
@click.option("--len-max", default=25, type=int)
@click.option("--seed", default=0, type=int)
@click.option("--out", "out_path", required=True, type=click.Path())
def synth_cmd(n_items, p_noise, n_users, len_min, len_max, seed, out_path):
    """Generate a synthetic cyclic-walk interaction log as CSV."""
    try:
        log_ = data_mod.synth_markov(n_items, p_noise, n_users,
                                     (len_min, len_max), seed)
    except ValueError as exc:
        raise click.ClickException(str(exc))
    data_mod.save_log_csv(log_, out_path, metadata={
        "generator": "synth_markov", "n_items": n_items, "p_noise": p_noise,
        "n_users": n_users, "len_range": [len_min, len_max], "seed": seed,
    })
    click.echo(f"wrote {len(log_.records)} interactions to {out_path}")


@main.command("sweep")
@click.option("--param", required=True, type=click.Choice(["m", "T"]))
@click.option("--values", required=True, help="Comma-separated values.")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--data", "data_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", type=click.Path(), default=None)
def sweep_cmd(param, values, config_path, data_path, out_path):
    """Train one model per hyper-parameter value and tabulate test metrics."""
    cfg = _load_config(config_path, None)
    cast = int if param == "T" else float
    try:
        parsed = sorted({cast(v) for v in values.split(",") if v.strip()})
    except ValueError:
        raise click.ClickException(f"malformed values list: {values!r}")
    if not parsed:
        raise click.ClickException("no values given")
    splits = _load_dataset(data_path, cfg.L)
    rows = [f"{param}\thr@10\tndcg@10\thr@20\tndcg@20"]
    for value in parsed:
        run_cfg = TrainConfig(**{**asdict(cfg), param: value})
        ckpt = train(run_cfg, splits)
        gen = torch.Generator().manual_seed(run_cfg.seed)
        report = run_evaluate(ckpt.build_model(), ckpt.schedule(), splits.test,
                              ks=(10, 20), generator=gen, with_slices=False,
                              retrieval=run_cfg.retrieval)
        m_ = report.metrics
        rows.append(f"{value}\t{m_['hr@10']:.6f}\t{m_['ndcg@10']:.6f}"
                    f"\t{m_['hr@20']:.6f}\t{m_['ndcg@20']:.6f}")
    text = "\n".join(rows) + "\n"
    if out_path:
        Path(out_path).write_text(text)
    click.echo(text, nl=False)


if __name__ == "__main__":
    main()
