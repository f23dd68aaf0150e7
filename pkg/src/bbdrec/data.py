"""Interaction-log ingestion, preprocessing, sample construction, splits.

All transformations are pure and deterministic; the synthetic generator is
seeded.  Processed splits can be cached to a plain text format (one
tab-separated sample per line) for reuse.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "Interaction", "InteractionLog", "Sample", "DatasetSplits",
    "load_csv", "preprocess", "build_samples", "split_chronological",
    "synth_markov", "save_splits", "load_splits",
]

HEADER = ["user_id", "item_id", "timestamp"]


@dataclass(frozen=True)
class Interaction:
    user: int
    item: int
    timestamp: int


@dataclass
class InteractionLog:
    """Chronological interaction records with contiguous remapped ids.

    ``item_map``/``user_map`` map original ids to the contiguous internal
    ids (items start at 1; 0 is reserved for padding).
    """
    records: list[Interaction]
    item_map: dict = field(default_factory=dict)
    user_map: dict = field(default_factory=dict)

    @property
    def n_items(self) -> int:
        return len(self.item_map)

    def original_item_ids(self) -> dict:
        return {v: k for k, v in self.item_map.items()}


@dataclass(frozen=True)
class Sample:
    """Left-padded history of length L plus the next interacted item."""
    history: tuple
    target: int
    user: int
    timestamp: int


@dataclass
class DatasetSplits:
    train: list
    validation: list
    test: list
    n_items: int
    popularity: np.ndarray  # interaction counts on the training split, index = item id
    item_map: dict = field(default_factory=dict)


def load_csv(path) -> InteractionLog:
    """Parse a ``user_id,item_id,timestamp`` CSV into an interaction log.

    Original ids (integers or arbitrary strings) are remapped to contiguous
    integers in order of first appearance; items start at 1 so that id 0
    stays reserved for padding.  Duplicate rows are retained: repeated
    consumption of the same item is legitimate.
    """
    path = Path(path)
    records: list[Interaction] = []
    item_map: dict = {}
    user_map: dict = {}
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file, expected header {','.join(HEADER)}")
        if [h.strip() for h in header] != HEADER:
            raise ValueError(f"{path}: line 1: expected header {','.join(HEADER)}, "
                             f"got {','.join(header)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise ValueError(f"{path}: line {lineno}: expected 3 fields, got {len(row)}")
            user_raw, item_raw, ts_raw = (f.strip() for f in row)
            try:
                ts = int(ts_raw)
            except ValueError:
                raise ValueError(f"{path}: line {lineno}: non-integer timestamp {ts_raw!r}")
            if user_raw not in user_map:
                user_map[user_raw] = len(user_map) + 1
            if item_raw not in item_map:
                item_map[item_raw] = len(item_map) + 1
            records.append(Interaction(user_map[user_raw], item_map[item_raw], ts))
    return InteractionLog(records, item_map, user_map)


def preprocess(log: InteractionLog, min_item_interactions: int = 5,
               min_seq_len: int = 3) -> InteractionLog:
    """Drop rare items, then too-short user sequences (single pass each).

    Items with fewer than ``min_item_interactions`` interactions are
    removed first; users left with fewer than ``min_seq_len`` interactions
    are then removed.  Retained items are re-compacted to contiguous ids
    1..|V| so the vocabulary stays dense.
    """
    if not log.records:
        raise ValueError("empty interaction log")
    item_counts: dict = {}
    for r in log.records:
        item_counts[r.item] = item_counts.get(r.item, 0) + 1
    kept = [r for r in log.records if item_counts[r.item] >= min_item_interactions]

    user_counts: dict = {}
    for r in kept:
        user_counts[r.user] = user_counts.get(r.user, 0) + 1
    kept = [r for r in kept if user_counts[r.user] >= min_seq_len]
    if not kept:
        raise ValueError("preprocessing removed every interaction")

    remap: dict = {}
    for r in kept:
        if r.item not in remap:
            remap[r.item] = len(remap) + 1
    old_to_orig = {v: k for k, v in log.item_map.items()}
    item_map = {old_to_orig.get(old, old): new for old, new in remap.items()}
    records = [Interaction(r.user, remap[r.item], r.timestamp) for r in kept]
    return InteractionLog(records, item_map, dict(log.user_map))


def build_samples(log: InteractionLog, L: int = 10) -> list:
    """Expand each user sequence into next-item samples with length-L windows.

    A user's interactions are ordered by (timestamp, original order); each
    interaction after the first becomes a target with the up-to-L preceding
    items as its left-padded history.
    """
    per_user: dict = {}
    for idx, r in enumerate(log.records):
        per_user.setdefault(r.user, []).append((r.timestamp, idx, r.item))
    samples = []
    for user in sorted(per_user):
        seq = sorted(per_user[user])
        items = [item for _, _, item in seq]
        for i in range(1, len(items)):
            window = items[max(0, i - L):i]
            history = (0,) * (L - len(window)) + tuple(window)
            samples.append(Sample(history, items[i], user, seq[i][0]))
    return samples


def split_chronological(samples: list, ratios=(8, 1, 1)) -> DatasetSplits:
    """Globally time-ordered split of the sample list.

    Samples are stable-sorted by (target timestamp, user id, original
    order); the first and second cuts are floored, the remainder goes to
    the test split.  Item popularity is counted on training interactions
    only (histories plus targets).
    """
    if len(samples) < 10:
        raise ValueError(f"need at least 10 samples to split, got {len(samples)}")
    order = sorted(range(len(samples)),
                   key=lambda i: (samples[i].timestamp, samples[i].user, i))
    ordered = [samples[i] for i in order]
    total = sum(ratios)
    n = len(ordered)
    n_train = n * ratios[0] // total
    n_val = n * ratios[1] // total
    train = ordered[:n_train]
    validation = ordered[n_train:n_train + n_val]
    test = ordered[n_train + n_val:]

    n_items = max(max(s.target, *s.history) for s in samples)
    popularity = np.zeros(n_items + 1, dtype=np.int64)
    for s in train:
        popularity[s.target] += 1
        for item in s.history:
            if item:
                popularity[item] += 1
    return DatasetSplits(train, validation, test, n_items, popularity)


def synth_markov(n_items: int, p_noise: float, n_users: int,
                 len_range=(15, 25), seed: int = 0) -> InteractionLog:
    """Synthetic cyclic-walk log: next item is current+1 (mod n) w.p. 1 - p_noise.

    A learnability oracle at desk scale: with ``p_noise=0`` the rule
    "current + 1" predicts every next item exactly.
    """
    if n_items < 3:
        raise ValueError(f"n_items must be >= 3, got {n_items}")
    if not 0.0 <= p_noise < 1.0:
        raise ValueError(f"p_noise must be in [0, 1), got {p_noise}")
    if n_users < 1:
        raise ValueError(f"n_users must be >= 1, got {n_users}")
    lo, hi = len_range
    if not 2 <= lo <= hi:
        raise ValueError(f"invalid len_range {len_range}")
    rng = np.random.default_rng(seed)
    records = []
    for user in range(1, n_users + 1):
        length = int(rng.integers(lo, hi + 1))
        item = int(rng.integers(1, n_items + 1))
        for step in range(length):
            records.append(Interaction(user, item, step))
            if rng.random() < p_noise:
                item = int(rng.integers(1, n_items + 1))
            else:
                item = item % n_items + 1
    item_map = {i: i for i in range(1, n_items + 1)}
    user_map = {u: u for u in range(1, n_users + 1)}
    return InteractionLog(records, item_map, user_map)


def save_log_csv(log: InteractionLog, path, metadata: dict | None = None):
    """Write a log back to the CSV interface format (original ids).

    If ``metadata`` is given it is recorded in a JSON sidecar next to the
    CSV (same path with a ``.meta.json`` suffix).
    """
    path = Path(path)
    to_orig_item = log.original_item_ids()
    to_orig_user = {v: k for k, v in log.user_map.items()}
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(HEADER)
        for r in log.records:
            writer.writerow([to_orig_user.get(r.user, r.user),
                             to_orig_item.get(r.item, r.item), r.timestamp])
    if metadata is not None:
        sidecar = path.with_suffix(path.suffix + ".meta.json")
        sidecar.write_text(json.dumps(metadata, indent=2, sort_keys=True) + "\n")


def save_splits(splits: DatasetSplits, directory):
    """Cache splits as tab-separated text: history (comma-joined), target, user, ts."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for name in ("train", "validation", "test"):
        with (directory / f"{name}.tsv").open("w", encoding="utf-8") as fh:
            for s in getattr(splits, name):
                fh.write("\t".join([",".join(map(str, s.history)), str(s.target),
                                    str(s.user), str(s.timestamp)]) + "\n")
    meta = {
        "n_items": splits.n_items,
        "popularity": splits.popularity.tolist(),
        "item_map": {str(k): v for k, v in splits.item_map.items()},
    }
    (directory / "meta.json").write_text(json.dumps(meta) + "\n")


def load_splits(directory) -> DatasetSplits:
    directory = Path(directory)
    meta = json.loads((directory / "meta.json").read_text())
    parts = {}
    for name in ("train", "validation", "test"):
        samples = []
        with (directory / f"{name}.tsv").open(encoding="utf-8") as fh:
            for line in fh:
                hist, target, user, ts = line.rstrip("\n").split("\t")
                samples.append(Sample(tuple(int(x) for x in hist.split(",")),
                                      int(target), int(user), int(ts)))
        parts[name] = samples
    return DatasetSplits(parts["train"], parts["validation"], parts["test"],
                         int(meta["n_items"]),
                         np.asarray(meta["popularity"], dtype=np.int64),
                         {k: v for k, v in meta.get("item_map", {}).items()})
