"""Labeled-dataset hygiene: edit-distance overlap cleaning, splits and statistics.

Similarity is ``1 - levenshtein(a, b) / max(len(a), len(b))`` over Unicode
code points, with unit costs for insert, delete and substitute.
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from . import _kernels

ERROR_TYPES: tuple[str, ...] = (
    "WordOrder", "Collocation", "Missing", "Redundant", "Confusion", "Fuzziness", "Illogic",
)


class DataError(ValueError):
    """Malformed or inconsistent dataset content."""


@dataclass(frozen=True)
class LabeledSentence:
    id: str
    text: str
    label: int
    error_type: Optional[str] = None

    def __post_init__(self):
        if not self.text:
            raise DataError(f"record {self.id}: empty text")
        if self.label not in (0, 1):
            raise DataError(f"record {self.id}: label must be 0 or 1, got {self.label!r}")
        if self.error_type is not None:
            if self.label != 1:
                raise DataError(f"record {self.id}: error_type given on a correct sentence")
            if self.error_type not in ERROR_TYPES:
                raise DataError(f"record {self.id}: unknown error_type {self.error_type!r}")

    def to_json(self) -> str:
        d = {"id": self.id, "text": self.text, "label": self.label}
        if self.error_type is not None:
            d["error_type"] = self.error_type
        return json.dumps(d, ensure_ascii=False, sort_keys=True)


def read_labeled(path) -> list[LabeledSentence]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for recno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                d = json.loads(line)
                out.append(LabeledSentence(str(d["id"]), d["text"], d["label"], d.get("error_type")))
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise DataError(f"record {recno}: {exc}") from None
            except DataError as exc:
                raise DataError(f"record {recno}: {exc}") from None
    return out


def write_labeled(path, data: Iterable[LabeledSentence]) -> None:
    Path(path).write_text("".join(s.to_json() + "\n" for s in data), encoding="utf-8")


@dataclass(frozen=True)
class DedupConfig:
    gamma: float = 0.70

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in [0, 1], got {self.gamma}")


@dataclass
class Removal:
    train_id: str
    heldout_id: str
    ratio: float
    distance: int


@dataclass
class CleanReport:
    gamma: float
    removed: list[Removal] = field(default_factory=list)
    kept: int = 0
    max_surviving_ratio: float = 0.0
    # removals whose ratio sits exactly on gamma; strictly-greater cleaning would keep them
    boundary_hits: int = 0

    def to_dict(self) -> dict:
        return asdict(self)

    def table(self) -> str:
        lines = [f"gamma={self.gamma:.4f} removed={len(self.removed)} kept={self.kept} "
                 f"max_surviving_ratio={self.max_surviving_ratio:.4f} boundary_hits={self.boundary_hits}"]
        if self.removed:
            lines.append(f"{'train_id':<16}{'heldout_id':<16}{'distance':>9}{'ratio':>9}")
            for r in self.removed:
                lines.append(f"{r.train_id:<16}{r.heldout_id:<16}{r.distance:>9}{r.ratio:>9.4f}")
        return "\n".join(lines)


def levenshtein(a: str, b: str) -> int:
    return _kernels.levenshtein(a, b)


def lev_ratio(a: str, b: str) -> float:
    n = max(len(a), len(b))
    if n == 0:
        return 1.0
    return 1.0 - levenshtein(a, b) / n


def clean_train(train: list[LabeledSentence], heldout: list[LabeledSentence],
                cfg: DedupConfig = DedupConfig()) -> tuple[list[LabeledSentence], CleanReport]:
    """Drop training sentences whose best heldout ratio reaches ``cfg.gamma``."""
    _check_unique(train, "train")
    _check_unique(heldout, "heldout")
    idx, dist, ratio = _kernels.best_matches([s.text for s in train], [s.text for s in heldout])
    report = CleanReport(gamma=cfg.gamma)
    kept = []
    for s, j, d, r in zip(train, idx, dist, ratio):
        if j >= 0 and r >= cfg.gamma:
            report.removed.append(Removal(s.id, heldout[j].id, float(r), int(d)))
            report.boundary_hits += int(r == cfg.gamma)
        else:
            kept.append(s)
            if j >= 0:
                report.max_surviving_ratio = max(report.max_surviving_ratio, float(r))
    report.kept = len(kept)
    return kept, report


def top_k_similar(train: list[LabeledSentence], heldout: list[LabeledSentence],
                  k: int) -> list[tuple[str, str, float]]:
    """Global top-k (train id, heldout id, ratio) over the cross product."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if not train or not heldout:
        return []
    dist = _kernels.distance_matrix([s.text for s in train], [s.text for s in heldout])
    tl = np.array([len(s.text) for s in train])[:, None]
    hl = np.array([len(s.text) for s in heldout])[None, :]
    denom = np.maximum(tl, hl)
    ratios = np.where(denom == 0, 1.0, 1.0 - dist / np.maximum(denom, 1))
    keyed = ((-ratios[i, j], train[i].id, heldout[j].id)
             for i in range(len(train)) for j in range(len(heldout)))
    return [(a, b, -nr) for nr, a, b in heapq.nsmallest(k, keyed)]


def split_dataset(data: list[LabeledSentence], dev_size: int, test_size: int,
                  rng_seed: int) -> tuple[list[LabeledSentence], list[LabeledSentence], list[LabeledSentence]]:
    """Label-balanced dev and test splits; everything else is train.

    Odd sizes give the extra item to label 1. Output order within each split
    follows input order.
    """
    if dev_size < 0 or test_size < 0:
        raise ValueError("split sizes must be non-negative")
    need = {1: (dev_size + 1) // 2 + (test_size + 1) // 2, 0: dev_size // 2 + test_size // 2}
    by_label = {0: [i for i, s in enumerate(data) if s.label == 0],
                1: [i for i, s in enumerate(data) if s.label == 1]}
    short = {lab: need[lab] - len(by_label[lab]) for lab in (0, 1) if need[lab] > len(by_label[lab])}
    if short:
        msg = ", ".join(f"label {lab} short by {n}" for lab, n in sorted(short.items()))
        raise DataError(f"cannot build balanced dev/test splits: {msg}")
    rng = np.random.default_rng(rng_seed)
    assign = np.zeros(len(data), dtype=np.int8)  # 0 train, 1 dev, 2 test
    for lab in (0, 1):
        pool = np.array(by_label[lab], dtype=np.int64)
        rng.shuffle(pool)
        n_dev = (dev_size + lab) // 2
        n_test = (test_size + lab) // 2
        assign[pool[:n_dev]] = 1
        assign[pool[n_dev:n_dev + n_test]] = 2
    splits = ([], [], [])
    for s, a in zip(data, assign):
        splits[a].append(s)
    return splits


def dataset_stats(data: list[LabeledSentence]) -> dict:
    n = len(data)
    if n == 0:
        return {"lines": 0, "avg_length": 0.0, "error_ratio": 0.0, "empty": True}
    total = sum(len(s.text) for s in data)
    errors = sum(s.label for s in data)
    return {
        "lines": n,
        "avg_length": _round1(total / n),
        "error_ratio": _round1(100.0 * errors / n),
        "empty": False,
    }


def _round1(x: float) -> float:
    # half-up at one decimal, immune to binary representation of x.x5
    return math.floor(x * 10 + 0.5 + 1e-9) / 10


def _check_unique(data: list[LabeledSentence], name: str) -> None:
    seen = set()
    for s in data:
        if s.id in seen:
            raise DataError(f"duplicate id {s.id!r} in {name} set")
        seen.add(s.id)
