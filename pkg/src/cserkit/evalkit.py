"""Binary error-recognition scoring and multi-seed aggregation.

The positive class is label 1 (sentence contains a semantic error). All
reported metrics are percentages.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

from .dataops import DataError

METRICS = ("precision", "recall", "f1", "accuracy")


@dataclass(frozen=True)
class Confusion:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    @property
    def n(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass
class EvalReport:
    precision: float
    recall: float
    f1: float
    accuracy: float
    n: int
    per_type_recall: dict[str, float] = field(default_factory=dict)
    flags: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        return cls(d["precision"], d["recall"], d["f1"], d["accuracy"], d["n"],
                   dict(d.get("per_type_recall", {})), list(d.get("flags", [])))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False, sort_keys=True)


@dataclass
class RunAggregate:
    mean: dict[str, float]
    std: dict[str, float]
    runs: int
    flags: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    def table_row(self, name: str = "model") -> str:
        cells = [f"{self.mean[m]:.1f}±{self.std[m]:.1f}" for m in METRICS]
        return " | ".join([name] + cells)

    @staticmethod
    def table_header() -> str:
        return " | ".join(["Model", "P", "R", "F1", "ACC"])


def _check_binary(xs: Sequence[int], name: str) -> None:
    for i, x in enumerate(xs):
        if x not in (0, 1):
            raise ValueError(f"{name}[{i}] = {x!r}; expected 0 or 1")


def confusion(preds: Sequence[int], golds: Sequence[int]) -> Confusion:
    if len(preds) != len(golds):
        raise ValueError(f"length mismatch: {len(preds)} predictions vs {len(golds)} golds")
    _check_binary(preds, "preds")
    _check_binary(golds, "golds")
    tp = fp = fn = tn = 0
    for p, g in zip(preds, golds):
        if p and g:
            tp += 1
        elif p:
            fp += 1
        elif g:
            fn += 1
        else:
            tn += 1
    return Confusion(tp, fp, fn, tn)


def prf_acc(c: Confusion) -> EvalReport:
    if c.n < 1:
        raise ValueError("cannot score an empty confusion")
    flags = []
    if c.tp + c.fp:
        p = c.tp / (c.tp + c.fp)
    else:
        p = 0.0
        flags.append("precision_undefined")
    if c.tp + c.fn:
        r = c.tp / (c.tp + c.fn)
    else:
        r = 0.0
        flags.append("recall_undefined")
    f1 = 0.0 if p + r == 0 else 2 * p * r / (p + r)
    acc = (c.tp + c.tn) / c.n
    return EvalReport(100 * p, 100 * r, 100 * f1, 100 * acc, c.n, flags=flags)


def per_type_recall(preds: Sequence[int], golds: Sequence[int],
                    types: Sequence[Optional[str]]) -> dict[str, float]:
    """Recall per error type over gold-positive items; absent types are omitted."""
    if not len(preds) == len(golds) == len(types):
        raise ValueError("preds, golds and types must have equal length")
    hit: dict[str, int] = {}
    total: dict[str, int] = {}
    for i, (p, g, t) in enumerate(zip(preds, golds, types)):
        if g == 1:
            if t is None:
                raise DataError(f"item {i}: gold error without an error type")
            total[t] = total.get(t, 0) + 1
            hit[t] = hit.get(t, 0) + (p == 1)
        elif t is not None:
            raise DataError(f"item {i}: error type {t!r} on a correct sentence")
    return {t: 100.0 * hit[t] / total[t] for t in sorted(total)}


def evaluate(preds: Sequence[int], golds: Sequence[int],
             types: Optional[Sequence[Optional[str]]] = None) -> EvalReport:
    rep = prf_acc(confusion(preds, golds))
    if types is not None:
        rep.per_type_recall = per_type_recall(preds, golds, types)
    return rep


def aggregate_runs(reports: Sequence[EvalReport]) -> RunAggregate:
    if not reports:
        raise ValueError("need at least one report")
    n = len(reports)
    mean, std = {}, {}
    for m in METRICS:
        xs = [getattr(r, m) for r in reports]
        mu = sum(xs) / n
        mean[m] = mu
        std[m] = math.sqrt(sum((x - mu) ** 2 for x in xs) / (n - 1)) if n > 1 else 0.0
    flags = ["single_run_std_zero"] if n == 1 else []
    return RunAggregate(mean, std, n, flags)
