"""Central finite-difference check of the encoder's analytic gradients."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import encoder as enc
from .examplegen import IGNORE, MlmExample, PairExample

STEP = 1e-4
TOLERANCE = 1e-4
# below this magnitude the relative error is measured against the floor instead
DENOM_FLOOR = 1e-6


@dataclass
class CheckResult:
    head: str
    name: str
    max_rel_err: float
    coords: int

    @property
    def ok(self) -> bool:
        return self.max_rel_err <= TOLERANCE


def rel_err(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), DENOM_FLOOR)


def check_config(hidden: int = 16, heads: int = 2, layers: int = 2, vocab_size: int = 23,
                 max_len: int = 12) -> enc.EncoderConfig:
    return enc.EncoderConfig(vocab_size=vocab_size, max_len=max_len, layers=layers, hidden=hidden,
                             heads=heads, ffn_dim=2 * hidden, dropout=0.0, dtype="float64")


def random_batches(cfg: enc.EncoderConfig, rng: np.random.Generator, batch: int = 3) -> dict[str, enc.Batch]:
    """One small batch per head with random lengths, spans and labels."""
    V, T = cfg.vocab_size, cfg.max_len

    def seq():
        n = int(rng.integers(4, T - 1))
        return (2,) + tuple(int(x) for x in rng.integers(5, V, size=n)) + (3,)

    mlm = []
    for _ in range(batch):
        ids = seq()
        lab = [IGNORE] * len(ids)
        for pos in rng.choice(np.arange(1, len(ids) - 1), size=2, replace=False):
            lab[pos] = int(rng.integers(5, V))
        mlm.append(MlmExample(ids, tuple(lab)))
    out = {"mlm": enc.collate(mlm)}
    for task in ("dsp", "dsp3", "drp"):
        exs = []
        for _ in range(batch):
            ids = seq()
            cut = sorted(rng.choice(np.arange(2, len(ids) - 1), size=2, replace=False))
            a, b = (1, int(cut[0])), (int(cut[0]), int(cut[1]))
            if rng.random() < 0.5:
                a, b = b, a
            exs.append(PairExample(ids, a, b, task, int(rng.integers(cfg.num_classes[task]))))
        out[task] = enc.collate(exs)
    out["finetune"] = enc.sequence_batch([seq() for _ in range(batch)],
                                         rng.integers(0, 2, size=batch))
    return out


def run(seed: int = 0, cfg: enc.EncoderConfig | None = None, coords: int = 25,
        jitter: float = 0.1) -> list[CheckResult]:
    """Check every parameter array for every head separately.

    Parameters start from :func:`encoder.init_params` plus Gaussian
    ``jitter`` so biases and gains sit away from their trivial values.
    """
    cfg = cfg or check_config()
    rng = np.random.default_rng(seed)
    p = enc.init_params(cfg, seed)
    for a in p.arrays.values():
        a += rng.normal(0.0, jitter, size=a.shape)
    batches = random_batches(cfg, rng)
    results = []
    for head, batch in batches.items():
        _, g = enc.grad(p, batch)
        for name in p.names():
            owner = enc.head_of(name)
            if owner not in ("encoder", head):
                if np.any(g[name]):
                    results.append(CheckResult(head, name, np.inf, 0))
                continue
            arr = p.arrays[name]
            worst = 0.0
            flat = arr.reshape(-1)
            picks = rng.choice(flat.size, size=min(coords, flat.size), replace=False)
            for ix in picks:
                old = flat[ix]
                flat[ix] = old + STEP
                lp = enc.loss(p, batch).total
                flat[ix] = old - STEP
                lm = enc.loss(p, batch).total
                flat[ix] = old
                numeric = (lp - lm) / (2 * STEP)
                worst = max(worst, rel_err(float(g[name].reshape(-1)[ix]), numeric))
            results.append(CheckResult(head, name, worst, len(picks)))
    return results
