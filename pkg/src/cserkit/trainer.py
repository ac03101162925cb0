"""AdamW training loops for multi-task pre-training and sentence fine-tuning."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from . import encoder as enc
from .dataops import DataError, LabeledSentence
from .evalkit import EvalReport, evaluate
from .examplegen import CLS, SEP, MlmExample, Vocab

log = logging.getLogger(__name__)

# pre-training always keeps MLM on
TASK_SETS = {
    "mlm": ("mlm",),
    "dsp": ("mlm", "dsp"),
    "dsp3": ("mlm", "dsp3"),
    "drp": ("mlm", "drp"),
    "dp": ("mlm", "dsp", "drp"),
    "dp3": ("mlm", "dsp3", "drp"),
}
_STREAM_CODE = {"mlm": 0, "dsp": 1, "dsp3": 2, "drp": 3, "finetune": 4}


@dataclass
class TrainConfig:
    tasks: str = "dp"
    lr: float = 1e-3
    warmup: int = 100
    batch_size: int = 32
    epochs: int = 10
    steps: Optional[int] = None  # overrides epochs when set
    weight_decay: float = 0.0
    seed: int = 0
    eval_every: int = 100
    grad_clip: float = 1.0
    accumulation: int = 1
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    frozen_encoder: bool = False

    def __post_init__(self):
        if self.tasks not in TASK_SETS:
            raise ValueError(f"unknown task set {self.tasks!r}; choose from {sorted(TASK_SETS)}")
        if self.lr <= 0 or self.batch_size < 1 or self.epochs < 1 or self.accumulation < 1:
            raise ValueError("lr, batch_size, epochs and accumulation must be positive")
        if self.steps is not None and self.steps < 1:
            raise ValueError("steps must be positive")
        if self.warmup < 0 or self.eval_every < 1 or self.weight_decay < 0:
            raise ValueError("warmup, weight_decay must be >= 0 and eval_every >= 1")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        extra = set(d) - set(cls.__dataclass_fields__)
        if extra:
            raise ValueError(f"unknown train config keys: {sorted(extra)}")
        return cls(**d)


def lr_schedule(step: int, lr: float, warmup: int, total: int) -> float:
    """Linear warmup to ``lr`` at ``warmup``, then linear decay to 0 at ``total``."""
    if step < 1:
        raise ValueError("step counts from 1")
    if step <= warmup:
        return lr * step / warmup
    if total <= warmup:
        return lr
    return lr * max(0.0, (total - step) / (total - warmup))


@dataclass
class OptState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0

    @classmethod
    def zeros_like(cls, p: enc.EncoderParams) -> "OptState":
        return cls({k: np.zeros_like(a) for k, a in p.arrays.items()},
                   {k: np.zeros_like(a) for k, a in p.arrays.items()})


def clip_by_global_norm(grads: dict[str, np.ndarray], max_norm: float) -> float:
    norm = math.sqrt(sum(float((g * g).sum()) for g in grads.values()))
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / (norm + 1e-6)
        for g in grads.values():
            g *= scale
    return norm


def optimizer_step(p: enc.EncoderParams, grads: dict[str, np.ndarray], opt: OptState, lr: float,
                   weight_decay: float = 0.0, beta1: float = 0.9, beta2: float = 0.999,
                   eps: float = 1e-8, names: Optional[Sequence[str]] = None):
    """One AdamW update in place. Decay multiplies weights by ``1 - lr * weight_decay``."""
    names = list(p.arrays) if names is None else list(names)
    for name in names:
        if not np.all(np.isfinite(grads[name])):
            raise enc.NumericError(name, "non-finite gradient")
    opt.step += 1
    t = opt.step
    bc1 = 1.0 - beta1 ** t
    bc2 = 1.0 - beta2 ** t
    for name in names:
        w, gr, m, v = p.arrays[name], grads[name], opt.m[name], opt.v[name]
        m *= beta1
        m += (1.0 - beta1) * gr
        v *= beta2
        v += (1.0 - beta2) * gr * gr
        if weight_decay and enc.is_decayed(name):
            w *= 1.0 - lr * weight_decay
        w -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
    return p, opt


# ---------------------------------------------------------------------------
# pre-training

class _TaskStream:
    """Endless per-task batch iterator; reshuffles each pass with its own RNG."""

    def __init__(self, examples, batch_size, seed, task):
        self.examples = examples
        self.batch_size = batch_size
        self.rng = np.random.default_rng([seed, _STREAM_CODE[task]])
        self.order = np.array([], dtype=np.int64)
        self.pos = 0
        self.passes = 0

    def next(self):
        if self.pos >= len(self.order):
            self.order = self.rng.permutation(len(self.examples))
            self.pos = 0
            self.passes += 1
        sel = self.order[self.pos:self.pos + self.batch_size]
        self.pos += self.batch_size
        return [self.examples[i] for i in sel]


def _task_of(ex) -> str:
    return "mlm" if isinstance(ex, MlmExample) else ex.task


def split_by_task(examples) -> dict[str, list]:
    out: dict[str, list] = {}
    for ex in examples:
        out.setdefault(_task_of(ex), []).append(ex)
    return out


def pretrain_total_steps(counts: dict[str, int], cfg: TrainConfig) -> int:
    if cfg.steps is not None:
        return cfg.steps
    per_task = max(math.ceil(n / (cfg.batch_size * cfg.accumulation)) for n in counts.values())
    return cfg.epochs * len(counts) * per_task


def evaluate_pretrain(p: enc.EncoderParams, examples, batch_size: int = 256) -> dict:
    """Dev loss and accuracy per task (MLM accuracy over supervised positions)."""
    out = {}
    for task, exs in sorted(split_by_task(examples).items()):
        tot_loss = 0.0
        correct = total = 0
        for s in range(0, len(exs), batch_size):
            chunk = exs[s:s + batch_size]
            b = enc.collate(chunk)
            tl = enc.loss(p, b)
            if task == "mlm":
                n = int((b.mlm_labels != -1).sum())
                tot_loss += tl.mlm * n
                h = enc.encode(p, b.input_ids, b.attention_mask)
                bi, ti = np.nonzero(b.mlm_labels != -1)
                y = enc._gelu_fwd(h[bi, ti] @ p["mlm.transform.w"] + p["mlm.transform.b"])[0]
                y = enc._ln_fwd(y, p["mlm.ln.g"], p["mlm.ln.b"])[0]
                pred = (y @ p["tok_emb"].T + p["mlm.bias"]).argmax(-1)
                correct += int((pred == b.mlm_labels[bi, ti]).sum())
                total += n
            else:
                tot_loss += tl.components[task] * len(chunk)
                correct += int((enc.predict_pairs(p, b) == b.labels).sum())
                total += len(chunk)
        out[task] = {"loss": tot_loss / max(total, 1), "accuracy": correct / max(total, 1), "n": total}
    return out


@dataclass
class PretrainResult:
    params: enc.EncoderParams
    best_params: Optional[enc.EncoderParams]
    log: list[dict] = field(default_factory=list)
    total_steps: int = 0
    best_step: Optional[int] = None


def pretrain(examples, enc_cfg: enc.EncoderConfig, cfg: TrainConfig, dev_examples=None,
             init: Optional[enc.EncoderParams] = None,
             on_record: Optional[Callable[[dict], None]] = None) -> PretrainResult:
    """Round-robin multi-task pre-training over homogeneous per-task batches.

    Tasks without examples are dropped from the rotation. The best
    parameters are chosen by summed dev loss when ``dev_examples`` is given.
    """
    by_task = split_by_task(examples)
    active = [t for t in TASK_SETS[cfg.tasks] if by_task.get(t)]
    if not active:
        raise ValueError("no examples for any task in the selected task set")
    counts = {t: len(by_task[t]) for t in active}
    total = pretrain_total_steps(counts, cfg)
    if cfg.warmup > total:
        raise ValueError(f"warmup {cfg.warmup} exceeds total steps {total}")
    p = init.copy() if init is not None else enc.init_params(enc_cfg, cfg.seed)
    opt = OptState.zeros_like(p)
    streams = {t: _TaskStream(by_task[t], cfg.batch_size, cfg.seed, t) for t in active}
    res = PretrainResult(p, None, total_steps=total)
    best_loss = math.inf
    for step in range(1, total + 1):
        task = active[(step - 1) % len(active)]
        drop_rng = np.random.default_rng([cfg.seed, 7, step])
        grads = None
        comp = 0.0
        for _ in range(cfg.accumulation):
            tl, g = enc.grad(p, enc.collate(streams[task].next()), rng=drop_rng)
            comp += tl.total / cfg.accumulation
            if grads is None:
                grads = g
            else:
                for k in grads:
                    grads[k] += g[k]
        if cfg.accumulation > 1:
            for k in grads:
                grads[k] /= cfg.accumulation
        clip_by_global_norm(grads, cfg.grad_clip)
        lr = lr_schedule(step, cfg.lr, cfg.warmup, total)
        optimizer_step(p, grads, opt, lr, cfg.weight_decay, cfg.beta1, cfg.beta2, cfg.eps)
        rec = {"step": step, "lr": lr, "task": task, "loss": comp}
        if dev_examples and (step % cfg.eval_every == 0 or step == total):
            dev = evaluate_pretrain(p, dev_examples)
            rec["dev_metrics"] = dev
            dev_loss = sum(v["loss"] for v in dev.values())
            if dev_loss < best_loss:
                best_loss = dev_loss
                res.best_params = p.copy()
                res.best_step = step
            log.info("step %d dev %s", step, {t: round(v["accuracy"], 4) for t, v in dev.items()})
        res.log.append(rec)
        if on_record is not None:
            on_record(rec)
    return res


def write_log(path, records: Sequence[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(r, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# fine-tuning

def encode_sentence(text: str, vocab: Vocab, max_len: int) -> list[int]:
    """[CLS] + characters + [SEP], truncated to ``max_len`` (SEP kept)."""
    ids = [vocab.id(ch) for ch in text][:max_len - 2]
    return [CLS] + ids + [SEP]


def predict(p: enc.EncoderParams, vocab: Vocab, data: Sequence[LabeledSentence],
            batch_size: int = 256) -> list[int]:
    out: list[int] = []
    for s in range(0, len(data), batch_size):
        ids = [encode_sentence(x.text, vocab, p.cfg.max_len) for x in data[s:s + batch_size]]
        out.extend(int(v) for v in enc.predict_sequences(p, enc.sequence_batch(ids)))
    return out


def score(p: enc.EncoderParams, vocab: Vocab, data: Sequence[LabeledSentence],
          per_type: bool = False) -> EvalReport:
    preds = predict(p, vocab, data)
    golds = [x.label for x in data]
    types = [x.error_type for x in data] if per_type else None
    return evaluate(preds, golds, types)


@dataclass
class FinetuneResult:
    params: enc.EncoderParams
    reports: list[EvalReport]
    best_epoch: int
    log: list[dict] = field(default_factory=list)


def finetune(p0: enc.EncoderParams, vocab: Vocab, train: Sequence[LabeledSentence],
             dev: Optional[Sequence[LabeledSentence]], cfg: TrainConfig) -> FinetuneResult:
    """Train the 2-class head (and the encoder unless frozen); keep the best dev-F1 epoch."""
    for recno, x in enumerate(train, start=1):
        if x.label not in (0, 1):
            raise DataError(f"record {recno}: label must be 0 or 1, got {x.label!r}")
    if not train:
        raise DataError("empty training set")
    p = p0.copy()
    opt = OptState.zeros_like(p)
    ids = [encode_sentence(x.text, vocab, p.cfg.max_len) for x in train]
    labels = np.array([x.label for x in train], dtype=np.int64)
    per_epoch = math.ceil(len(train) / cfg.batch_size)
    total = cfg.steps if cfg.steps is not None else cfg.epochs * per_epoch
    epochs = math.ceil(total / per_epoch)
    if cfg.warmup > total:
        raise ValueError(f"warmup {cfg.warmup} exceeds total steps {total}")
    names = ["finetune.w", "finetune.b"] if cfg.frozen_encoder else None
    reports: list[EvalReport] = []
    records = []
    best_f1, best_epoch, best_p = -1.0, 0, p.copy()
    step = 0
    for epoch in range(1, epochs + 1):
        order = np.random.default_rng([cfg.seed, _STREAM_CODE["finetune"], epoch]).permutation(len(train))
        for s in range(0, len(order), cfg.batch_size):
            if step >= total:
                break
            step += 1
            sel = order[s:s + cfg.batch_size]
            batch = enc.sequence_batch([ids[i] for i in sel], labels[sel])
            tl, grads = enc.grad(p, batch, rng=np.random.default_rng([cfg.seed, 8, step]),
                                 frozen_encoder=cfg.frozen_encoder)
            if names is not None:
                grads = {k: grads[k] for k in names}
            clip_by_global_norm(grads, cfg.grad_clip)
            lr = lr_schedule(step, cfg.lr, cfg.warmup, total)
            optimizer_step(p, grads, opt, lr, cfg.weight_decay, cfg.beta1, cfg.beta2, cfg.eps, names)
            records.append({"step": step, "lr": lr, "task": "finetune", "loss": tl.total})
        if dev:
            rep = score(p, vocab, dev)
            reports.append(rep)
            records[-1]["dev_metrics"] = rep.to_dict()
            if rep.f1 > best_f1:
                best_f1, best_epoch, best_p = rep.f1, epoch, p.copy()
        else:
            best_epoch, best_p = epoch, p.copy()
    return FinetuneResult(best_p, reports, best_epoch, records)


def checkpoint_extra(vocab: Vocab, **kw) -> dict:
    return {"vocab": list(vocab.tokens), **kw}


def vocab_from_header(header: dict) -> Vocab:
    toks = header.get("extra", {}).get("vocab")
    if toks is None:
        raise ValueError("checkpoint carries no vocabulary")
    return Vocab(tuple(toks))


def save_log_and_ckpt(out, p: enc.EncoderParams, vocab: Vocab, records, **extra) -> None:
    enc.save_checkpoint(out, p, vocab.hash(), checkpoint_extra(vocab, **extra))
    write_log(Path(str(out) + ".log.jsonl"), records)
