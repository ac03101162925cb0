"""A small BERT-style encoder in numpy with hand-written backpropagation.

Heads:
  * MLM: affine + GELU + layer norm, then a projection tied to the token
    embeddings (plus an output bias).
  * Pair tasks (dsp, dsp3, drp): max-pool each word span, concatenate
    ``[pool_a; pool_b]``, then a 4-layer MLP ``2H -> H -> H -> H/2 -> C``
    with ReLU after the first three layers.
  * finetune: [CLS] vector -> dropout -> affine to 2 classes.
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
from scipy.special import erf

from .examplegen import IGNORE, NUM_CLASSES, PAIR_TASKS, MlmExample, PairExample

HEAD_TASKS = ("mlm",) + PAIR_TASKS + ("finetune",)
LN_EPS = 1e-12
_NEG = -1e9


class NumericError(FloatingPointError):
    def __init__(self, name: str, msg: str = "non-finite values"):
        super().__init__(f"{name}: {msg}")
        self.name = name


@dataclass
class EncoderConfig:
    vocab_size: int
    max_len: int = 128
    layers: int = 2
    hidden: int = 64
    heads: int = 2
    ffn_dim: int = 256
    dropout: float = 0.1
    num_classes: dict = field(default_factory=lambda: dict(NUM_CLASSES))
    dtype: str = "float64"

    def __post_init__(self):
        for name in ("vocab_size", "max_len", "layers", "hidden", "heads", "ffn_dim"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.hidden % self.heads:
            raise ValueError("hidden must be divisible by heads")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")
        if self.dtype not in ("float32", "float64"):
            raise ValueError("dtype must be float32 or float64")
        self.num_classes = {k: int(v) for k, v in self.num_classes.items()}

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "EncoderConfig":
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown encoder config keys: {sorted(extra)}")
        return cls(**d)

    def mlp_dims(self, task: str) -> list[int]:
        h = self.hidden
        return [2 * h, h, h, max(1, h // 2), self.num_classes[task]]


def param_shapes(cfg: EncoderConfig) -> dict[str, tuple[int, ...]]:
    h, f = cfg.hidden, cfg.ffn_dim
    s: dict[str, tuple[int, ...]] = {
        "tok_emb": (cfg.vocab_size, h),
        "pos_emb": (cfg.max_len, h),
        "emb_ln.g": (h,), "emb_ln.b": (h,),
    }
    for l in range(cfg.layers):
        for proj in ("q", "k", "v", "o"):
            s[f"layer{l}.{proj}.w"] = (h, h)
            s[f"layer{l}.{proj}.b"] = (h,)
        s[f"layer{l}.ln1.g"] = (h,)
        s[f"layer{l}.ln1.b"] = (h,)
        s[f"layer{l}.ffn1.w"] = (h, f)
        s[f"layer{l}.ffn1.b"] = (f,)
        s[f"layer{l}.ffn2.w"] = (f, h)
        s[f"layer{l}.ffn2.b"] = (h,)
        s[f"layer{l}.ln2.g"] = (h,)
        s[f"layer{l}.ln2.b"] = (h,)
    s["mlm.transform.w"] = (h, h)
    s["mlm.transform.b"] = (h,)
    s["mlm.ln.g"] = (h,)
    s["mlm.ln.b"] = (h,)
    s["mlm.bias"] = (cfg.vocab_size,)
    for task in PAIR_TASKS:
        dims = cfg.mlp_dims(task)
        for i in range(4):
            s[f"{task}.mlp{i + 1}.w"] = (dims[i], dims[i + 1])
            s[f"{task}.mlp{i + 1}.b"] = (dims[i + 1],)
    s["finetune.w"] = (h, cfg.num_classes["finetune"])
    s["finetune.b"] = (cfg.num_classes["finetune"],)
    return s


def is_decayed(name: str) -> bool:
    """Weight decay skips biases and layer-norm parameters."""
    return not (name.endswith(".b") or name.endswith(".g") or name == "mlm.bias")


def head_of(name: str) -> str:
    """Which head owns a parameter, or 'encoder' for shared ones."""
    prefix = name.split(".", 1)[0]
    return prefix if prefix in HEAD_TASKS else "encoder"


class EncoderParams:
    def __init__(self, cfg: EncoderConfig, arrays: dict[str, np.ndarray]):
        shapes = param_shapes(cfg)
        if set(arrays) != set(shapes):
            missing = sorted(set(shapes) - set(arrays))
            extra = sorted(set(arrays) - set(shapes))
            raise ValueError(f"parameter names mismatch; missing={missing} extra={extra}")
        for name, shp in shapes.items():
            if tuple(arrays[name].shape) != shp:
                raise ValueError(f"{name}: shape {arrays[name].shape} != {shp}")
        self.cfg = cfg
        self.arrays = arrays

    def __getitem__(self, name: str) -> np.ndarray:
        return self.arrays[name]

    def names(self) -> list[str]:
        return list(param_shapes(self.cfg))

    def copy(self) -> "EncoderParams":
        return EncoderParams(self.cfg, {k: v.copy() for k, v in self.arrays.items()})


def init_params(cfg: EncoderConfig, rng_seed: int) -> EncoderParams:
    """Normal(0, 0.02) weights, zero biases, unit layer-norm gains."""
    rng = np.random.default_rng(rng_seed)
    dt = np.dtype(cfg.dtype)
    arrays = {}
    for name, shp in param_shapes(cfg).items():
        if name.endswith(".g"):
            arrays[name] = np.ones(shp, dtype=dt)
        elif name.endswith(".b") or name == "mlm.bias":
            arrays[name] = np.zeros(shp, dtype=dt)
        else:
            arrays[name] = rng.normal(0.0, 0.02, size=shp).astype(dt)
    return EncoderParams(cfg, arrays)


# ---------------------------------------------------------------------------
# batches

@dataclass
class Batch:
    task: str
    input_ids: np.ndarray  # (B, T) int
    attention_mask: np.ndarray  # (B, T) bool
    mlm_labels: Optional[np.ndarray] = None  # (B, T), IGNORE where unsupervised
    span_a: Optional[np.ndarray] = None  # (B, 2)
    span_b: Optional[np.ndarray] = None
    labels: Optional[np.ndarray] = None  # (B,) class ids

    def __len__(self) -> int:
        return len(self.input_ids)


def _pad(seqs: Sequence[Sequence[int]], fill: int) -> np.ndarray:
    T = max(len(s) for s in seqs)
    out = np.full((len(seqs), T), fill, dtype=np.int64)
    for i, s in enumerate(seqs):
        out[i, :len(s)] = s
    return out


def collate(examples: Sequence[Union[MlmExample, PairExample]]) -> Batch:
    """Pad a homogeneous list of examples into one batch."""
    if not examples:
        raise ValueError("empty batch")
    first = examples[0]
    task = "mlm" if isinstance(first, MlmExample) else first.task
    for ex in examples:
        t = "mlm" if isinstance(ex, MlmExample) else ex.task
        if t != task:
            raise ValueError(f"mixed tasks in one batch: {task} and {t}")
    ids = _pad([ex.input_ids for ex in examples], 0)
    mask = _pad([[1] * len(ex.input_ids) for ex in examples], 0).astype(bool)
    if task == "mlm":
        return Batch(task, ids, mask, mlm_labels=_pad([ex.labels for ex in examples], IGNORE))
    mlm = None
    if any(ex.labels is not None for ex in examples):
        mlm = _pad([ex.labels if ex.labels is not None else [IGNORE] * len(ex.input_ids)
                    for ex in examples], IGNORE)
    return Batch(task, ids, mask, mlm_labels=mlm,
                 span_a=np.array([ex.span_a for ex in examples], dtype=np.int64),
                 span_b=np.array([ex.span_b for ex in examples], dtype=np.int64),
                 labels=np.array([ex.class_id for ex in examples], dtype=np.int64))


def sequence_batch(ids: Sequence[Sequence[int]], labels: Optional[Sequence[int]] = None) -> Batch:
    """Batch for sentence classification (the finetune head)."""
    arr = _pad(ids, 0)
    mask = _pad([[1] * len(s) for s in ids], 0).astype(bool)
    lab = None if labels is None else np.asarray(labels, dtype=np.int64)
    return Batch("finetune", arr, mask, labels=lab)


# ---------------------------------------------------------------------------
# primitive layers: forward returns (out, cache); backward returns input grads

def _ln_fwd(x, g, b):
    mu = x.mean(-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + LN_EPS)
    xhat = xc * inv
    return xhat * g + b, (xhat, inv, g)


def _ln_bwd(dy, cache):
    xhat, inv, g = cache
    red = tuple(range(dy.ndim - 1))
    dg = (dy * xhat).sum(red)
    db = dy.sum(red)
    dxhat = dy * g
    n = xhat.shape[-1]
    dx = inv / n * (n * dxhat - dxhat.sum(-1, keepdims=True)
                    - xhat * (dxhat * xhat).sum(-1, keepdims=True))
    return dx, dg, db


_SQRT2 = math.sqrt(2.0)
_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)


def _gelu_fwd(x):
    cdf = 0.5 * (1.0 + erf(x / _SQRT2))
    return x * cdf, (x, cdf)


def _gelu_bwd(dy, cache):
    x, cdf = cache
    return dy * (cdf + x * _INV_SQRT2PI * np.exp(-0.5 * x * x))


def _dropout(x, rate, rng):
    if rate <= 0.0 or rng is None:
        return x, None
    keep = (rng.random(x.shape) >= rate).astype(x.dtype) / (1.0 - rate)
    return x * keep, keep


def _affine_grad(x, dy):
    """Weight/bias grads for y = x @ w + b with arbitrary leading dims."""
    x2 = x.reshape(-1, x.shape[-1])
    d2 = dy.reshape(-1, dy.shape[-1])
    return x2.T @ d2, d2.sum(0)


def _split_heads(x, nh):
    B, T, H = x.shape
    return x.reshape(B, T, nh, H // nh).transpose(0, 2, 1, 3)


def _merge_heads(x):
    B, nh, T, dh = x.shape
    return x.transpose(0, 2, 1, 3).reshape(B, T, nh * dh)


def _softmax(s):
    s = s - s.max(-1, keepdims=True)
    e = np.exp(s)
    return e / e.sum(-1, keepdims=True)


def _layer_fwd(p, l, x, key_bias, cfg, rng):
    pre = f"layer{l}."
    nh = cfg.heads
    dh = cfg.hidden // nh
    q = _split_heads(x @ p[pre + "q.w"] + p[pre + "q.b"], nh)
    k = _split_heads(x @ p[pre + "k.w"] + p[pre + "k.b"], nh)
    v = _split_heads(x @ p[pre + "v.w"] + p[pre + "v.b"], nh)
    scale = 1.0 / math.sqrt(dh)
    scores = q @ k.transpose(0, 1, 3, 2) * scale + key_bias[:, None, None, :]
    att = _softmax(scores)
    ctx = _merge_heads(att @ v)
    attn_out = ctx @ p[pre + "o.w"] + p[pre + "o.b"]
    attn_out, keep1 = _dropout(attn_out, cfg.dropout, rng)
    h1, ln1 = _ln_fwd(x + attn_out, p[pre + "ln1.g"], p[pre + "ln1.b"])
    f_pre = h1 @ p[pre + "ffn1.w"] + p[pre + "ffn1.b"]
    f_act, gcache = _gelu_fwd(f_pre)
    f_out = f_act @ p[pre + "ffn2.w"] + p[pre + "ffn2.b"]
    f_out, keep2 = _dropout(f_out, cfg.dropout, rng)
    h2, ln2 = _ln_fwd(h1 + f_out, p[pre + "ln2.g"], p[pre + "ln2.b"])
    cache = (x, q, k, v, att, ctx, keep1, h1, ln1, gcache, f_act, keep2, ln2, scale)
    return h2, cache


def _layer_bwd(p, l, dh2, cache, cfg, g):
    pre = f"layer{l}."
    x, q, k, v, att, ctx, keep1, h1, ln1, gcache, f_act, keep2, ln2, scale = cache
    nh = cfg.heads
    dsum2, dg_, db_ = _ln_bwd(dh2, ln2)
    g[pre + "ln2.g"] += dg_
    g[pre + "ln2.b"] += db_
    dh1 = dsum2.copy()
    df_out = dsum2 if keep2 is None else dsum2 * keep2
    dw, db = _affine_grad(f_act, df_out)
    g[pre + "ffn2.w"] += dw
    g[pre + "ffn2.b"] += db
    df_act = df_out @ p[pre + "ffn2.w"].T
    df_pre = _gelu_bwd(df_act, gcache)
    dw, db = _affine_grad(h1, df_pre)
    g[pre + "ffn1.w"] += dw
    g[pre + "ffn1.b"] += db
    dh1 += df_pre @ p[pre + "ffn1.w"].T
    dsum1, dg_, db_ = _ln_bwd(dh1, ln1)
    g[pre + "ln1.g"] += dg_
    g[pre + "ln1.b"] += db_
    dx = dsum1.copy()
    dattn = dsum1 if keep1 is None else dsum1 * keep1
    dw, db = _affine_grad(ctx, dattn)
    g[pre + "o.w"] += dw
    g[pre + "o.b"] += db
    dctx = _split_heads(dattn @ p[pre + "o.w"].T, nh)
    datt = dctx @ v.transpose(0, 1, 3, 2)
    dv = att.transpose(0, 1, 3, 2) @ dctx
    dscores = att * (datt - (datt * att).sum(-1, keepdims=True)) * scale
    dq = dscores @ k
    dk = dscores.transpose(0, 1, 3, 2) @ q
    for name, dproj in (("q", dq), ("k", dk), ("v", dv)):
        dproj = _merge_heads(dproj)
        dw, db = _affine_grad(x, dproj)
        g[pre + name + ".w"] += dw
        g[pre + name + ".b"] += db
        dx += dproj @ p[pre + name + ".w"].T
    return dx


# ---------------------------------------------------------------------------
# encoder

def _check_ids(p: EncoderParams, input_ids: np.ndarray, attention_mask: Optional[np.ndarray]):
    ids = np.asarray(input_ids)
    if ids.ndim == 1:
        ids = ids[None, :]
    if ids.shape[1] > p.cfg.max_len:
        raise ValueError(f"sequence length {ids.shape[1]} exceeds max_len {p.cfg.max_len}")
    if ids.size and (ids.min() < 0 or ids.max() >= p.cfg.vocab_size):
        raise ValueError("token id outside the vocabulary")
    if attention_mask is None:
        mask = np.ones(ids.shape, dtype=bool)
    else:
        mask = np.asarray(attention_mask, dtype=bool)
        if mask.ndim == 1:
            mask = mask[None, :]
        if mask.shape != ids.shape:
            raise ValueError("attention mask shape differs from input_ids")
    return ids, mask


def _encode_fwd(p: EncoderParams, ids, mask, rng=None):
    cfg = p.cfg
    T = ids.shape[1]
    x0 = p["tok_emb"][ids] + p["pos_emb"][:T]
    x, emb_ln = _ln_fwd(x0, p["emb_ln.g"], p["emb_ln.b"])
    x, emb_keep = _dropout(x, cfg.dropout, rng)
    key_bias = np.where(mask, 0.0, _NEG).astype(x.dtype)
    caches = []
    for l in range(cfg.layers):
        x, c = _layer_fwd(p, l, x, key_bias, cfg, rng)
        caches.append(c)
    return x, (ids, emb_ln, emb_keep, caches)


def _encode_bwd(p: EncoderParams, dh, cache, g):
    ids, emb_ln, emb_keep, caches = cache
    for l in reversed(range(p.cfg.layers)):
        dh = _layer_bwd(p, l, dh, caches[l], p.cfg, g)
    if emb_keep is not None:
        dh = dh * emb_keep
    dx0, dg_, db_ = _ln_bwd(dh, emb_ln)
    g["emb_ln.g"] += dg_
    g["emb_ln.b"] += db_
    np.add.at(g["tok_emb"], ids.reshape(-1), dx0.reshape(-1, dx0.shape[-1]))
    g["pos_emb"][:ids.shape[1]] += dx0.sum(0)


def encode(p: EncoderParams, input_ids, attention_mask=None, rng=None) -> np.ndarray:
    """Last-layer hidden states, shape (B, T, hidden). Dropout only when ``rng`` is given."""
    ids, mask = _check_ids(p, input_ids, attention_mask)
    return _encode_fwd(p, ids, mask, rng)[0]


# ---------------------------------------------------------------------------
# heads

def span_max_pool(hidden: np.ndarray, span) -> np.ndarray:
    """Element-wise max of ``hidden[start:end]`` for a (T, H) array."""
    s, e = int(span[0]), int(span[1])
    if not 0 <= s < e <= hidden.shape[0]:
        raise ValueError(f"span {(s, e)} empty or outside sequence of length {hidden.shape[0]}")
    return hidden[s:e].max(0)


def _pool_fwd(h, spans):
    B, T, H = h.shape
    pos = np.arange(T)
    inside = (pos[None, :] >= spans[:, :1]) & (pos[None, :] < spans[:, 1:2])  # (B, T)
    if not inside.any(1).all():
        raise ValueError("empty span in batch")
    masked = np.where(inside[:, :, None], h, -np.inf)
    arg = masked.argmax(1)  # (B, H)
    pooled = np.take_along_axis(h, arg[:, None, :], 1)[:, 0, :]
    return pooled, arg


def _pool_bwd(dpooled, arg, dh):
    B, H = arg.shape
    bi = np.repeat(np.arange(B), H)
    hi = np.tile(np.arange(H), B)
    np.add.at(dh, (bi, arg.reshape(-1), hi), dpooled.reshape(-1))


def _mlp_fwd(p, task, z):
    acts = [z]
    for i in range(1, 5):
        z = z @ p[f"{task}.mlp{i}.w"] + p[f"{task}.mlp{i}.b"]
        if i < 4:
            z = np.maximum(z, 0.0)
        acts.append(z)
    return z, acts


def _mlp_bwd(p, task, dz, acts, g):
    for i in range(4, 0, -1):
        if i < 4:
            dz = dz * (acts[i] > 0)
        dw, db = _affine_grad(acts[i - 1], dz)
        g[f"{task}.mlp{i}.w"] += dw
        g[f"{task}.mlp{i}.b"] += db
        dz = dz @ p[f"{task}.mlp{i}.w"].T
    return dz


def mlp_logits(p: EncoderParams, task: str, pooled_a: np.ndarray, pooled_b: np.ndarray) -> np.ndarray:
    if task not in PAIR_TASKS:
        raise ValueError(f"no pair head for task {task!r}")
    z = np.concatenate([pooled_a, pooled_b], -1)
    return _mlp_fwd(p, task, z)[0]


def pair_logits(p: EncoderParams, hidden: np.ndarray, span_a, span_b, task: str) -> np.ndarray:
    """Class scores for one word pair from (T, H) hidden states."""
    if task not in PAIR_TASKS:
        raise ValueError(f"no pair head for task {task!r}")
    return mlp_logits(p, task, span_max_pool(hidden, span_a), span_max_pool(hidden, span_b))


def _ce_fwd(logits, labels):
    """Mean cross-entropy and d(loss)/d(logits)."""
    # inf logits surface later as a NumericError naming the array
    with np.errstate(invalid="ignore"):
        z = logits - logits.max(-1, keepdims=True)
        lse = np.log(np.exp(z).sum(-1, keepdims=True))
        logp = z - lse
    n = len(labels)
    loss = -logp[np.arange(n), labels].mean()
    d = np.exp(logp)
    d[np.arange(n), labels] -= 1.0
    return float(loss), d / n


def cross_entropy(logits: np.ndarray, labels) -> float:
    logits = np.atleast_2d(logits)
    return _ce_fwd(logits, np.atleast_1d(np.asarray(labels)))[0]


# ---------------------------------------------------------------------------
# loss and gradient

@dataclass
class TaskLoss:
    components: dict[str, float] = field(default_factory=dict)

    @property
    def total(self) -> float:
        return float(sum(self.components.values()))

    def __getattr__(self, name):
        if name in HEAD_TASKS:
            return self.components.get(name)
        raise AttributeError(name)

    def add(self, task: str, value: float) -> None:
        self.components[task] = self.components.get(task, 0.0) + value


def _head_fwd_bwd(p, batch, h, need_grad, g, rng):
    """Returns [(task, loss)] and dL/dh (or None)."""
    out = []
    dh = np.zeros_like(h) if need_grad else None
    if batch.mlm_labels is not None:
        lab = np.asarray(batch.mlm_labels)
        bi, ti = np.nonzero(lab != IGNORE)
        if len(bi):
            hs = h[bi, ti]
            zt = hs @ p["mlm.transform.w"] + p["mlm.transform.b"]
            ga, gcache = _gelu_fwd(zt)
            y, lncache = _ln_fwd(ga, p["mlm.ln.g"], p["mlm.ln.b"])
            logits = y @ p["tok_emb"].T + p["mlm.bias"]
            loss, dlog = _ce_fwd(logits, lab[bi, ti])
            out.append(("mlm", loss))
            if need_grad:
                g["mlm.bias"] += dlog.sum(0)
                g["tok_emb"] += dlog.T @ y
                dy = dlog @ p["tok_emb"]
                dga, dg_, db_ = _ln_bwd(dy, lncache)
                g["mlm.ln.g"] += dg_
                g["mlm.ln.b"] += db_
                dzt = _gelu_bwd(dga, gcache)
                dw, db = _affine_grad(hs, dzt)
                g["mlm.transform.w"] += dw
                g["mlm.transform.b"] += db
                np.add.at(dh, (bi, ti), dzt @ p["mlm.transform.w"].T)
        elif batch.task == "mlm":
            raise ValueError("MLM batch has no supervised positions")
    if batch.task in PAIR_TASKS:
        if batch.labels is None or len(batch.labels) == 0:
            raise ValueError(f"{batch.task} batch has no labels")
        pa, arg_a = _pool_fwd(h, batch.span_a)
        pb, arg_b = _pool_fwd(h, batch.span_b)
        logits, acts = _mlp_fwd(p, batch.task, np.concatenate([pa, pb], -1))
        loss, dlog = _ce_fwd(logits, batch.labels)
        out.append((batch.task, loss))
        if need_grad:
            dz = _mlp_bwd(p, batch.task, dlog, acts, g)
            H = h.shape[-1]
            _pool_bwd(dz[:, :H], arg_a, dh)
            _pool_bwd(dz[:, H:], arg_b, dh)
    elif batch.task == "finetune":
        if batch.labels is None or len(batch.labels) == 0:
            raise ValueError("finetune batch has no labels")
        cls = h[:, 0]
        cls_d, keep = _dropout(cls, p.cfg.dropout, rng)
        logits = cls_d @ p["finetune.w"] + p["finetune.b"]
        loss, dlog = _ce_fwd(logits, batch.labels)
        out.append(("finetune", loss))
        if need_grad:
            dw, db = _affine_grad(cls_d, dlog)
            g["finetune.w"] += dw
            g["finetune.b"] += db
            dcls = dlog @ p["finetune.w"].T
            dh[:, 0] += dcls if keep is None else dcls * keep
    elif batch.task != "mlm":
        raise ValueError(f"unknown task {batch.task!r}")
    return out, dh


def _run(p: EncoderParams, batches, need_grad: bool, rng=None, frozen_encoder: bool = False):
    if isinstance(batches, Batch):
        batches = [batches]
    tl = TaskLoss()
    g = {n: np.zeros_like(a) for n, a in p.arrays.items()} if need_grad else None
    for batch in batches:
        ids, mask = _check_ids(p, batch.input_ids, batch.attention_mask)
        h, cache = _encode_fwd(p, ids, mask, rng)
        parts, dh = _head_fwd_bwd(p, batch, h, need_grad, g, rng)
        if not parts:
            raise ValueError("batch has no supervised positions")
        for task, loss in parts:
            if not math.isfinite(loss):
                raise NumericError(f"{task} loss")
            tl.add(task, loss)
        if need_grad and not frozen_encoder:
            _encode_bwd(p, dh, cache, g)
    if need_grad:
        for name, arr in g.items():
            if not np.all(np.isfinite(arr)):
                raise NumericError(name, "non-finite gradient")
    return tl, g


def loss(p: EncoderParams, batches, rng=None) -> TaskLoss:
    """Per-task mean cross-entropy; ``total`` sums the tasks present."""
    return _run(p, batches, False, rng)[0]


def grad(p: EncoderParams, batches, rng=None, frozen_encoder: bool = False):
    """(TaskLoss, gradient dict) of ``TaskLoss.total`` w.r.t. every parameter.

    Pass the same seeded ``rng`` state as a matching :func:`loss` call to
    reproduce dropout masks.
    """
    return _run(p, batches, True, rng, frozen_encoder)


def predict_pairs(p: EncoderParams, batch: Batch) -> np.ndarray:
    ids, mask = _check_ids(p, batch.input_ids, batch.attention_mask)
    h, _ = _encode_fwd(p, ids, mask)
    pa, _ = _pool_fwd(h, batch.span_a)
    pb, _ = _pool_fwd(h, batch.span_b)
    return _mlp_fwd(p, batch.task, np.concatenate([pa, pb], -1))[0].argmax(-1)


def predict_sequences(p: EncoderParams, batch: Batch) -> np.ndarray:
    ids, mask = _check_ids(p, batch.input_ids, batch.attention_mask)
    h, _ = _encode_fwd(p, ids, mask)
    return (h[:, 0] @ p["finetune.w"] + p["finetune.b"]).argmax(-1)


# ---------------------------------------------------------------------------
# checkpoint container
#
#   bytes 0-7   magic b"CSERCKP1"
#   bytes 8-11  header length N, uint32 little-endian
#   next N      UTF-8 JSON header (sorted keys): config, manifest, arrays
#               index [{name, shape, offset, nbytes}], extra
#   remainder   each array as row-major little-endian float32, back to back

MAGIC = b"CSERCKP1"
CKPT_VERSION = 1


def save_checkpoint(path, p: EncoderParams, vocab_hash: str, extra: Optional[dict] = None) -> None:
    index = []
    blobs = []
    offset = 0
    for name in p.names():
        blob = np.ascontiguousarray(p[name], dtype="<f4").tobytes()
        index.append({"name": name, "shape": list(p[name].shape), "offset": offset, "nbytes": len(blob)})
        blobs.append(blob)
        offset += len(blob)
    header = {
        "config": p.cfg.to_dict(),
        "manifest": {"format_version": CKPT_VERSION, "vocab_hash": vocab_hash,
                     "payload_sha256": hashlib.sha256(b"".join(blobs)).hexdigest()},
        "arrays": index,
        "extra": extra or {},
    }
    hbytes = json.dumps(header, ensure_ascii=False, sort_keys=True, separators=(",", ":")).encode("utf-8")
    tmp = Path(str(path) + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(hbytes)))
        fh.write(hbytes)
        for blob in blobs:
            fh.write(blob)
    tmp.replace(path)


def load_checkpoint(path, dtype: Optional[str] = None) -> tuple[EncoderParams, dict]:
    """Returns (params, header). Arrays are cast to the config dtype (or ``dtype``)."""
    data = Path(path).read_bytes()
    if data[:8] != MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")
    (hlen,) = struct.unpack("<I", data[8:12])
    header = json.loads(data[12:12 + hlen].decode("utf-8"))
    if header["manifest"].get("format_version") != CKPT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version")
    payload = data[12 + hlen:]
    if hashlib.sha256(payload).hexdigest() != header["manifest"]["payload_sha256"]:
        raise ValueError(f"{path}: payload digest mismatch")
    cfg = EncoderConfig.from_dict(header["config"])
    if dtype is not None:
        cfg.dtype = dtype
    arrays = {}
    for ent in header["arrays"]:
        raw = np.frombuffer(payload, dtype="<f4", count=int(np.prod(ent["shape"], dtype=np.int64)),
                            offset=ent["offset"])
        arrays[ent["name"]] = raw.reshape(ent["shape"]).astype(cfg.dtype)
    return EncoderParams(cfg, arrays), header
