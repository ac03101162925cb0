"""Pre-training example generation from parsed sentences.

Sentences are tokenized per character; each word becomes a contiguous span
of token positions. Two record kinds come out: MLM records (BERT-style
corruption) and pair records for the structure/relation heads.
"""

from __future__ import annotations

import hashlib
import json
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Optional, Sequence, Union

import numpy as np

from .deptree import DEP_LABELS, DepTree, Rel2, Rel3, bfs_distances

PAD, UNK, CLS, SEP, MASK = 0, 1, 2, 3, 4
RESERVED = ("[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]")
IGNORE = -1

TASKS = ("mlm", "dsp", "dsp3", "drp")
PAIR_TASKS = ("dsp", "dsp3", "drp")
NUM_CLASSES = {"dsp": 2, "dsp3": 3, "drp": len(DEP_LABELS), "finetune": 2}
_TASK_CODE = {t: i for i, t in enumerate(TASKS)}
_LABEL_ID = {lab: i for i, lab in enumerate(DEP_LABELS)}

FORMAT_VERSION = 1
DEFAULT_K = 2

Span = tuple[int, int]


class ExampleFormatError(ValueError):
    def __init__(self, recno: int, msg: str):
        super().__init__(f"record {recno}: {msg}")
        self.recno = recno


@dataclass(frozen=True)
class Vocab:
    tokens: tuple[str, ...]

    def __post_init__(self):
        if tuple(self.tokens[:len(RESERVED)]) != RESERVED:
            raise ValueError("vocabulary must start with the reserved tokens")
        if len(set(self.tokens)) != len(self.tokens):
            raise ValueError("duplicate token in vocabulary")
        object.__setattr__(self, "_index", {t: i for i, t in enumerate(self.tokens)})

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def size(self) -> int:
        return len(self.tokens)

    def id(self, tok: str) -> int:
        return self._index.get(tok, UNK)

    def to_json(self) -> str:
        return json.dumps({"format_version": FORMAT_VERSION, "tokens": list(self.tokens)},
                          ensure_ascii=False, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "Vocab":
        return cls(tuple(json.loads(text)["tokens"]))

    def hash(self) -> str:
        payload = json.dumps(list(self.tokens), ensure_ascii=False).encode("utf-8")
        return hashlib.sha256(payload).hexdigest()[:16]

    def save(self, path) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Vocab":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


def build_vocab(corpus: Iterable[str], min_freq: int = 1) -> Vocab:
    """Character vocabulary: frequency descending, then code point. Whitespace is skipped."""
    if min_freq < 1:
        raise ValueError("min_freq must be >= 1")
    counts: Counter[str] = Counter()
    seen_any = False
    for sent in corpus:
        seen_any = True
        counts.update(ch for ch in sent if not ch.isspace())
    if not seen_any or not counts:
        raise ValueError("cannot build a vocabulary from an empty corpus")
    kept = sorted((c for c, n in counts.items() if n >= min_freq and c not in RESERVED),
                  key=lambda c: (-counts[c], ord(c) if len(c) == 1 else c))
    return Vocab(RESERVED + tuple(kept))


@dataclass(frozen=True)
class TokenizedSentence:
    token_ids: tuple[int, ...]
    word_spans: tuple[Span, ...]
    sentence_id: str = ""


def tokenize(forms: Sequence[str], vocab: Vocab, max_len: int,
             sentence_id: str = "") -> Optional[TokenizedSentence]:
    """[CLS] + one id per character + [SEP]; None if that exceeds ``max_len``."""
    if max_len < 8:
        raise ValueError("max_len must be >= 8")
    ids = [CLS]
    spans = []
    for w in forms:
        if not w:
            raise ValueError("empty word form")
        start = len(ids)
        ids.extend(vocab.id(ch) for ch in w)
        spans.append((start, len(ids)))
    ids.append(SEP)
    if len(ids) > max_len:
        return None
    return TokenizedSentence(tuple(ids), tuple(spans), sentence_id)


@dataclass(frozen=True)
class MlmExample:
    input_ids: tuple[int, ...]
    labels: tuple[int, ...]
    sentence_id: str = ""


@dataclass(frozen=True)
class PairExample:
    input_ids: tuple[int, ...]
    span_a: Span
    span_b: Span
    task: str
    class_id: int
    sentence_id: str = ""
    # MLM labels when masking co-occurs with the pair on one input
    labels: Optional[tuple[int, ...]] = None


Example = Union[MlmExample, PairExample]


def mask_mlm(ts: TokenizedSentence, rng_seed, rate: float = 0.15,
             protected: Iterable[Span] = (), vocab_size: Optional[int] = None) -> MlmExample:
    """Select each eligible position with probability ``rate``.

    A selected position becomes [MASK] 80% of the time, a random
    non-reserved token different from the original 10%, and stays as is
    10%. CLS, SEP and positions inside ``protected`` spans are never
    selected.
    """
    if not 0.0 <= rate <= 1.0:
        raise ValueError("rate must lie in [0, 1]")
    rng = np.random.default_rng(rng_seed)
    ids = np.array(ts.token_ids, dtype=np.int64)
    n = len(ids)
    eligible = np.ones(n, dtype=bool)
    eligible[0] = eligible[-1] = False
    for s, e in protected:
        eligible[s:e] = False
    u = rng.random(n)
    action = rng.random(n)
    selected = eligible & (u < rate)
    labels = np.where(selected, ids, IGNORE)
    out = ids.copy()
    out[selected & (action < 0.8)] = MASK
    rand_pos = np.flatnonzero(selected & (action >= 0.8) & (action < 0.9))
    if len(rand_pos):
        if vocab_size is None or vocab_size <= len(RESERVED) + 1:
            raise ValueError("random replacement needs a vocabulary with >= 2 ordinary tokens")
        # draw from the ordinary ids minus the original one
        draw = rng.integers(len(RESERVED), vocab_size - 1, size=len(rand_pos))
        orig = ids[rand_pos]
        draw = np.where((draw >= orig) & (orig >= len(RESERVED)), draw + 1, draw)
        out[rand_pos] = draw
    return MlmExample(tuple(int(x) for x in out), tuple(int(x) for x in labels), ts.sentence_id)


def _allocate(k: int, avail: list[int], rng: np.random.Generator) -> list[int]:
    """Split ``k`` as evenly as possible over classes, capped by availability.

    The remainder goes to randomly ordered classes; shortfall of a capped
    class moves to classes with spare pairs in that same order.
    """
    c = len(avail)
    order = [int(x) for x in rng.permutation(c)]
    quota = [k // c] * c
    for cls in order[:k % c]:
        quota[cls] += 1
    take = [min(q, a) for q, a in zip(quota, avail)]
    missing = min(k, sum(avail)) - sum(take)
    while missing > 0:
        for cls in order:
            if missing and take[cls] < avail[cls]:
                take[cls] += 1
                missing -= 1
    return take


def sample_pairs(t: DepTree, ts: TokenizedSentence, task: str, k: int = DEFAULT_K,
                 rng_seed=0) -> list[PairExample]:
    """Draw up to ``k`` distinct ordered word pairs labelled for ``task``."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if len(ts.word_spans) != len(t):
        raise ValueError("tokenized sentence does not match tree word count")
    rng = np.random.default_rng(rng_seed)
    arcs = t.arcs()
    if task == "dsp":
        pools = [[(d, h) for d, h, _ in arcs], [(h, d) for d, h, _ in arcs]]
        classes = [int(Rel2.CHILD), int(Rel2.PARENT)]
    elif task == "dsp3":
        n = len(t)
        others = []
        for i in range(n):
            dist = bfs_distances(t, i)
            others.extend((i, j) for j in range(n) if dist[j] > 1)
        pools = [[(d, h) for d, h, _ in arcs], [(h, d) for d, h, _ in arcs], others]
        classes = [int(Rel3.CHILD), int(Rel3.PARENT), int(Rel3.OTHERS)]
    elif task == "drp":
        usable = [(d, h, lab) for d, h, lab in arcs if lab in _LABEL_ID]
        chosen = rng.permutation(len(usable))[:k]
        flips = rng.random(len(chosen)) < 0.5
        out = []
        for ix, flip in zip(chosen, flips):
            d, h, lab = usable[ix]
            a, b = (h, d) if flip else (d, h)
            out.append(_pair(ts, a, b, task, _LABEL_ID[lab]))
        return out
    else:
        raise ValueError(f"unknown pair task {task!r}")
    take = _allocate(k, [len(p) for p in pools], rng)
    picked = []
    for pool, cls, q in zip(pools, classes, take):
        for ix in sorted(int(x) for x in rng.choice(len(pool), size=q, replace=False)):
            picked.append((pool[ix], cls))
    order = rng.permutation(len(picked))
    return [_pair(ts, *picked[o][0], task, picked[o][1]) for o in order]


def _pair(ts: TokenizedSentence, a: int, b: int, task: str, cls: int) -> PairExample:
    return PairExample(ts.token_ids, ts.word_spans[a], ts.word_spans[b], task, cls, ts.sentence_id)


def generate_examples(trees: Iterable[DepTree], vocab: Vocab, tasks: Sequence[str] = TASKS,
                      k: int = DEFAULT_K, seed: int = 0, max_len: int = 128,
                      mlm_rate: float = 0.15, cooccur: bool = False) -> Iterator[Example]:
    """Examples in sentence order; each (sentence index, task) gets its own RNG stream.

    With ``cooccur`` set, pair records also carry MLM corruption with their
    two spans protected, and no separate MLM records are produced.
    """
    for t in tasks:
        if t not in TASKS:
            raise ValueError(f"unknown task {t!r}")
    ordered = [t for t in TASKS if t in tasks]
    for idx, tree in enumerate(trees):
        ts = tokenize(tree.forms, vocab, max_len, tree.sentence_id)
        if ts is None:
            continue
        for task in ordered:
            seed_seq = [seed, idx, _TASK_CODE[task]]
            if task == "mlm":
                if cooccur:
                    continue
                ex = mask_mlm(ts, seed_seq, mlm_rate, vocab_size=len(vocab))
                if any(x != IGNORE for x in ex.labels):
                    yield ex
                continue
            for j, pe in enumerate(sample_pairs(tree, ts, task, k, seed_seq)):
                if cooccur and "mlm" in tasks:
                    m = mask_mlm(ts, seed_seq + [j + 1], mlm_rate, (pe.span_a, pe.span_b), len(vocab))
                    pe = PairExample(m.input_ids, pe.span_a, pe.span_b, pe.task, pe.class_id,
                                     pe.sentence_id, m.labels)
                yield pe


def _dumps(obj: dict) -> str:
    return json.dumps(obj, ensure_ascii=False, sort_keys=True, separators=(",", ":"))


def example_to_dict(ex: Example) -> dict:
    if isinstance(ex, MlmExample):
        return {"type": "mlm", "input_ids": list(ex.input_ids), "labels": list(ex.labels),
                "sentence_id": ex.sentence_id}
    d = {"type": "pair", "input_ids": list(ex.input_ids), "span_a": list(ex.span_a),
         "span_b": list(ex.span_b), "task": ex.task, "class_id": ex.class_id,
         "sentence_id": ex.sentence_id}
    if ex.labels is not None:
        d["labels"] = list(ex.labels)
    return d


def example_from_dict(d: dict, recno: int = 0) -> Example:
    try:
        kind = d["type"]
        ids = tuple(int(x) for x in d["input_ids"])
        sid = str(d.get("sentence_id", ""))
        if kind == "mlm":
            labels = tuple(int(x) for x in d["labels"])
            if len(labels) != len(ids):
                raise ExampleFormatError(recno, "labels and input_ids differ in length")
            return MlmExample(ids, labels, sid)
        if kind != "pair":
            raise ExampleFormatError(recno, f"unknown record type {kind!r}")
        task = d["task"]
        if task not in PAIR_TASKS:
            raise ExampleFormatError(recno, f"unknown pair task {task!r}")
        cls = int(d["class_id"])
        if not 0 <= cls < NUM_CLASSES[task]:
            raise ExampleFormatError(recno, f"class_id {cls} out of range for {task}")
        sa = tuple(int(x) for x in d["span_a"])
        sb = tuple(int(x) for x in d["span_b"])
        for sp in (sa, sb):
            if len(sp) != 2 or not 1 <= sp[0] < sp[1] <= len(ids) - 1:
                raise ExampleFormatError(recno, f"invalid span {list(sp)}")
        if sa == sb:
            raise ExampleFormatError(recno, "span_a equals span_b")
        labels = d.get("labels")
        if labels is not None:
            labels = tuple(int(x) for x in labels)
            if len(labels) != len(ids):
                raise ExampleFormatError(recno, "labels and input_ids differ in length")
        return PairExample(ids, sa, sb, task, cls, sid, labels)
    except ExampleFormatError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ExampleFormatError(recno, f"{type(exc).__name__}: {exc}") from None


def make_header(vocab: Vocab, max_len: int) -> dict:
    return {"format_version": FORMAT_VERSION, "vocab_hash": vocab.hash(), "max_len": max_len}


def write_examples(path, header: dict, examples: Iterable[Example]) -> int:
    n = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(_dumps(header) + "\n")
        for ex in examples:
            fh.write(_dumps(example_to_dict(ex)) + "\n")
            n += 1
    return n


def read_examples(path) -> tuple[dict, list[Example]]:
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise ExampleFormatError(1, "missing header record")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise ExampleFormatError(1, f"bad header: {exc}") from None
    if not isinstance(header, dict) or header.get("format_version") != FORMAT_VERSION:
        raise ExampleFormatError(1, "header lacks a supported format_version")
    out = []
    for recno, line in enumerate(lines[1:], start=2):
        try:
            d = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ExampleFormatError(recno, str(exc)) from None
        if not isinstance(d, dict):
            raise ExampleFormatError(recno, "record is not an object")
        out.append(example_from_dict(d, recno))
    return header, out
