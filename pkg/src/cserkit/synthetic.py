"""Toy grammar with gold dependency parses, for learnability experiments.

Every word category draws from its own small character inventory, so the
whole language uses fewer than 60 distinct characters. Each of the twelve
relation labels appears in at least one construction. ``swap_errors``
builds a binary detection task by swapping two adjacent words and keeping
only swaps whose category sequence the grammar cannot produce.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from .dataops import LabeledSentence
from .deptree import DepTree

# category -> words; characters never repeat across categories
LEXICON: dict[str, tuple[str, ...]] = {
    "N": ("ab", "ac", "bd", "cd", "ea", "eb", "fc", "fd", "g", "h"),
    "V": ("ij", "ik", "jl", "kl", "m", "n"),
    "A": ("o", "p", "qo", "qp"),
    "D": ("r", "s", "rs"),
    "P": ("t", "u"),
    "C": ("v", "w"),
    "LE": ("x",),
    "CONJ": ("y",),
    "VG": ("z", "zA"),  # ditransitive
    "VC": ("B", "CB"),  # causative pivot
}


class _Builder:
    def __init__(self, rng: np.random.Generator):
        self.rng = rng
        self.words: list[str] = []
        self.cats: list[str] = []
        self.heads: list[Optional[int]] = []
        self.labels: list[str] = []

    def word(self, cat: str) -> str:
        lex = LEXICON[cat]
        return lex[int(self.rng.integers(len(lex)))]

    def add(self, cat: str, label: str, head: Optional[int] = None) -> int:
        self.words.append(self.word(cat))
        self.cats.append(cat)
        self.heads.append(head)
        self.labels.append(label)
        return len(self.words) - 1

    def set_head(self, i: int, head: int) -> None:
        self.heads[i] = head


def _np(b: _Builder, label: str, p_att: float = 0.4) -> int:
    """Optional adjective + noun; returns the noun's index, its head left unset."""
    adj = b.add("A", "ATT") if b.rng.random() < p_att else None
    n = b.add("N", label)
    if adj is not None:
        b.set_head(adj, n)
    return n


def _sentence(rng: np.random.Generator) -> _Builder:
    b = _Builder(rng)
    kind = rng.choice(["svo", "svo", "ditrans", "pivot", "fronted", "coord"])
    pend_v: list[int] = []  # words waiting for the main verb
    if kind == "fronted":
        o = _np(b, "FOB", 0.3)
        pend_v.append(o)
    s = _np(b, "SBV")
    pend_v.append(s)
    if rng.random() < 0.4:
        pend_v.append(b.add("D", "ADV"))
    if rng.random() < 0.3:
        prep = b.add("P", "ADV")
        pend_v.append(prep)
        pn = _np(b, "POB", 0.2)
        b.set_head(pn, prep)
    vcat = {"ditrans": "VG", "pivot": "VC"}.get(kind, "V")
    v = b.add(vcat, "HED")
    for w in pend_v:
        b.set_head(w, v)
    if kind in ("svo", "coord") and rng.random() < 0.35:
        b.add("C", "CMP", v)
    if kind != "pivot" and rng.random() < 0.4:
        b.add("LE", "RAD", v)
    if kind == "svo":
        _np_attach(b, "VOB", v)
    elif kind == "ditrans":
        _np_attach(b, "IOB", v, 0.0)
        _np_attach(b, "VOB", v)
    elif kind == "pivot":
        _np_attach(b, "DBL", v)
        v2 = b.add("V", "VOB", v)
        _np_attach(b, "VOB", v2)
    elif kind == "coord":
        conj = b.add("CONJ", "LAD") if rng.random() < 0.6 else None
        v2 = b.add("V", "COO", v)
        if conj is not None:
            b.set_head(conj, v2)
        _np_attach(b, "VOB", v2)
    return b


def _np_attach(b: _Builder, label: str, head: int, p_att: float = 0.4) -> int:
    n = _np(b, label, p_att)
    b.set_head(n, head)
    return n


def generate_corpus(n: int, seed: int) -> tuple[list[DepTree], list[list[str]]]:
    """``n`` sentences with their gold trees and per-word categories."""
    rng = np.random.default_rng(seed)
    trees, cats = [], []
    for i in range(n):
        b = _sentence(rng)
        heads = [0 if h is None else h + 1 for h in b.heads]
        trees.append(DepTree.from_heads(b.words, heads, b.labels, sentence_id=f"syn{seed}-{i}"))
        cats.append(list(b.cats))
    return trees, cats


def grammatical_patterns(n: int = 20000, seed: int = 12345) -> set[tuple[str, ...]]:
    return {tuple(c) for c in generate_corpus(n, seed)[1]}


def swap_errors(n: int, seed: int, patterns: Optional[set] = None) -> list[LabeledSentence]:
    """Balanced correct/incorrect sentences; errors swap two adjacent words.

    A swap is kept only when it changes the category sequence into one the
    grammar never emits, so labels are unambiguous.
    """
    patterns = patterns if patterns is not None else grammatical_patterns()
    rng = np.random.default_rng([seed, 99])
    out: list[LabeledSentence] = []
    while len(out) < n:
        trees, cats = generate_corpus(1, int(rng.integers(2**31)))
        forms, cat = trees[0].forms, cats[0]
        sid = f"swap{seed}-{len(out)}"
        if len(out) % 2 == 0:
            out.append(LabeledSentence(sid, "".join(forms), 0))
        else:
            cands = [j for j in range(len(forms) - 1)
                     if cat[j] != cat[j + 1]
                     and tuple(cat[:j] + [cat[j + 1], cat[j]] + cat[j + 2:]) not in patterns]
            if not cands:
                continue
            j = cands[int(rng.integers(len(cands)))]
            forms = forms[:j] + [forms[j + 1], forms[j]] + forms[j + 2:]
            out.append(LabeledSentence(sid, "".join(forms), 1, "WordOrder"))
    return out


def alphabet() -> set[str]:
    return {ch for words in LEXICON.values() for w in words for ch in w}
