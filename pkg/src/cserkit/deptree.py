"""Dependency trees read from CoNLL-U and word-pair relation queries.

Word ids are 1-based in files (column 1, column 7) and 0-based everywhere
in this module's API: ``tree_distance(t, 0, 1)`` asks about the first two
words of the sentence.
"""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional, Union

__all__ = [
    "DEP_LABELS",
    "ConllParseError",
    "DepNode",
    "DepTree",
    "Rel2",
    "Rel3",
    "TreeValidationError",
    "classify_pair2",
    "classify_pair3",
    "dep_label",
    "format_conllu",
    "read_conllu",
    "tree_distance",
]

# Closed label set, in the DRP class-id order used by example files.
DEP_LABELS: tuple[str, ...] = (
    "SBV", "FOB", "ADV", "CMP", "VOB", "DBL",
    "IOB", "POB", "LAD", "COO", "ATT", "RAD",
)
_LABEL_SET = frozenset(DEP_LABELS)


class Rel2(enum.IntEnum):
    CHILD = 0
    PARENT = 1


class Rel3(enum.IntEnum):
    CHILD = 0
    PARENT = 1
    OTHERS = 2


class ConllParseError(ValueError):
    def __init__(self, lineno: int, msg: str):
        super().__init__(f"line {lineno}: {msg}")
        self.lineno = lineno


class TreeValidationError(ValueError):
    def __init__(self, sentence_id: str, msg: str):
        super().__init__(f"sentence {sentence_id}: {msg}")
        self.sentence_id = sentence_id


@dataclass(frozen=True)
class DepNode:
    id: int  # 1-based
    form: str
    head: int  # 1-based, 0 = root
    label: str


@dataclass(frozen=True)
class DepTree:
    nodes: tuple[DepNode, ...]
    sentence_id: str = ""
    _heads: tuple[int, ...] = field(init=False, repr=False, compare=False)
    _adj: tuple[tuple[int, ...], ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        self.validate()
        heads = tuple(nd.head - 1 for nd in self.nodes)
        adj: list[list[int]] = [[] for _ in heads]
        for i, h in enumerate(heads):
            if h >= 0:
                adj[i].append(h)
                adj[h].append(i)
        object.__setattr__(self, "_heads", heads)
        object.__setattr__(self, "_adj", tuple(tuple(a) for a in adj))

    @classmethod
    def from_heads(cls, forms: Iterable[str], heads: Iterable[int],
                   labels: Iterable[str], sentence_id: str = "") -> "DepTree":
        """Build from parallel lists; ``heads`` are 1-based with 0 for root."""
        nodes = [DepNode(i + 1, f, h, lab)
                 for i, (f, h, lab) in enumerate(zip(forms, heads, labels))]
        return cls(tuple(nodes), sentence_id)

    def validate(self) -> None:
        sid = self.sentence_id
        n = len(self.nodes)
        if n == 0:
            raise TreeValidationError(sid, "empty sentence")
        roots = 0
        for pos, nd in enumerate(self.nodes):
            if nd.id != pos + 1:
                raise TreeValidationError(sid, f"node {pos + 1} has id {nd.id}")
            if nd.head == nd.id:
                raise TreeValidationError(sid, f"node {nd.id} is its own head")
            if not 0 <= nd.head <= n:
                raise TreeValidationError(sid, f"node {nd.id} has head {nd.head} outside 0..{n}")
            roots += nd.head == 0
        if roots != 1:
            raise TreeValidationError(sid, f"expected exactly one root, found {roots}")
        # every node must reach the root without revisiting
        state = [0] * (n + 1)  # 0 unseen, 1 on stack, 2 reaches root
        state[0] = 2
        for start in range(1, n + 1):
            path = []
            cur = start
            while state[cur] == 0:
                state[cur] = 1
                path.append(cur)
                cur = self.nodes[cur - 1].head
            if state[cur] == 1:
                raise TreeValidationError(sid, f"cycle through node {cur}")
            for p in path:
                state[p] = 2

    def __len__(self) -> int:
        return len(self.nodes)

    @property
    def forms(self) -> list[str]:
        return [nd.form for nd in self.nodes]

    @property
    def heads(self) -> tuple[int, ...]:
        """0-based head index per word, -1 for the root."""
        return self._heads

    def head(self, i: int) -> int:
        return self._heads[self._check(i)]

    def neighbours(self, i: int) -> tuple[int, ...]:
        return self._adj[self._check(i)]

    def arcs(self) -> list[tuple[int, int, str]]:
        """(dependent, head, label) triples, 0-based, root arc excluded."""
        return [(i, h, self.nodes[i].label) for i, h in enumerate(self._heads) if h >= 0]

    def _check(self, i: int) -> int:
        if not 0 <= i < len(self.nodes):
            raise IndexError(f"word index {i} out of range for {len(self.nodes)}-word tree")
        return i


def iter_conllu(text: str) -> Iterator[Union[DepTree, ConllParseError, TreeValidationError]]:
    """Yield one tree per sentence block, or the error that block raised.

    Parsing resumes at the next block after an error, so a single pass
    reports every bad sentence. Sentence ids come from ``# sent_id =``
    comments when present, otherwise the 1-based block ordinal.
    """
    rows: list[DepNode] = []
    sent_id: Optional[str] = None
    bad: Optional[ConllParseError] = None
    blocks = 0
    in_block = False

    def flush():
        nonlocal rows, sent_id, bad, blocks, in_block
        out = None
        if in_block:
            blocks += 1
            if bad is not None:
                out = bad
            elif rows:
                sid = sent_id if sent_id is not None else str(blocks)
                try:
                    out = DepTree(tuple(rows), sid)
                except TreeValidationError as exc:
                    out = exc
        rows, sent_id, bad, in_block = [], None, None, False
        return out

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.rstrip("\r\n")
        if not line.strip():
            item = flush()
            if item is not None:
                yield item
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if body.startswith("sent_id") and "=" in body:
                sent_id = body.split("=", 1)[1].strip()
            continue
        in_block = True
        if bad is not None:
            continue
        try:
            rows.append(_parse_row(line, lineno, len(rows)))
        except ConllParseError as exc:
            bad = exc
    item = flush()
    if item is not None:
        yield item


def _parse_row(line: str, lineno: int, n_before: int) -> DepNode:
    cols = line.split("\t")
    if len(cols) < 8:
        raise ConllParseError(lineno, f"expected at least 8 tab-separated columns, got {len(cols)}")
    try:
        wid = int(cols[0])
        head = int(cols[6])
    except ValueError:
        raise ConllParseError(lineno, f"non-integer ID/HEAD ({cols[0]!r}, {cols[6]!r})") from None
    if wid != n_before + 1:
        raise ConllParseError(lineno, f"expected word id {n_before + 1}, got {wid}")
    if head < 0:
        raise ConllParseError(lineno, f"negative head {head}")
    if cols[1] == "":
        raise ConllParseError(lineno, "empty FORM")
    return DepNode(wid, cols[1], head, cols[7])


def read_conllu(text: str) -> list[DepTree]:
    """Parse CoNLL-U text into trees, raising on the first bad sentence.

    Only columns ID, FORM, HEAD and DEPREL are read. Multi-word token ranges
    (``1-2``) and empty nodes (``1.1``) are outside the supported subset and
    raise :class:`ConllParseError`.
    """
    trees = []
    for item in iter_conllu(text):
        if isinstance(item, Exception):
            raise item
        trees.append(item)
    return trees


def format_conllu(trees: Iterable[DepTree]) -> str:
    out = []
    for t in trees:
        out.append(f"# sent_id = {t.sentence_id}")
        for nd in t.nodes:
            out.append(f"{nd.id}\t{nd.form}\t_\t_\t_\t_\t{nd.head}\t{nd.label}\t_\t_")
        out.append("")
    return "\n".join(out) + ("\n" if out else "")


def tree_distance(t: DepTree, i: int, j: int) -> int:
    """Number of arcs on the undirected path between words ``i`` and ``j``."""
    t._check(i)
    t._check(j)
    if i == j:
        return 0
    # climb both ancestor chains; the path meets at their lowest common ancestor
    depth_i = _ancestors(t, i)
    d = 0
    cur = j
    while cur not in depth_i:
        cur = t.heads[cur]
        d += 1
    return d + depth_i[cur]


def _ancestors(t: DepTree, i: int) -> dict[int, int]:
    out = {}
    d = 0
    while i >= 0:
        out[i] = d
        i = t.heads[i]
        d += 1
    return out


def classify_pair2(t: DepTree, i: int, j: int) -> Optional[Rel2]:
    """CHILD if ``i`` depends on ``j``, PARENT if ``j`` depends on ``i``, else None."""
    _distinct(i, j)
    if t.head(i) == j:
        return Rel2.CHILD
    if t.head(j) == i:
        return Rel2.PARENT
    return None


def classify_pair3(t: DepTree, i: int, j: int) -> Rel3:
    r = classify_pair2(t, i, j)
    return Rel3.OTHERS if r is None else Rel3(int(r))


def dep_label(t: DepTree, i: int, j: int) -> Optional[str]:
    """Label of the arc joining ``i`` and ``j`` when it is one of DEP_LABELS.

    Order-free: the label lives on the dependent's row whichever word is
    passed first.
    """
    _distinct(i, j)
    if t.head(i) == j:
        lab = t.nodes[i].label
    elif t.head(j) == i:
        lab = t.nodes[j].label
    else:
        return None
    return lab if lab in _LABEL_SET else None


def _distinct(i: int, j: int) -> None:
    if i == j:
        raise ValueError("pair relation needs two distinct words")


def bfs_distances(t: DepTree, src: int) -> list[int]:
    """Undirected BFS distances from ``src``; used by the sampler."""
    dist = [-1] * len(t)
    dist[src] = 0
    q = deque([src])
    while q:
        u = q.popleft()
        for v in t.neighbours(u):
            if dist[v] < 0:
                dist[v] = dist[u] + 1
                q.append(v)
    return dist
