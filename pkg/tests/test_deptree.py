from collections import deque
from itertools import permutations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cserkit import deptree
from cserkit.deptree import (
    DEP_LABELS, ConllParseError, DepTree, Rel2, Rel3, TreeValidationError,
    classify_pair2, classify_pair3, dep_label, format_conllu, read_conllu, tree_distance,
)
from conftest import WORKERS_CONLLU, WORKERS_LTP_CONLLU, random_tree


def naive_read(text):
    """Line-by-line reference reader: list of {id: (head, label)} per sentence."""
    sents, cur = [], {}
    for line in text.split("\n"):
        if line.startswith("#"):
            continue
        if line.strip() == "":
            if cur:
                sents.append(cur)
            cur = {}
            continue
        c = line.split("\t")
        cur[int(c[0])] = (int(c[6]), c[7])
    if cur:
        sents.append(cur)
    return sents


def bfs(tree, i, j):
    n = len(tree)
    adj = {k: set() for k in range(n)}
    for d in range(n):
        h = tree.nodes[d].head - 1
        if h >= 0:
            adj[d].add(h)
            adj[h].add(d)
    dist = {i: 0}
    q = deque([i])
    while q:
        u = q.popleft()
        for v in adj[u]:
            if v not in dist:
                dist[v] = dist[u] + 1
                q.append(v)
    return dist[j]


def test_empty_input():
    assert read_conllu("") == []


def test_two_word_sentence():
    (t,) = read_conllu("1\t全厂\t_\t_\t_\t_\t2\tATT\t_\t_\n2\t职工\t_\t_\t_\t_\t0\tHED\t_\t_\n")
    assert t.heads == (1, -1)
    assert t.nodes[1].head == 0
    assert t.forms == ["全厂", "职工"]


def test_fixture_file_matches_naive_reader(rng):
    trees = [random_tree(rng, int(rng.integers(1, 15)), f"s{i}") for i in range(20)]
    text = format_conllu(trees)
    parsed = read_conllu(text)
    assert len(parsed) == 20
    for t, ref in zip(parsed, naive_read(text)):
        assert {nd.id: (nd.head, nd.label) for nd in t.nodes} == ref
    assert [t.sentence_id for t in parsed] == [f"s{i}" for i in range(20)]


def test_comments_and_ids():
    text = "# text = x\n" + WORKERS_CONLLU + "1\ta\t_\t_\t_\t_\t0\tHED\t_\t_\n"
    trees = read_conllu(text)
    assert [t.sentence_id for t in trees] == ["workers", "2"]


@pytest.mark.parametrize("bad, lineno", [
    ("1\ta\t_\t_\t_\t_\t0\n", 1),
    ("1\ta\t_\t_\t_\t_\tx\tHED\t_\t_\n", 1),
    ("1\ta\t_\t_\t_\t_\t0\tHED\t_\t_\n3\tb\t_\t_\t_\t_\t1\tATT\t_\t_\n", 2),
    ("1-2\tab\t_\t_\t_\t_\t_\t_\t_\t_\n", 1),
])
def test_malformed_lines_carry_line_number(bad, lineno):
    with pytest.raises(ConllParseError) as ei:
        read_conllu(bad)
    assert ei.value.lineno == lineno


@pytest.mark.parametrize("rows, msg", [
    ([(0, "HED"), (0, "HED")], "root"),
    ([(2, "ATT"), (1, "ATT")], "root"),
    ([(0, "HED"), (3, "ATT"), (2, "ATT")], "cycle"),
    ([(0, "HED"), (9, "ATT")], "outside"),
    ([(1, "ATT")], "own head"),
])
def test_invalid_trees_rejected(rows, msg):
    text = "# sent_id = bad7\n" + "".join(
        f"{i + 1}\tw\t_\t_\t_\t_\t{h}\t{lab}\t_\t_\n" for i, (h, lab) in enumerate(rows))
    with pytest.raises(TreeValidationError, match=msg) as ei:
        read_conllu(text)
    assert ei.value.sentence_id == "bad7"


def test_distance_basics():
    # chain a -> b -> c
    t = DepTree.from_heads(["a", "b", "c"], [2, 3, 0], ["ATT", "SBV", "HED"])
    assert tree_distance(t, 0, 0) == 0
    assert tree_distance(t, 0, 2) == 2
    with pytest.raises(IndexError):
        tree_distance(t, 0, 3)


def test_distance_matches_bfs(rng):
    for _ in range(500):
        t = random_tree(rng, int(rng.integers(1, 13)))
        n = len(t)
        for i in range(n):
            for j in range(n):
                d = tree_distance(t, i, j)
                assert d == bfs(t, i, j)
                assert d == tree_distance(t, j, i)
                assert d <= n - 1


def test_workers_sentence_relations():
    (t,) = read_conllu(WORKERS_CONLLU)
    ix = {f: i for i, f in enumerate(t.forms)}
    assert classify_pair2(t, ix["全厂"], ix["职工"]) is Rel2.PARENT
    assert classify_pair2(t, ix["职工"], ix["全厂"]) is Rel2.CHILD
    assert classify_pair3(t, ix["了"], ix["报告"]) is Rel3.OTHERS
    assert dep_label(t, ix["职工"], ix["全厂"]) == "ATT"
    assert dep_label(t, ix["讨论"], ix["职工"]) == "SBV"


def test_workers_ltp_attachment_flips_direction_only():
    (t,) = read_conllu(WORKERS_LTP_CONLLU)
    ix = {f: i for i, f in enumerate(t.forms)}
    assert classify_pair2(t, ix["全厂"], ix["职工"]) is Rel2.CHILD
    assert classify_pair3(t, ix["了"], ix["报告"]) is Rel3.OTHERS
    assert dep_label(t, ix["职工"], ix["全厂"]) == "ATT"
    assert dep_label(t, ix["讨论"], ix["职工"]) == "SBV"


def test_non_adjacent_and_root_arc():
    (t,) = read_conllu(WORKERS_CONLLU)
    assert classify_pair2(t, 0, 2) is None  # D = 2
    assert dep_label(t, 0, 2) is None
    hed = DepTree.from_heads(["a", "b"], [0, 1], ["HED", "WP"])
    assert dep_label(hed, 0, 1) is None
    assert classify_pair2(hed, 0, 1) is Rel2.PARENT


def test_pair_errors():
    (t,) = read_conllu(WORKERS_CONLLU)
    with pytest.raises(IndexError):
        classify_pair2(t, 0, 7)
    with pytest.raises(ValueError):
        classify_pair3(t, 1, 1)


def test_relations_match_head_table(rng):
    for _ in range(500):
        t = random_tree(rng, int(rng.integers(2, 13)))
        head = {nd.id - 1: nd.head - 1 for nd in t.nodes}
        lab = {nd.id - 1: nd.label for nd in t.nodes}
        n_child = n_parent = 0
        for i, j in permutations(range(len(t)), 2):
            want2 = Rel2.CHILD if head[i] == j else Rel2.PARENT if head[j] == i else None
            assert classify_pair2(t, i, j) == want2
            r3 = classify_pair3(t, i, j)
            assert r3 == (Rel3.OTHERS if want2 is None else Rel3(int(want2)))
            n_child += r3 is Rel3.CHILD
            n_parent += r3 is Rel3.PARENT
            arc_lab = lab[i] if head[i] == j else lab[j] if head[j] == i else None
            assert dep_label(t, i, j) == (arc_lab if arc_lab in DEP_LABELS else None)
        assert n_child == n_parent == len(t) - 1


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 12), st.integers(0, 2**32 - 1))
def test_relation_properties(n, seed):
    t = random_tree(np.random.default_rng(seed), n)
    for i in range(n):
        for j in range(n):
            for k in range(n):
                assert tree_distance(t, i, k) <= tree_distance(t, i, j) + tree_distance(t, j, k)
            if i != j:
                assert (classify_pair2(t, i, j) is Rel2.CHILD) == (classify_pair2(t, j, i) is Rel2.PARENT)
                assert dep_label(t, i, j) == dep_label(t, j, i)


def test_round_trip_format(rng):
    trees = [random_tree(rng, 5, f"r{i}") for i in range(3)]
    assert read_conllu(format_conllu(trees)) == trees


def test_iter_conllu_resumes_after_bad_block():
    good = "1\ta\t_\t_\t_\t_\t0\tHED\t_\t_\n2\tb\t_\t_\t_\t_\t1\tVOB\t_\t_\n"
    cyclic = "1\ta\t_\t_\t_\t_\t2\tSBV\t_\t_\n2\tb\t_\t_\t_\t_\t1\tVOB\t_\t_\n"
    short = "1\ta\t_\n"
    items = list(deptree.iter_conllu("\n".join([good, cyclic, short, good])))
    assert [type(x).__name__ for x in items] == ["DepTree", "TreeValidationError", "ConllParseError", "DepTree"]
    assert items[0].sentence_id == "1" and items[3].sentence_id == "4"
    assert items[2].lineno == 7
    with pytest.raises(deptree.TreeValidationError):
        deptree.read_conllu("\n".join([good, cyclic]))
