import sys

import numpy as np
import pytest

from cserkit.deptree import DEP_LABELS, DepTree

EXTRA_LABELS = ("HED", "WP", "punct")


def random_tree(rng: np.random.Generator, n: int, sentence_id: str = "") -> DepTree:
    """Uniform-ish random rooted tree: shuffle nodes, attach each to an earlier one."""
    order = rng.permutation(n)
    heads = [0] * n
    for k in range(1, n):
        heads[order[k]] = int(order[rng.integers(k)]) + 1
    labels = []
    for i in range(n):
        if heads[i] == 0:
            labels.append("HED")
        else:
            pool = DEP_LABELS + EXTRA_LABELS
            labels.append(pool[int(rng.integers(len(pool)))])
    forms = ["".join(chr(0x4E00 + int(c)) for c in rng.integers(0, 50, size=rng.integers(1, 4)))
             for _ in range(n)]
    return DepTree.from_heads(forms, heads, labels, sentence_id)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


# Worked example sentence, arcs arranged so the direction, label and "others"
# examples attached to it all hold at once under the literal definitions.
WORKERS_CONLLU = """\
# sent_id = workers
1\t全厂\t_\t_\t_\t_\t0\tHED\t_\t_
2\t职工\t_\t_\t_\t_\t1\tATT\t_\t_
3\t讨论\t_\t_\t_\t_\t2\tSBV\t_\t_
4\t并\t_\t_\t_\t_\t5\tLAD\t_\t_
5\t听取\t_\t_\t_\t_\t3\tCOO\t_\t_
6\t了\t_\t_\t_\t_\t5\tRAD\t_\t_
7\t报告\t_\t_\t_\t_\t5\tVOB\t_\t_

"""

# The same sentence as an LTP-style parser attaches it (modifier -> head).
WORKERS_LTP_CONLLU = """\
# sent_id = workers-ltp
1\t全厂\t_\t_\t_\t_\t2\tATT\t_\t_
2\t职工\t_\t_\t_\t_\t3\tSBV\t_\t_
3\t讨论\t_\t_\t_\t_\t0\tHED\t_\t_
4\t并\t_\t_\t_\t_\t5\tLAD\t_\t_
5\t听取\t_\t_\t_\t_\t3\tCOO\t_\t_
6\t了\t_\t_\t_\t_\t5\tRAD\t_\t_
7\t报告\t_\t_\t_\t_\t5\tVOB\t_\t_

"""


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
