"""Time the compiled edit-distance kernels against the pure-Python fallback.

    python benchmarks/bench_levenshtein.py --train 150 --heldout 40 --length 50

Both backends must agree on every result; the script checks that before
reporting timings.
"""

import argparse
import time

import numpy as np

from cserkit import _lev_py

try:
    from cserkit import _lev
except ImportError:
    _lev = None


def corpus(n, length, rng, alphabet):
    # near-duplicate clusters make best_matches pruning realistic
    seeds = ["".join(rng.choice(alphabet, size=length)) for _ in range(max(1, n // 5))]
    out = []
    for _ in range(n):
        s = list(seeds[rng.integers(len(seeds))])
        for _ in range(rng.integers(0, length // 3 + 1)):
            s[rng.integers(len(s))] = rng.choice(alphabet)
        out.append("".join(s[: max(1, length + int(rng.integers(-length // 4, length // 4 + 1)))]))
    return out


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--train", type=int, default=150)
    ap.add_argument("--heldout", type=int, default=40)
    ap.add_argument("--length", type=int, default=50)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    if _lev is None:
        raise SystemExit("compiled extension not built; run `pip install -e .` first")

    rng = np.random.default_rng(args.seed)
    alphabet = np.array([chr(0x4E00 + i) for i in range(300)])
    left = corpus(args.train, args.length, rng, alphabet)
    right = corpus(args.heldout, args.length, rng, alphabet)

    assert np.array_equal(_lev.distance_matrix(left, right), _lev_py.distance_matrix(left, right))
    for a, b in zip(_lev.best_matches(left, right), _lev_py.best_matches(left, right)):
        assert np.allclose(np.asarray(a, dtype=float), np.asarray(b, dtype=float))

    pairs = args.train * args.heldout
    print(f"{args.train} x {args.heldout} pairs of ~{args.length}-character strings ({pairs} pairs)")
    print(f"{'kernel':<16}{'python s':>10}{'cython s':>10}{'speedup':>9}")
    for name in ("distance_matrix", "best_matches"):
        tp = best_of(lambda: getattr(_lev_py, name)(left, right), args.repeat)
        tc = best_of(lambda: getattr(_lev, name)(left, right), args.repeat)
        print(f"{name:<16}{tp:>10.3f}{tc:>10.4f}{tp / tc:>8.0f}x")


if __name__ == "__main__":
    main()
