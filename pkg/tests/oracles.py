"""Independent reference computations used by the tests.

Nothing here imports mbrfuse. Each oracle takes the slow, obvious route:
recursion over every edit script, explicit n-gram counting, enumeration of
every monotone warping path.
"""

import itertools
import math
from collections import Counter
from functools import lru_cache


def edit_distance_oracle(ref, hyp):
    """Minimum over all edit scripts, by memoized recursion on suffixes."""
    ref, hyp = tuple(ref), tuple(hyp)

    @lru_cache(maxsize=None)
    def go(i, j):
        if i == len(ref):
            return len(hyp) - j
        if j == len(hyp):
            return len(ref) - i
        return min(
            go(i + 1, j + 1) + (ref[i] != hyp[j]),
            go(i + 1, j) + 1,
            go(i, j + 1) + 1,
        )

    return go(0, 0)


def ngrams(tokens, n):
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def bleu_counts(ref_tokens, hyp_tokens, max_n=4):
    out = []
    for n in range(1, max_n + 1):
        h, r = ngrams(hyp_tokens, n), ngrams(ref_tokens, n)
        matched = 0
        for g, c in h.items():
            matched += min(c, r.get(g, 0))
        out.append((matched, sum(h.values())))
    return out


def bleu_oracle(ref, hyp, smoothing="none", max_n=4):
    """Sentence BLEU in [0, 100] from explicit counts (single pair)."""
    rt, ht = ref.split(), hyp.split()
    if not ht:
        return 0.0
    logs = []
    for n, (m, t) in enumerate(bleu_counts(rt, ht, max_n), 1):
        if t == 0:
            continue  # hypothesis too short for this order
        if smoothing == "add1" and n >= 2:
            m, t = m + 1, t + 1
        if m == 0:
            return 0.0
        logs.append(math.log(m / t))
    bp = 1.0 if len(ht) >= len(rt) else math.exp(1 - len(rt) / len(ht))
    return 100 * bp * math.exp(sum(logs) / len(logs))


def chrf_oracle(ref, hyp, n_max=6, beta=2.0):
    rc, hc = "".join(ref.split()), "".join(hyp.split())
    ps, rs = [], []
    for n in range(1, n_max + 1):
        h = Counter(hc[i:i + n] for i in range(len(hc) - n + 1))
        r = Counter(rc[i:i + n] for i in range(len(rc) - n + 1))
        if not h and not r:
            continue
        m = sum(min(c, r[g]) for g, c in h.items())
        ps.append(m / sum(h.values()) if h else 0.0)
        rs.append(m / sum(r.values()) if r else 0.0)
    if not ps:
        return 0.0
    p, r = sum(ps) / len(ps), sum(rs) / len(rs)
    if beta * beta * p + r == 0:
        return 0.0
    return 100 * (1 + beta * beta) * p * r / (beta * beta * p + r)


def monotone_paths(tx, ty):
    """Every path from (0,0) to (tx-1,ty-1) with steps (1,0), (0,1), (1,1)."""
    def walk(i, j, acc):
        if (i, j) == (tx - 1, ty - 1):
            yield list(acc)
            return
        for di, dj in ((1, 1), (1, 0), (0, 1)):
            ni, nj = i + di, j + dj
            if ni < tx and nj < ty:
                acc.append((ni, nj))
                yield from walk(ni, nj, acc)
                acc.pop()

    yield from walk(0, 0, [(0, 0)])


def euclid(a, b, lo=0, hi=None):
    hi = len(a) - 1 if hi is None else hi
    return math.sqrt(sum((a[k] - b[k]) ** 2 for k in range(lo, hi + 1)))


def dtw_oracle(x, y, lo=0, hi=None):
    """Minimum summed frame distance over all monotone paths.

    Every path is walked; the running sum is carried down the recursion so
    each path costs what it would if summed from (0, 0) in path order.
    """
    tx, ty = len(x), len(y)
    d = [[euclid(x[i], y[j], lo, hi) for j in range(ty)] for i in range(tx)]
    best = math.inf

    def walk(i, j, acc):
        nonlocal best
        acc += d[i][j]
        if i == tx - 1 and j == ty - 1:
            best = min(best, acc)
            return
        if i + 1 < tx and j + 1 < ty:
            walk(i + 1, j + 1, acc)
        if i + 1 < tx:
            walk(i + 1, j, acc)
        if j + 1 < ty:
            walk(i, j + 1, acc)

    walk(0, 0, 0.0)
    return best


def dtw_oracle_by_paths(x, y, lo=0, hi=None):
    """Same minimum, written as an explicit loop over materialized paths."""
    best = math.inf
    for path in monotone_paths(len(x), len(y)):
        cost = 0.0
        for i, j in path:
            cost += euclid(x[i], y[j], lo, hi)
        best = min(best, cost)
    return best


def expected_utilities_oracle(texts, weights=None, utility=bleu_oracle, exclude_self=False):
    n = len(texts)
    weights = weights or [1.0] * n
    out = []
    for i in range(n):
        num = den = 0.0
        for j in range(n):
            if exclude_self and i == j and n > 1:
                continue
            num += weights[j] * utility(texts[j], texts[i])
            den += weights[j]
        out.append(num / den)
    return out


def argmax_oracle(values, tol=1e-9):
    """Lowest index whose value is within ``tol`` of the maximum."""
    top = max(values)
    return next(i for i, v in enumerate(values) if v >= top - tol)


def all_pools(universe, max_size):
    for size in range(1, max_size + 1):
        yield from itertools.product(universe, repeat=size)
