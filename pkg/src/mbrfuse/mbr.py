"""Minimum Bayes Risk selection over merged hypothesis pools.

Each segment has a pool per system (e.g. 50 cascaded + 50 end-to-end
hypotheses). The pools are concatenated, every member is scored against every
other member used as a pseudo-reference, and the member with the highest
weighted expected utility wins.

The utility matrix is the hot path: a 100-member pool needs 10^4 sentence
scores. Instead of scoring pairs one at a time, n-gram counts are encoded as
sparse count matrices and all clipped match counts come out of a few sparse
products (``min(a, b) == sum_k [a >= k][b >= k]``). The closed-form score is
then applied to the whole count tensor at once by the same function the
scalar metrics use.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy import sparse

from .metrics import bleu_from_stats, chrf_from_stats
from .textnorm import NormalizedText

log = logging.getLogger(__name__)

UTILITIES = ("bleu", "chrf")
THREADS_ENV = "MBRFUSE_THREADS"
# Expected utilities within this distance of the best count as tied. Values
# live in [0, 100]; mathematically equal sums that differ only by summation
# order land far closer than this.
TIE_TOLERANCE = 1e-9


class PoolError(ValueError):
    pass


@dataclass(frozen=True)
class Hypothesis:
    text: str
    system: str
    rank: int


@dataclass
class HypothesisPool:
    """Candidates for one segment.

    A pool read from a single system may be empty; :func:`merge_pools` and
    the selection functions reject empty pools.
    """

    segment_id: str
    members: list[Hypothesis]
    weights: list[float] | None = None

    def __post_init__(self):
        if self.weights is None:
            self.weights = [1.0 / len(self.members)] * len(self.members) if self.members else []
        if len(self.weights) != len(self.members):
            raise PoolError(f"segment {self.segment_id}: {len(self.weights)} weights for {len(self.members)} members")
        if any(w < 0 for w in self.weights):
            raise PoolError(f"segment {self.segment_id}: negative weight")

    def __len__(self):
        return len(self.members)

    @property
    def texts(self) -> list[str]:
        return [h.text for h in self.members]

    def check(self):
        if not self.members:
            raise PoolError(f"segment {self.segment_id}: pool is empty")
        if sum(self.weights) <= 0:
            raise PoolError(f"segment {self.segment_id}: weights sum to 0")


@dataclass
class UtilityMatrix:
    values: np.ndarray
    utility: str


@dataclass
class Selection:
    segment_id: str
    index: int
    hypothesis: Hypothesis
    expected_utilities: list[float] = field(repr=False)


def pool_from_texts(segment_id: str, system: str, texts: Sequence[str]) -> HypothesisPool:
    return HypothesisPool(segment_id, [Hypothesis(t, system, r) for r, t in enumerate(texts)])


def merge_pools(pool_a: HypothesisPool, pool_b: HypothesisPool, system_weights: tuple[float, float] | None = None) -> HypothesisPool:
    """Concatenate two single-system pools: all of ``pool_a`` by rank, then ``pool_b`` by rank.

    Members get uniform weights unless ``system_weights`` gives one weight per
    pool; weights are normalized to sum to 1.
    """
    if pool_a.segment_id != pool_b.segment_id:
        raise PoolError(f"segment_id mismatch: {pool_a.segment_id!r} vs {pool_b.segment_id!r}")
    for label, pool in (("pool_a", pool_a), ("pool_b", pool_b)):
        if not pool.members:
            raise PoolError(f"segment {pool.segment_id}: {label} is empty")
    sys_a = {h.system for h in pool_a.members}
    sys_b = {h.system for h in pool_b.members}
    if sys_a & sys_b:
        raise PoolError(f"segment {pool_a.segment_id}: system identifiers overlap: {sorted(sys_a & sys_b)}")
    a = sorted(pool_a.members, key=lambda h: h.rank)
    b = sorted(pool_b.members, key=lambda h: h.rank)
    if system_weights is None:
        system_weights = (1.0, 1.0)
    wa, wb = system_weights
    if wa < 0 or wb < 0 or wa + wb <= 0:
        raise PoolError(f"invalid system weights {system_weights}")
    raw = [wa] * len(a) + [wb] * len(b)
    total = sum(raw)
    return HypothesisPool(pool_a.segment_id, a + b, [w / total for w in raw])


# ---------------------------------------------------------------------------
# utility kernel


def _encode(token_lists: Sequence[Sequence[str]]):
    vocab: dict[str, int] = {}
    # ids start at 1 so 0 can pad past the end of the concatenation
    enc = [[vocab.setdefault(t, len(vocab) + 1) for t in toks] for toks in token_lists]
    lens = np.array([len(e) for e in enc], dtype=np.int64)
    flat = np.fromiter((x for e in enc for x in e), dtype=np.int64, count=int(lens.sum()))
    return flat, lens, len(vocab) + 1


def ngram_match_counts(token_lists: Sequence[Sequence[str]], max_n: int) -> np.ndarray:
    """Clipped n-gram match counts between every pair of sequences.

    Returns an array of shape (N, N, max_n) with
    ``out[i, j, n-1] == sum_g min(count_i(g), count_j(g))`` over n-grams g
    of order n. The result is symmetric in i and j.
    """
    n_seq = len(token_lists)
    out = np.zeros((max_n, n_seq, n_seq))
    flat, lens, base = _encode(token_lists)
    if flat.size == 0:
        return out.transpose(1, 2, 0).copy()
    owner = np.repeat(np.arange(n_seq), lens)
    starts = np.cumsum(lens) - lens
    pos = np.arange(flat.size) - np.repeat(starts, lens)
    remaining = lens[owner] - pos  # tokens from this position to end of sequence
    key = np.zeros_like(flat)
    for n in range(1, max_n + 1):
        nxt = np.zeros_like(flat)
        nxt[: flat.size - n + 1] = flat[n - 1:]
        # key identifies the n-gram at each position; it is replaced by its dense
        # rank below so it stays small for any order and vocabulary size
        key = key * base + nxt
        valid = remaining >= n
        if not valid.any():
            break
        uniq, col = np.unique(key, return_inverse=True)
        key = col.astype(np.int64)
        cols = col[valid]
        counts = sparse.csr_matrix(
            (np.ones(cols.size), (owner[valid], cols)), shape=(n_seq, uniq.size)
        )
        counts.sum_duplicates()
        top = int(counts.data.max())
        for level in range(1, top + 1):
            ind = counts.copy()
            ind.data = (ind.data >= level).astype(np.float64)
            ind.eliminate_zeros()
            out[n - 1] += (ind @ ind.T).toarray()
    return out.transpose(1, 2, 0).copy()


def bleu_matrix(texts: Sequence[str], smoothing: str = "add1", max_n: int = 4) -> np.ndarray:
    """values[i, j] = sentence BLEU of candidate i against reference j."""
    toks = [t.split() for t in texts]
    lens = np.array([len(t) for t in toks], dtype=np.float64)
    matches = ngram_match_counts(toks, max_n)
    orders = np.arange(1, max_n + 1)
    totals = np.maximum(lens[:, None] - orders[None, :] + 1, 0)  # (N, max_n), by candidate
    totals = np.broadcast_to(totals[:, None, :], matches.shape)
    return bleu_from_stats(matches, totals, lens[:, None], lens[None, :], smoothing)


def chrf_matrix(texts: Sequence[str], n_max: int = 6, beta: float = 2.0) -> np.ndarray:
    """values[i, j] = sentence chrF of candidate i against reference j."""
    chars = ["".join(t.split()) for t in texts]
    lens = np.array([len(c) for c in chars], dtype=np.float64)
    matches = ngram_match_counts(chars, n_max)
    orders = np.arange(1, n_max + 1)
    totals = np.maximum(lens[:, None] - orders[None, :] + 1, 0)
    _, _, f = chrf_from_stats(matches, totals[:, None, :], totals[None, :, :], beta)
    return f


def utility_matrix(pool: HypothesisPool | Sequence[str], utility: str = "bleu", smoothing: str = "add1") -> UtilityMatrix:
    if utility not in UTILITIES:
        raise PoolError(f"unknown utility {utility!r}; valid: {', '.join(UTILITIES)}")
    if isinstance(pool, HypothesisPool):
        pool.check()
        texts = pool.texts
    else:
        texts = list(pool)
    texts = [t.text if isinstance(t, NormalizedText) else t for t in texts]
    if utility == "bleu":
        return UtilityMatrix(bleu_matrix(texts, smoothing), utility)
    return UtilityMatrix(chrf_matrix(texts), utility)


def expected_utility(matrix: UtilityMatrix | np.ndarray, weights: Sequence[float], exclude_self: bool = False) -> np.ndarray:
    """e[i] = sum_j w[j] * U[i, j] / sum_j w[j].

    With ``exclude_self`` the j == i term is dropped from both sums; a member
    whose remaining weight is 0 (e.g. a singleton pool) keeps the self term.
    """
    values = matrix.values if isinstance(matrix, UtilityMatrix) else np.asarray(matrix, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    n = values.shape[0]
    if values.shape != (n, n) or w.shape != (n,):
        raise PoolError(f"shape mismatch: matrix {values.shape}, weights {w.shape}")
    if w.sum() <= 0 or (w < 0).any():
        raise PoolError("weights must be non-negative with a positive sum")
    wmat = np.broadcast_to(w, (n, n)).copy()
    if exclude_self and n > 1:
        np.fill_diagonal(wmat, 0.0)
        empty = wmat.sum(axis=1) <= 0
        wmat[empty] = w
    return (values * wmat).sum(axis=1) / wmat.sum(axis=1)


def argmax_first(values: np.ndarray, tol: float = TIE_TOLERANCE) -> int:
    """Lowest index whose value is within ``tol`` of the maximum."""
    values = np.asarray(values)
    return int(np.flatnonzero(values >= values.max() - tol)[0])


def mbr_select(
    pool: HypothesisPool,
    utility: str = "bleu",
    exclude_self: bool = False,
    smoothing: str = "add1",
    normalizer=None,
) -> Selection:
    """Pick the member with the highest expected utility.

    Ties (within ``TIE_TOLERANCE``) go to the lowest pool index, i.e. to the
    first system and its best rank.

    ``normalizer`` (a callable str -> str) is applied to texts before scoring
    only; the returned hypothesis carries its original text.
    """
    pool.check()
    texts = pool.texts
    if normalizer is not None:
        texts = [_as_str(normalizer(t)) for t in texts]
    mat = utility_matrix(texts, utility, smoothing)
    e = expected_utility(mat, pool.weights, exclude_self)
    idx = argmax_first(e)
    return Selection(pool.segment_id, idx, pool.members[idx], e.tolist())


def _as_str(x) -> str:
    return x.text if isinstance(x, NormalizedText) else x


# ---------------------------------------------------------------------------
# corpus combination


def segment_sort_key(segment_id: str):
    """Numeric ids sort numerically and before non-numeric ids, which sort lexically."""
    return (0, int(segment_id), "") if segment_id.isdigit() else (1, 0, segment_id)


def resolve_threads(threads: int | None = None) -> int:
    if threads is None:
        raw = os.environ.get(THREADS_ENV, "0")
        try:
            threads = int(raw)
        except ValueError:
            raise PoolError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    if threads < 0:
        raise PoolError("thread count must be >= 0")
    return threads or (os.cpu_count() or 1)


def _select_chunk(args):
    pools, utility, exclude_self, smoothing, weights, normalizer = args
    out = []
    for pa, pb in pools:
        merged = merge_pools(pa, pb, weights)
        out.append(mbr_select(merged, utility, exclude_self, smoothing, normalizer))
    return out


def mbr_combine_corpus(
    pools_a: Mapping[str, HypothesisPool],
    pools_b: Mapping[str, HypothesisPool],
    utility: str = "bleu",
    *,
    system_weights: tuple[float, float] | None = None,
    exclude_self: bool = False,
    smoothing: str = "add1",
    normalizer=None,
    threads: int | None = None,
) -> list[Selection]:
    """Merge, score and select per segment; results in ascending segment order.

    Segments are independent, so they are farmed out to worker processes in
    contiguous chunks; each selection is computed by the same deterministic
    code regardless of the worker count. ``normalizer`` must be picklable
    when more than one worker is used.
    """
    if utility not in UTILITIES:
        raise PoolError(f"unknown utility {utility!r}; valid: {', '.join(UTILITIES)}")
    ids_a, ids_b = set(pools_a), set(pools_b)
    if ids_a != ids_b:
        only_a = sorted(ids_a - ids_b, key=segment_sort_key)
        only_b = sorted(ids_b - ids_a, key=segment_sort_key)
        raise PoolError(f"segment ids differ: missing from pool_b {only_a}, missing from pool_a {only_b}")
    order = sorted(ids_a, key=segment_sort_key)
    pairs = [(pools_a[s], pools_b[s]) for s in order]
    workers = min(resolve_threads(threads), max(1, len(pairs) // 16))
    if workers <= 1:
        return _select_chunk((pairs, utility, exclude_self, smoothing, system_weights, normalizer))
    size = -(-len(pairs) // (workers * 4))
    chunks = [pairs[i:i + size] for i in range(0, len(pairs), size)]
    log.debug("mbr: %d segments over %d workers in %d chunks", len(pairs), workers, len(chunks))
    with ProcessPoolExecutor(max_workers=workers) as ex:
        results = ex.map(_select_chunk, [(c, utility, exclude_self, smoothing, system_weights, normalizer) for c in chunks])
        return [sel for chunk in results for sel in chunk]
