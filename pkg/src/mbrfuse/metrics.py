"""Edit-distance and n-gram metrics: WER, CER, BLEU, chrF.

All functions take already-normalized text (plain ``str`` or
:class:`~mbrfuse.textnorm.NormalizedText`) and tokenize on whitespace.
Corpus BLEU and chrF pool their n-gram counts over segments before the
final formula is applied; they never average per-segment scores.

The closed-form parts of BLEU and chrF are computed by
:func:`bleu_from_stats` and :func:`chrf_from_stats`, which operate on numpy
arrays of counts. The MBR utility kernel feeds them whole matrices of counts,
the scalar functions here feed them a single row, so both paths produce
bit-identical floats.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .textnorm import NormalizedText

SMOOTHING_METHODS = ("add1", "none")


class MetricError(ValueError):
    pass


@dataclass
class EditAlignment:
    substitutions: int
    deletions: int
    insertions: int
    distance: int
    ref_len: int
    hyp_len: int


@dataclass
class BleuBreakdown:
    precisions: list[float]
    matches: list[int]
    totals: list[int]
    brevity_penalty: float
    hyp_len: int
    ref_len: int
    score: float

    def to_dict(self):
        return asdict(self)


@dataclass
class ChrfBreakdown:
    n_max: int
    beta: float
    precision: float
    recall: float
    score: float

    def to_dict(self):
        return asdict(self)


@dataclass
class ScoreReport:
    metric: str
    corpus_score: float
    per_segment: list
    profile: str
    segment_count: int
    breakdown: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.per_segment) != self.segment_count:
            raise MetricError("per_segment length does not match segment_count")

    def to_dict(self):
        return asdict(self)


def _text(x) -> str:
    return x.text if isinstance(x, NormalizedText) else x


def _common_profile(refs, hyps, profile):
    seen = {x.profile for x in (*refs, *hyps) if isinstance(x, NormalizedText)}
    if len(seen) > 1:
        raise MetricError(f"references and hypotheses were normalized with different profiles: {sorted(seen)}")
    if profile is None:
        return seen.pop() if seen else "none"
    if seen and seen != {profile}:
        raise MetricError(f"texts were normalized with {seen.pop()!r}, not {profile!r}")
    return profile


def _check_lengths(refs, hyps):
    if len(refs) != len(hyps):
        raise MetricError(f"length mismatch: {len(refs)} references vs {len(hyps)} hypotheses")
    if not refs:
        raise MetricError("empty corpus")


# ---------------------------------------------------------------------------
# edit distance


def edit_distance(ref: Sequence, hyp: Sequence) -> EditAlignment:
    """Levenshtein distance with unit costs and an S/D/I decomposition.

    The decomposition comes from one optimal script, chosen on backtrace by
    preferring the diagonal (match or substitution), then deletion, then
    insertion.
    """
    n, m = len(ref), len(hyp)
    # d[i][j] = distance between ref[:i] and hyp[:j]
    d = [list(range(m + 1))]
    for i in range(1, n + 1):
        prev = d[-1]
        row = [i] + [0] * m
        r = ref[i - 1]
        for j in range(1, m + 1):
            sub = prev[j - 1] + (r != hyp[j - 1])
            dele = prev[j] + 1
            ins = row[j - 1] + 1
            row[j] = min(sub, dele, ins)
        d.append(row)

    s = de = ins = 0
    i, j = n, m
    while i > 0 or j > 0:
        cur = d[i][j]
        if i > 0 and j > 0 and cur == d[i - 1][j - 1] + (ref[i - 1] != hyp[j - 1]):
            s += ref[i - 1] != hyp[j - 1]
            i, j = i - 1, j - 1
        elif i > 0 and cur == d[i - 1][j] + 1:
            de += 1
            i -= 1
        else:
            ins += 1
            j -= 1
    return EditAlignment(s, de, ins, d[n][m], n, m)


def _char_tokens(text: str) -> list[str]:
    return list(" ".join(text.split()))


def _error_rate(metric, refs, hyps, tokenize, profile) -> ScoreReport:
    _check_lengths(refs, hyps)
    profile = _common_profile(refs, hyps, profile)
    total_dist = total_len = 0
    per_segment = []
    counts = Counter()
    for r, h in zip(refs, hyps):
        r_toks, h_toks = tokenize(_text(r)), tokenize(_text(h))
        al = edit_distance(r_toks, h_toks)
        total_dist += al.distance
        total_len += al.ref_len
        counts.update(substitutions=al.substitutions, deletions=al.deletions, insertions=al.insertions)
        per_segment.append(100.0 * al.distance / al.ref_len if al.ref_len else None)
    if total_len == 0:
        raise MetricError(f"{metric}: total reference length is 0")
    breakdown = dict(counts, distance=total_dist, ref_len=total_len)
    return ScoreReport(metric, 100.0 * total_dist / total_len, per_segment, profile, len(per_segment), breakdown)


def wer(refs, hyps, profile: str | None = None) -> ScoreReport:
    """Word error rate in percent: pooled word edits over pooled reference words.

    Per-segment values are ``None`` for segments with an empty reference.
    """
    return _error_rate("wer", refs, hyps, str.split, profile)


def cer(refs, hyps, profile: str | None = None) -> ScoreReport:
    """Character error rate in percent. Whitespace runs count as one space token."""
    return _error_rate("cer", refs, hyps, _char_tokens, profile)


# ---------------------------------------------------------------------------
# BLEU


def ngram_counts(tokens: Sequence, n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def bleu_stats(ref_tokens: Sequence, hyp_tokens: Sequence, max_n: int = 4) -> tuple[list[int], list[int]]:
    """Clipped n-gram matches and hypothesis n-gram totals for orders 1..max_n."""
    matches, totals = [], []
    for n in range(1, max_n + 1):
        h = ngram_counts(hyp_tokens, n)
        r = ngram_counts(ref_tokens, n)
        matches.append(sum(min(c, r[g]) for g, c in h.items()))
        totals.append(max(len(hyp_tokens) - n + 1, 0))
    return matches, totals


def brevity_penalty(hyp_len, ref_len):
    """exp(1 - ref/hyp) for short hypotheses, 1 otherwise, 0 for an empty hypothesis."""
    hyp_len = np.asarray(hyp_len, dtype=np.float64)
    ref_len = np.asarray(ref_len, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        bp = np.exp(1.0 - ref_len / hyp_len)
    bp = np.where(hyp_len >= ref_len, 1.0, bp)
    return np.where(hyp_len > 0, bp, 0.0)


def bleu_from_stats(matches, totals, hyp_len, ref_len, smoothing: str = "none"):
    """Vectorized BLEU from count arrays.

    ``matches`` and ``totals`` have the n-gram order on the last axis;
    ``hyp_len``/``ref_len`` broadcast against the remaining axes. Orders for
    which the hypothesis has no n-grams (total 0) are left out of the
    geometric mean, so short identical sentences still score 100. ``add1``
    adds one to numerator and denominator of the remaining orders n >= 2.
    Any zero numerator among the remaining orders makes the score 0, as
    does an empty hypothesis.
    """
    if smoothing not in SMOOTHING_METHODS:
        raise MetricError(f"unknown smoothing {smoothing!r}; valid: {', '.join(SMOOTHING_METHODS)}")
    matches = np.asarray(matches, dtype=np.float64)
    totals = np.asarray(totals, dtype=np.float64)
    present = totals > 0
    if smoothing == "add1":
        bump = np.zeros(matches.shape[-1])
        bump[1:] = 1.0
        matches = matches + bump
        totals = totals + bump
    zero = np.any(present & (matches <= 0), axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        log_p = np.log(matches) - np.log(totals)
    log_p = np.where(present, log_p, 0.0)
    n_orders = present.sum(axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        geo = np.exp(log_p.sum(axis=-1) / n_orders)
    score = 100.0 * brevity_penalty(hyp_len, ref_len) * geo
    return np.where(zero | (n_orders == 0), 0.0, score)


def _breakdown(matches, totals, hyp_len, ref_len, score) -> BleuBreakdown:
    precisions = [m / t if t else 0.0 for m, t in zip(matches, totals)]
    return BleuBreakdown(
        precisions=precisions,
        matches=list(matches),
        totals=list(totals),
        brevity_penalty=float(brevity_penalty(hyp_len, ref_len)),
        hyp_len=hyp_len,
        ref_len=ref_len,
        score=float(score),
    )


def bleu_corpus(refs, hyps, max_n: int = 4) -> BleuBreakdown:
    _check_lengths(refs, hyps)
    matches = [0] * max_n
    totals = [0] * max_n
    hyp_len = ref_len = 0
    for r, h in zip(refs, hyps):
        rt, ht = _text(r).split(), _text(h).split()
        m, t = bleu_stats(rt, ht, max_n)
        matches = [a + b for a, b in zip(matches, m)]
        totals = [a + b for a, b in zip(totals, t)]
        hyp_len += len(ht)
        ref_len += len(rt)
    score = bleu_from_stats([matches], [totals], [hyp_len], [ref_len])[0]
    return _breakdown(matches, totals, hyp_len, ref_len, score)


def bleu_sentence(ref, hyp, smoothing: str = "add1", max_n: int = 4) -> float:
    """Sentence-level BLEU in [0, 100]; total over all inputs (empty hypothesis -> 0)."""
    rt, ht = _text(ref).split(), _text(hyp).split()
    m, t = bleu_stats(rt, ht, max_n)
    return float(bleu_from_stats([m], [t], [len(ht)], [len(rt)], smoothing)[0])


# ---------------------------------------------------------------------------
# chrF


def _chars(text: str) -> str:
    return "".join(text.split())


def chrf_from_stats(matches, hyp_totals, ref_totals, beta: float = 2.0):
    """Vectorized chrF from per-order counts (order on the last axis).

    Precision and recall are averaged over the orders where either side has
    n-grams, then combined with the beta-weighted harmonic mean.
    """
    matches = np.asarray(matches, dtype=np.float64)
    hyp_totals = np.asarray(hyp_totals, dtype=np.float64)
    ref_totals = np.asarray(ref_totals, dtype=np.float64)
    hyp_totals, ref_totals, matches = np.broadcast_arrays(hyp_totals, ref_totals, matches)
    active = (hyp_totals > 0) | (ref_totals > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        p = np.where(hyp_totals > 0, matches / hyp_totals, 0.0)
        r = np.where(ref_totals > 0, matches / ref_totals, 0.0)
    n_active = active.sum(axis=-1)
    denom = np.maximum(n_active, 1)
    precision = np.where(active, p, 0.0).sum(axis=-1) / denom
    recall = np.where(active, r, 0.0).sum(axis=-1) / denom
    b2 = beta * beta
    den = b2 * precision + recall
    with np.errstate(divide="ignore", invalid="ignore"):
        f = 100.0 * (1 + b2) * precision * recall / den
    return precision, recall, np.where(den > 0, f, 0.0)


def chrf_stats(ref: str, hyp: str, n_max: int = 6) -> tuple[list[int], list[int], list[int]]:
    rc, hc = _chars(ref), _chars(hyp)
    matches, hyp_totals, ref_totals = [], [], []
    for n in range(1, n_max + 1):
        h = ngram_counts(hc, n)
        r = ngram_counts(rc, n)
        matches.append(sum(min(c, r[g]) for g, c in h.items()))
        hyp_totals.append(max(len(hc) - n + 1, 0))
        ref_totals.append(max(len(rc) - n + 1, 0))
    return matches, hyp_totals, ref_totals


def chrf(refs, hyps, n_max: int = 6, beta: float = 2.0) -> ChrfBreakdown:
    _check_lengths(refs, hyps)
    m = np.zeros(n_max, dtype=np.int64)
    ht = np.zeros(n_max, dtype=np.int64)
    rt = np.zeros(n_max, dtype=np.int64)
    for r, h in zip(refs, hyps):
        sm, sh, sr = chrf_stats(_text(r), _text(h), n_max)
        m += sm
        ht += sh
        rt += sr
    p, r, f = chrf_from_stats(m[None], ht[None], rt[None], beta)
    return ChrfBreakdown(n_max, beta, float(p[0]), float(r[0]), float(f[0]))


def chrf_sentence(ref, hyp, n_max: int = 6, beta: float = 2.0) -> float:
    return chrf([ref], [hyp], n_max, beta).score


# ---------------------------------------------------------------------------
# corpus reports


def score(metric: str, refs, hyps, profile: str | None = None) -> ScoreReport:
    """Corpus score plus per-segment values for any supported metric."""
    if metric == "wer":
        return wer(refs, hyps, profile)
    if metric == "cer":
        return cer(refs, hyps, profile)
    _check_lengths(refs, hyps)
    profile = _common_profile(refs, hyps, profile)
    if metric == "bleu":
        b = bleu_corpus(refs, hyps)
        per = [bleu_corpus([r], [h]).score for r, h in zip(refs, hyps)]
        return ScoreReport("bleu", b.score, per, profile, len(per), b.to_dict())
    if metric == "chrf":
        c = chrf(refs, hyps)
        per = [chrf([r], [h]).score for r, h in zip(refs, hyps)]
        return ScoreReport("chrf", c.score, per, profile, len(per), c.to_dict())
    raise MetricError(f"unknown metric {metric!r}; valid: wer, cer, bleu, chrf")
