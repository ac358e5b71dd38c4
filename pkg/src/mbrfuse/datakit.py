"""Manifest filtering, subsampling and feature-level augmentation.

Randomness
----------
Every seeded operation is reproducible byte for byte:

* :func:`subsample` ranks records by ``sha256(f"{seed}:{record_id}")`` and
  keeps the lowest-ranked ``target_count``. Taking prefixes of one ranking
  makes smaller samples subsets of larger ones for the same seed.
* Augmentations draw from numpy's PCG64 bit generator, whose raw 64-bit
  stream is fixed for a given seed. Uniforms are ``(raw >> 11) * 2**-53``,
  normals come from the Box-Muller transform on pairs of uniforms, and
  bounded integers are ``raw % (k + 1)``. None of numpy's higher-level
  distribution code is involved.
* :func:`derive_seed` turns a base seed and a record id into an independent
  per-record seed, so records can be processed in any order.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .mcd import FeatureSequence

DEFAULT_MAX_SECS = 15.0


class ManifestError(ValueError):
    pass


@dataclass
class SampleRecord:
    id: str
    source_text: str
    duration_secs: float | None = None
    target_text: str | None = None
    audio_ref: str | None = None

    def __post_init__(self):
        if self.duration_secs is not None and self.duration_secs < 0:
            raise ManifestError(f"record {self.id}: negative duration {self.duration_secs}")

    @classmethod
    def from_dict(cls, d: dict) -> "SampleRecord":
        if "id" not in d:
            raise ManifestError("record has no 'id'")
        unknown = set(d) - {"id", "source_text", "duration_secs", "target_text", "audio_ref"}
        if unknown:
            raise ManifestError(f"record {d['id']}: unknown field(s) {sorted(unknown)}")
        dur = d.get("duration_secs")
        if dur is not None and (isinstance(dur, bool) or not isinstance(dur, (int, float))):
            raise ManifestError(f"record {d['id']}: duration_secs must be a number")
        return cls(
            id=str(d["id"]),
            source_text=d.get("source_text", ""),
            duration_secs=None if dur is None else float(dur),
            target_text=d.get("target_text"),
            audio_ref=d.get("audio_ref"),
        )

    def to_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}


@dataclass
class FilterReport:
    """Counts for one filtering pass.

    Each dropped record is attributed to the first rule that rejected it.
    ``notes`` counts kept records worth flagging (e.g. no duration).
    """

    input_count: int = 0
    kept: int = 0
    dropped_by_rule: dict[str, int] = field(default_factory=dict)
    notes: dict[str, int] = field(default_factory=dict)

    def drop(self, rule: str):
        self.dropped_by_rule[rule] = self.dropped_by_rule.get(rule, 0) + 1

    def note(self, name: str):
        self.notes[name] = self.notes.get(name, 0) + 1

    def to_dict(self):
        return asdict(self)


def check_unique_ids(records: Iterable[SampleRecord]):
    seen = set()
    for r in records:
        if r.id in seen:
            raise ManifestError(f"duplicate record id {r.id!r}")
        seen.add(r.id)


# ---------------------------------------------------------------------------
# filters


def _duration_rule(rec: SampleRecord, max_secs: float):
    if rec.duration_secs is None:
        return None, "no-duration"
    if rec.duration_secs > max_secs:
        return "duration-exceeds-max", None
    return None, None


def _ratio_rule(rec: SampleRecord, min_ratio: float, max_ratio: float):
    n_tokens = len(rec.source_text.split())
    if rec.duration_secs is None or n_tokens == 0:
        return "undefined-ratio", None
    ratio = rec.duration_secs / n_tokens
    if ratio < min_ratio:
        return "ratio-below-min", None
    if ratio > max_ratio:
        return "ratio-above-max", None
    return None, None


def _run_rules(records: Sequence[SampleRecord], rules) -> tuple[list[SampleRecord], FilterReport]:
    report = FilterReport(input_count=len(records))
    kept = []
    for rec in records:
        notes = []
        for rule in rules:
            dropped, note = rule(rec)
            if dropped:
                report.drop(dropped)
                break
            if note:
                notes.append(note)
        else:
            kept.append(rec)
            for n in notes:
                report.note(n)
    report.kept = len(kept)
    return kept, report


def filter_duration(records: Sequence[SampleRecord], max_secs: float = DEFAULT_MAX_SECS):
    """Drop records strictly longer than ``max_secs``; records without a duration are kept."""
    if max_secs <= 0:
        raise ManifestError("max_secs must be positive")
    return _run_rules(records, [lambda r: _duration_rule(r, max_secs)])


def _check_ratio_bounds(min_ratio, max_ratio):
    if not 0 < min_ratio < max_ratio:
        raise ManifestError(f"ratio bounds must satisfy 0 < min < max, got [{min_ratio}, {max_ratio}]")


def filter_length_ratio(records: Sequence[SampleRecord], min_ratio: float, max_ratio: float):
    """Keep records whose seconds-per-source-token ratio lies in [min_ratio, max_ratio]."""
    _check_ratio_bounds(min_ratio, max_ratio)
    return _run_rules(records, [lambda r: _ratio_rule(r, min_ratio, max_ratio)])


def filter_manifest(records: Sequence[SampleRecord], max_secs: float, min_ratio: float, max_ratio: float):
    """Duration filter then ratio filter, reported as a single pass."""
    if max_secs <= 0:
        raise ManifestError("max_secs must be positive")
    _check_ratio_bounds(min_ratio, max_ratio)
    return _run_rules(
        records,
        [lambda r: _duration_rule(r, max_secs), lambda r: _ratio_rule(r, min_ratio, max_ratio)],
    )


# ---------------------------------------------------------------------------
# sampling


def _rank_key(seed: int, record_id: str) -> bytes:
    return hashlib.sha256(f"{seed}:{record_id}".encode("utf-8")).digest()


def derive_seed(base_seed: int, key: str) -> int:
    return int.from_bytes(_rank_key(base_seed, key)[:8], "little")


def subsample(records: Sequence[SampleRecord], target_count: int, seed: int) -> list[SampleRecord]:
    """Deterministic uniform sample without replacement, in input order."""
    if not 0 < target_count <= len(records):
        raise ManifestError(f"target_count must be in [1, {len(records)}], got {target_count}")
    check_unique_ids(records)
    order = sorted(range(len(records)), key=lambda i: _rank_key(seed, records[i].id))
    chosen = sorted(order[:target_count])
    return [records[i] for i in chosen]


def nested_subsamples(records: Sequence[SampleRecord], schedule: Sequence[int], seed: int) -> dict[int, list[SampleRecord]]:
    """One sample per size in ``schedule``; each smaller sample is a subset of every larger one."""
    return {n: subsample(records, n, seed) for n in schedule}


# ---------------------------------------------------------------------------
# augmentation


class _Stream:
    def __init__(self, seed: int):
        self._bits = np.random.PCG64(seed)

    def raw(self, n: int) -> np.ndarray:
        return np.asarray(self._bits.random_raw(n), dtype=np.uint64)

    def uniform(self, n: int) -> np.ndarray:
        return (self.raw(n) >> np.uint64(11)).astype(np.float64) * 2.0 ** -53

    def normal(self, n: int) -> np.ndarray:
        pairs = (n + 1) // 2
        u1 = self.uniform(pairs)
        u2 = self.uniform(pairs)
        r = np.sqrt(-2.0 * np.log1p(-u1))  # 1 - u1 is in (0, 1]
        theta = 2.0 * math.pi * u2
        return np.concatenate([r * np.cos(theta), r * np.sin(theta)])[:n] if n else np.zeros(0)

    def integer(self, upper: int) -> int:
        """Uniform integer in [0, upper]."""
        return int(self.raw(1)[0] % np.uint64(upper + 1))


def _feats(x) -> tuple[np.ndarray, float | None]:
    if isinstance(x, FeatureSequence):
        return x.frames, x.frame_period
    return FeatureSequence(x).frames, None


def add_gaussian_noise(feats, sigma: float, seed: int) -> FeatureSequence:
    if sigma < 0:
        raise ManifestError("sigma must be >= 0")
    frames, period = _feats(feats)
    if sigma == 0:
        return FeatureSequence(frames.copy(), period)
    noise = _Stream(seed).normal(frames.size).reshape(frames.shape)
    return FeatureSequence(frames + sigma * noise, period)


def spec_mask(
    feats,
    time_max_width: int,
    freq_max_width: int,
    n_time: int,
    n_freq: int,
    seed: int,
) -> FeatureSequence:
    """Zero ``n_time`` random frame spans and ``n_freq`` random coefficient bands.

    Widths are uniform in [0, max_width], clipped to the sequence extent;
    start positions are uniform over the placements that fit. All time masks
    are drawn before the frequency masks.
    """
    if min(time_max_width, freq_max_width, n_time, n_freq) < 0:
        raise ManifestError("mask widths and counts must be >= 0")
    frames, period = _feats(feats)
    out = frames.copy()
    n_frames, dim = out.shape
    rng = _Stream(seed)
    for _ in range(n_time):
        width = min(rng.integer(time_max_width), n_frames)
        start = rng.integer(n_frames - width)
        out[start:start + width, :] = 0.0
    for _ in range(n_freq):
        width = min(rng.integer(freq_max_width), dim)
        start = rng.integer(dim - width)
        out[:, start:start + width] = 0.0
    return FeatureSequence(out, period)
