"""DTW alignment and mel-cepstral distortion between cepstral feature sequences.

Features are T x D matrices, one row per frame, coefficient 0 being the
energy term. By default both the alignment cost and the distortion use
coefficients 1..25 inclusive.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# dB scale of the usual MCD definition: (10 / ln 10) * sqrt(2 * sum d^2)
MCD_CONSTANT = 10.0 / math.log(10.0) * math.sqrt(2.0)
DEFAULT_RANGE = (1, 25)
COSTS = ("euclidean-1-25", "euclidean-all")


class FeatureError(ValueError):
    pass


@dataclass
class FeatureSequence:
    frames: np.ndarray
    frame_period: float | None = None

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.frames.ndim != 2:
            raise FeatureError(f"frames must be a T x D matrix, got shape {self.frames.shape}")
        if self.frames.shape[0] < 1:
            raise FeatureError("feature sequence is empty")
        if not np.isfinite(self.frames).all():
            raise FeatureError("feature sequence contains non-finite values")

    @property
    def dim(self) -> int:
        return self.frames.shape[1]

    def __len__(self):
        return self.frames.shape[0]


@dataclass
class WarpPath:
    pairs: list[tuple[int, int]]
    total_cost: float

    def __len__(self):
        return len(self.pairs)


def _frames(x) -> np.ndarray:
    if isinstance(x, FeatureSequence):
        return x.frames
    return FeatureSequence(x).frames


def _check_range(dim: int, coef_range: tuple[int, int]) -> slice:
    lo, hi = coef_range
    if lo < 0 or hi < lo:
        raise FeatureError(f"invalid coefficient range {lo}:{hi}")
    if dim <= hi:
        raise FeatureError(f"coefficient range {lo}:{hi} needs at least {hi + 1} dimensions, got {dim}")
    return slice(lo, hi + 1)


def _cost_range(cost: str | tuple[int, int], dim: int) -> slice:
    if isinstance(cost, tuple):
        return _check_range(dim, cost)
    if cost == "euclidean-1-25":
        return _check_range(dim, DEFAULT_RANGE)
    if cost == "euclidean-all":
        return slice(0, dim)
    raise FeatureError(f"unknown cost {cost!r}; valid: {', '.join(COSTS)} or a (lo, hi) range")


def frame_distances(x: np.ndarray, y: np.ndarray, cols: slice) -> np.ndarray:
    diff = x[:, None, cols] - y[None, :, cols]
    return np.sqrt((diff * diff).sum(axis=-1))


def band_limits(tx: int, ty: int, radius: int | None) -> list[tuple[int, int]]:
    """Inclusive column window per row for a Sakoe-Chiba style band.

    The band follows the line from (0, 0) to (tx-1, ty-1) so sequences of
    different lengths stay alignable; windows are widened where needed to
    keep a monotone unit-step path feasible.
    """
    if radius is None or tx == 1 or ty == 1:
        return [(0, ty - 1)] * tx
    if radius < 0:
        raise FeatureError("band radius must be >= 0")
    slope = (ty - 1) / (tx - 1)
    lo = [max(0, math.floor(i * slope - radius)) for i in range(tx)]
    hi = [min(ty - 1, math.ceil(i * slope + radius)) for i in range(tx)]
    for i in range(tx - 2, -1, -1):
        hi[i] = max(hi[i], lo[i + 1] - 1)
    return list(zip(lo, hi))


def dtw_align(x, y, cost: str | tuple[int, int] = "euclidean-1-25", band_radius: int | None = None) -> WarpPath:
    """Exact DTW with steps (1,1), (1,0), (0,1).

    Among minimum-cost paths the shortest one is returned; remaining ties
    prefer the diagonal predecessor, then (i-1, j), then (i, j-1).
    ``band_radius`` restricts the search to a band around the diagonal.
    """
    fx, fy = _frames(x), _frames(y)
    if fx.shape[1] != fy.shape[1]:
        raise FeatureError(f"dimension mismatch: {fx.shape[1]} vs {fy.shape[1]}")
    cols = _cost_range(cost, fx.shape[1])
    dist = frame_distances(fx, fy, cols).tolist()
    tx, ty = len(dist), len(dist[0])
    limits = band_limits(tx, ty, band_radius)

    inf = (math.inf, 0)
    # acc[i][j] = (cost, length) of the best path ending at (i, j);
    # back[i][j] = 0 diagonal, 1 from (i-1, j), 2 from (i, j-1)
    acc = [[inf] * ty for _ in range(tx)]
    back = [[0] * ty for _ in range(tx)]
    for i in range(tx):
        lo, hi = limits[i]
        row, drow, brow = acc[i], dist[i], back[i]
        prev = acc[i - 1] if i else None
        for j in range(lo, hi + 1):
            if i == 0 and j == 0:
                row[0] = (drow[0], 1)
                continue
            best, move = inf, 0
            if prev is not None:
                if j:
                    best = prev[j - 1]
                if prev[j] < best:
                    best, move = prev[j], 1
            if j and row[j - 1] < best:
                best, move = row[j - 1], 2
            if best[0] < math.inf:
                row[j] = (best[0] + drow[j], best[1] + 1)
                brow[j] = move

    total = acc[-1][-1]
    if total[0] == math.inf:
        raise FeatureError("no path within the band")
    path = [(tx - 1, ty - 1)]
    i, j = tx - 1, ty - 1
    while i or j:
        move = back[i][j]
        if move == 0:
            i, j = i - 1, j - 1
        elif move == 1:
            i -= 1
        else:
            j -= 1
        path.append((i, j))
    path.reverse()
    return WarpPath(path, total[0])


def mcd_frame(c, c_hat, coef_range: tuple[int, int] = DEFAULT_RANGE) -> float:
    """MCD in dB between two frames over an inclusive coefficient range."""
    c = np.asarray(c, dtype=np.float64)
    c_hat = np.asarray(c_hat, dtype=np.float64)
    if c.shape != c_hat.shape or c.ndim != 1:
        raise FeatureError(f"frame shape mismatch: {c.shape} vs {c_hat.shape}")
    cols = _check_range(c.shape[0], coef_range)
    d = c[cols] - c_hat[cols]
    return float(MCD_CONSTANT * math.sqrt(float((d * d).sum())))


@dataclass
class McdResult:
    mcd: float
    frames_aligned: int
    ref_frames: int
    hyp_frames: int
    dtw_cost: float
    coef_range: tuple[int, int]
    constant: float = MCD_CONSTANT

    def to_dict(self):
        return {
            "mcd": self.mcd,
            "frames_aligned": self.frames_aligned,
            "ref_frames": self.ref_frames,
            "hyp_frames": self.hyp_frames,
            "dtw_cost": self.dtw_cost,
            "coef_range": list(self.coef_range),
            "constant": self.constant,
        }


def mcd_align(ref, hyp, coef_range: tuple[int, int] = DEFAULT_RANGE, band_radius: int | None = None) -> McdResult:
    fr, fh = _frames(ref), _frames(hyp)
    if fr.shape[1] != fh.shape[1]:
        raise FeatureError(f"dimension mismatch: {fr.shape[1]} vs {fh.shape[1]}")
    _check_range(fr.shape[1], coef_range)
    path = dtw_align(fr, fh, coef_range, band_radius)
    # alignment and distortion use the same coefficients, so the path cost
    # already is the sum of per-pair Euclidean distances
    mcd = MCD_CONSTANT * path.total_cost / len(path)
    return McdResult(mcd, len(path), len(fr), len(fh), path.total_cost, coef_range)


def mcd_score(ref, hyp, coef_range: tuple[int, int] = DEFAULT_RANGE, band_radius: int | None = None) -> float:
    """Mean frame MCD over the DTW path between reference and hypothesis."""
    return mcd_align(ref, hyp, coef_range, band_radius).mcd
