"""Non-content-aware baseline augmenters: per-axis scaling and piecewise-linear warping."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from .voxel import Axis, VoxelGrid

SCALE_RANGE = (0.75, 1.25)
WARP_SIGMA = 0.25
WARP_INTERVALS = 6
# mirrored-pair factor sharing per axis (X, Y, Z)
WARP_SYMMETRY = (True, False, True)


def sample_scale_factors(rng: np.random.Generator) -> Tuple[float, float, float]:
    lo, hi = SCALE_RANGE
    return tuple(float(f) for f in rng.uniform(lo, hi, size=3))


def _src_index(n_out: int, n_in: int) -> np.ndarray:
    o = np.arange(n_out)
    return np.minimum(((o + 0.5) * n_in / n_out).astype(np.intp), n_in - 1)


def axis_scale(grid: VoxelGrid, factors: Sequence[float]) -> VoxelGrid:
    """Nearest-neighbour resample to ``round(N * f)`` cells per axis (at least 1)."""
    if len(factors) != 3 or min(factors) <= 0:
        raise ValueError("need three positive scale factors")
    data = grid.data
    for axis, f in enumerate(factors):
        n = data.shape[axis]
        m = max(1, int(math.floor(n * f + 0.5)))
        if m != n:
            data = np.take(data, _src_index(m, n), axis=axis)
    return grid.replace(data)


@dataclass(frozen=True)
class WarpSpec:
    """Per-axis piecewise-linear warps of the normalised coordinate ``[-1, 1]``.

    ``factors[a]`` holds the raw slope factor of each of the even
    sub-intervals on axis ``a``; the warp integrates them and rescales so
    that -1 and 1 stay fixed.
    """

    factors: np.ndarray  # (3, intervals)
    symmetric: Tuple[bool, bool, bool] = WARP_SYMMETRY

    def __post_init__(self):
        f = np.asarray(self.factors, dtype=np.float64)
        if f.ndim != 2 or f.shape[0] != 3 or f.shape[1] < 1:
            raise ValueError(f"factors must have shape (3, intervals), got {f.shape}")
        if not np.all(f > 0) or not np.all(np.isfinite(f)):
            raise ValueError("warp factors must be positive and finite")
        object.__setattr__(self, "factors", f)

    @property
    def intervals(self) -> int:
        return self.factors.shape[1]

    def knots(self, axis: Axis) -> Tuple[np.ndarray, np.ndarray]:
        """Interval boundaries before and after warping, both spanning [-1, 1]."""
        f = self.factors[int(axis)]
        u = np.linspace(-1.0, 1.0, self.intervals + 1)
        v = np.concatenate(([0.0], np.cumsum(f)))
        v = -1.0 + 2.0 * v / v[-1]
        v[-1] = 1.0
        return u, v

    def forward(self, axis: Axis, u: np.ndarray) -> np.ndarray:
        ku, kv = self.knots(axis)
        return np.interp(u, ku, kv)

    def inverse(self, axis: Axis, v: np.ndarray) -> np.ndarray:
        ku, kv = self.knots(axis)
        return np.interp(v, kv, ku)

    def to_dict(self) -> dict:
        return {"factors": self.factors.tolist(), "symmetric": list(self.symmetric)}

    @classmethod
    def from_dict(cls, d: dict) -> "WarpSpec":
        return cls(np.asarray(d["factors"]), tuple(bool(s) for s in d["symmetric"]))


def sample_warp(rng: np.random.Generator, sigma: float = WARP_SIGMA,
                intervals: int = WARP_INTERVALS) -> WarpSpec:
    """Log-normal interval factors (underlying normal: mean 0, std ``sigma``).

    Axes flagged symmetric draw half the factors and mirror them, so the
    warp is odd about the centre.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if intervals < 1:
        raise ValueError("need at least one interval")
    rows = []
    for sym in WARP_SYMMETRY:
        if sym:
            half = rng.lognormal(0.0, sigma, size=(intervals + 1) // 2)
            tail = half[::-1] if intervals % 2 == 0 else half[-2::-1]
            rows.append(np.concatenate((half, tail)))
        else:
            rows.append(rng.lognormal(0.0, sigma, size=intervals))
    return WarpSpec(np.stack(rows), WARP_SYMMETRY)


def _warp_index(spec: WarpSpec, axis: Axis, n: int) -> np.ndarray:
    """Input index sampled by each output cell along ``axis``."""
    o = np.arange(n)
    v = (o + 0.5) * 2.0 / n - 1.0
    u = spec.inverse(axis, v)
    src = np.clip(np.floor((u + 1.0) * n / 2.0).astype(np.intp), 0, n - 1)
    if spec.symmetric[int(axis)]:
        # evaluate the upper half only so mirrored cells map to mirrored sources
        upper = o >= n // 2
        src = np.where(upper, src, n - 1 - src[n - 1 - o])
    return src


def piecewise_warp(grid: VoxelGrid, spec: WarpSpec) -> VoxelGrid:
    """Nearest-neighbour resample at the inverse-warped coordinate of every cell centre."""
    data = grid.data
    for axis in Axis:
        data = np.take(data, _warp_index(spec, axis, data.shape[int(axis)]), axis=int(axis))
    return grid.replace(data)
