"""Mirror-symmetry detection and mirror variants of seams."""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Dict, FrozenSet, Iterable, Tuple

import numpy as np

from .beamsearch import Seam
from .energy import seam_cost
from .voxel import Axis, VoxelGrid, as_occupancy

DEFAULT_TS = 0.05


@dataclass(frozen=True)
class SymmetryReport:
    rates: Dict[Axis, float]
    threshold: float
    symmetric_axes: FrozenSet[Axis]

    @property
    def rate_x(self) -> float:
        return self.rates[Axis.X]

    @property
    def rate_y(self) -> float:
        return self.rates[Axis.Y]

    @property
    def rate_z(self) -> float:
        return self.rates[Axis.Z]


def _ratio(num: int, den: int) -> float:
    return num / den if den else 0.0


def mismatch_rate(grid: VoxelGrid, axis: Axis) -> float:
    """Harmonic mean of the occupied and unoccupied XOR-mismatch fractions.

    A cell mismatches when it differs from its mirror image across the
    grid centre on ``axis``. Empty denominators count as no mismatch.
    """
    occ = as_occupancy(grid).data.astype(bool)
    mism = occ ^ np.flip(occ, axis=int(axis))
    rate_o = _ratio(int(np.count_nonzero(mism & occ)), int(np.count_nonzero(occ)))
    rate_u = _ratio(int(np.count_nonzero(mism & ~occ)), int(np.count_nonzero(~occ)))
    if rate_o + rate_u == 0:
        return 0.0
    return 2.0 * rate_o * rate_u / (rate_o + rate_u)


def detect_symmetry(grid: VoxelGrid, threshold: float = DEFAULT_TS) -> SymmetryReport:
    if not 0 < threshold < 1:
        raise ValueError("symmetry threshold must lie in (0, 1)")
    rates = {axis: mismatch_rate(grid, axis) for axis in Axis}
    return SymmetryReport(rates, threshold,
                          frozenset(a for a, r in rates.items() if r < threshold))


def mirror_seam(seam: Seam, axis: Axis, dims: Tuple[int, int, int]) -> Seam:
    axis = Axis(axis)
    z = seam.z
    if z.shape != tuple(dims[:2]):
        raise ValueError(f"seam shape {z.shape} does not match grid dims {dims}")
    if axis is Axis.Z:
        mz = dims[2] - 1 - z
    else:
        mz = np.flip(z, axis=int(axis))
    mirrored = tuple(sorted(set(seam.mirrored) ^ {axis}))
    return Seam(np.ascontiguousarray(mz), mirrored=mirrored)


def best_mirror_variant(seam: Seam, field: np.ndarray, symmetric_axes: Iterable[Axis]) -> Seam:
    """Cheapest of all mirror combinations over ``symmetric_axes``.

    Candidates are tried unmirrored first, then by number of mirrors in X, Y, Z
    order; only a strictly lower total cost displaces an earlier one.
    """
    axes = sorted(Axis(a) for a in symmetric_axes)
    best = None
    for r in range(len(axes) + 1):
        for combo in itertools.combinations(axes, r):
            cand = Seam(seam.z, mirrored=seam.mirrored)
            for axis in combo:
                cand = mirror_seam(cand, axis, field.shape)
            cand.cost_total, cand.cost_mean = seam_cost(field, cand.z)
            if best is None or cand.cost_total < best.cost_total:
                best = cand
    return best
