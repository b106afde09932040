"""Per-cell energy fields, axis reductions, seam cost and the seam filter threshold."""
from __future__ import annotations

import enum
from typing import TYPE_CHECKING, Tuple

import numpy as np

from .voxel import Axis, VoxelGrid

if TYPE_CHECKING:
    from .beamsearch import Seam

# Below this mean energy the filter falls back to a fixed floor.
TC_KNEE = 4e-4
TC_FLOOR = 1e-4
TC_RATIO = 0.25


class EnergyKind(enum.Enum):
    AXIAL = "axial"
    FULL = "full"


def _forward_abs_diff(values: np.ndarray, axis: int, out: np.ndarray) -> None:
    """Add ``|v[t+1] - v[t]|`` along ``axis`` into ``out``; the last layer gets nothing."""
    n = values.shape[axis]
    hi = [slice(None)] * 3
    lo = [slice(None)] * 3
    hi[axis] = slice(1, n)
    lo[axis] = slice(0, n - 1)
    d = np.subtract(values[tuple(hi)], values[tuple(lo)], dtype=np.float64)
    np.abs(d, out=d)
    out[tuple(lo)] += d


def compute_energy(grid: VoxelGrid, kind: EnergyKind = EnergyKind.AXIAL) -> np.ndarray:
    """Absolute forward difference along the cutting (third) axis; last layer is zero.

    ``FULL`` sums the same stencil over all three axes.
    """
    axes = (2,) if EnergyKind(kind) is EnergyKind.AXIAL else (0, 1, 2)
    out = np.zeros(grid.data.shape, dtype=np.float64)
    for axis in axes:
        _forward_abs_diff(grid.data, axis, out)
    return out


def reduce_over_axis(field: np.ndarray, reducing: Axis) -> np.ndarray:
    """Sum the field over ``reducing``; the result is indexed (main, cutting)."""
    reducing = Axis(reducing)
    if reducing is Axis.Z:
        raise ValueError("the cutting axis cannot be reduced")
    return field.sum(axis=int(reducing))


def reduced_maps(field: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    return reduce_over_axis(field, Axis.X), reduce_over_axis(field, Axis.Y)


def seam_cost(field: np.ndarray, seam: "Seam | np.ndarray") -> Tuple[float, float]:
    z = np.asarray(getattr(seam, "z", seam))
    ni, nj, nk = field.shape
    if z.shape != (ni, nj):
        raise ValueError(f"seam shape {z.shape} does not match field {(ni, nj)}")
    if z.size and (z.min() < 0 or z.max() >= nk):
        raise IndexError(f"seam index outside [0, {nk})")
    total = float(np.take_along_axis(field, z[:, :, None].astype(np.intp), axis=2).sum())
    return total, total / (ni * nj)


def mean_energy(field: np.ndarray) -> float:
    return float(field.sum() / field.size)


def seam_filter_threshold(e_avg: float) -> float:
    if e_avg < 0:
        raise ValueError("mean energy must be nonnegative")
    return e_avg * TC_RATIO if e_avg > TC_KNEE else TC_FLOOR
