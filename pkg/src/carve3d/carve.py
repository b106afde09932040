"""Seam removal/insertion and the full seam-carving augmentation loop."""
from __future__ import annotations

import enum
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
from numba import njit

from .anchors import (AnchorModel, AnchorParams, NoAnchorError, build_anchor_model,
                      candidate_cells, fallback_anchor, refresh_members, sample_anchor,
                      select_clusters)
from .beamsearch import BeamParams, Seam, beam_search_2d, lift_to_seam_3d
from .energy import (EnergyKind, compute_energy, mean_energy, reduced_maps,
                     seam_filter_threshold)
from .symmetry import DEFAULT_TS, best_mirror_variant, detect_symmetry
from .voxel import Axis, GridKind, VoxelGrid, permute_for_axis

log = logging.getLogger(__name__)

# Rebuild the anchor model once fewer than this share of its candidates remain.
STALE_FRACTION = 0.75


class Direction(str, enum.Enum):
    INSERT = "insert"
    REMOVE = "remove"


class InsertionPolicy(str, enum.Enum):
    REPLICATE = "replicate"
    AVERAGE = "average"


class AugmentError(RuntimeError):
    pass


@dataclass
class AugmentConfig:
    s_max: float = 0.25
    beam: BeamParams = field(default_factory=BeamParams)
    anchors: AnchorParams = field(default_factory=AnchorParams)
    T_s: float = DEFAULT_TS
    energy_kind: EnergyKind = EnergyKind.AXIAL
    retries: int = 5
    insertion_policy: Optional[InsertionPolicy] = None

    def __post_init__(self):
        if not 0 <= self.s_max < 1:
            raise ValueError("s_max must lie in [0, 1)")
        if self.retries < 1:
            raise ValueError("retries must be >= 1")
        self.energy_kind = EnergyKind(self.energy_kind)
        if self.insertion_policy is not None:
            self.insertion_policy = InsertionPolicy(self.insertion_policy)

    def policy_for(self, grid: VoxelGrid) -> InsertionPolicy:
        if grid.is_occupancy:
            return InsertionPolicy.REPLICATE
        return self.insertion_policy or InsertionPolicy.AVERAGE

    def to_dict(self) -> dict:
        d = asdict(self)
        d["energy_kind"] = self.energy_kind.value
        d["insertion_policy"] = self.insertion_policy.value if self.insertion_policy else None
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "AugmentConfig":
        d = dict(d)
        d["beam"] = BeamParams(**d.get("beam", {}))
        d["anchors"] = AnchorParams(**d.get("anchors", {}))
        return cls(**d)


@dataclass
class StepLog:
    axis: str
    direction: str
    anchor: Optional[Tuple[int, int, int]]
    seam_mean: Optional[float]
    threshold: float
    accepted: bool
    attempts: int
    mirrored: Tuple[str, ...] = ()
    seam: Optional[np.ndarray] = field(default=None, repr=False, compare=False)

    def to_json(self) -> dict:
        d = asdict(self)
        d.pop("seam")
        d["anchor"] = list(self.anchor) if self.anchor is not None else None
        d["mirrored"] = list(self.mirrored)
        return d


def _check_seam(grid: VoxelGrid, seam: Seam) -> np.ndarray:
    z = np.asarray(getattr(seam, "z", seam), dtype=np.intp)
    ni, nj, nk = grid.dims
    if z.shape != (ni, nj):
        raise ValueError(f"seam shape {z.shape} does not match grid {(ni, nj)}")
    if z.min() < 0 or z.max() >= nk:
        raise IndexError(f"seam index outside [0, {nk})")
    return z


@njit(cache=True)
def _remove_cells(data, z):
    ni, nj, nk = data.shape
    out = np.empty((ni, nj, nk - 1), dtype=data.dtype)
    for i in range(ni):
        for j in range(nj):
            zz = z[i, j]
            out[i, j, :zz] = data[i, j, :zz]
            out[i, j, zz:] = data[i, j, zz + 1:]
    return out


@njit(cache=True)
def _insert_cells(data, z, average, lo, hi):
    """Copy ``data`` with a new cell at ``z + 1`` in every column.

    The new cell repeats the seam cell, or with ``average`` takes the mean of
    the seam cell and its successor clamped to ``[lo, hi]``.
    """
    ni, nj, nk = data.shape
    out = np.empty((ni, nj, nk + 1), dtype=data.dtype)
    for i in range(ni):
        for j in range(nj):
            zz = z[i, j]
            out[i, j, :zz + 1] = data[i, j, :zz + 1]
            out[i, j, zz + 2:] = data[i, j, zz + 1:]
            if average:
                nxt = data[i, j, min(zz + 1, nk - 1)]
                mid = (np.float64(data[i, j, zz]) + np.float64(nxt)) / 2.0
                out[i, j, zz + 1] = min(max(mid, lo), hi)
            else:
                out[i, j, zz + 1] = data[i, j, zz]
    return out


def remove_seam(grid: VoxelGrid, seam: Seam) -> VoxelGrid:
    if grid.dims[2] < 2:
        raise ValueError("cannot remove a seam from a single-layer grid")
    z = _check_seam(grid, seam)
    return grid._adopt(_remove_cells(np.ascontiguousarray(grid.data), z.astype(np.int64)))


def insert_seam(grid: VoxelGrid, seam: Seam,
                policy: InsertionPolicy = InsertionPolicy.REPLICATE) -> VoxelGrid:
    """Insert one cell per column right after the seam cell (index ``z + 1``)."""
    policy = InsertionPolicy(policy)
    if policy is InsertionPolicy.AVERAGE and grid.is_occupancy:
        raise ValueError("average insertion is undefined for occupancy grids")
    z = _check_seam(grid, seam)
    bound = grid.trunc if grid.trunc is not None else np.inf
    out = _insert_cells(np.ascontiguousarray(grid.data), z.astype(np.int64),
                        policy is InsertionPolicy.AVERAGE, -float(bound), float(bound))
    return grid._adopt(out)


@dataclass
class PassState:
    """Anchor model and symmetry information shared by the steps of one axis pass."""

    axis: Axis
    model: AnchorModel
    selected: List[int]
    symmetric_axes: frozenset = frozenset()


def start_pass(grid: VoxelGrid, axis: Axis, config: AugmentConfig,
               rng: np.random.Generator) -> PassState:
    field_ = compute_energy(grid, config.energy_kind)
    model = build_anchor_model(grid, field_, reduced_maps(field_), config.anchors,
                               config.beam, rng)
    selected = select_clusters(model, config.anchors.m, rng)
    sym = detect_symmetry(grid, config.T_s).symmetric_axes
    return PassState(Axis(axis), model, selected, sym)


def _refresh(state: PassState, grid: VoxelGrid, field_: np.ndarray,
             maps, config: AugmentConfig, rng: np.random.Generator) -> None:
    cells = candidate_cells(grid, field_, config.anchors.epsilon)
    model = state.model
    stale = (model.n_candidates == 0 and len(cells) > 0) or \
        len(cells) < STALE_FRACTION * model.n_candidates
    if stale:
        log.debug("rebuilding anchor model: %d of %d candidates left",
                  len(cells), model.n_candidates)
        state.model = build_anchor_model(grid, field_, maps, config.anchors, config.beam, rng)
        state.selected = select_clusters(state.model, config.anchors.m, rng)
    else:
        state.model = refresh_members(model, cells)
    if not any(len(state.model.clusters[c].members) for c in state.selected):
        state.model.fallback = fallback_anchor(grid, field_)


def _unpermute(cell: Tuple[int, int, int], axis: Axis) -> Tuple[int, int, int]:
    c = list(cell)
    if axis is Axis.X:
        c[0], c[2] = c[2], c[0]
    elif axis is Axis.Y:
        c[1], c[2] = c[2], c[1]
    return tuple(c)


def find_seam(grid: VoxelGrid, field_: np.ndarray, maps, anchor: Tuple[int, int, int],
              config: AugmentConfig, symmetric_axes=()) -> Seam:
    """Search both reducing directions from ``anchor`` and keep the cheaper seam."""
    occ = grid.is_occupancy
    i, j, k = anchor
    ex, ey = maps
    px = beam_search_2d(ex, (j, k), config.beam, occ)
    py = beam_search_2d(ey, (i, k), config.beam, occ)
    sx = lift_to_seam_3d(field_, px, i, Axis.X, config.beam, occ)
    sy = lift_to_seam_3d(field_, py, j, Axis.Y, config.beam, occ)
    seam = sx if sx.cost_mean <= sy.cost_mean else sy
    return best_mirror_variant(seam, field_, symmetric_axes)


def carve_step(grid: VoxelGrid, config: AugmentConfig, rng: np.random.Generator,
               direction: Direction, state: PassState) -> Tuple[VoxelGrid, StepLog]:
    """One insertion or removal along the third index of ``grid``.

    Seams whose mean energy exceeds the filter threshold are discarded and a
    fresh anchor is drawn, up to ``config.retries`` times; after that the step
    leaves the grid unchanged.
    """
    direction = Direction(direction)
    field_ = compute_energy(grid, config.energy_kind)
    maps = reduced_maps(field_)
    threshold = seam_filter_threshold(mean_energy(field_))
    _refresh(state, grid, field_, maps, config, rng)

    seam = anchor = None
    for attempt in range(1, config.retries + 1):
        anchor = sample_anchor(state.model, state.selected, rng)
        seam = find_seam(grid, field_, maps, anchor, config, state.symmetric_axes)
        if seam.cost_mean <= threshold:
            if direction is Direction.REMOVE:
                out = remove_seam(grid, seam)
            else:
                out = insert_seam(grid, seam, config.policy_for(grid))
            return out, StepLog(state.axis.name, direction.value, _unpermute(anchor, state.axis),
                                seam.cost_mean, threshold, True, attempt,
                                tuple(a.name for a in seam.mirrored), seam.z)
        log.debug("seam rejected: mean %.3g > %.3g", seam.cost_mean, threshold)
    return grid, StepLog(state.axis.name, direction.value, _unpermute(anchor, state.axis),
                         seam.cost_mean, threshold, False, config.retries,
                         tuple(a.name for a in seam.mirrored), seam.z)


def scaling_range(n: int, s_max: float) -> int:
    return int(math.floor(n * s_max))


def augment(grid: VoxelGrid, config: AugmentConfig = None, seed: int = 0,
            log_path: Optional[Path] = None) -> Tuple[VoxelGrid, List[StepLog]]:
    """Resize the shape along X, Y and Z in turn by a random number of seams.

    Each axis changes by an integer drawn uniformly from
    ``[-floor(N * s_max), floor(N * s_max)]``; positive counts insert seams,
    negative counts remove them.
    """
    config = config or AugmentConfig()
    rng = np.random.default_rng(seed)
    logs: List[StepLog] = []
    for axis in Axis:
        g = permute_for_axis(grid, axis)
        bound = scaling_range(g.dims[2], config.s_max)
        delta = int(rng.integers(-bound, bound + 1))
        if delta:
            state = start_pass(g, axis, config, rng)
            direction = Direction.INSERT if delta > 0 else Direction.REMOVE
            for _ in range(abs(delta)):
                g, entry = carve_step(g, config, rng, direction, state)
                logs.append(entry)
        grid = permute_for_axis(g, axis)
    if log_path is not None:
        write_step_logs(logs, log_path)
    return grid, logs


def write_step_logs(logs: Sequence[StepLog], path: Path, run: Optional[int] = None,
                    mode: str = "w") -> None:
    with open(path, mode) as fh:
        for entry in logs:
            rec = entry.to_json()
            if run is not None:
                rec = {"run": run, **rec}
            fh.write(json.dumps(rec) + "\n")


def _run_one(args) -> Tuple[VoxelGrid, List[StepLog]]:
    index, grid, config, seed = args
    try:
        return augment(grid, config, seed)
    except (NoAnchorError, ValueError, IndexError) as exc:
        raise AugmentError(f"run {index} (seed {seed}): {exc}") from exc


def augment_batch(grid: VoxelGrid, config: AugmentConfig = None, count: int = 8,
                  base_seed: int = 0, jobs: int = 1,
                  with_logs: bool = False) -> list:
    """Run ``count`` independent augmentations with seeds ``base_seed + r``, in seed order."""
    if count < 1:
        raise ValueError("count must be >= 1")
    config = config or AugmentConfig()
    tasks = [(r, grid, config, base_seed + r) for r in range(count)]
    if jobs > 1 and count > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, count)) as pool:
            results = list(pool.map(_run_one, tasks))
    else:
        results = [_run_one(t) for t in tasks]
    return results if with_logs else [g for g, _ in results]
