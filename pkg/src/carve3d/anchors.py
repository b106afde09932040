"""Low-energy anchor candidates, mini-batch k-means clustering and anchor sampling."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .beamsearch import BeamParams, beam_search_2d
from .voxel import VoxelGrid, as_occupancy

Cell = Tuple[int, int, int]
_CHUNK = 1 << 16


class NoAnchorError(RuntimeError):
    """The grid has no occupied cell to anchor a seam on."""


@dataclass
class AnchorParams:
    epsilon: float = 1e-3
    k: int = 12
    batch: int = 256
    iters: int = 30
    s: int = 3
    m: int = 2

    def __post_init__(self):
        if min(self.k, self.batch, self.iters, self.s, self.m) < 1:
            raise ValueError("anchor counts must all be >= 1")
        if self.m > self.n_retained:
            raise ValueError(f"m={self.m} exceeds the {self.n_retained} retained clusters")

    @property
    def n_retained(self) -> int:
        return math.ceil(self.k / 3)


@dataclass
class Cluster:
    centroid: np.ndarray
    members: np.ndarray  # (M, 3) int cell indices


@dataclass
class AnchorModel:
    clusters: List[Cluster]
    scores: Optional[np.ndarray] = None
    retained: List[int] = field(default_factory=list)
    n_candidates: int = 0
    fallback: Optional[Cell] = None

    @property
    def centroids(self) -> np.ndarray:
        if not self.clusters:
            return np.zeros((0, 3))
        return np.stack([c.centroid for c in self.clusters])


def candidate_cells(grid: VoxelGrid, field: np.ndarray, epsilon: float) -> np.ndarray:
    """Occupied cells whose energy is below ``epsilon``, row-major, as an (M, 3) array."""
    occ = as_occupancy(grid).data
    if occ.shape != field.shape:
        raise ValueError(f"grid {occ.shape} and field {field.shape} differ")
    return np.argwhere((occ == 1) & (field < epsilon))


def fallback_anchor(grid: VoxelGrid, field: np.ndarray) -> Optional[Cell]:
    occ = as_occupancy(grid).data.astype(bool)
    if not occ.any():
        return None
    masked = np.where(occ, field, np.inf)
    return tuple(int(v) for v in np.unravel_index(int(np.argmin(masked)), masked.shape))


def _nearest(points: np.ndarray, centers: np.ndarray,
             with_d2: bool = True) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    """Index of the nearest centre for every point and, optionally, its squared distance."""
    labels = np.empty(len(points), dtype=np.int64)
    d2 = np.empty(len(points)) if with_d2 else None
    c2 = (centers ** 2).sum(axis=1)
    for lo in range(0, len(points), _CHUNK):
        x = points[lo:lo + _CHUNK]
        dist = c2[None, :] - 2.0 * x @ centers.T
        lab = np.argmin(dist, axis=1)
        labels[lo:lo + _CHUNK] = lab
        if with_d2:
            near = np.take_along_axis(dist, lab[:, None], axis=1)[:, 0]
            d2[lo:lo + _CHUNK] = np.maximum(near + (x ** 2).sum(axis=1), 0.0)
    return labels, d2


def _kmeans_pp(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    centers = [points[rng.integers(len(points))]]
    d2 = ((points - centers[0]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            idx = int(rng.integers(len(points)))
        else:
            idx = int(np.searchsorted(np.cumsum(d2), rng.random() * total, side="right"))
            idx = min(idx, len(points) - 1)
        centers.append(points[idx])
        d2 = np.minimum(d2, ((points - points[idx]) ** 2).sum(axis=1))
    return np.array(centers, dtype=np.float64)


def cluster_candidates(cells: np.ndarray, params: AnchorParams,
                       rng: np.random.Generator) -> AnchorModel:
    """Mini-batch k-means over candidate cells with k-means++ seeding.

    Each centroid moves with learning rate ``1 / (samples it has absorbed)``,
    i.e. it is the running mean of the batch points assigned to it. When the
    batch size reaches the number of cells every round uses all of them. If the
    refined centroids fit worse than the seeds, the seeds are kept.
    """
    cells = np.asarray(cells, dtype=np.int64).reshape(-1, 3)
    if len(cells) < 1:
        raise ValueError("cannot cluster an empty candidate set")
    points = cells.astype(np.float64)
    k = min(params.k, len(points))
    seeds = _kmeans_pp(points, k, rng)
    centers = seeds.copy()
    counts = np.zeros(k)
    full = params.batch >= len(points)
    for _ in range(params.iters):
        # a batch that covers the whole set is the set itself
        sample = points if full else points[rng.integers(len(points), size=params.batch)]
        lab, _ = _nearest(sample, centers, with_d2=False)
        n_c = np.bincount(lab, minlength=k).astype(np.float64)
        sums = np.zeros((k, 3))
        np.add.at(sums, lab, sample)
        hit = n_c > 0
        new_counts = counts + n_c
        centers[hit] = (counts[hit, None] * centers[hit] + sums[hit]) / new_counts[hit, None]
        counts = new_counts

    labels, d2 = _nearest(points, centers)
    seed_labels, seed_d2 = _nearest(points, seeds)
    if seed_d2.sum() < d2.sum():
        centers, labels = seeds, seed_labels

    clusters = [Cluster(centers[c].copy(), cells[labels == c])
                for c in range(k) if np.any(labels == c)]
    return AnchorModel(clusters, n_candidates=len(cells))


def inertia(model: AnchorModel) -> float:
    return float(sum(((c.members - c.centroid) ** 2).sum() for c in model.clusters))


def score_clusters(model: AnchorModel, maps: Tuple[np.ndarray, np.ndarray],
                   params: AnchorParams, beam: BeamParams, rng: np.random.Generator,
                   occupancy: bool = True) -> AnchorModel:
    """Rank clusters by the mean cost of ``s`` simulated 2D searches from random members."""
    if not model.clusters:
        raise ValueError("model has no clusters to score")
    ex, ey = maps
    scores = np.zeros(len(model.clusters))
    for ci, cl in enumerate(model.clusters):
        total = 0.0
        for _ in range(params.s):
            i, j, k = (int(v) for v in cl.members[rng.integers(len(cl.members))])
            cx = beam_search_2d(ex, (j, k), beam, occupancy).cost
            cy = beam_search_2d(ey, (i, k), beam, occupancy).cost
            total += min(cx, cy)
        scores[ci] = total / params.s
    keep = min(params.n_retained, len(model.clusters))
    retained = [int(i) for i in np.argsort(scores, kind="stable")[:keep]]
    return replace(model, scores=scores, retained=retained)


def build_anchor_model(grid: VoxelGrid, field: np.ndarray, maps: Tuple[np.ndarray, np.ndarray],
                       params: AnchorParams, beam: BeamParams,
                       rng: np.random.Generator) -> AnchorModel:
    cells = candidate_cells(grid, field, params.epsilon)
    fallback = fallback_anchor(grid, field)
    if len(cells) == 0:
        return AnchorModel([], fallback=fallback)
    model = cluster_candidates(cells, params, rng)
    model = score_clusters(model, maps, params, beam, rng, grid.is_occupancy)
    model.fallback = fallback
    return model


def refresh_members(model: AnchorModel, cells: np.ndarray,
                    fallback: Optional[Cell] = None) -> AnchorModel:
    """Reassign current candidate cells to the existing centroids."""
    if not model.clusters:
        return replace(model, fallback=fallback)
    cells = np.asarray(cells).reshape(-1, 3)
    labels, _ = _nearest(cells.astype(np.float64), model.centroids, with_d2=False)
    order = np.argsort(labels, kind="stable")
    bounds = np.searchsorted(labels[order], np.arange(1, len(model.clusters)))
    groups = np.split(cells[order], bounds)
    clusters = [Cluster(c.centroid, g) for c, g in zip(model.clusters, groups)]
    return replace(model, clusters=clusters, fallback=fallback)


def select_clusters(model: AnchorModel, m: int, rng: np.random.Generator) -> List[int]:
    """Draw the ``m`` retained clusters one augmentation run samples from."""
    if not model.retained:
        return []
    picks = rng.choice(len(model.retained), size=min(m, len(model.retained)), replace=False)
    return [model.retained[int(p)] for p in picks]


def sample_anchor(model: AnchorModel, selected: Sequence[int],
                  rng: np.random.Generator) -> Cell:
    live = [c for c in selected if len(model.clusters[c].members)]
    if not live:
        if model.fallback is None:
            raise NoAnchorError("grid has no occupied cells")
        return model.fallback
    members = model.clusters[live[int(rng.integers(len(live)))]].members
    return tuple(int(v) for v in members[rng.integers(len(members))])
