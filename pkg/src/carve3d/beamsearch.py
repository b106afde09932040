"""Anchored beam search for low-energy paths and seam surfaces.

A 2D path ``p`` over an energy map of shape ``(h, w)`` assigns one cutting
index ``p[x]`` per main-axis row with ``|p[x] - p[x+1]| <= 1``. A seam is the
3D analogue: ``z[i, j]`` with unit steps between 4-neighbours.

Candidates are kept in generation order (parent beam order, then offsets
0, -1, +1) and every tie in this module resolves to the earliest candidate.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from numba import njit

from .energy import seam_cost
from .voxel import Axis

OFFSETS = np.array([0, -1, 1], dtype=np.int64)
EXHAUSTIVE_LIMIT = 16


@dataclass
class BeamParams:
    """Beam width and the absolute tolerance under which two costs count as equal.

    ``tie_tol=None`` resolves per grid kind: exact for occupancy, 1e-6 for scalar.
    """

    n: int = 4
    tie_tol: Optional[float] = None

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("beam width must be >= 1")

    def tolerance(self, occupancy: bool = True) -> float:
        if self.tie_tol is not None:
            return float(self.tie_tol)
        return 0.0 if occupancy else 1e-6


@dataclass
class Path2D:
    values: np.ndarray
    anchor: Tuple[int, int]
    cost: float = 0.0

    def __len__(self):
        return len(self.values)


@dataclass
class Seam:
    z: np.ndarray
    cost_total: Optional[float] = None
    cost_mean: Optional[float] = None
    mirrored: Tuple[Axis, ...] = field(default=())

    @property
    def dims(self) -> Tuple[int, int]:
        return tuple(self.z.shape)


# --- validity checks -------------------------------------------------------

def is_valid_path(values: np.ndarray, width: int) -> bool:
    v = np.asarray(values)
    return bool(v.size and v.min() >= 0 and v.max() < width
                and (v.size == 1 or np.abs(np.diff(v)).max() <= 1))


def is_valid_seam(z: np.ndarray, depth: int) -> bool:
    z = np.asarray(z)
    if z.ndim != 2 or not z.size or z.min() < 0 or z.max() >= depth:
        return False
    if z.shape[0] > 1 and np.abs(np.diff(z, axis=0)).max() > 1:
        return False
    if z.shape[1] > 1 and np.abs(np.diff(z, axis=1)).max() > 1:
        return False
    return True


def path_cost(emap: np.ndarray, values: Sequence[int]) -> float:
    v = np.asarray(values, dtype=np.intp)
    return float(emap[np.arange(len(v)), v].sum())


def path_distance(p1, p2) -> int:
    a = np.asarray(getattr(p1, "values", p1), dtype=np.int64)
    b = np.asarray(getattr(p2, "values", p2), dtype=np.int64)
    if a.shape != b.shape:
        raise ValueError(f"paths differ in length: {a.shape} vs {b.shape}")
    return int(np.abs(a - b).sum())


# --- selection kernels -----------------------------------------------------
#
# Kernels work on preallocated buffers; the beam loops below run once per
# column of every slice, so per-step allocation dominates otherwise.

_SMALL = 32


@njit(cache=True)
def _order_large(costs, idx, k):
    sub = idx[:k].copy()
    sub.sort()
    order = np.argsort(costs[sub], kind="mergesort")
    for q in range(k):
        idx[q] = sub[order[q]]


@njit(cache=True)
def _order_by_cost(costs, idx, k):
    """Sort ``idx[:k]`` in place by (cost, index)."""
    if k > _SMALL:
        # kept out of line: an allocating branch here slows every small call
        _order_large(costs, idx, k)
        return
    for a in range(1, k):
        v = idx[a]
        c = costs[v]
        b = a - 1
        while b >= 0 and (costs[idx[b]] > c or (costs[idx[b]] == c and idx[b] > v)):
            idx[b + 1] = idx[b]
            b -= 1
        idx[b + 1] = v


@njit(cache=True)
def _pick(dist, bidx, nb, r, out, o, totals, taken, nearest):
    """Choose ``r`` of the tied candidates ``bidx[:nb]``; writes ``out[o:o + r]``."""
    for x in range(nb):
        s = 0
        for y in range(nb):
            s += dist[bidx[x], bidx[y]]
        totals[x] = s
        taken[x] = False
    if r == 1:
        best = 0
        for x in range(1, nb):
            if totals[x] < totals[best]:
                best = x
        out[o] = bidx[best]
        return
    first = 0
    for x in range(1, nb):
        if totals[x] > totals[first]:
            first = x
    out[o] = bidx[first]
    taken[first] = True
    for x in range(nb):
        nearest[x] = dist[bidx[first], bidx[x]]
    for c in range(1, r):
        best = -1
        best_v = -1
        for x in range(nb):
            if not taken[x] and nearest[x] > best_v:
                best = x
                best_v = nearest[x]
        out[o + c] = bidx[best]
        taken[best] = True
        for x in range(nb):
            d = dist[bidx[best], bidx[x]]
            if d < nearest[x]:
                nearest[x] = d


@njit(cache=True)
def _select_into(costs, m, n, tol, dist, keep, bidx, totals, taken, nearest):
    """Write retained candidate indices, ordered by (cost, index), to ``keep``.

    Returns how many were kept. ``dist`` is only read when tied candidates
    outnumber the free slots.
    """
    if m <= n:
        for i in range(m):
            keep[i] = i
        _order_by_cost(costs, keep, m)
        return m
    for i in range(m):
        bidx[i] = i
    _order_by_cost(costs, bidx, m)
    threshold = costs[bidx[n - 1]]
    na = 0
    nb = 0
    for i in range(m):
        c = costs[i]
        if c < threshold - tol:
            keep[na] = i
            na += 1
        elif abs(c - threshold) <= tol:
            bidx[nb] = i
            nb += 1
    r = n - na
    # every candidate at or below the threshold is in A or B, so |A| + |B| >= n
    if nb <= r:
        for x in range(nb):
            keep[na + x] = bidx[x]
        k = na + nb
    else:
        _pick(dist, bidx, nb, r, keep, na, totals, taken, nearest)
        k = n
    _order_by_cost(costs, keep, k)
    return k


@njit(cache=True)
def _select(costs, n, tol, dist):
    m = costs.shape[0]
    keep = np.empty(m, dtype=np.int64)
    bidx = np.empty(m, dtype=np.int64)
    totals = np.empty(m, dtype=np.int64)
    taken = np.empty(m, dtype=np.bool_)
    nearest = np.empty(m, dtype=np.int64)
    k = _select_into(costs, m, n, tol, dist, keep, bidx, totals, taken, nearest)
    return keep[:k].copy()


@njit(cache=True)
def _trace(bp, bv, step, b, rows, out):
    """Write the values chosen by beam entry ``b`` at steps ``0..step`` into ``out``."""
    for r in range(step, -1, -1):
        out[rows[r]] = bv[r, b]
        b = bp[r, b]


@njit(cache=True)
def _row_beam(emap, rows, refs, anchored, prev, xa, ya, n, tol):
    """Row-by-row beam over ``emap``; shared by the 2D search and the per-slice search.

    ``anchored``: rows are ``rows`` (outward from ``xa``) and each row offers
    the parent's value at ``refs[r]`` plus -1/0/+1, clamped and deduplicated.
    Otherwise each row ``t`` offers ``prev[t]`` plus 0/-1/+1 kept in range and
    within one step of the parent's value at row ``t - 1``.

    Paths are kept as back-pointers and only rebuilt at the end. Per-row
    state is double-buffered on ``r & 1``; swapping array variables inside
    the loop defeats numba's optimiser.
    """
    h, w = emap.shape
    steps = rows.shape[0]
    cap = 3 * n if 3 * n > 3 else 3
    width = n if n > 1 else 1
    bp = np.zeros((steps, width), dtype=np.int64)
    bv = np.zeros((steps, width), dtype=np.int64)
    last = np.zeros((2, width), dtype=np.int64)
    C = np.zeros((2, width))
    # a beam that can never prune (n >= 3**steps) needs no distance buffers
    prunes = steps > 0 and (steps >= 40 or n < 3 ** steps)
    dcap = cap if prunes else 1
    D = np.zeros((2, dcap, dcap), dtype=np.int64)
    dist = np.zeros((dcap, dcap), dtype=np.int64)
    par = np.empty(cap, dtype=np.int64)
    val = np.empty(cap, dtype=np.int64)
    cost = np.empty(cap)
    keep = np.empty(cap, dtype=np.int64)
    bidx = np.empty(cap, dtype=np.int64)
    totals = np.empty(cap, dtype=np.int64)
    taken = np.empty(cap, dtype=np.bool_)
    nearest = np.empty(cap, dtype=np.int64)
    nb = 1
    if anchored:
        last[0, 0] = ya
        C[0, 0] = emap[xa, ya]
    has_d = False
    for r in range(steps):
        cur = r & 1
        nxt = 1 - cur
        x = rows[r]
        m = 0
        for b in range(nb):
            first = m
            for d in OFFSETS:
                if anchored:
                    base = ya if refs[r] == xa else last[cur, b]
                    y = min(max(base + d, 0), w - 1)
                    dup = False
                    for q in range(first, m):
                        if val[q] == y:
                            dup = True
                    if dup:
                        continue
                else:
                    y = prev[x] + d
                    if y < 0 or y >= w:
                        continue
                    if r > 0 and abs(y - last[cur, b]) > 1:
                        continue
                par[m] = b
                val[m] = y
                cost[m] = C[cur, b] + emap[x, y]
                m += 1
        track = has_d or m > n
        if track:
            if not has_d and r > 0:
                full = np.zeros((nb, h), dtype=np.int64)
                for a in range(nb):
                    _trace(bp, bv, r - 1, a, rows, full[a])
                for a in range(nb):
                    for c in range(a + 1, nb):
                        dd = 0
                        for t in range(h):
                            dd += abs(full[a, t] - full[c, t])
                        D[cur, a, c] = dd
                        D[cur, c, a] = dd
            for a in range(m):
                dist[a, a] = 0
                for c in range(a + 1, m):
                    dd = D[cur, par[a], par[c]] + abs(val[a] - val[c])
                    dist[a, c] = dd
                    dist[c, a] = dd
        k = _select_into(cost, m, n, tol, dist, keep, bidx, totals, taken, nearest)
        for q in range(k):
            bp[r, q] = par[keep[q]]
            bv[r, q] = val[keep[q]]
            last[nxt, q] = val[keep[q]]
            C[nxt, q] = cost[keep[q]]
            if track:
                for q2 in range(k):
                    D[nxt, q, q2] = dist[keep[q], keep[q2]]
        nb = k
        has_d = track
    P = np.zeros((nb, h), dtype=np.int64)
    for q in range(nb):
        if steps > 0:
            _trace(bp, bv, steps - 1, q, rows, P[q])
        if anchored:
            P[q, xa] = ya
    return P, C[steps & 1, :nb].copy()


@njit(cache=True)
def _beam2d(emap, xa, ya, n, tol):
    h = emap.shape[0]
    rows = np.concatenate((np.arange(xa - 1, -1, -1), np.arange(xa + 1, h)))
    refs = np.where(rows < xa, rows + 1, rows - 1)
    P, C = _row_beam(emap, rows, refs, True, np.zeros(h, dtype=np.int64), xa, ya, n, tol)
    return P[0], C[0]


@njit(cache=True)
def _inner(emap, prev, n, tol):
    """Beam search for a slice path within one step of ``prev`` at every row."""
    h = emap.shape[0]
    rows = np.arange(h)
    return _row_beam(emap, rows, rows, False, prev, 0, 0, n, tol)


@njit(cache=True)
def _slice_cost(emap, path):
    s = 0.0
    for t in range(path.shape[0]):
        s += emap[t, path[t]]
    return s


@njit(cache=True)
def _expand(emap, prev, reuse, b, cb, n, tol, par, paths, cost, m, ip, ic):
    """Append the carry candidate and the per-slice beam survivors for entry ``b``.

    With ``reuse`` the survivors already in ``ip[:len(ic)]`` (found for an
    identical ``prev``) are used again. Returns the new candidate count and
    the survivor count.
    """
    h = prev.shape[0]
    # carrying the previous slice unchanged is always a candidate
    par[m] = b
    paths[m] = prev
    cost[m] = cb + _slice_cost(emap, prev)
    m += 1
    if reuse:
        k = ic.shape[0]
        P = ip
        K = ic
    else:
        P, K = _inner(emap, prev, n, tol)
        k = K.shape[0]
    for q in range(k):
        same = True
        for t in range(h):
            if P[q, t] != prev[t]:
                same = False
                break
        if same:
            continue
        par[m] = b
        paths[m] = P[q]
        cost[m] = cb + K[q]
        m += 1
    return m, P, K


@njit(cache=True)
def _lift(field, anchor, s0, n, tol):
    R, h, w = field.shape
    cap = n * (n + 1)
    slices = np.concatenate((np.arange(s0 - 1, -1, -1), np.arange(s0 + 1, R)))
    steps = slices.shape[0]
    sp = np.zeros((steps, n, h), dtype=np.int64)
    spar = np.zeros((steps, n), dtype=np.int64)
    C = np.zeros((2, n))
    D = np.zeros((2, n, n), dtype=np.int64)
    par = np.empty(cap, dtype=np.int64)
    paths = np.empty((cap, h), dtype=np.int64)
    cost = np.empty(cap)
    dist = np.zeros((cap, cap), dtype=np.int64)
    keep = np.empty(cap, dtype=np.int64)
    bidx = np.empty(cap, dtype=np.int64)
    totals = np.empty(cap, dtype=np.int64)
    taken = np.empty(cap, dtype=np.bool_)
    nearest = np.empty(cap, dtype=np.int64)
    C[0, 0] = _slice_cost(field[s0], anchor)
    nb = 1
    has_d = False
    for r in range(steps):
        cur = r & 1
        nxt = 1 - cur
        s = slices[r]
        from_anchor = r == 0 or s == s0 + 1
        m = 0
        ip = np.zeros((0, h), dtype=np.int64)
        ic = np.zeros(0)
        for b in range(nb):
            prev = anchor if from_anchor else sp[r - 1, b]
            # entries sharing the previous slice share the per-slice search
            reuse = b > 0
            if reuse and not from_anchor:
                for t in range(h):
                    if sp[r - 1, b - 1, t] != prev[t]:
                        reuse = False
                        break
            m, ip, ic = _expand(field[s], prev, reuse, b, C[cur, b], n, tol,
                                par, paths, cost, m, ip, ic)
        track = has_d or m > n
        if track:
            if not has_d and r > 0:
                full = np.zeros((nb, R, h), dtype=np.int64)
                for a in range(nb):
                    _trace(spar, sp, r - 1, a, slices, full[a])
                for a in range(nb):
                    for c in range(a + 1, nb):
                        dd = 0
                        for u in range(R):
                            for t in range(h):
                                dd += abs(full[a, u, t] - full[c, u, t])
                        D[cur, a, c] = dd
                        D[cur, c, a] = dd
            for a in range(m):
                dist[a, a] = 0
                for c in range(a + 1, m):
                    dd = D[cur, par[a], par[c]]
                    for t in range(h):
                        dd += abs(paths[a, t] - paths[c, t])
                    dist[a, c] = dd
                    dist[c, a] = dd
        k = _select_into(cost, m, n, tol, dist, keep, bidx, totals, taken, nearest)
        for q in range(k):
            spar[r, q] = par[keep[q]]
            sp[r, q] = paths[keep[q]]
            C[nxt, q] = cost[keep[q]]
            if track:
                for q2 in range(k):
                    D[nxt, q, q2] = dist[keep[q], keep[q2]]
        nb = k
        has_d = track
    surface = np.zeros((R, h), dtype=np.int64)
    surface[s0] = anchor
    if steps > 0:
        _trace(spar, sp, steps - 1, 0, slices, surface)
    return surface, C[steps & 1, 0]


# --- public API ------------------------------------------------------------

def beam_search_2d(emap: np.ndarray, anchor: Tuple[int, int],
                   params: BeamParams = BeamParams(), occupancy: bool = True) -> Path2D:
    """Lowest-cost anchored path found by a width-``n`` beam.

    Rows are filled outward from the anchor row (towards 0 first, then
    towards ``h - 1``); each step offers offsets -1/0/+1 clamped to the map.
    """
    emap = np.ascontiguousarray(emap, dtype=np.float64)
    h, w = emap.shape
    xa, ya = int(anchor[0]), int(anchor[1])
    if not (0 <= xa < h and 0 <= ya < w):
        raise IndexError(f"anchor {anchor} outside map of shape {emap.shape}")
    values, _ = _beam2d(emap, xa, ya, int(params.n), params.tolerance(occupancy))
    # report the row-order sum so equal paths always carry bit-identical costs
    return Path2D(values, (xa, ya), path_cost(emap, values))


def lift_to_seam_3d(field: np.ndarray, anchor_path: Path2D | np.ndarray, start_slice: int,
                    reducing: Axis, params: BeamParams = BeamParams(),
                    occupancy: bool = True) -> Seam:
    """Grow a seam surface slice by slice from ``anchor_path`` placed at ``start_slice``.

    Slices are taken along ``reducing`` (X: ``field[i]``, Y: ``field[:, j]``);
    each new slice path stays within one cell of the previous slice's path.
    """
    reducing = Axis(reducing)
    if reducing is Axis.Z:
        raise ValueError("the cutting axis cannot be the reducing axis")
    values = np.asarray(getattr(anchor_path, "values", anchor_path), dtype=np.int64)
    stack = field if reducing is Axis.X else field.transpose(1, 0, 2)
    stack = np.ascontiguousarray(stack, dtype=np.float64)
    R, h, w = stack.shape
    if values.shape != (h,):
        raise ValueError(f"anchor path length {values.shape} does not match main axis {h}")
    if not 0 <= start_slice < R:
        raise ValueError(f"start slice {start_slice} outside [0, {R})")
    if not is_valid_path(values, w):
        raise ValueError("anchor path is not a continuous in-range path")
    surface, _ = _lift(stack, values, int(start_slice), int(params.n), params.tolerance(occupancy))
    z = surface if reducing is Axis.X else np.ascontiguousarray(surface.T)
    total, mean = seam_cost(field, z)
    return Seam(z, total, mean)


def prune_with_diversity(candidates: List[Tuple[Sequence[int], float]], n: int,
                         tie_tol: float = 0.0) -> List[Tuple[Sequence[int], float]]:
    """Keep ``n`` candidates, spreading equal-cost ones apart.

    With ``T`` the n-th cheapest cost, everything strictly below ``T`` is kept.
    If one slot is left, the medoid of the candidates tied at ``T`` fills it;
    otherwise the tied candidate farthest from the rest seeds the pick and
    each further slot goes to the one with the largest distance to its
    nearest already-picked path.
    """
    if not candidates:
        raise ValueError("no candidates to prune")
    paths = [np.asarray(p, dtype=np.int64) for p, _ in candidates]
    costs = np.array([c for _, c in candidates], dtype=np.float64)
    m = len(paths)
    dist = np.zeros((m, m), dtype=np.int64)
    if m > n:
        for a in range(m):
            for b in range(a + 1, m):
                dist[a, b] = dist[b, a] = path_distance(paths[a], paths[b])
    keep = _select(costs, int(n), float(tie_tol), dist)
    return [candidates[i] for i in keep]


def exhaustive_min_path(emap: np.ndarray, anchor: Tuple[int, int]) -> Path2D:
    """Exact minimum-cost anchored path by dynamic programming away from the anchor row."""
    emap = np.asarray(emap, dtype=np.float64)
    h, w = emap.shape
    if h > EXHAUSTIVE_LIMIT or w > EXHAUSTIVE_LIMIT:
        raise ValueError(f"map {emap.shape} exceeds the {EXHAUSTIVE_LIMIT}x{EXHAUSTIVE_LIMIT} guard")
    xa, ya = int(anchor[0]), int(anchor[1])
    if not (0 <= xa < h and 0 <= ya < w):
        raise IndexError(f"anchor {anchor} outside map of shape {emap.shape}")

    values = np.zeros(h, dtype=np.int64)
    values[xa] = ya
    for rows in (range(xa - 1, -1, -1), range(xa + 1, h)):
        rows = list(rows)
        if not rows:
            continue
        # best[y]: cheapest cost of rows so far ending at y; back[r][y]: predecessor
        best = np.full(w, np.inf)
        best[ya] = 0.0
        back = []
        for x in rows:
            nxt = np.full(w, np.inf)
            arg = np.full(w, -1, dtype=np.int64)
            for y in range(w):
                for d in OFFSETS:
                    yp = y - d
                    if 0 <= yp < w and best[yp] < nxt[y]:
                        nxt[y] = best[yp]
                        arg[y] = yp
                nxt[y] += emap[x, y]
            back.append(arg)
            best = nxt
        y = int(np.argmin(best))
        for x, arg in zip(reversed(rows), reversed(back)):
            values[x] = y
            y = int(arg[y])
    return Path2D(values, (xa, ya), path_cost(emap, values))
