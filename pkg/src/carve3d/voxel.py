"""Dense voxel grids: representation, axis permutation, file IO, fixtures, OBJ export."""
from __future__ import annotations

import enum
import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np

PathLike = Union[str, Path]

MAGIC = b"VGRD"
VERSION = 1
HEADER = struct.Struct("<4sBBH3If")  # magic, version, dtype, reserved, dims, trunc
DEFAULT_TRUNC = 3.0


class FormatError(ValueError):
    """Malformed VGRID or text-grid file."""

    def __init__(self, message: str, offset: int = 0):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class SpecError(ValueError):
    """Shape parameters that do not describe a valid fixture."""


class GridKind(enum.Enum):
    OCCUPANCY = 0
    SCALAR = 1


class Axis(enum.IntEnum):
    X = 0
    Y = 1
    Z = 2


@dataclass(frozen=True, eq=False)
class VoxelGrid:
    """Immutable dense grid indexed ``data[i, j, k]`` with k fastest.

    Occupancy grids store ``uint8`` values in {0, 1}; scalar grids store
    ``float32`` signed distances (negative inside), optionally truncated
    to ``[-trunc, trunc]``.
    """

    data: np.ndarray
    kind: GridKind = GridKind.OCCUPANCY
    trunc: Optional[float] = None

    def __post_init__(self):
        dtype = np.uint8 if self.kind is GridKind.OCCUPANCY else np.float32
        arr = np.ascontiguousarray(self.data, dtype=dtype)
        if arr.ndim != 3 or min(arr.shape) < 1:
            raise ValueError(f"grid must be 3D with positive dims, got {arr.shape}")
        if self.kind is GridKind.OCCUPANCY:
            if self.trunc is not None:
                raise ValueError("occupancy grids carry no truncation distance")
            if arr.size and arr.max() > 1:
                raise ValueError("occupancy values must be 0 or 1")
        elif self.trunc is not None and np.any(np.abs(arr) > np.float32(self.trunc)):
            raise ValueError(f"scalar values exceed truncation {self.trunc}")
        if arr is self.data:
            arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @classmethod
    def occupancy(cls, data) -> "VoxelGrid":
        return cls(np.asarray(data), GridKind.OCCUPANCY)

    @classmethod
    def scalar(cls, data, trunc: Optional[float] = None) -> "VoxelGrid":
        return cls(np.asarray(data), GridKind.SCALAR, trunc)

    @property
    def dims(self) -> Tuple[int, int, int]:
        return tuple(int(d) for d in self.data.shape)

    @property
    def is_occupancy(self) -> bool:
        return self.kind is GridKind.OCCUPANCY

    def replace(self, data: np.ndarray) -> "VoxelGrid":
        return VoxelGrid(data, self.kind, self.trunc)

    def _adopt(self, data: np.ndarray) -> "VoxelGrid":
        """Wrap a freshly built array of the right dtype without copying or checking."""
        data.flags.writeable = False
        out = object.__new__(VoxelGrid)
        object.__setattr__(out, "data", data)
        object.__setattr__(out, "kind", self.kind)
        object.__setattr__(out, "trunc", self.trunc)
        return out

    def __eq__(self, other):
        if not isinstance(other, VoxelGrid):
            return NotImplemented
        same_trunc = (self.trunc is None and other.trunc is None) or (
            self.trunc is not None and other.trunc is not None
            and np.float32(self.trunc) == np.float32(other.trunc))
        return (self.kind is other.kind and same_trunc
                and self.data.shape == other.data.shape
                and np.array_equal(self.data, other.data))

    __hash__ = None

    def __repr__(self):
        return f"VoxelGrid(dims={self.dims}, kind={self.kind.name}, trunc={self.trunc})"


_SWAPS = {Axis.X: (0, 2), Axis.Y: (1, 2), Axis.Z: None}


def permute_for_axis(grid: VoxelGrid, axis: Axis) -> VoxelGrid:
    """Move ``axis`` into the cutting (third) position by a single axis swap.

    Each swap is its own inverse, so calling this again undoes it.
    """
    swap = _SWAPS[Axis(axis)]
    if swap is None:
        return grid
    return grid.replace(np.swapaxes(grid.data, *swap))


def permute_array(arr: np.ndarray, axis: Axis) -> np.ndarray:
    swap = _SWAPS[Axis(axis)]
    return arr if swap is None else np.ascontiguousarray(np.swapaxes(arr, *swap))


# --- VGRID binary IO -------------------------------------------------------

def write_grid(grid: VoxelGrid, path: PathLike) -> None:
    Path(path).write_bytes(encode_grid(grid))


def encode_grid(grid: VoxelGrid) -> bytes:
    trunc = math.nan if grid.trunc is None else grid.trunc
    header = HEADER.pack(MAGIC, VERSION, grid.kind.value, 0, *grid.dims, trunc)
    payload = grid.data.astype("<f4" if grid.kind is GridKind.SCALAR else "u1").tobytes()
    return header + payload


def read_grid(path: PathLike) -> VoxelGrid:
    return decode_grid(Path(path).read_bytes())


def decode_grid(buf: bytes) -> VoxelGrid:
    if len(buf) < HEADER.size:
        raise FormatError(f"truncated header: {len(buf)} of {HEADER.size} bytes", len(buf))
    magic, version, dtype, _reserved, ni, nj, nk, trunc = HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}", 0)
    if version != VERSION:
        raise FormatError(f"unsupported version {version}", 4)
    if dtype not in (0, 1):
        raise FormatError(f"unknown dtype {dtype}", 5)
    if min(ni, nj, nk) < 1:
        raise FormatError(f"non-positive dims {(ni, nj, nk)}", 8)
    kind = GridKind(dtype)
    itemsize = 1 if kind is GridKind.OCCUPANCY else 4
    expected = ni * nj * nk * itemsize
    payload = buf[HEADER.size:]
    if len(payload) < expected:
        raise FormatError(f"truncated payload: {len(payload)} of {expected} bytes",
                          HEADER.size + len(payload))
    if len(payload) > expected:
        raise FormatError("trailing bytes after payload", HEADER.size + expected)
    arr = np.frombuffer(payload, dtype="u1" if itemsize == 1 else "<f4").reshape(ni, nj, nk)
    if kind is GridKind.OCCUPANCY:
        bad = np.flatnonzero(arr > 1)
        if bad.size:
            raise FormatError("occupancy value not in {0, 1}", HEADER.size + int(bad[0]))
        return VoxelGrid(arr.copy(), kind)
    return VoxelGrid(arr.astype(np.float32), kind, None if math.isnan(trunc) else float(trunc))


# --- plain-text grid -------------------------------------------------------

def write_text_grid(grid: VoxelGrid, path: PathLike) -> None:
    ni, nj, nk = grid.dims
    head = ("occ" if grid.is_occupancy else "sdf") + f" {ni} {nj} {nk}"
    if grid.trunc is not None:
        head += " " + np.format_float_positional(np.float32(grid.trunc), unique=True, trim="-")
    flat = grid.data.ravel()
    if grid.is_occupancy:
        body = " ".join(map(str, flat.tolist()))
    else:
        body = " ".join(np.format_float_positional(v, unique=True, trim="-") for v in flat)
    Path(path).write_text(head + "\n" + body + "\n")


def read_text_grid(path: PathLike) -> VoxelGrid:
    text = Path(path).read_text()
    head, _, body = text.partition("\n")
    parts = head.split()
    if len(parts) not in (4, 5) or parts[0] not in ("occ", "sdf"):
        raise FormatError(f"bad header line {head!r}", 0)
    try:
        ni, nj, nk = (int(p) for p in parts[1:4])
        trunc = float(parts[4]) if len(parts) == 5 else None
    except ValueError as exc:
        raise FormatError(f"bad header line {head!r}", 0) from exc
    values = body.split()
    if len(values) != ni * nj * nk:
        raise FormatError(f"expected {ni * nj * nk} values, found {len(values)}", len(head) + 1)
    try:
        if parts[0] == "occ":
            arr = np.array(values, dtype=np.uint8).reshape(ni, nj, nk)
            return VoxelGrid(arr, GridKind.OCCUPANCY)
        arr = np.array(values, dtype=np.float32).reshape(ni, nj, nk)
        return VoxelGrid(arr, GridKind.SCALAR, trunc)
    except ValueError as exc:
        raise FormatError(f"bad grid values: {exc}", len(head) + 1) from exc


def load_any(path: PathLike) -> VoxelGrid:
    return read_text_grid(path) if Path(path).suffix == ".txt" else read_grid(path)


def save_any(grid: VoxelGrid, path: PathLike) -> None:
    if Path(path).suffix == ".txt":
        write_text_grid(grid, path)
    else:
        write_grid(grid, path)


# --- conversions -----------------------------------------------------------

def occupancy_from_scalar(grid: VoxelGrid) -> VoxelGrid:
    if grid.kind is not GridKind.SCALAR:
        raise ValueError("occupancy_from_scalar expects a scalar grid")
    return VoxelGrid((grid.data <= 0).astype(np.uint8), GridKind.OCCUPANCY)


def as_occupancy(grid: VoxelGrid) -> VoxelGrid:
    return grid if grid.is_occupancy else occupancy_from_scalar(grid)


def sdf_from_occupancy(grid: VoxelGrid, trunc: Optional[float] = DEFAULT_TRUNC) -> VoxelGrid:
    """Signed distance in voxel units, negative inside, surface halfway between cells."""
    from scipy import ndimage

    occ = grid.data.astype(bool)
    if not occ.any():
        dist = np.full(occ.shape, np.inf)
    else:
        dist = ndimage.distance_transform_edt(~occ) - 0.5
    if occ.all():
        inner = np.full(occ.shape, np.inf)
    else:
        inner = ndimage.distance_transform_edt(occ) - 0.5
    sdf = np.where(occ, -inner, dist)
    if trunc is not None:
        sdf = np.clip(sdf, -trunc, trunc)
    elif not np.isfinite(sdf).all():
        raise ValueError("untruncated SDF of an empty or full grid is unbounded")
    return VoxelGrid(sdf.astype(np.float32), GridKind.SCALAR, trunc)


# --- fixtures --------------------------------------------------------------

SHAPES = ("box", "cylinder", "sphere", "lbracket", "cup")


@dataclass(frozen=True)
class ShapeSpec:
    """Procedural fixture. Lengths are in cells; ``side`` is the cubic grid size.

    ``extents`` sizes a box (default: half the side); the L-bracket and cup
    use ``extents``/``radius``/``height`` plus a wall ``thickness``.
    """

    shape: str
    side: int
    extents: Optional[Tuple[int, int, int]] = None
    radius: int = 0
    height: int = 0
    thickness: int = 2
    origin: Optional[Tuple[int, int, int]] = None


def make_box(dims: Tuple[int, int, int], origin: Tuple[int, int, int],
             extents: Tuple[int, int, int]) -> VoxelGrid:
    for d, o, e in zip(dims, origin, extents):
        if e < 1 or o < 0 or o + e > d:
            raise SpecError(f"box origin={origin} extents={extents} does not fit {dims}")
    data = np.zeros(dims, dtype=np.uint8)
    (a, b, c), (ea, eb, ec) = origin, extents
    data[a:a + ea, b:b + eb, c:c + ec] = 1
    return VoxelGrid(data)


def _disk(side: int, r: int, c: int) -> np.ndarray:
    ii, kk = np.meshgrid(np.arange(side), np.arange(side), indexing="ij")
    return (ii - c) ** 2 + (kk - c) ** 2 <= r * r


def make_shape(spec: ShapeSpec) -> VoxelGrid:
    side = spec.side
    if side < 1:
        raise SpecError("side must be positive")
    c = side // 2
    shape = spec.shape.lower()
    if shape == "box":
        ext = spec.extents or (max(1, side // 2),) * 3
        origin = spec.origin or tuple((side - e) // 2 for e in ext)
        return make_box((side,) * 3, origin, ext)

    data = np.zeros((side,) * 3, dtype=np.uint8)
    if shape == "sphere":
        r = spec.radius
        if r < 0 or c - r < 0 or c + r > side - 1:
            raise SpecError(f"sphere radius {r} does not fit side {side}")
        ax = np.arange(side) - c
        d2 = ax[:, None, None] ** 2 + ax[None, :, None] ** 2 + ax[None, None, :] ** 2
        data[d2 <= r * r] = 1
    elif shape in ("cylinder", "cup"):
        r, h = spec.radius, spec.height
        if r < 0 or c - r < 0 or c + r > side - 1:
            raise SpecError(f"radius {r} does not fit side {side}")
        if h < 1 or h > side:
            raise SpecError(f"height {h} does not fit side {side}")
        j0 = c - h // 2
        disk = _disk(side, r, c)
        data[:, j0:j0 + h, :] = disk[:, None, :]
        if shape == "cup":
            t = spec.thickness
            if t < 1 or t > r or t >= h:
                raise SpecError(f"wall thickness {t} invalid for radius {r}, height {h}")
            hollow = _disk(side, r - t, c)
            data[:, j0 + t:j0 + h, :][np.broadcast_to(hollow[:, None, :], (side, h - t, side))] = 0
    elif shape == "lbracket":
        a, b, cc = spec.extents or (side // 2, side // 2, side // 2)
        t = spec.thickness
        if t < 1 or t > min(a, b):
            raise SpecError(f"thickness {t} invalid for extents {(a, b, cc)}")
        origin = spec.origin or ((side - a) // 2, (side - b) // 2, (side - cc) // 2)
        base = make_box((side,) * 3, origin, (a, t, cc)).data
        upright = make_box((side,) * 3, origin, (t, b, cc)).data
        data = base | upright
    else:
        raise SpecError(f"unknown shape {spec.shape!r}; expected one of {SHAPES}")
    return VoxelGrid(data)


# --- OBJ export ------------------------------------------------------------

# Outward quads per face direction, as corner offsets in CCW order seen from outside.
_FACES = {
    (1, 0, 0): ((1, 0, 0), (1, 1, 0), (1, 1, 1), (1, 0, 1)),
    (-1, 0, 0): ((0, 0, 0), (0, 0, 1), (0, 1, 1), (0, 1, 0)),
    (0, 1, 0): ((0, 1, 0), (0, 1, 1), (1, 1, 1), (1, 1, 0)),
    (0, -1, 0): ((0, 0, 0), (1, 0, 0), (1, 0, 1), (0, 0, 1)),
    (0, 0, 1): ((0, 0, 1), (1, 0, 1), (1, 1, 1), (0, 1, 1)),
    (0, 0, -1): ((0, 0, 0), (0, 1, 0), (1, 1, 0), (1, 0, 0)),
}


def surface_quads(grid: VoxelGrid) -> np.ndarray:
    """Return (F, 4, 3) integer corner coordinates of every exposed voxel face."""
    occ = as_occupancy(grid).data.astype(bool)
    padded = np.pad(occ, 1)
    quads = []
    for (di, dj, dk), corners in _FACES.items():
        nbr = padded[1 + di:1 + di + occ.shape[0],
                     1 + dj:1 + dj + occ.shape[1],
                     1 + dk:1 + dk + occ.shape[2]]
        cells = np.argwhere(occ & ~nbr)
        if len(cells):
            quads.append(cells[:, None, :] + np.asarray(corners)[None, :, :])
    if not quads:
        return np.zeros((0, 4, 3), dtype=np.int64)
    return np.concatenate(quads)


def export_obj(grid: VoxelGrid, path: PathLike) -> Tuple[int, int]:
    """Write a cube-per-voxel OBJ with interior faces culled; returns (vertices, faces)."""
    quads = surface_quads(grid)
    if len(quads):
        verts, inverse = np.unique(quads.reshape(-1, 3), axis=0, return_inverse=True)
        faces = inverse.reshape(-1, 4) + 1
    else:
        verts, faces = np.zeros((0, 3), dtype=np.int64), np.zeros((0, 4), dtype=np.int64)
    lines = [f"# carve3d voxel export {grid.dims}"]
    lines += [f"v {x} {y} {z}" for x, y, z in verts.tolist()]
    lines += [f"f {a} {b} {c} {d}" for a, b, c, d in faces.tolist()]
    Path(path).write_text("\n".join(lines) + "\n")
    return len(verts), len(faces)
