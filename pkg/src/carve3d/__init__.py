"""Content-aware 3D seam carving for voxel occupancy and signed-distance grids."""

__version__ = "0.1.0"

from .voxel import (Axis, GridKind, ShapeSpec, VoxelGrid, make_shape, read_grid,  # noqa: E402
                    write_grid)
from .carve import AugmentConfig, augment, augment_batch  # noqa: E402

__all__ = ["Axis", "GridKind", "ShapeSpec", "VoxelGrid", "make_shape", "read_grid", "write_grid",
           "AugmentConfig", "augment", "augment_batch", "__version__"]
