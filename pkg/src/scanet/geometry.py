"""Voxel-lattice geometry.

Rotations are quarter turns about the world up-axis (+z), counterclockwise
when viewed from above. Rotating a grid re-boxes it: the occupied cells are
turned about the footprint center (rounded toward the origin for even
extents) and shifted so the bounding box corner sits at the origin again,
which keeps cell coordinates nonnegative and makes four quarter turns the
exact identity.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .errors import ConfigError, InputError

Cell = tuple[int, int, int]

QUARTER_TURNS = (0, 1, 2, 3)
VALID_DEGREES = (0, 90, 180, 270)

# The three subgroup shapes a footprint can have under quarter turns.
SYM_NONE = frozenset({0})
SYM_HALF = frozenset({0, 2})
SYM_FULL = frozenset({0, 1, 2, 3})

SymmetryGroup = frozenset


def quarter_from_degrees(deg: int) -> int:
    if deg % 90 != 0:
        raise InputError(f"rotation {deg} is not a multiple of 90 degrees")
    return (deg // 90) % 4


def degrees_from_quarter(q: int) -> int:
    return (q % 4) * 90


def compose_quarter(a: int, b: int) -> int:
    return (a + b) % 4


@dataclass(frozen=True)
class Pose6D:
    """Grid-cell translation plus Euler rotation in 90-degree steps.

    Only the z component of the rotation varies in generated data; x/y
    rotations are carried for completeness but must be 0 for any operation
    that realizes the pose on the voxel lattice.
    """

    t: Cell
    r: tuple[int, int, int] = (0, 0, 0)

    def __post_init__(self):
        t = tuple(int(v) for v in self.t)
        r = tuple(int(v) for v in self.r)
        for deg in r:
            if deg not in VALID_DEGREES:
                raise InputError(f"rotation component {deg} not in {VALID_DEGREES}")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "r", r)

    @property
    def rz_quarter(self) -> int:
        return quarter_from_degrees(self.r[2])

    def to_json(self) -> dict:
        return {"T": list(self.t), "R": list(self.r)}

    @classmethod
    def from_json(cls, obj: dict) -> "Pose6D":
        return cls(tuple(obj["T"]), tuple(obj["R"]))


@dataclass(frozen=True)
class PoseBounds:
    """Componentwise bounds used to normalize poses into [0, 1]^6."""

    t_min: Cell
    t_max: Cell
    r_min: tuple[int, int, int] = (0, 0, 0)
    r_max: tuple[int, int, int] = (270, 270, 270)

    def __post_init__(self):
        for lo, hi, name in (
            (self.t_min, self.t_max, "T"),
            (self.r_min, self.r_max, "R"),
        ):
            for axis, (a, b) in enumerate(zip(lo, hi)):
                if not a < b:
                    raise ConfigError(
                        f"degenerate {name} bounds on axis {axis}: [{a}, {b}]"
                    )

    @classmethod
    def for_world(cls, world_dims: Sequence[int]) -> "PoseBounds":
        gx, gy, gz = world_dims
        return cls(t_min=(0, 0, 0), t_max=(gx - 1, gy - 1, gz - 1))

    @property
    def lows(self) -> np.ndarray:
        return np.array([*self.t_min, *self.r_min], dtype=np.float64)

    @property
    def highs(self) -> np.ndarray:
        return np.array([*self.t_max, *self.r_max], dtype=np.float64)


def normalize_pose(pose: Pose6D, bounds: PoseBounds) -> np.ndarray:
    """Map a pose to [0, 1]^6 as (value - min) / (max - min), ordered
    (Tx, Ty, Tz, Rx, Ry, Rz)."""
    raw = np.array([*pose.t, *pose.r], dtype=np.float64)
    lo, hi = bounds.lows, bounds.highs
    if np.any(raw < lo) or np.any(raw > hi):
        raise InputError(f"pose {raw.tolist()} outside bounds [{lo.tolist()}, {hi.tolist()}]")
    return (raw - lo) / (hi - lo)


class VoxelGrid:
    """Dense boolean occupancy over an axis-aligned integer lattice."""

    __slots__ = ("occ",)

    def __init__(self, occ: np.ndarray):
        occ = np.asarray(occ, dtype=bool)
        if occ.ndim != 3:
            raise InputError(f"occupancy must be 3-d, got shape {occ.shape}")
        if min(occ.shape) < 1:
            raise InputError(f"grid dims must each be >= 1, got {occ.shape}")
        self.occ = occ

    @property
    def dims(self) -> Cell:
        return tuple(int(d) for d in self.occ.shape)

    @classmethod
    def from_cells(cls, dims: Sequence[int], cells: Iterable[Sequence[int]]) -> "VoxelGrid":
        occ = np.zeros(tuple(int(d) for d in dims), dtype=bool)
        for c in cells:
            occ[tuple(int(v) for v in c)] = True
        return cls(occ)

    def cells(self) -> list[Cell]:
        xs, ys, zs = np.nonzero(self.occ)
        return sorted(zip(xs.tolist(), ys.tolist(), zs.tolist()))

    @property
    def count(self) -> int:
        return int(self.occ.sum())

    @property
    def is_empty(self) -> bool:
        return not self.occ.any()

    def key(self) -> tuple:
        return (self.dims, self.occ.tobytes())

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, VoxelGrid)
            and self.dims == other.dims
            and bool(np.array_equal(self.occ, other.occ))
        )

    def __hash__(self) -> int:
        return hash(self.key())

    def __repr__(self) -> str:
        return f"VoxelGrid(dims={self.dims}, count={self.count})"

    def to_json(self) -> dict:
        return {"dims": list(self.dims), "cells": [list(c) for c in self.cells()]}

    @classmethod
    def from_json(cls, obj: dict) -> "VoxelGrid":
        return cls.from_cells(obj["dims"], obj["cells"])

    def dumps(self) -> str:
        return json.dumps(self.to_json(), separators=(",", ":"))


def rotate_voxel_grid(grid: VoxelGrid, rot: int) -> VoxelGrid:
    """Rotate occupancy by `rot` quarter turns about the up-axis.

    Cell maps, with (dx, dy) the footprint extents before the turn:
      1 turn:  (x, y) -> (dy-1-y, x),        dims (dy, dx, dz)
      2 turns: (x, y) -> (dx-1-x, dy-1-y),   dims unchanged
      3 turns: (x, y) -> (y, dx-1-x),        dims (dy, dx, dz)
    """
    k = rot % 4
    dx, dy, dz = grid.dims
    if k == 0:
        return VoxelGrid(grid.occ.copy())
    xs, ys, zs = np.nonzero(grid.occ)
    if k == 1:
        nx, ny = dy - 1 - ys, xs
        ndims = (dy, dx, dz)
    elif k == 2:
        nx, ny = dx - 1 - xs, dy - 1 - ys
        ndims = (dx, dy, dz)
    else:
        nx, ny = ys, dx - 1 - xs
        ndims = (dy, dx, dz)
    occ = np.zeros(ndims, dtype=bool)
    occ[nx, ny, zs] = True
    return VoxelGrid(occ)


def symmetry_group(grid: VoxelGrid) -> SymmetryGroup:
    """Maximal subgroup of quarter turns leaving the grid unchanged.

    Invariance under one quarter turn implies the full group; otherwise only
    the half turn can remain.
    """
    if grid.is_empty:
        raise InputError("symmetry_group undefined for an empty grid")
    if rotate_voxel_grid(grid, 1) == grid:
        return SYM_FULL
    if rotate_voxel_grid(grid, 2) == grid:
        return SYM_HALF
    return SYM_NONE


def canonical_rotation(rot: int, sym: SymmetryGroup) -> int:
    """Minimal representative of the coset rot * sym, in quarter turns."""
    return min((rot + s) % 4 for s in sym)


def chamfer_distance(cells_a: Iterable[Sequence[int]], cells_b: Iterable[Sequence[int]]) -> float:
    """Sum of the two directional means of squared nearest-neighbor
    distances between the cell-center point sets."""
    a = np.asarray(sorted(tuple(c) for c in cells_a), dtype=np.float64)
    b = np.asarray(sorted(tuple(c) for c in cells_b), dtype=np.float64)
    if a.size == 0 or b.size == 0:
        raise InputError("chamfer_distance requires two nonempty cell sets")
    d_ab, _ = cKDTree(b).query(a)
    d_ba, _ = cKDTree(a).query(b)
    return float(np.mean(d_ab**2) + np.mean(d_ba**2))


def poses_equal(pred: Pose6D, gt: Pose6D, sym: SymmetryGroup) -> bool:
    """Exact translation match plus rotation match modulo the symmetry group
    (z axis); x/y rotation components compare exactly."""
    if pred.t != gt.t:
        return False
    if pred.r[0] != gt.r[0] or pred.r[1] != gt.r[1]:
        return False
    return canonical_rotation(pred.rz_quarter, sym) == canonical_rotation(gt.rz_quarter, sym)


def transform_component(shape: VoxelGrid, pose: Pose6D) -> np.ndarray:
    """World-frame occupied cells of a shape under a pose: rotate about the
    up-axis, then translate. Returns an (n, 3) int array.

    Only up-axis rotation is realizable on the lattice; poses with nonzero
    x/y rotation are rejected.
    """
    if pose.r[0] != 0 or pose.r[1] != 0:
        raise InputError("only up-axis rotations are realizable on the voxel lattice")
    rotated = rotate_voxel_grid(shape, pose.rz_quarter)
    xs, ys, zs = np.nonzero(rotated.occ)
    out = np.stack([xs, ys, zs], axis=1).astype(np.int64)
    out += np.asarray(pose.t, dtype=np.int64)
    return out
