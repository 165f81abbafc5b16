"""Built-in component shape library and color palette.

Shapes are polyomino extrusions: a 2-d footprint swept over an integer
height. The default set deliberately avoids four-fold symmetric footprints
(1x1, 2x2 squares) so that every shape can receive a rotation error and
the injected status proportions track the configured error model.
"""

from __future__ import annotations

import numpy as np

from .geometry import VoxelGrid

# Round-robin palette; saturated hues so same-shape components stay
# visually distinguishable in renders.
PALETTE: tuple[tuple[int, int, int], ...] = (
    (204, 0, 0),      # red
    (0, 102, 204),    # blue
    (0, 170, 60),     # green
    (230, 200, 0),    # yellow
    (160, 60, 200),   # purple
    (0, 180, 180),    # teal
    (240, 130, 20),   # orange
    (220, 80, 160),   # pink
)


def extrude(footprint: list[str], height: int = 1) -> VoxelGrid:
    """Build a shape from an ASCII footprint ('#' occupied), swept upward.

    Rows are y levels (first row is y = 0), columns are x.
    """
    rows = [r for r in footprint]
    ny = len(rows)
    nx = max(len(r) for r in rows)
    occ = np.zeros((nx, ny, height), dtype=bool)
    for y, row in enumerate(rows):
        for x, ch in enumerate(row):
            if ch == "#":
                occ[x, y, :] = True
    return VoxelGrid(occ)


def default_shapes() -> list[VoxelGrid]:
    return [
        extrude(["##"]),                # 2x1 bar
        extrude(["###"]),               # 3x1 bar
        extrude(["####"]),              # 4x1 bar
        extrude(["##"], height=2),      # 2x1 tall
        extrude(["###", "###"]),        # 3x2 slab
        extrude(["##", "#."]),          # L tromino
        extrude(["###", "#.."]),        # L tetromino
        extrude(["###", ".#."]),        # T tetromino
        extrude([".##", "##."]),        # S tetromino
        extrude(["###"], height=2),     # 3x1 tall
    ]


def shapes_from_config(spec) -> list[VoxelGrid]:
    """Resolve a config shape-library value: the string 'default' or an
    inline list of voxel-grid JSON objects."""
    if spec == "default":
        return default_shapes()
    return [VoxelGrid.from_json(obj) for obj in spec]
