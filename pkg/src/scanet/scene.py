"""Assembly world model and the deterministic renderer.

States are immutable: placing a component returns a new state. The renderer
draws each voxel as its three camera-facing cube faces under a fixed oblique
orthographic projection, with per-pixel depth buffering. Later-placed
components win depth ties, so overlapping corrupted placements resolve
deterministically.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
from PIL import Image
from skimage.draw import polygon as _fill_polygon

from .errors import InputError, InvariantError
from .geometry import Cell, Pose6D, VoxelGrid, transform_component

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Component:
    id: int
    shape: VoxelGrid
    color: tuple[int, int, int]

    def __post_init__(self):
        if self.shape.is_empty:
            raise InputError(f"component {self.id} has an empty shape")
        object.__setattr__(self, "color", tuple(int(c) for c in self.color))

    def to_json(self) -> dict:
        return {"id": self.id, "shape": self.shape.to_json(), "color": list(self.color)}

    @classmethod
    def from_json(cls, obj: dict) -> "Component":
        return cls(int(obj["id"]), VoxelGrid.from_json(obj["shape"]), tuple(obj["color"]))


@dataclass(frozen=True)
class AssemblyStep:
    components: tuple[Component, ...]
    gt_poses: tuple[Pose6D, ...]

    def __post_init__(self):
        if len(self.components) != len(self.gt_poses):
            raise InputError("components and gt_poses must be parallel lists")
        if len(self.components) < 1:
            raise InputError("a step needs at least one component")
        object.__setattr__(self, "components", tuple(self.components))
        object.__setattr__(self, "gt_poses", tuple(self.gt_poses))

    def to_json(self) -> dict:
        return {
            "components": [c.to_json() for c in self.components],
            "gt_poses": [p.to_json() for p in self.gt_poses],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "AssemblyStep":
        return cls(
            tuple(Component.from_json(c) for c in obj["components"]),
            tuple(Pose6D.from_json(p) for p in obj["gt_poses"]),
        )


@dataclass(frozen=True)
class Manual:
    id: int
    world_dims: Cell
    steps: tuple[AssemblyStep, ...]

    def __post_init__(self):
        object.__setattr__(self, "world_dims", tuple(int(d) for d in self.world_dims))
        object.__setattr__(self, "steps", tuple(self.steps))

    @property
    def component_count(self) -> int:
        return sum(len(s.components) for s in self.steps)

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "world_dims": list(self.world_dims),
            "steps": [s.to_json() for s in self.steps],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Manual":
        return cls(
            int(obj["id"]),
            tuple(obj["world_dims"]),
            tuple(AssemblyStep.from_json(s) for s in obj["steps"]),
        )


@dataclass(frozen=True)
class AssemblyState:
    """Placed components in placement order. Corrupted states may overlap
    or stick out of the world; only ground-truth states are feasibility
    checked."""

    world_dims: Cell
    placed: tuple[tuple[Component, Pose6D], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "world_dims", tuple(int(d) for d in self.world_dims))
        object.__setattr__(self, "placed", tuple(self.placed))


def place(state: AssemblyState, component: Component, pose: Pose6D) -> AssemblyState:
    return AssemblyState(state.world_dims, state.placed + ((component, pose),))


def place_all(state: AssemblyState, components, poses) -> AssemblyState:
    for comp, pose in zip(components, poses):
        state = place(state, comp, pose)
    return state


def occupancy(state: AssemblyState) -> set[Cell]:
    """Union of placed cells, deduplicated, clipped to world bounds.

    Out-of-world cells come from corrupted poses; they are dropped from the
    occupancy set (and logged) but still rendered.
    """
    gx, gy, gz = state.world_dims
    cells: set[Cell] = set()
    clipped = 0
    for comp, pose in state.placed:
        pts = transform_component(comp.shape, pose)
        inside = (
            (pts[:, 0] >= 0) & (pts[:, 0] < gx)
            & (pts[:, 1] >= 0) & (pts[:, 1] < gy)
            & (pts[:, 2] >= 0) & (pts[:, 2] < gz)
        )
        clipped += int((~inside).sum())
        cells.update(map(tuple, pts[inside].tolist()))
    if clipped:
        logger.debug("occupancy clipped %d out-of-world cells", clipped)
    return cells


def is_supported(state: AssemblyState, component: Component, pose: Pose6D) -> bool:
    """True iff any cell of the placed component rests on the ground plane
    or directly atop an occupied cell of the state."""
    occ = occupancy(state)
    for x, y, z in transform_component(component.shape, pose):
        if z == 0 or (x, y, z - 1) in occ:
            return True
    return False


def gt_states(manual: Manual) -> list[AssemblyState]:
    """Cumulative ground-truth states; entry k is the state after k steps
    (entry 0 is empty)."""
    states = [AssemblyState(manual.world_dims)]
    for step in manual.steps:
        states.append(place_all(states[-1], step.components, step.gt_poses))
    return states


def validate_manual(manual: Manual) -> None:
    """Check the ground-truth invariants: in-bounds, collision-free against
    the prefix, and supported."""
    gx, gy, gz = manual.world_dims
    state = AssemblyState(manual.world_dims)
    seen_ids = set()
    for k, step in enumerate(manual.steps):
        for comp, pose in zip(step.components, step.gt_poses):
            if comp.id in seen_ids:
                raise InvariantError(f"duplicate component id {comp.id} in manual {manual.id}")
            seen_ids.add(comp.id)
            cells = transform_component(comp.shape, pose)
            if np.any(cells < 0) or np.any(cells >= np.array([gx, gy, gz])):
                raise InvariantError(f"manual {manual.id} step {k}: placement out of bounds")
            before = occupancy(state)
            if before & set(map(tuple, cells.tolist())):
                raise InvariantError(f"manual {manual.id} step {k}: collision in GT placement")
            if not is_supported(state, comp, pose):
                raise InvariantError(f"manual {manual.id} step {k}: unsupported GT placement")
            state = place(state, comp, pose)


# ---------------------------------------------------------------------------
# Renderer
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CameraConfig:
    """Fixed oblique orthographic camera. The ray direction and the screen
    basis are pinned constants; scale and centering derive from the world
    box so equal inputs always produce byte-equal images."""

    image_size: int = 128
    margin: float = 0.05


# Ray direction and orthonormal screen basis (right, up).
_VIEW_DIR = np.array([1.0, -1.0, -1.0]) / math.sqrt(3.0)
_SCREEN_U = np.array([1.0, 1.0, 0.0]) / math.sqrt(2.0)
_SCREEN_V = np.array([1.0, -1.0, 2.0]) / math.sqrt(6.0)

# Visible cube faces for this view: (unit offset of the face plane within
# the cell, two in-plane edge vectors, brightness). Brightness scaling
# preserves hue; it only fakes shading so the three faces read as a cube.
_FACES = (
    # top (+z)
    ((0.0, 0.0, 1.0), (1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0, 0, 1), 1.00),
    # +y side
    ((0.0, 1.0, 0.0), (1.0, 0.0, 0.0), (0.0, 0.0, 1.0), (0, 1, 0), 0.82),
    # -x side
    ((0.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0), (-1, 0, 0), 0.64),
)


class _Projection:
    """World-to-pixel mapping for a given world box and image size."""

    def __init__(self, world_dims: Sequence[int], cfg: CameraConfig):
        gx, gy, gz = world_dims
        corners = np.array(
            [[x, y, z] for x in (0, gx) for y in (0, gy) for z in (0, gz)],
            dtype=np.float64,
        )
        su = corners @ _SCREEN_U
        sv = corners @ _SCREEN_V
        span = max(su.max() - su.min(), sv.max() - sv.min())
        usable = cfg.image_size * (1.0 - 2.0 * cfg.margin)
        self.scale = usable / span
        self.u_mid = (su.max() + su.min()) / 2.0
        self.v_mid = (sv.max() + sv.min()) / 2.0
        self.half = cfg.image_size / 2.0
        self.size = cfg.image_size

    def project(self, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Returns pixel columns (px), pixel rows (py), and depth along the
        view ray (smaller is closer)."""
        su = pts @ _SCREEN_U
        sv = pts @ _SCREEN_V
        px = (su - self.u_mid) * self.scale + self.half
        py = self.half - (sv - self.v_mid) * self.scale
        depth = pts @ _VIEW_DIR
        return px, py, depth

    def screen_delta(self, world_delta: Sequence[float]) -> tuple[float, float]:
        """Pixel-space displacement of a world-space translation."""
        d = np.asarray(world_delta, dtype=np.float64)
        return float((d @ _SCREEN_U) * self.scale), float(-(d @ _SCREEN_V) * self.scale)


def _depth_plane(px: np.ndarray, py: np.ndarray, depth: np.ndarray) -> tuple[float, float, float]:
    """Affine coefficients (a, b, c) with depth = a*px + b*py + c, exact for
    a planar face under orthographic projection."""
    m = np.array(
        [[px[0], py[0], 1.0], [px[1], py[1], 1.0], [px[2], py[2], 1.0]], dtype=np.float64
    )
    a, b, c = np.linalg.solve(m, depth[:3])
    return float(a), float(b), float(c)


def _draw_cells(
    img: np.ndarray,
    zbuf: np.ndarray,
    proj: _Projection,
    cells: np.ndarray,
    color: tuple[int, int, int],
) -> None:
    cellset = set(map(tuple, cells.tolist()))
    base = np.asarray(color, dtype=np.float64)
    for cell in cells:
        cx, cy, cz = (int(v) for v in cell)
        for origin, e1, e2, normal, shade in _FACES:
            if (cx + normal[0], cy + normal[1], cz + normal[2]) in cellset:
                continue  # face shared with the same piece, never visible
            o = np.array([cx, cy, cz], dtype=np.float64) + np.array(origin)
            quad = np.stack([o, o + e1, o + np.array(e1) + np.array(e2), o + e2])
            px, py, depth = proj.project(quad)
            rr, cc = _fill_polygon(py, px, shape=(proj.size, proj.size))
            if rr.size == 0:
                continue
            a, b, c0 = _depth_plane(px, py, depth)
            d_pix = a * cc + b * rr + c0
            sel = d_pix <= zbuf[rr, cc]  # <= lets later draws win ties
            rs, cs = rr[sel], cc[sel]
            zbuf[rs, cs] = d_pix[sel]
            img[rs, cs] = np.clip(np.round(base * shade), 0, 255).astype(np.uint8)


def render(state: AssemblyState, cfg: CameraConfig) -> np.ndarray:
    """Render a state to an RGB uint8 array of shape (S, S, 3), black
    background. Pure function of (state, cfg)."""
    proj = _Projection(state.world_dims, cfg)
    img = np.zeros((cfg.image_size, cfg.image_size, 3), dtype=np.uint8)
    zbuf = np.full((cfg.image_size, cfg.image_size), np.inf, dtype=np.float64)
    for comp, pose in state.placed:
        cells = transform_component(comp.shape, pose)
        _draw_cells(img, zbuf, proj, cells, comp.color)
    return img


def render_component(
    component: Component, pose: Pose6D, world_dims: Sequence[int], cfg: CameraConfig
) -> np.ndarray:
    """Render a single component alone at its assembled pose, same camera as
    the full-state render."""
    state = AssemblyState(tuple(world_dims), ((component, pose),))
    return render(state, cfg)


def render_silhouette(
    cells: Iterable[Sequence[int]], world_dims: Sequence[int], cfg: CameraConfig
) -> np.ndarray:
    """Binary coverage of voxel cells under the camera projection, float32
    (S, S) in {0, 1}. This is the view-axis projection used to fuse voxel
    evidence with images."""
    proj = _Projection(tuple(world_dims), cfg)
    out = np.zeros((cfg.image_size, cfg.image_size), dtype=np.float32)
    for cell in cells:
        cx, cy, cz = (int(v) for v in cell)
        for origin, e1, e2, _, _ in _FACES:
            o = np.array([cx, cy, cz], dtype=np.float64) + np.array(origin)
            quad = np.stack([o, o + e1, o + np.array(e1) + np.array(e2), o + e2])
            px, py, _ = proj.project(quad)
            rr, cc = _fill_polygon(py, px, shape=(proj.size, proj.size))
            out[rr, cc] = 1.0
    return out


def projection_for(world_dims: Sequence[int], cfg: CameraConfig) -> _Projection:
    return _Projection(tuple(world_dims), cfg)


def save_png(arr: np.ndarray, path) -> None:
    Image.fromarray(arr, mode="RGB").save(path, format="PNG")


def load_png(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8)
