"""Synthetic dataset generation.

Manuals are built procedurally by dropping polyomino-extrusion bricks onto
the stack (guaranteeing support and collision-freedom); errors are injected
by perturbing ground-truth poses directly with a configurable error model.
Stored labels are always re-derived from the pose pair, never trusted from
the sampler.

Dataset layout (all JSON deterministic, no timestamps):

    root/manifest.json
    root/manuals/<id>/manual.json
    root/manuals/<id>/steps/<k>/gt.png
    root/manuals/<id>/steps/<k>/sample_<j>.json
    root/manuals/<id>/steps/<k>/sample_<j>_assembled.png
    root/manuals/<id>/steps/<k>/sample_<j>_comp_<i>.png

Seeding: per-manual and per-draw seeds derive from the master seed by the
fixed rule SeedSequence((master, manual_id[, step, draw])), so generation is
parallelizable across manuals without shared state.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import (
    ConfigError,
    DataError,
    GenerationError,
    InputError,
    InvariantError,
    SplitError,
)
from .geometry import (
    Cell,
    Pose6D,
    SymmetryGroup,
    VoxelGrid,
    canonical_rotation,
    rotate_voxel_grid,
    symmetry_group,
)
from .library import PALETTE, shapes_from_config
from .scene import (
    AssemblyState,
    AssemblyStep,
    CameraConfig,
    Component,
    Manual,
    gt_states,
    place_all,
    render,
    render_component,
    save_png,
    validate_manual,
)

logger = logging.getLogger(__name__)

MANIFEST_VERSION = 1


class Status(IntEnum):
    CORRECT = 0
    POSITION = 1
    ROTATION = 2
    POS_ROT = 3


STATUS_NAMES = ("correct", "position", "rotation", "pos_rot")


@dataclass(frozen=True)
class ErrorModel:
    """Distribution over injected statuses plus the position-offset range."""

    p: tuple[float, float, float, float] = (0.35, 0.35, 0.05, 0.25)
    max_offset: int = 3

    def __post_init__(self):
        p = tuple(float(v) for v in self.p)
        if len(p) != 4 or any(v < 0 for v in p):
            raise ConfigError(f"error-model p must be 4 nonnegative reals, got {p}")
        if abs(sum(p) - 1.0) > 1e-9:
            raise ConfigError(f"error-model p must sum to 1, got {sum(p)}")
        if self.max_offset < 1:
            raise ConfigError("error-model max_offset must be >= 1")
        object.__setattr__(self, "p", p)

    def to_json(self) -> dict:
        return {"p": list(self.p), "max_offset": self.max_offset}

    @classmethod
    def from_json(cls, obj: dict) -> "ErrorModel":
        return cls(tuple(obj["p"]), int(obj["max_offset"]))


def label_error(gt: Pose6D, corrupted: Pose6D, sym: SymmetryGroup) -> Status:
    """Classify a (correct, corrupted) pose pair. Position is wrong iff the
    translation differs; rotation is wrong iff the up-axis rotation differs
    modulo the symmetry group or the x/y rotations differ."""
    pos_wrong = corrupted.t != gt.t
    rot_wrong = (
        corrupted.r[0] != gt.r[0]
        or corrupted.r[1] != gt.r[1]
        or canonical_rotation(corrupted.rz_quarter, sym)
        != canonical_rotation(gt.rz_quarter, sym)
    )
    if pos_wrong and rot_wrong:
        return Status.POS_ROT
    if pos_wrong:
        return Status.POSITION
    if rot_wrong:
        return Status.ROTATION
    return Status.CORRECT


def _clip_translation(t: np.ndarray, shape_dims: Cell, world_dims: Cell) -> np.ndarray:
    limits = np.asarray(world_dims) - np.asarray(shape_dims)
    return np.clip(t, 0, np.maximum(limits, 0))


def _draw_position(
    rng: np.random.Generator,
    gt_t: Cell,
    shape_dims: Cell,
    world_dims: Cell,
    max_offset: int,
) -> Cell:
    """Uniform nonzero offset within +/-max_offset per axis, clipped to the
    valid placement range; re-drawn while the clipped result equals the
    original."""
    base = np.asarray(gt_t, dtype=np.int64)
    for _ in range(200):
        off = rng.integers(-max_offset, max_offset + 1, size=3)
        cand = _clip_translation(base + off, shape_dims, world_dims)
        if not np.array_equal(cand, base):
            return tuple(int(v) for v in cand)
    raise InvariantError("could not draw a nonzero position offset; world too tight")


def _draw_rotation(rng: np.random.Generator, gt_quarter: int, sym: SymmetryGroup) -> Optional[int]:
    """Uniform quarter turn outside the symmetry coset of the ground truth,
    or None when the coset covers all rotations (full symmetry)."""
    coset = {(gt_quarter + s) % 4 for s in sym}
    options = [q for q in range(4) if q not in coset]
    if not options:
        return None
    return int(options[rng.integers(len(options))])


def corrupt_step(
    step: AssemblyStep,
    model: ErrorModel,
    seed,
    world_dims: Cell,
) -> tuple[list[Pose6D], list[Status]]:
    """Sample corrupted poses for one step.

    Per component: draw a status from the model; position errors offset the
    translation, rotation errors pick an up-axis rotation outside the
    symmetry coset, combined errors do both. A fully symmetric component
    cannot realize a pure rotation error, so its status is redrawn from the
    remaining probability mass (falling back to Correct when that mass is
    zero); a combined error on such a component degrades to a position
    error, which the re-derived label reflects.
    """
    rng = np.random.default_rng(seed)
    p = np.asarray(model.p, dtype=np.float64)
    corrupted: list[Pose6D] = []
    labels: list[Status] = []
    for comp, gt in zip(step.components, step.gt_poses):
        sym = symmetry_group(comp.shape)
        status = Status(int(rng.choice(4, p=p)))
        if status == Status.ROTATION and sym == frozenset({0, 1, 2, 3}):
            rest = p.copy()
            rest[Status.ROTATION] = 0.0
            if rest.sum() > 0:
                status = Status(int(rng.choice(4, p=rest / rest.sum())))
            else:
                status = Status.CORRECT

        new_t, new_rz = gt.t, gt.rz_quarter
        if status in (Status.ROTATION, Status.POS_ROT):
            drawn = _draw_rotation(rng, gt.rz_quarter, sym)
            if drawn is not None:
                new_rz = drawn
        if status in (Status.POSITION, Status.POS_ROT):
            dims_after = rotate_voxel_grid(comp.shape, new_rz).dims
            new_t = _draw_position(rng, gt.t, dims_after, world_dims, model.max_offset)

        pose = Pose6D(new_t, (gt.r[0], gt.r[1], new_rz * 90))
        corrupted.append(pose)
        labels.append(label_error(gt, pose, sym))
    return corrupted, labels


# ---------------------------------------------------------------------------
# Procedural manuals
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GenConfig:
    world_dims: Cell = (16, 16, 12)
    steps_range: tuple[int, int] = (6, 10)
    components_per_step: tuple[int, int] = (2, 5)
    shapes: tuple[VoxelGrid, ...] = ()
    palette: tuple[tuple[int, int, int], ...] = PALETTE
    max_place_retries: int = 200

    def __post_init__(self):
        if min(self.world_dims) < 2:
            raise ConfigError(f"world dims must each be >= 2, got {self.world_dims}")
        for lo, hi, name in (
            (self.steps_range[0], self.steps_range[1], "steps_range"),
            (self.components_per_step[0], self.components_per_step[1], "components_per_step"),
        ):
            if not (0 < lo <= hi):
                raise ConfigError(f"invalid {name}: [{lo}, {hi}]")
        if not self.shapes:
            object.__setattr__(self, "shapes", tuple(shapes_from_config("default")))
        bx = max(s.dims[0] for s in self.shapes)
        by = max(s.dims[1] for s in self.shapes)
        bz = max(s.dims[2] for s in self.shapes)
        if bx > self.world_dims[0] or by > self.world_dims[1] or bz > self.world_dims[2]:
            raise ConfigError("shape library contains shapes larger than the world")


def generate_manual(cfg: GenConfig, seed, manual_id: int = 0) -> Manual:
    """Procedurally build a ground-truth manual: each component is dropped
    onto the current stack at a random rotation and footprint position, so
    every placement is supported and collision-free by construction.
    Identical (cfg, seed) inputs produce identical manuals."""
    rng = np.random.default_rng(seed)
    gx, gy, gz = cfg.world_dims
    heights = np.zeros((gx, gy), dtype=np.int64)
    steps: list[AssemblyStep] = []
    comp_id = 0
    n_steps = int(rng.integers(cfg.steps_range[0], cfg.steps_range[1] + 1))
    for _ in range(n_steps):
        n_comp = int(rng.integers(cfg.components_per_step[0], cfg.components_per_step[1] + 1))
        comps: list[Component] = []
        poses: list[Pose6D] = []
        for _ in range(n_comp):
            placed = False
            for attempt in range(cfg.max_place_retries):
                shape = cfg.shapes[int(rng.integers(len(cfg.shapes)))]
                q = int(rng.integers(4))
                rshape = rotate_voxel_grid(shape, q)
                fx, fy, fz = rshape.dims
                if fx > gx or fy > gy:
                    continue
                tx = int(rng.integers(0, gx - fx + 1))
                ty = int(rng.integers(0, gy - fy + 1))
                footprint = rshape.occ.any(axis=2)
                z = int(heights[tx : tx + fx, ty : ty + fy][footprint].max())
                if z + fz > gz:
                    continue
                heights[tx : tx + fx, ty : ty + fy][footprint] = z + fz
                comps.append(Component(comp_id, shape, cfg.palette[comp_id % len(cfg.palette)]))
                poses.append(Pose6D((tx, ty, z), (0, 0, q * 90)))
                comp_id += 1
                placed = True
                break
            if not placed:
                raise GenerationError(
                    f"no valid placement after {cfg.max_place_retries} retries "
                    f"(manual {manual_id})",
                    retries=cfg.max_place_retries,
                )
        steps.append(AssemblyStep(tuple(comps), tuple(poses)))
    manual = Manual(manual_id, cfg.world_dims, tuple(steps))
    validate_manual(manual)
    return manual


# ---------------------------------------------------------------------------
# Samples and dataset files
# ---------------------------------------------------------------------------

@dataclass
class Sample:
    """One training or evaluation record: the components of a step, their
    corrupted and correct poses, the re-derived status labels, and the
    prefix placements carried into the step."""

    manual_id: int
    step_index: int
    sample_index: int
    world_dims: Cell
    components: list[Component]
    correct_poses: list[Pose6D]
    corrupted_poses: list[Pose6D]
    labels: list[Status]
    prefix: tuple[tuple[Component, Pose6D], ...]
    manual_image: Optional[np.ndarray] = None
    assembled_image: Optional[np.ndarray] = None
    component_images: Optional[list[np.ndarray]] = None

    @property
    def syms(self) -> list[SymmetryGroup]:
        return [symmetry_group(c.shape) for c in self.components]

    def prefix_state(self) -> AssemblyState:
        return AssemblyState(self.world_dims, self.prefix)

    def assembled_state(self) -> AssemblyState:
        return place_all(self.prefix_state(), self.components, self.corrupted_poses)

    def gt_step_state(self) -> AssemblyState:
        """Ground-truth target appearance after the step. Setwise callers
        override the manual image to the true manual render instead."""
        return place_all(self.prefix_state(), self.components, self.correct_poses)

    def realize_images(self, cam: CameraConfig) -> None:
        """Fill any missing image fields by rendering."""
        if self.manual_image is None:
            self.manual_image = render(self.gt_step_state(), cam)
        if self.assembled_image is None:
            self.assembled_image = render(self.assembled_state(), cam)
        if self.component_images is None:
            self.component_images = [
                render_component(c, p, self.world_dims, cam)
                for c, p in zip(self.components, self.corrupted_poses)
            ]


def _dump_json(obj, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _sample_json(manual_id, step_index, sample_index, step, corrupted, labels) -> dict:
    return {
        "manual_id": manual_id,
        "step_index": step_index,
        "sample_index": sample_index,
        "component_ids": [c.id for c in step.components],
        "correct_poses": [p.to_json() for p in step.gt_poses],
        "corrupted_poses": [p.to_json() for p in corrupted],
        "labels": [int(l) for l in labels],
    }


def _draw_seed(master: int, manual_id: int, step: int, draw: int) -> np.random.SeedSequence:
    return np.random.SeedSequence((master, manual_id, step, draw))


def write_dataset(
    manuals: Sequence[Manual],
    error_model: ErrorModel,
    out_dir,
    seed: int,
    draws_per_step: tuple[int, int] = (3, 5),
    camera: CameraConfig = CameraConfig(),
    render_images: bool = True,
    config_record: Optional[dict] = None,
) -> dict:
    """Corrupt every step of every manual 3-5 times (configurable), write
    the on-disk layout, and return the manifest dict."""
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    manual_index = []
    sample_count = 0
    for manual in manuals:
        mdir = root / "manuals" / str(manual.id)
        _dump_json(manual.to_json(), mdir / "manual.json")
        states = gt_states(manual)
        draw_rng = np.random.default_rng(np.random.SeedSequence((seed, manual.id, 0xD0)))
        draws_per_step_list = []
        for k, step in enumerate(manual.steps):
            sdir = mdir / "steps" / str(k)
            sdir.mkdir(parents=True, exist_ok=True)
            if render_images:
                save_png(render(states[k + 1], camera), sdir / "gt.png")
            n_draws = int(draw_rng.integers(draws_per_step[0], draws_per_step[1] + 1))
            draws_per_step_list.append(n_draws)
            for j in range(n_draws):
                corrupted, labels = corrupt_step(
                    step, error_model, _draw_seed(seed, manual.id, k, j), manual.world_dims
                )
                _dump_json(
                    _sample_json(manual.id, k, j, step, corrupted, labels),
                    sdir / f"sample_{j}.json",
                )
                if render_images:
                    assembled = place_all(states[k], step.components, corrupted)
                    save_png(render(assembled, camera), sdir / f"sample_{j}_assembled.png")
                    for i, (comp, pose) in enumerate(zip(step.components, corrupted)):
                        save_png(
                            render_component(comp, pose, manual.world_dims, camera),
                            sdir / f"sample_{j}_comp_{i}.png",
                        )
                sample_count += 1
        manual_index.append(
            {
                "id": manual.id,
                "path": f"manuals/{manual.id}/manual.json",
                "steps": len(manual.steps),
                "draws_per_step": draws_per_step_list,
            }
        )
    manifest = {
        "version": MANIFEST_VERSION,
        "seed": seed,
        "error_model": error_model.to_json(),
        "render_images": render_images,
        "image_size": camera.image_size,
        "manual_count": len(manuals),
        "sample_count": sample_count,
        "manuals": manual_index,
        "config": config_record or {},
    }
    _dump_json(manifest, root / "manifest.json")
    return manifest


def split_dataset(manifest: dict, seed: int) -> dict:
    """Hold out 10% of the manuals (whole) for setwise testing, then split
    the remaining samples 80/20 into train/val. Deterministic per seed."""
    manuals = manifest["manuals"]
    if len(manuals) < 3:
        raise SplitError(f"need at least 3 manuals to split, got {len(manuals)}")
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0x5B)))
    order = rng.permutation(len(manuals))
    n_set = max(1, round(0.1 * len(manuals)))
    setwise_ids = sorted(int(manuals[i]["id"]) for i in order[:n_set])
    rest = [manuals[i] for i in order[n_set:]]
    refs = [
        [int(m["id"]), k, j]
        for m in sorted(rest, key=lambda m: m["id"])
        for k, n in enumerate(m["draws_per_step"])
        for j in range(n)
    ]
    perm = rng.permutation(len(refs))
    n_train = round(0.8 * len(refs))
    train = sorted((refs[i] for i in perm[:n_train]))
    val = sorted((refs[i] for i in perm[n_train:]))
    return {"setwise_test": setwise_ids, "train": train, "val": val}


def build_dataset(cfg: dict, seed: int, out_dir) -> dict:
    """Full pipeline: generate manuals, corrupt, render, write, and split.
    `cfg` is the resolved run config (see config.defaults)."""
    gen = cfg["gen"]
    gcfg = GenConfig(
        world_dims=tuple(cfg["world_dims"]),
        steps_range=tuple(gen["steps_range"]),
        components_per_step=tuple(gen["components_per_step"]),
        shapes=tuple(shapes_from_config(gen["shape_library"])),
        max_place_retries=int(gen["max_place_retries"]),
    )
    manuals = [
        generate_manual(gcfg, np.random.SeedSequence((seed, mid)), manual_id=mid)
        for mid in range(int(gen["manuals"]))
    ]
    manifest = write_dataset(
        manuals,
        ErrorModel(tuple(cfg["error_model"]["p"]), int(cfg["error_model"]["max_offset"])),
        out_dir,
        seed,
        draws_per_step=tuple(gen["draws_per_step"]),
        camera=CameraConfig(image_size=int(cfg["image_size"])),
        render_images=bool(gen["render_images"]),
        config_record=cfg,
    )
    manifest["splits"] = split_dataset(manifest, seed)
    manifest["split_counts"] = {name: len(v) for name, v in manifest["splits"].items()}
    _dump_json(manifest, Path(out_dir) / "manifest.json")
    return manifest


def dataset_stats(root) -> dict:
    """Label proportions plus step-count and component-count histograms."""
    store = DatasetStore(root)
    counts = [0, 0, 0, 0]
    step_hist: dict[int, int] = {}
    comp_hist: dict[int, int] = {}
    for entry in store.manifest["manuals"]:
        step_hist[entry["steps"]] = step_hist.get(entry["steps"], 0) + 1
        manual = store.manual(entry["id"])
        for step in manual.steps:
            n = len(step.components)
            comp_hist[n] = comp_hist.get(n, 0) + 1
    for ref in store.all_sample_refs():
        for label in store.sample_labels(ref):
            counts[label] += 1
    total = sum(counts)
    if total == 0:
        raise DataError("dataset contains no samples")
    return {
        "component_count": total,
        "sample_count": store.manifest["sample_count"],
        "manual_count": store.manifest["manual_count"],
        "status_counts": {STATUS_NAMES[i]: counts[i] for i in range(4)},
        "status_proportions": {STATUS_NAMES[i]: counts[i] / total for i in range(4)},
        "step_count_hist": {str(k): step_hist[k] for k in sorted(step_hist)},
        "components_per_step_hist": {str(k): comp_hist[k] for k in sorted(comp_hist)},
    }


class DatasetStore:
    """Read access to an on-disk dataset: manuals, samples, splits."""

    def __init__(self, root):
        self.root = Path(root)
        manifest_path = self.root / "manifest.json"
        if not manifest_path.exists():
            raise DataError(f"no manifest at {manifest_path}")
        self.manifest = json.loads(manifest_path.read_text())
        if self.manifest.get("version") != MANIFEST_VERSION:
            raise DataError(
                f"manifest version {self.manifest.get('version')} != {MANIFEST_VERSION}"
            )
        self._manual_cache: dict[int, Manual] = {}
        self._states_cache: dict[int, list[AssemblyState]] = {}

    @property
    def camera(self) -> CameraConfig:
        return CameraConfig(image_size=int(self.manifest["image_size"]))

    def manual(self, manual_id: int) -> Manual:
        if manual_id not in self._manual_cache:
            path = self.root / "manuals" / str(manual_id) / "manual.json"
            self._manual_cache[manual_id] = Manual.from_json(json.loads(path.read_text()))
        return self._manual_cache[manual_id]

    def _manual_states(self, manual_id: int) -> list[AssemblyState]:
        if manual_id not in self._states_cache:
            self._states_cache[manual_id] = gt_states(self.manual(manual_id))
        return self._states_cache[manual_id]

    def all_sample_refs(self) -> list[list[int]]:
        return [
            [int(m["id"]), k, j]
            for m in self.manifest["manuals"]
            for k, n in enumerate(m["draws_per_step"])
            for j in range(n)
        ]

    def split_refs(self, name: str) -> list[list[int]]:
        splits = self.manifest.get("splits")
        if not splits or name not in splits:
            raise DataError(f"dataset has no split '{name}'")
        return splits[name]

    def _sample_dir(self, ref) -> Path:
        mid, k, _ = ref
        return self.root / "manuals" / str(mid) / "steps" / str(k)

    def sample_labels(self, ref) -> list[int]:
        mid, k, j = ref
        obj = json.loads((self._sample_dir(ref) / f"sample_{j}.json").read_text())
        return [int(v) for v in obj["labels"]]

    def sample(self, ref, load_images: bool = True) -> Sample:
        mid, k, j = (int(v) for v in ref)
        sdir = self._sample_dir(ref)
        obj = json.loads((sdir / f"sample_{j}.json").read_text())
        manual = self.manual(mid)
        step = manual.steps[k]
        corrupted = [Pose6D.from_json(p) for p in obj["corrupted_poses"]]
        labels = [Status(int(v)) for v in obj["labels"]]
        sample = Sample(
            manual_id=mid,
            step_index=k,
            sample_index=j,
            world_dims=manual.world_dims,
            components=list(step.components),
            correct_poses=list(step.gt_poses),
            corrupted_poses=corrupted,
            labels=labels,
            prefix=self._manual_states(mid)[k].placed,
        )
        if load_images and self.manifest.get("render_images", True):
            from .scene import load_png

            sample.manual_image = load_png(sdir / "gt.png")
            sample.assembled_image = load_png(sdir / f"sample_{j}_assembled.png")
            sample.component_images = [
                load_png(sdir / f"sample_{j}_comp_{i}.png")
                for i in range(len(step.components))
            ]
        return sample

    def samples(self, refs, load_images: bool = True):
        for ref in refs:
            yield self.sample(ref, load_images=load_images)
