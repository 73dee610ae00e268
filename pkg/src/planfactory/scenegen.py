"""Procedural generation of randomized manipulation scenes.

Seven parametric asset categories (table, shelf, open box, cubby, microwave,
dishwasher, cabinet) are built from cuboids under per-category flushness
constraints, placed by iteratively pushing colliding assets along the summed
penetration normal of everything they intersect, then sprinkled with mesh
clutter inside task-relevant sampling regions.

Conventions: the robot base is at the origin, z up, the scene floor at z = 0.
Support contacts are separated by a clearance slightly above the pairwise
collision tolerance so every generated scene passes the separation audit with
no contact exemptions; this is a collision world, not a physics simulation.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .geometry import Cuboid, TriMesh, load_mesh
from .kinematics import Pose, quat_from_axis_angle, quat_mul, quat_normalize, quat_rotate

COLLISION_TOL = 0.01          # required pairwise separation, meters
SUPPORT_CLEARANCE = 0.012     # resting gap above support surfaces
SCENE_XY_BOUND = 2.5
SCENE_Z_BOUND = 3.0

CATEGORIES = ("table", "shelf", "open_box", "cubby", "microwave", "dishwasher", "cabinet")

Z_AXIS = np.array([0.0, 0.0, 1.0])


# ---------------------------------------------------------------------------
# configuration: defaults mirror the data-generation hyper-parameter table
# ---------------------------------------------------------------------------

DEFAULT_PARAM_RANGES: Dict[str, Dict[str, tuple]] = {
    "table": {
        "width range": (0.8, 1.2),
        "depth range": (0.4, 0.6),
        "height range": (0.35, 0.5),
        "thickness range": (0.03, 0.07),
        "leg thickness range": (0.03, 0.07),
        "leg margin range": (0.05, 0.15),
        "position range": (0.0, 0.8, -0.6, 0.6),
        "z axis rotation range": (0.0, 3.14),
    },
    "shelf": {
        "width range": (0.5, 1.0),
        "depth range": (0.2, 0.5),
        "height range": (0.5, 1.2),
        "num boards range": (3, 5),
        "board thickness range": (0.02, 0.05),
        "backboard thickness range": (0.0, 0.05),
        "num vertical boards range": (0, 3),
        "num side columns range": (0, 4),
        "column thickness range": (0.02, 0.05),
        "position range": (0.0, 0.8, -0.6, 0.6),
        "z axis rotation range": (-1.57, 0.0),
    },
    "open_box": {
        "width range": (0.2, 0.7),
        "depth range": (0.2, 0.7),
        "height range": (0.3, 0.5),
        "thickness range": (0.02, 0.06),
        "front scale range": (0.6, 1.0),
        "position range": (0.0, 0.8, -0.6, 0.6),
        "z axis rotation range": (-1.57, 0.0),
    },
    # cubby extents are (center, half-range) pairs in the source table; they
    # are stored here already expanded to (lo, hi)
    "cubby": {
        "cubby left range": (0.3, 0.5),
        "cubby right range": (-0.5, -0.3),
        "cubby top range": (0.5, 1.2),
        "cubby bottom range": (0.0, 0.1),
        "cubby front range": (0.7, 0.9),
        "cubby width range": (0.15, 0.55),
        "cubby horizontal middle board z axis shift range": (0.35, 0.55),
        "cubby vertical middle board y axis shift range": (-0.1, 0.1),
        "board thickness range": (0.01, 0.03),
        "external rotation range": (0.0, 1.57),
        "internal rotation range": (0.0, 0.5),
        "num shelves range": (3, 5),
    },
    "microwave": {
        "width range": (0.3, 0.6),
        "depth range": (0.3, 0.6),
        "height range": (0.3, 0.6),
        "thickness range": (0.01, 0.02),
        "display panel width range": (0.05, 0.15),
        "distance range": (0.5, 0.8),
        "external z axis rotation range": (-2.36, -0.79),
        "internal z axis rotation range": (-0.15, 0.15),
    },
    "dishwasher": {
        "width range": (0.4, 0.6),
        "depth range": (0.3, 0.4),
        "height range": (0.5, 0.7),
        "control panel height range": (0.1, 0.2),
        "foot panel height range": (0.1, 0.2),
        "wall thickness range": (0.01, 0.02),
        "opening angle range": (0.5, 1.57),
        "distance range": (0.6, 1.0),
        "external z axis rotation range": (-2.36, -0.79),
        "internal z axis rotation range": (-0.15, 0.15),
    },
    "cabinet": {
        "width range": (0.5, 0.8),
        "depth range": (0.25, 0.4),
        "height range": (0.6, 1.0),
        "wall thickness range": (0.01, 0.02),
        "left opening angle range": (0.7, 1.57),
        "right opening angle range": (0.7, 1.57),
        "distance range": (0.6, 1.0),
        "external z axis rotation range": (-2.36, -0.79),
        "internal z axis rotation range": (-0.15, 0.15),
    },
}

DEFAULT_COUNT_RANGES: Dict[str, tuple] = {
    "shelf": (0, 3),
    "open_box": (0, 3),
    "cubby": (0, 1),
    "microwave": (0, 3),
    "dishwasher": (0, 3),
    "cabinet": (0, 3),
}

DEFAULT_MESH_PARAMS = {
    "scale range": (0.2, 0.4),
    "x pos range": (0.2, 0.4),
    "y pos range": (-0.4, 0.4),
    "number of mesh objects per programmatic asset": (0, 3),
    "number of mesh objects on the table": (0, 5),
}


@dataclass
class GenConfig:
    max_objects: int = 6
    param_ranges: Dict[str, Dict[str, tuple]] = field(
        default_factory=lambda: {k: dict(v) for k, v in DEFAULT_PARAM_RANGES.items()})
    count_ranges: Dict[str, tuple] = field(default_factory=lambda: dict(DEFAULT_COUNT_RANGES))
    mesh_params: Dict[str, tuple] = field(default_factory=lambda: dict(DEFAULT_MESH_PARAMS))
    mesh_pool: Optional[str] = None   # directory of OFF/OBJ files; None -> bundled pool
    max_push_iters: int = 30
    collision_tol: float = COLLISION_TOL
    # keep-out around the robot pedestal: assets are pushed clear of this box
    # during placement, but it is not part of the scene itself
    robot_footprint: Optional[Tuple[Tuple[float, float, float], Tuple[float, float, float]]] = (
        (0.0, 0.0, 0.35), (0.12, 0.12, 0.35))

    def __post_init__(self):
        if self.max_objects < 1:
            raise ValueError("max objects K must be >= 1")
        for cat, params in self.param_ranges.items():
            for key, rng in params.items():
                if len(rng) == 2 and not rng[0] <= rng[1]:
                    raise ValueError(f"{cat}/{key}: range not well ordered")

    def mesh_pool_path(self) -> str:
        if self.mesh_pool:
            return self.mesh_pool
        from .data import default_mesh_pool_path

        return default_mesh_pool_path()


@dataclass
class AssetParams:
    category: str
    values: Dict[str, float]


@dataclass
class Articulation:
    name: str            # e.g. "door"
    axis: np.ndarray     # hinge axis, world frame
    pivot: np.ndarray    # a point on the hinge line, world frame
    angle: float


@dataclass
class AssetInstance:
    category: str
    params: AssetParams
    cuboids: List[Cuboid]
    sampling_regions: List[Tuple[np.ndarray, np.ndarray]]  # world AABBs (lo, hi)
    articulation: Optional[Articulation] = None
    push_iters: int = 0

    def translated(self, delta: np.ndarray) -> "AssetInstance":
        delta = np.asarray(delta, dtype=float)
        cuboids = [Cuboid(c.half_extents, Pose(c.pose.position + delta, c.pose.orientation))
                   for c in self.cuboids]
        regions = [(lo + delta, hi + delta) for lo, hi in self.sampling_regions]
        art = self.articulation
        if art is not None:
            art = Articulation(art.name, art.axis.copy(), art.pivot + delta, art.angle)
        return AssetInstance(self.category, self.params, cuboids, regions, art, self.push_iters)


@dataclass
class ClutterItem:
    mesh_name: str
    scale: float
    pose: Pose
    obb: Cuboid            # conservative bounding cuboid used for placement
    push_iters: int = 0

    def translated(self, delta: np.ndarray) -> "ClutterItem":
        return ClutterItem(
            self.mesh_name, self.scale,
            Pose(self.pose.position + delta, self.pose.orientation),
            Cuboid(self.obb.half_extents, Pose(self.obb.pose.position + delta, self.obb.pose.orientation)),
            self.push_iters,
        )


@dataclass
class Scene:
    seed: int
    table: AssetInstance
    assets: List[AssetInstance]
    clutter: List[ClutterItem]
    dropped: int = 0

    def all_assets(self) -> List[AssetInstance]:
        return [self.table] + self.assets

    def all_cuboids(self) -> List[Cuboid]:
        boxes = []
        for asset in self.all_assets():
            boxes.extend(asset.cuboids)
        return boxes

    def sampling_regions(self) -> List[Tuple[np.ndarray, np.ndarray]]:
        regions = []
        for asset in self.all_assets():
            regions.extend(asset.sampling_regions)
        return regions


# ---------------------------------------------------------------------------
# separating-axis tests between cuboids
# ---------------------------------------------------------------------------

def _box_axes(c: Cuboid) -> np.ndarray:
    from .kinematics import quat_to_matrix

    return quat_to_matrix(c.pose.orientation)


def cuboid_separation(a: Cuboid, b: Cuboid) -> Tuple[float, np.ndarray]:
    """Best separating-axis gap between two cuboids and its direction
    (pointing from b toward a).

    The returned gap is a lower bound on the true distance; a negative value
    is the (SAT) penetration depth. Axes tested: 6 face normals and 9 edge
    cross products.
    """
    Ra, Rb = _box_axes(a), _box_axes(b)
    d = a.pose.position - b.pose.position
    axes = [Ra[:, i] for i in range(3)] + [Rb[:, i] for i in range(3)]
    for i in range(3):
        for j in range(3):
            cr = np.cross(Ra[:, i], Rb[:, j])
            n = np.linalg.norm(cr)
            if n > 1e-9:
                axes.append(cr / n)
    best_gap = -np.inf
    best_axis = np.array([1.0, 0.0, 0.0])
    for axis in axes:
        ra = np.abs(axis @ Ra) @ a.half_extents
        rb = np.abs(axis @ Rb) @ b.half_extents
        dist = float(axis @ d)
        gap = abs(dist) - (ra + rb)
        if gap > best_gap:
            best_gap = gap
            best_axis = axis if dist >= 0 else -axis
    return best_gap, best_axis


class PackedGroup:
    """Cuboid group flattened to arrays for the batched SAT kernel.
    Rotations are fixed; translation shifts positions only."""

    __slots__ = ("pos", "half", "cols")

    def __init__(self, cuboids: Sequence[Cuboid]):
        self.pos = np.array([c.pose.position for c in cuboids])
        self.half = np.array([c.half_extents for c in cuboids])
        # cols[i, k] = k-th local axis (column of the rotation matrix)
        self.cols = np.array([_box_axes(c).T for c in cuboids])

    def translated(self, delta: np.ndarray) -> "PackedGroup":
        out = PackedGroup.__new__(PackedGroup)
        out.pos = self.pos + delta
        out.half = self.half
        out.cols = self.cols
        return out


class _PairKernel:
    """Translation-invariant part of the pairwise SAT test between two packed
    groups: candidate axes and summed projection radii. Re-evaluating at a new
    offset only recomputes the center-distance term."""

    __slots__ = ("axes", "rr", "b_pos", "a_pos")

    def __init__(self, a: PackedGroup, b: PackedGroup):
        n, m = len(a.pos), len(b.pos)
        ca = a.cols[:, None, :, None, :]            # (n,1,3,1,3)
        cb = b.cols[None, :, None, :, :]            # (1,m,1,3,3)
        crosses = np.cross(np.broadcast_to(ca, (n, m, 3, 3, 3)),
                           np.broadcast_to(cb, (n, m, 3, 3, 3))).reshape(n, m, 9, 3)
        norms = np.sqrt(np.sum(crosses * crosses, axis=-1))
        degenerate = norms < 1e-9
        crosses = crosses / np.where(degenerate, 1.0, norms)[..., None]
        axes_a = np.broadcast_to(a.cols[:, None, :, :], (n, m, 3, 3))
        axes_b = np.broadcast_to(b.cols[None, :, :, :], (n, m, 3, 3))
        axes = np.concatenate([axes_a, axes_b, crosses], axis=2)    # (n,m,15,3)

        ra = np.einsum("nmax,nkx->nmak", axes, a.cols)
        ra = np.einsum("nmak,nk->nma", np.abs(ra), a.half)
        rb = np.einsum("nmax,mkx->nmak", axes, b.cols)
        rb = np.einsum("nmak,mk->nma", np.abs(rb), b.half)
        rr = ra + rb
        rr[:, :, 6:][degenerate] = np.inf           # degenerate axes never win
        self.axes = axes
        self.rr = rr
        self.a_pos = a.pos
        self.b_pos = b.pos

    def gaps(self, offset: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Best per-pair gap (n, m) and separating direction (n, m, 3),
        oriented from b toward a, with group a translated by offset."""
        d = (self.a_pos + offset)[:, None, :] - self.b_pos[None, :, :]
        dist = np.einsum("nmax,nmx->nma", self.axes, d)
        per_axis = np.abs(dist) - self.rr
        best = np.argmax(per_axis, axis=2)
        take = best[:, :, None]
        per_pair_gap = np.take_along_axis(per_axis, take, axis=2)[:, :, 0]
        axis = np.take_along_axis(self.axes, take[..., None], axis=2)[:, :, 0, :]
        sign = np.where(np.take_along_axis(dist, take, axis=2)[:, :, 0] < 0, -1.0, 1.0)
        return per_pair_gap, axis * sign[..., None]


def _pairwise_gaps(a: PackedGroup, b: PackedGroup) -> Tuple[np.ndarray, np.ndarray]:
    """Per cuboid pair: the best SAT gap (n, m) and the separating direction
    (n, m, 3) oriented from b toward a."""
    return _PairKernel(a, b).gaps(np.zeros(3))


def packed_separation(a: PackedGroup, b: PackedGroup) -> Tuple[float, np.ndarray]:
    """Minimum SAT gap over all cuboid pairs of two packed groups, with the
    direction of the deepest pair (from b toward a)."""
    gaps, axes = _pairwise_gaps(a, b)
    i, j = np.unravel_index(np.argmin(gaps), gaps.shape)
    return float(gaps[i, j]), axes[i, j]


def group_separation(group_a: Sequence[Cuboid], group_b: Sequence[Cuboid]) -> Tuple[float, np.ndarray]:
    """Minimum SAT gap over all cuboid pairs, with the direction of the
    deepest pair (from group_b toward group_a)."""
    return packed_separation(PackedGroup(group_a), PackedGroup(group_b))


# ---------------------------------------------------------------------------
# category generators
# ---------------------------------------------------------------------------

def _sample(rng: np.random.Generator, lo: float, hi: float) -> float:
    return float(rng.uniform(lo, hi))


def _sample_int(rng: np.random.Generator, lo: float, hi: float) -> int:
    return int(rng.integers(int(lo), int(hi) + 1))


def _yaw_pose(center, yaw: float) -> Pose:
    return Pose(np.asarray(center, dtype=float), quat_from_axis_angle(Z_AXIS, yaw))


def _box(center_local, half, frame: Pose) -> Cuboid:
    world = frame.transform_points(np.asarray(center_local, dtype=float))
    return Cuboid(np.asarray(half, dtype=float), Pose(world, frame.orientation))


def _inscribed_aabb(lo_local, hi_local, frame: Pose) -> Tuple[np.ndarray, np.ndarray]:
    """World-frame axis-aligned box inscribed in a yaw-rotated local box."""
    lo_local = np.asarray(lo_local, dtype=float)
    hi_local = np.asarray(hi_local, dtype=float)
    center_l = 0.5 * (lo_local + hi_local)
    half = 0.5 * (hi_local - lo_local)
    yaw = 2.0 * math.atan2(frame.orientation[3], frame.orientation[0])
    c, s = abs(math.cos(yaw)), abs(math.sin(yaw))
    denom_x = half[0] * c + half[1] * s
    denom_y = half[0] * s + half[1] * c
    alpha = min(half[0] / denom_x if denom_x > 0 else 1.0,
                half[1] / denom_y if denom_y > 0 else 1.0)
    half_in = np.array([half[0] * alpha, half[1] * alpha, half[2]])
    center_w = frame.transform_points(center_l)
    return center_w - half_in, center_w + half_in


def generate_asset(category: str, cfg: GenConfig, rng: np.random.Generator,
                   support_z: float = 0.0) -> AssetInstance:
    """Sample parameters for one category and build its cuboids. The asset is
    positioned but not yet checked against the rest of the scene."""
    if category not in CATEGORIES:
        raise ValueError(f"unsupported category {category!r}")
    builder = _BUILDERS[category]
    return builder(cfg.param_ranges[category], rng, support_z)


def _build_table(pr, rng, support_z):
    width = _sample(rng, *pr["width range"])
    depth = _sample(rng, *pr["depth range"])
    height = _sample(rng, *pr["height range"])
    thick = _sample(rng, *pr["thickness range"])
    leg_t = _sample(rng, *pr["leg thickness range"])
    margin = _sample(rng, *pr["leg margin range"])
    x0, x1, y0, y1 = pr["position range"]
    pos = np.array([_sample(rng, x0, x1), _sample(rng, y0, y1), 0.0])
    yaw = _sample(rng, *pr["z axis rotation range"])
    frame = _yaw_pose(pos, yaw)

    hx, hy = depth / 2, width / 2
    top = _box([0, 0, height - thick / 2], [hx, hy, thick / 2], frame)
    leg_h = (height - thick) / 2
    legs = []
    for sx in (-1, 1):
        for sy in (-1, 1):
            lx = sx * (hx - margin - leg_t / 2)
            ly = sy * (hy - margin - leg_t / 2)
            legs.append(_box([lx, ly, leg_h], [leg_t / 2, leg_t / 2, leg_h], frame))
    region = _inscribed_aabb([-hx + 0.02, -hy + 0.02, height + SUPPORT_CLEARANCE],
                             [hx - 0.02, hy - 0.02, height + 0.4], frame)
    params = AssetParams("table", {
        "width": width, "depth": depth, "height": height, "thickness": thick,
        "leg thickness": leg_t, "leg margin": margin,
        "x": pos[0], "y": pos[1], "yaw": yaw,
    })
    return AssetInstance("table", params, [top] + legs, [region])


def _build_shelf(pr, rng, support_z):
    width = _sample(rng, *pr["width range"])
    depth = _sample(rng, *pr["depth range"])
    height = _sample(rng, *pr["height range"])
    n_boards = _sample_int(rng, *pr["num boards range"])
    board_t = _sample(rng, *pr["board thickness range"])
    back_t = _sample(rng, *pr["backboard thickness range"])
    n_vert = _sample_int(rng, *pr["num vertical boards range"])
    n_cols = _sample_int(rng, *pr["num side columns range"])
    col_t = _sample(rng, *pr["column thickness range"])
    x0, x1, y0, y1 = pr["position range"]
    pos = np.array([_sample(rng, x0, x1), _sample(rng, y0, y1), support_z])
    yaw = _sample(rng, *pr["z axis rotation range"])
    frame = _yaw_pose(pos, yaw)

    hx, hy = depth / 2, width / 2
    cuboids = []
    # evenly spaced horizontal boards, bottom board resting at z = 0 locally
    board_z = np.linspace(board_t / 2, height - board_t / 2, n_boards)
    for z in board_z:
        cuboids.append(_box([0, 0, z], [hx, hy, board_t / 2], frame))
    # side columns at the four corners, flush with the board envelope
    corner = [(1, 1), (1, -1), (-1, 1), (-1, -1)]
    for i in range(n_cols):
        sx, sy = corner[i]
        cx = sx * (hx - col_t / 2)
        cy = sy * (hy - col_t / 2)
        cuboids.append(_box([cx, cy, height / 2], [col_t / 2, col_t / 2, height / 2], frame))
    # full-height vertical dividers across the width
    for i in range(n_vert):
        vy = (i + 1) / (n_vert + 1) * width - hy
        cuboids.append(_box([0, vy, height / 2], [hx, board_t / 2, height / 2], frame))
    if back_t > 1e-6:
        cuboids.append(_box([-hx - back_t / 2, 0, height / 2], [back_t / 2, hy, height / 2], frame))

    # rung interiors, split across the vertical dividers
    divider_ys = sorted((i + 1) / (n_vert + 1) * width - hy for i in range(n_vert))
    y_edges = [-hy + col_t] + divider_ys + [hy - col_t]
    regions = []
    for zlo, zhi in zip(board_z[:-1], board_z[1:]):
        for ylo, yhi in zip(y_edges[:-1], y_edges[1:]):
            lo = [-hx + 0.02, ylo + board_t / 2 + 0.02, zlo + board_t / 2 + SUPPORT_CLEARANCE]
            hi = [hx - 0.02, yhi - board_t / 2 - 0.02, zhi - board_t / 2 - 0.01]
            if lo[1] < hi[1] and lo[2] < hi[2]:
                regions.append(_inscribed_aabb(lo, hi, frame))
    params = AssetParams("shelf", {
        "width": width, "depth": depth, "height": height, "num boards": n_boards,
        "board thickness": board_t, "backboard thickness": back_t,
        "num vertical boards": n_vert, "num side columns": n_cols,
        "column thickness": col_t, "x": pos[0], "y": pos[1], "yaw": yaw,
    })
    return AssetInstance("shelf", params, cuboids, regions)


def _build_open_box(pr, rng, support_z):
    width = _sample(rng, *pr["width range"])
    depth = _sample(rng, *pr["depth range"])
    height = _sample(rng, *pr["height range"])
    thick = _sample(rng, *pr["thickness range"])
    front_scale = _sample(rng, *pr["front scale range"])
    x0, x1, y0, y1 = pr["position range"]
    pos = np.array([_sample(rng, x0, x1), _sample(rng, y0, y1), support_z])
    yaw = _sample(rng, *pr["z axis rotation range"])
    frame = _yaw_pose(pos, yaw)

    hx, hy = width / 2, depth / 2
    bottom = _box([0, 0, thick / 2], [hx, hy, thick / 2], frame)
    wall_h = (height - thick) / 2
    wall_z = thick + wall_h
    back = _box([-hx + thick / 2, 0, wall_z], [thick / 2, hy, wall_h], frame)
    left = _box([0, hy - thick / 2, wall_z], [hx, thick / 2, wall_h], frame)
    right = _box([0, -hy + thick / 2, wall_z], [hx, thick / 2, wall_h], frame)
    front_h = wall_h * front_scale
    front = _box([hx - thick / 2, 0, thick + front_h], [thick / 2, hy, front_h], frame)
    region = _inscribed_aabb([-hx + thick + 0.01, -hy + thick + 0.01, thick + SUPPORT_CLEARANCE],
                             [hx - thick - 0.01, hy - thick - 0.01, height - 0.01], frame)
    params = AssetParams("open_box", {
        "width": width, "depth": depth, "height": height, "thickness": thick,
        "front scale": front_scale, "x": pos[0], "y": pos[1], "yaw": yaw,
    })
    return AssetInstance("open_box", params, [bottom, back, left, right, front], [region])


def _build_cubby(pr, rng, support_z):
    left = _sample(rng, *pr["cubby left range"])
    right = _sample(rng, *pr["cubby right range"])
    top = _sample(rng, *pr["cubby top range"])
    bottom = _sample(rng, *pr["cubby bottom range"])
    front = _sample(rng, *pr["cubby front range"])
    cwidth = _sample(rng, *pr["cubby width range"])
    mid_z = _sample(rng, *pr["cubby horizontal middle board z axis shift range"])
    mid_y = _sample(rng, *pr["cubby vertical middle board y axis shift range"])
    thick = _sample(rng, *pr["board thickness range"])
    yaw = _sample(rng, *pr["external rotation range"]) + _sample(rng, *pr["internal rotation range"])
    n_shelves = _sample_int(rng, *pr["num shelves range"])

    # extents are given in the robot frame: y in [right, left], z in
    # [bottom, top], front face at x = front with depth cwidth
    cy = 0.5 * (left + right)
    cz = 0.5 * (top + bottom)
    hy = 0.5 * (left - right)
    hz = 0.5 * (top - bottom)
    cx = front - cwidth / 2
    frame = _yaw_pose([cx, cy, cz], yaw)
    hx = cwidth / 2

    cuboids = [
        _box([0, hy - thick / 2, 0], [hx, thick / 2, hz], frame),    # left wall
        _box([0, -hy + thick / 2, 0], [hx, thick / 2, hz], frame),   # right wall
        _box([-hx + thick / 2, 0, 0], [thick / 2, hy, hz], frame),   # back wall
    ]
    # horizontal boards: bottom, top, a middle board at its sampled height and
    # any extra shelves evenly spaced between middle and top
    mid_local = np.clip(mid_z - cz, -hz + 1.5 * thick, hz - 1.5 * thick)
    board_zs = [-hz + thick / 2, hz - thick / 2, mid_local]
    for i in range(n_shelves - 3):
        frac = (i + 1) / (n_shelves - 2)
        board_zs.append(mid_local + frac * ((hz - thick / 2) - mid_local))
    for z in board_zs:
        cuboids.append(_box([0, 0, z], [hx, hy, thick / 2], frame))
    # vertical middle divider at its sampled y shift
    vy = np.clip(mid_y - cy, -hy + 1.5 * thick, hy - 1.5 * thick)
    cuboids.append(_box([0, vy, 0], [hx, thick / 2, hz], frame))

    regions = []
    zs = sorted(board_zs)
    for zlo, zhi in zip(zs[:-1], zs[1:]):
        if zhi - zlo < 2 * thick + 0.04:
            continue
        for ylo, yhi in ((-hy + thick, vy - thick / 2), (vy + thick / 2, hy - thick)):
            if yhi - ylo < 0.04:
                continue
            regions.append(_inscribed_aabb(
                [-hx + thick + 0.01, ylo + 0.01, zlo + thick / 2 + SUPPORT_CLEARANCE],
                [hx - 0.01, yhi - 0.01, zhi - thick / 2 - 0.01], frame))
    params = AssetParams("cubby", {
        "left": left, "right": right, "top": top, "bottom": bottom, "front": front,
        "cubby width": cwidth, "mid z": mid_z, "mid y": mid_y, "thickness": thick,
        "yaw": yaw, "num shelves": n_shelves,
    })
    return AssetInstance("cubby", params, cuboids, regions)


def _appliance_frame(pr, rng, support_z):
    """Polar placement shared by microwave/dishwasher/cabinet: distance from
    the base along a sampled bearing, opening turned toward the robot."""
    dist = _sample(rng, *pr["distance range"])
    bearing = _sample(rng, *pr["external z axis rotation range"]) + math.pi / 2
    jitter = _sample(rng, *pr["internal z axis rotation range"])
    pos = np.array([dist * math.cos(bearing), dist * math.sin(bearing), support_z])
    yaw = bearing + math.pi + jitter   # +x face (the opening) looks at the base
    return pos, yaw, dist, bearing, jitter


def _build_microwave(pr, rng, support_z):
    width = _sample(rng, *pr["width range"])
    depth = _sample(rng, *pr["depth range"])
    height = _sample(rng, *pr["height range"])
    thick = _sample(rng, *pr["thickness range"])
    panel_w = _sample(rng, *pr["display panel width range"])
    pos, yaw, dist, bearing, _ = _appliance_frame(pr, rng, support_z)
    hinge_angle = _sample(rng, *pr["internal z axis rotation range"])
    frame = _yaw_pose(pos, yaw)

    hx, hy, hz = depth / 2, width / 2, height / 2
    walls = [
        _box([0, 0, thick / 2], [hx, hy, thick / 2], frame),                     # bottom
        _box([0, 0, height - thick / 2], [hx, hy, thick / 2], frame),            # top
        _box([-hx + thick / 2, 0, hz], [thick / 2, hy, hz], frame),              # back
        _box([0, hy - thick / 2, hz], [hx, thick / 2, hz], frame),               # left
        _box([0, -hy + thick / 2, hz], [hx, thick / 2, hz], frame),              # right
    ]
    # display panel strip on the right of the opening
    panel = _box([hx - thick / 2, -hy + panel_w / 2, hz], [thick / 2, panel_w / 2, hz], frame)
    # door hinged on the left front edge, vertical axis, slightly ajar
    door_w = (2 * hy - panel_w) / 2
    hinge_local = np.array([hx, hy, 0.0])
    door_frame = Pose(frame.transform_points(hinge_local),
                      quat_normalize(quat_mul(frame.orientation, quat_from_axis_angle(Z_AXIS, hinge_angle))))
    door = _box([thick / 2, -door_w, hz], [thick / 2, door_w, hz], door_frame)
    hinge_axis = quat_rotate(frame.orientation, Z_AXIS)
    art = Articulation("door", hinge_axis, door_frame.position.copy(), hinge_angle)

    region = _inscribed_aabb([-hx + thick + 0.01, -hy + thick + 0.01, thick + SUPPORT_CLEARANCE],
                             [hx - thick - 0.01, hy - panel_w - 0.01, height - thick - 0.01], frame)
    params = AssetParams("microwave", {
        "width": width, "depth": depth, "height": height, "thickness": thick,
        "display panel width": panel_w, "distance": dist, "bearing": bearing,
        "yaw": yaw, "hinge angle": hinge_angle,
    })
    return AssetInstance("microwave", params, walls + [panel, door], [region], art)


def _build_dishwasher(pr, rng, support_z):
    width = _sample(rng, *pr["width range"])
    depth = _sample(rng, *pr["depth range"])
    height = _sample(rng, *pr["height range"])
    control_h = _sample(rng, *pr["control panel height range"])
    foot_h = _sample(rng, *pr["foot panel height range"])
    thick = _sample(rng, *pr["wall thickness range"])
    opening = _sample(rng, *pr["opening angle range"])
    pos, yaw, dist, bearing, _ = _appliance_frame(pr, rng, support_z)
    frame = _yaw_pose(pos, yaw)

    hx, hy, hz = depth / 2, width / 2, height / 2
    walls = [
        _box([0, 0, foot_h + thick / 2], [hx, hy, thick / 2], frame),            # tub floor
        _box([0, 0, height - thick / 2], [hx, hy, thick / 2], frame),            # top
        _box([-hx + thick / 2, 0, hz], [thick / 2, hy, hz], frame),              # back
        _box([0, hy - thick / 2, hz], [hx, thick / 2, hz], frame),               # left
        _box([0, -hy + thick / 2, hz], [hx, thick / 2, hz], frame),              # right
        _box([hx - thick / 2, 0, foot_h / 2], [thick / 2, hy, foot_h / 2], frame),            # foot panel
        _box([hx - thick / 2, 0, height - control_h / 2], [thick / 2, hy, control_h / 2], frame),  # control panel
    ]
    # door hinged at the bottom front edge, horizontal axis, swung open
    door_h = (height - control_h - foot_h) / 2
    hinge_local = np.array([hx, 0.0, foot_h])
    door_axis_local = np.array([0.0, 1.0, 0.0])
    door_rot = quat_normalize(quat_mul(frame.orientation, quat_from_axis_angle(door_axis_local, opening)))
    door_frame = Pose(frame.transform_points(hinge_local), door_rot)
    door = _box([thick / 2, 0, door_h], [thick / 2, hy, door_h], door_frame)
    hinge_axis = quat_rotate(frame.orientation, door_axis_local)
    art = Articulation("door", hinge_axis, door_frame.position.copy(), opening)

    region = _inscribed_aabb(
        [-hx + thick + 0.01, -hy + thick + 0.01, foot_h + thick + SUPPORT_CLEARANCE],
        [hx - thick - 0.01, hy - thick - 0.01, height - control_h - 0.01], frame)
    params = AssetParams("dishwasher", {
        "width": width, "depth": depth, "height": height, "control panel height": control_h,
        "foot panel height": foot_h, "thickness": thick, "opening angle": opening,
        "distance": dist, "bearing": bearing, "yaw": yaw,
    })
    return AssetInstance("dishwasher", params, walls + [door], [region], art)


def _build_cabinet(pr, rng, support_z):
    width = _sample(rng, *pr["width range"])
    depth = _sample(rng, *pr["depth range"])
    height = _sample(rng, *pr["height range"])
    thick = _sample(rng, *pr["wall thickness range"])
    left_open = _sample(rng, *pr["left opening angle range"])
    right_open = _sample(rng, *pr["right opening angle range"])
    pos, yaw, dist, bearing, _ = _appliance_frame(pr, rng, support_z)
    frame = _yaw_pose(pos, yaw)

    hx, hy, hz = depth / 2, width / 2, height / 2
    walls = [
        _box([0, 0, thick / 2], [hx, hy, thick / 2], frame),             # bottom
        _box([0, 0, height - thick / 2], [hx, hy, thick / 2], frame),    # top
        _box([-hx + thick / 2, 0, hz], [thick / 2, hy, hz], frame),      # back
        _box([0, hy - thick / 2, hz], [hx, thick / 2, hz], frame),       # left
        _box([0, -hy + thick / 2, hz], [hx, thick / 2, hz], frame),      # right
        _box([0, 0, hz], [hx, hy, thick / 2], frame),                    # middle shelf
    ]
    doors = []
    arts = None
    door_w = hy / 2
    for name, sy, angle in (("left_door", 1.0, left_open), ("right_door", -1.0, -right_open)):
        hinge_local = np.array([hx, sy * hy, 0.0])
        rot = quat_normalize(quat_mul(frame.orientation, quat_from_axis_angle(Z_AXIS, angle)))
        door_frame = Pose(frame.transform_points(hinge_local), rot)
        doors.append(_box([thick / 2, -sy * door_w, hz], [thick / 2, door_w, hz], door_frame))
        if arts is None:
            arts = Articulation("left_door", quat_rotate(frame.orientation, Z_AXIS),
                                door_frame.position.copy(), left_open)
    regions = []
    for zlo, zhi in ((thick, hz - thick / 2), (hz + thick / 2, height - thick)):
        regions.append(_inscribed_aabb(
            [-hx + thick + 0.01, -hy + thick + 0.01, zlo + SUPPORT_CLEARANCE],
            [hx - thick - 0.01, hy - thick - 0.01, zhi - 0.01], frame))
    params = AssetParams("cabinet", {
        "width": width, "depth": depth, "height": height, "thickness": thick,
        "left opening angle": left_open, "right opening angle": right_open,
        "distance": dist, "bearing": bearing, "yaw": yaw,
    })
    return AssetInstance("cabinet", params, walls + doors, regions, arts)


_BUILDERS = {
    "table": _build_table,
    "shelf": _build_shelf,
    "open_box": _build_open_box,
    "cubby": _build_cubby,
    "microwave": _build_microwave,
    "dishwasher": _build_dishwasher,
    "cabinet": _build_cabinet,
}

# categories that rest on the table surface when their center lands on it
TABLE_MOUNTED = ("open_box", "microwave")


# ---------------------------------------------------------------------------
# constraint predicates (machine-checkable category invariants)
# ---------------------------------------------------------------------------

def asset_constraint_ok(asset: AssetInstance, tol: float = 1e-9) -> bool:
    """Check the category predicate: shared wall heights, coplanar or evenly
    spaced boards, vertical door hinges where the category demands them."""
    boxes = asset.cuboids
    if asset.category == "table":
        top = boxes[0]
        legs = boxes[1:]
        under = top.pose.position[2] - top.half_extents[2]
        return all(abs((l.pose.position[2] + l.half_extents[2]) - under) < tol for l in legs)
    if asset.category == "shelf":
        n_boards = int(asset.params.values["num boards"])
        zs = np.array([b.pose.position[2] for b in boxes[:n_boards]])
        gaps = np.diff(zs)
        return len(gaps) == 0 or np.all(np.abs(gaps - gaps[0]) < tol)
    if asset.category == "open_box":
        # back/left/right wall tops coplanar
        tops = [b.pose.position[2] + b.half_extents[2] for b in boxes[1:4]]
        return max(tops) - min(tops) < tol
    if asset.category == "cubby":
        # all horizontal boards share the outer walls' x extent (flush)
        walls = boxes[:3]
        hx = walls[0].half_extents[0]
        boards = [b for b in boxes[3:] if b.half_extents[1] > b.half_extents[2]]
        return all(abs(b.half_extents[0] - hx) < tol for b in boards)
    if asset.category == "microwave":
        back, left_w, right_w = boxes[2], boxes[3], boxes[4]
        same_height = (abs(left_w.half_extents[2] - right_w.half_extents[2]) < tol
                       and abs(back.half_extents[2] - left_w.half_extents[2]) < tol)
        vertical_hinge = asset.articulation is not None and \
            abs(abs(float(asset.articulation.axis @ Z_AXIS)) - 1.0) < 1e-9
        return same_height and vertical_hinge
    if asset.category == "dishwasher":
        back, left_w, right_w = boxes[2], boxes[3], boxes[4]
        same_height = abs(left_w.half_extents[2] - right_w.half_extents[2]) < tol
        horizontal_hinge = asset.articulation is not None and \
            abs(float(asset.articulation.axis @ Z_AXIS)) < 1e-9
        return same_height and horizontal_hinge
    if asset.category == "cabinet":
        back, left_w, right_w = boxes[2], boxes[3], boxes[4]
        same_height = abs(left_w.half_extents[2] - right_w.half_extents[2]) < tol
        vertical_hinge = asset.articulation is not None and \
            abs(abs(float(asset.articulation.axis @ Z_AXIS)) - 1.0) < 1e-9
        return same_height and vertical_hinge
    return False


# ---------------------------------------------------------------------------
# placement by effective collision normal
# ---------------------------------------------------------------------------

MIN_PUSH_STEP = 0.02


def _merge_groups(groups: Sequence[PackedGroup]) -> Tuple[PackedGroup, np.ndarray]:
    merged = PackedGroup.__new__(PackedGroup)
    merged.pos = np.concatenate([g.pos for g in groups])
    merged.half = np.concatenate([g.half for g in groups])
    merged.cols = np.concatenate([g.cols for g in groups])
    ids = np.concatenate([np.full(len(g.pos), i) for i, g in enumerate(groups)])
    return merged, ids


def _push_offset(packed: PackedGroup, scene_groups: Sequence[PackedGroup],
                 rng: np.random.Generator, max_iters: int, tol: float) -> Tuple[Optional[np.ndarray], int]:
    """Shared push loop: returns (total translation, iterations) or (None, _)
    when max_iters is exhausted or the asset leaves the scene bounds.

    Pushes are horizontal: support relationships fix asset heights, so the
    normal's xy component drives the shift and pure-vertical overlaps fall
    back to a horizontal jitter.
    """
    if not scene_groups:
        return np.zeros(3), 0
    merged, ids = _merge_groups(scene_groups)
    kernel = _PairKernel(packed, merged)
    n_groups = len(scene_groups)
    offset = np.zeros(3)
    for it in range(max_iters):
        gaps, axes = kernel.gaps(offset)
        pair_min = gaps.min(axis=0)                      # deepest over asset cuboids, per scene cuboid
        pair_arg = gaps.argmin(axis=0)
        normals = []
        depth = 0.0
        for g in range(n_groups):
            cols = np.nonzero(ids == g)[0]
            j = cols[pair_min[cols].argmin()]
            gap = pair_min[j]
            if gap < tol:
                normals.append(axes[pair_arg[j], j])
                depth = max(depth, tol - gap)
        if not normals:
            return offset, it
        n = np.sum(normals, axis=0)
        n[2] = 0.0
        norm = np.linalg.norm(n)
        if norm < 1e-9:
            angle = rng.uniform(0.0, 2.0 * math.pi)
            n = np.array([math.cos(angle), math.sin(angle), 0.0])
        else:
            n = n / norm
        offset = offset + max(depth, MIN_PUSH_STEP) * n
        if np.abs((packed.pos.mean(axis=0) + offset)[:2]).max() > SCENE_XY_BOUND:
            return None, it
    return None, max_iters


def place_with_normal_push(scene_groups: Sequence[Sequence[Cuboid]], asset: AssetInstance,
                           rng: np.random.Generator, max_iters: int = 60,
                           tol: float = COLLISION_TOL) -> Optional[AssetInstance]:
    """Push the asset along the summed penetration normal of every scene group
    it collides with until it clears everything by `tol`, or give up."""
    packed_scene = [g if isinstance(g, PackedGroup) else PackedGroup(g) for g in scene_groups]
    offset, iters = _push_offset(PackedGroup(asset.cuboids), packed_scene, rng, max_iters, tol)
    if offset is None:
        return None
    placed = asset.translated(offset) if np.any(offset) else asset
    return replace(placed, push_iters=iters)


def place_clutter_with_push(scene_groups: Sequence[Sequence[Cuboid]], item: ClutterItem,
                            rng: np.random.Generator, max_iters: int = 60,
                            tol: float = COLLISION_TOL) -> Optional[ClutterItem]:
    packed_scene = [g if isinstance(g, PackedGroup) else PackedGroup(g) for g in scene_groups]
    offset, iters = _push_offset(PackedGroup([item.obb]), packed_scene, rng, max_iters, tol)
    if offset is None:
        return None
    placed = item.translated(offset) if np.any(offset) else item
    placed.push_iters = iters
    return placed


# ---------------------------------------------------------------------------
# scene assembly
# ---------------------------------------------------------------------------

def _point_over_table(table: AssetInstance, xy: np.ndarray) -> bool:
    top = table.cuboids[0]
    local = quat_rotate(np.array([top.pose.orientation[0], *(-top.pose.orientation[1:])]),
                        np.array([xy[0], xy[1], top.pose.position[2]]) - top.pose.position)
    return bool(np.all(np.abs(local[:2]) <= top.half_extents[:2]))


_POOL_CACHE: Dict[str, List[Tuple[str, TriMesh]]] = {}


def _load_pool(cfg: GenConfig) -> List[Tuple[str, TriMesh]]:
    pool_dir = os.path.abspath(cfg.mesh_pool_path())
    if pool_dir not in _POOL_CACHE:
        names = sorted(f for f in os.listdir(pool_dir) if f.lower().endswith((".off", ".obj")))
        if not names:
            raise ValueError(f"mesh pool {pool_dir} is empty")
        _POOL_CACHE[pool_dir] = [
            (os.path.splitext(n)[0], load_mesh(os.path.join(pool_dir, n))) for n in names
        ]
    return _POOL_CACHE[pool_dir]


def _clutter_obb(mesh: TriMesh, scale: float, pose: Pose) -> Cuboid:
    lo, hi = mesh.bounds()
    half = 0.5 * (hi - lo) * scale
    center_local = 0.5 * (hi + lo) * scale
    return Cuboid(np.maximum(half, 1e-4), Pose(pose.transform_points(center_local), pose.orientation))


def _sample_clutter(pool, region, cfg: GenConfig, rng: np.random.Generator) -> ClutterItem:
    name, mesh = pool[rng.integers(0, len(pool))]
    scale = _sample(rng, *cfg.mesh_params["scale range"])
    lo, hi = region
    mlo, mhi = mesh.bounds()
    half = 0.5 * (mhi - mlo) * scale
    # keep the yaw-rotated footprint inside the region where it fits at all
    r_xy = float(np.linalg.norm(half[:2]))
    xy = rng.uniform(np.minimum(lo[:2] + r_xy, hi[:2]), np.maximum(lo[:2] + r_xy, hi[:2] - r_xy))
    yaw = rng.uniform(0.0, 2.0 * math.pi)
    rotation = quat_from_axis_angle(Z_AXIS, yaw)
    # rest analytically on the region floor (the region already clears support)
    center = np.array([xy[0], xy[1], lo[2] + half[2]])
    offset_local = 0.5 * (mhi + mlo) * scale
    pose = Pose(center - quat_rotate(rotation, offset_local), rotation)
    return ClutterItem(name, scale, pose, _clutter_obb(mesh, scale, pose))


def generate_scene(cfg: GenConfig, seed: int) -> Scene:
    """Generate one scene: the table, a sampled number of category assets
    pushed into place, then mesh clutter in the sampling regions."""
    rng = np.random.default_rng(seed)
    keepout: List[PackedGroup] = []
    if cfg.robot_footprint is not None:
        center, half = cfg.robot_footprint
        keepout.append(PackedGroup([Cuboid(np.asarray(half, dtype=float),
                                           Pose(np.asarray(center, dtype=float),
                                                np.array([1.0, 0.0, 0.0, 0.0])))]))
    table = generate_asset("table", cfg, rng)
    placed_table = place_with_normal_push(keepout, table, rng, cfg.max_push_iters, cfg.collision_tol)
    if placed_table is not None:
        table = placed_table
    groups: List[PackedGroup] = keepout + [PackedGroup(table.cuboids)]
    assets: List[AssetInstance] = []
    dropped = 0

    k = int(rng.integers(1, cfg.max_objects + 1))
    counts = {c: 0 for c in cfg.count_ranges}
    for _ in range(k):
        open_cats = [c for c, (lo, hi) in sorted(cfg.count_ranges.items()) if counts[c] < hi]
        if not open_cats:
            break
        category = open_cats[int(rng.integers(0, len(open_cats)))]
        candidate = generate_asset(category, cfg, rng)
        if category in TABLE_MOUNTED:
            center = np.mean([c.pose.position for c in candidate.cuboids], axis=0)
            if _point_over_table(table, center[:2]):
                top = table.cuboids[0]
                table_top_z = top.pose.position[2] + top.half_extents[2]
                candidate = candidate.translated(np.array([0, 0, table_top_z + SUPPORT_CLEARANCE]))
        placed = place_with_normal_push(groups, candidate, rng, cfg.max_push_iters, cfg.collision_tol)
        if placed is None:
            dropped += 1
            continue
        counts[category] += 1
        assets.append(placed)
        groups.append(PackedGroup(placed.cuboids))

    pool = _load_pool(cfg)
    clutter: List[ClutterItem] = []
    lo_n, hi_n = cfg.mesh_params["number of mesh objects per programmatic asset"]
    for asset in assets:
        if not asset.sampling_regions:
            continue
        n_meshes = _sample_int(rng, lo_n, hi_n)
        for _ in range(n_meshes):
            region = asset.sampling_regions[int(rng.integers(0, len(asset.sampling_regions)))]
            item = _sample_clutter(pool, region, cfg, rng)
            placed = place_clutter_with_push(groups, item, rng, cfg.max_push_iters, cfg.collision_tol)
            if placed is None:
                dropped += 1
                continue
            clutter.append(placed)
            groups.append(PackedGroup([placed.obb]))
    lo_t, hi_t = cfg.mesh_params["number of mesh objects on the table"]
    n_table = _sample_int(rng, lo_t, hi_t)
    for _ in range(n_table):
        item = _sample_clutter(pool, table.sampling_regions[0], cfg, rng)
        placed = place_clutter_with_push(groups, item, rng, cfg.max_push_iters, cfg.collision_tol)
        if placed is None:
            dropped += 1
            continue
        clutter.append(placed)
        groups.append(PackedGroup([placed.obb]))

    return Scene(seed, table, assets, clutter, dropped)


def audit_scene(scene: Scene, tol: float = COLLISION_TOL) -> bool:
    """Pairwise SAT audit: every asset/clutter pair separated by >= tol."""
    groups = [PackedGroup(a.cuboids) for a in scene.all_assets()] + \
        [PackedGroup([c.obb]) for c in scene.clutter]
    for i in range(len(groups)):
        for j in range(i + 1, len(groups)):
            gap, _ = packed_separation(groups[i], groups[j])
            if gap < tol:
                return False
    return True


# ---------------------------------------------------------------------------
# scene file format (self-describing text, deterministic bytes)
# ---------------------------------------------------------------------------

def _fmt(x: float) -> str:
    return "%.17g" % float(x)


def write_scene(path: str, scene: Scene) -> None:
    lines = ["# planfactory scene v1", f"seed {scene.seed}", f"dropped {scene.dropped}"]
    for asset in scene.all_assets():
        lines.append(f"asset {asset.category}")
        lines.append(f"  push_iters {asset.push_iters}")
        for key in sorted(asset.params.values):
            lines.append(f"  param {key.replace(' ', '_')} {_fmt(asset.params.values[key])}")
        for c in asset.cuboids:
            lines.append("  cuboid " + " ".join(_fmt(v) for v in
                                                (*c.pose.position, *c.pose.orientation, *c.half_extents)))
        for lo, hi in asset.sampling_regions:
            lines.append("  region " + " ".join(_fmt(v) for v in (*lo, *hi)))
        art = asset.articulation
        if art is not None:
            lines.append(f"  hinge {art.name} " + " ".join(_fmt(v) for v in
                                                           (*art.axis, *art.pivot, art.angle)))
        lines.append("end")
    for item in scene.clutter:
        lines.append(f"clutter {item.mesh_name} {_fmt(item.scale)} "
                     + " ".join(_fmt(v) for v in (*item.pose.position, *item.pose.orientation))
                     + f" push_iters {item.push_iters}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_scene(path: str, cfg: Optional[GenConfig] = None) -> Scene:
    cfg = cfg or GenConfig()
    pool = dict(_load_pool(cfg))
    seed = 0
    dropped = 0
    assets: List[AssetInstance] = []
    clutter: List[ClutterItem] = []
    current: Optional[dict] = None
    with open(path, "r", encoding="utf-8") as fh:
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if parts[0] == "seed":
                seed = int(parts[1])
            elif parts[0] == "dropped":
                dropped = int(parts[1])
            elif parts[0] == "asset":
                current = {"category": parts[1], "params": {}, "cuboids": [],
                           "regions": [], "articulation": None, "push_iters": 0}
            elif parts[0] == "push_iters" and current is not None:
                current["push_iters"] = int(parts[1])
            elif parts[0] == "param":
                current["params"][parts[1].replace("_", " ")] = float(parts[2])
            elif parts[0] == "cuboid":
                v = [float(x) for x in parts[1:]]
                current["cuboids"].append(Cuboid(np.array(v[7:10]), Pose(np.array(v[0:3]), np.array(v[3:7]))))
            elif parts[0] == "region":
                v = [float(x) for x in parts[1:]]
                current["regions"].append((np.array(v[0:3]), np.array(v[3:6])))
            elif parts[0] == "hinge":
                v = [float(x) for x in parts[2:]]
                current["articulation"] = Articulation(parts[1], np.array(v[0:3]), np.array(v[3:6]), v[6])
            elif parts[0] == "end":
                assets.append(AssetInstance(
                    current["category"], AssetParams(current["category"], current["params"]),
                    current["cuboids"], current["regions"], current["articulation"],
                    current["push_iters"]))
                current = None
            elif parts[0] == "clutter":
                name = parts[1]
                scale = float(parts[2])
                v = [float(x) for x in parts[3:10]]
                push_iters = int(parts[11]) if len(parts) > 11 else 0
                pose = Pose(np.array(v[0:3]), np.array(v[3:7]))
                if name not in pool:
                    raise ValueError(f"clutter mesh {name!r} not in pool")
                mesh = TriMesh(pool[name].vertices, pool[name].faces, scale)
                clutter.append(ClutterItem(name, scale, pose, _clutter_obb(pool[name], scale, pose), push_iters))
    if not assets or assets[0].category != "table":
        raise ValueError(f"{path}: scene has no leading table asset")
    return Scene(seed, assets[0], assets[1:], clutter, dropped)


def scene_meshes(scene: Scene, cfg: Optional[GenConfig] = None) -> List[Tuple[TriMesh, Pose]]:
    """Clutter meshes with their scales applied, paired with world poses."""
    cfg = cfg or GenConfig()
    pool = dict(_load_pool(cfg))
    out = []
    for item in scene.clutter:
        mesh = pool[item.mesh_name]
        out.append((TriMesh(mesh.vertices, mesh.faces, item.scale), item.pose))
    return out
