"""Signed-distance collision queries between the sphere-approximated robot,
obstacle point clouds and analytic cuboids; robot segmentation of clouds and
in-hand object attachment."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial import cKDTree

from .geometry import Cuboid, LABEL_OBSTACLE, PointCloud, TriMesh
from .kinematics import (
    place_spheres_batch,
    KinematicChain,
    Pose,
    SphereModel,
    forward_kinematics,
    place_spheres,
    quat_rotate,
)

DEFAULT_EPS = 0.01  # meters

IN_HAND_PRIMITIVES = ("box", "cylinder", "sphere", "mesh")


def sphere_set_sdf(centers: np.ndarray, radii: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Signed distance of query points to a union of spheres: the exact
    minimum over spheres of ||x - c|| - r, negative inside."""
    centers = np.atleast_2d(centers)
    points = np.atleast_2d(points)
    if len(centers) == 0:
        raise ValueError("sphere set is empty")
    # squared-distance form via a single matmul keeps this fast at 4096 pts
    d2 = (
        np.sum(points * points, axis=1)[:, None]
        - 2.0 * points @ centers.T
        + np.sum(centers * centers, axis=1)[None, :]
    )
    d2 = np.maximum(d2, 0.0)
    return np.min(np.sqrt(d2) - np.asarray(radii)[None, :], axis=1)


@dataclass
class InHandObject:
    """Object rigidly attached to the end-effector, approximated by spheres
    given in the EE frame."""

    primitive: str
    scale: np.ndarray                 # per-axis size, meters
    grasp_offset: np.ndarray          # EE-frame translation of the object center
    sphere_offsets: np.ndarray        # (S, 3) EE-frame sphere centers
    sphere_radii: np.ndarray          # (S,)

    def __post_init__(self):
        if self.primitive not in IN_HAND_PRIMITIVES:
            raise ValueError(f"unknown in-hand primitive {self.primitive!r}")
        self.scale = np.asarray(self.scale, dtype=float)
        self.grasp_offset = np.asarray(self.grasp_offset, dtype=float)
        self.sphere_offsets = np.asarray(self.sphere_offsets, dtype=float).reshape(-1, 3)
        self.sphere_radii = np.asarray(self.sphere_radii, dtype=float)

    def spheres_at(self, ee_pose: Pose) -> Tuple[np.ndarray, np.ndarray]:
        centers = ee_pose.transform_points(self.sphere_offsets)
        return centers, self.sphere_radii


@dataclass
class CollisionWorld:
    """Immutable collision environment: an obstacle cloud plus optional
    analytic cuboids. Build once per scene, share across queries."""

    cloud: PointCloud
    cuboids: List[Cuboid] = field(default_factory=list)
    eps: float = DEFAULT_EPS

    def __post_init__(self):
        if self.eps <= 0:
            raise ValueError("collision tolerance must be positive")
        if len(self.cloud) and not np.all(self.cloud.labels == LABEL_OBSTACLE):
            raise ValueError("collision world cloud must be all-obstacle labeled")
        self._tree = cKDTree(self.cloud.points) if len(self.cloud) else None
        # packed cuboids for the vectorized SDF path
        if self.cuboids:
            from .kinematics import quat_to_matrix

            self._box_pos = np.array([c.pose.position for c in self.cuboids])
            self._box_half = np.array([c.half_extents for c in self.cuboids])
            self._box_rot = np.array([quat_to_matrix(c.pose.orientation) for c in self.cuboids])
        else:
            self._box_pos = None

    def with_cloud(self, cloud: PointCloud) -> "CollisionWorld":
        return CollisionWorld(cloud, list(self.cuboids), self.eps)

    # -- low-level queries ---------------------------------------------------

    def cloud_violations(self, centers: np.ndarray, radii: np.ndarray,
                         eps: Optional[float] = None) -> int:
        """Number of cloud points with sphere-set SDF below eps."""
        if self._tree is None:
            return 0
        eps = self.eps if eps is None else eps
        hit: set = set()
        idx_lists = self._tree.query_ball_point(centers, np.asarray(radii) + eps)
        for lst in idx_lists:
            hit.update(lst)
        return len(hit)

    def cuboid_hit(self, centers: np.ndarray, radii: np.ndarray,
                   eps: Optional[float] = None) -> bool:
        """True if any robot sphere is within eps of (or inside) a cuboid."""
        eps = self.eps if eps is None else eps
        if self._box_pos is None:
            return False
        return bool(np.any(self.cuboid_sdf(centers) - np.asarray(radii) < eps))

    def cuboid_sdf(self, points: np.ndarray) -> np.ndarray:
        """Min signed distance of points (..., 3) to the analytic cuboids."""
        if self._box_pos is None:
            return np.full(np.asarray(points).shape[:-1], np.inf)
        pts = np.asarray(points, dtype=float)
        flat = pts.reshape(-1, 3)
        diff = flat[:, None, :] - self._box_pos[None, :, :]
        local = np.einsum("pmi,mij->pmj", diff, self._box_rot)
        d = np.abs(local) - self._box_half[None, :, :]
        outside = np.linalg.norm(np.maximum(d, 0.0), axis=2)
        inside = np.minimum(np.max(d, axis=2), 0.0)
        return (outside + inside).min(axis=1).reshape(pts.shape[:-1])


def robot_spheres(chain: KinematicChain, model: SphereModel, q: Sequence[float],
                  in_hand: Optional[InHandObject] = None) -> Tuple[np.ndarray, np.ndarray]:
    """World-frame robot spheres at q, with in-hand spheres appended when an
    object is attached."""
    centers, radii = place_spheres(chain, model, q)
    if in_hand is not None:
        _, ee = forward_kinematics(chain, q)
        oc, orad = in_hand.spheres_at(ee)
        centers = np.vstack([centers, oc])
        radii = np.concatenate([radii, orad])
    return centers, radii


def config_collision(world: CollisionWorld, chain: KinematicChain, model: SphereModel,
                     q: Sequence[float], in_hand: Optional[InHandObject] = None) -> Tuple[bool, int]:
    """Check one configuration. Returns (colliding, violating cloud point count)."""
    centers, radii = robot_spheres(chain, model, q, in_hand)
    count = world.cloud_violations(centers, radii)
    colliding = count > 0 or world.cuboid_hit(centers, radii)
    return colliding, count


def batch_spheres(chain: KinematicChain, model: SphereModel, qs: np.ndarray,
                  in_hand: Optional[InHandObject] = None) -> Tuple[np.ndarray, np.ndarray]:
    """Robot (plus in-hand) spheres for N configurations: (N, S, 3), (S,)."""
    from .kinematics import forward_kinematics_batch, quat_rotate_batch

    centers, radii = place_spheres_batch(chain, model, qs)
    if in_hand is not None:
        _, _, ee_pos, ee_rot = forward_kinematics_batch(chain, qs)
        oc = ee_pos[:, None, :] + quat_rotate_batch(ee_rot[:, None, :], in_hand.sphere_offsets[None, :, :])
        centers = np.concatenate([centers, oc], axis=1)
        radii = np.concatenate([radii, in_hand.sphere_radii])
    return centers, radii


def batch_collision(world: CollisionWorld, chain: KinematicChain, model: SphereModel,
                    qs: np.ndarray, in_hand: Optional[InHandObject] = None,
                    count_chunk: int = 16) -> Tuple[np.ndarray, np.ndarray]:
    """Vectorized collision query over N configurations.

    Returns (colliding (N,) bool, violating cloud point counts (N,) int).
    Results match config_collision exactly, configuration by configuration.
    """
    qs = np.atleast_2d(np.asarray(qs, dtype=float))
    n = len(qs)
    centers, radii = batch_spheres(chain, model, qs, in_hand)
    counts = np.zeros(n, dtype=int)
    if len(world.cloud):
        pts = world.cloud.points
        pts_sq = np.sum(pts * pts, axis=1)
        thresh = (radii + world.eps) ** 2
        for lo in range(0, n, count_chunk):
            c = centers[lo:lo + count_chunk]            # (b, S, 3)
            d2 = (np.sum(c * c, axis=2)[:, :, None]
                  - 2.0 * c @ pts.T
                  + pts_sq[None, None, :])
            hit = d2 < thresh[None, :, None]            # (b, S, K)
            counts[lo:lo + count_chunk] = np.any(hit, axis=1).sum(axis=1)
    colliding = counts > 0
    if world._box_pos is not None:
        box_sdf = world.cuboid_sdf(centers)             # (N, S)
        colliding = colliding | np.any(box_sdf - radii[None, :] < world.eps, axis=1)
    return colliding, counts


def segment_robot(cloud: PointCloud, chain: KinematicChain, model: SphereModel,
                  q: Sequence[float], eps_seg: float = DEFAULT_EPS,
                  in_hand: Optional[InHandObject] = None) -> Tuple[PointCloud, int]:
    """Remove points whose sphere-set SDF is below eps_seg (robot points seen
    by the sensor). The caller replaces them with sampled robot points."""
    if len(cloud) == 0:
        return cloud, 0
    centers, radii = robot_spheres(chain, model, q, in_hand)
    sdf = sphere_set_sdf(centers, radii, cloud.points)
    keep = sdf >= eps_seg
    removed = int(len(cloud) - keep.sum())
    return PointCloud(cloud.points[keep], cloud.labels[keep], cloud.seed), removed


def interpolate_configs(q1: np.ndarray, q2: np.ndarray, resolution: float) -> np.ndarray:
    """Waypoints from q1 to q2 inclusive with inf-norm spacing <= resolution."""
    q1 = np.asarray(q1, dtype=float)
    q2 = np.asarray(q2, dtype=float)
    span = float(np.max(np.abs(q2 - q1)))
    steps = max(1, int(np.ceil(span / resolution)))
    t = np.linspace(0.0, 1.0, steps + 1)
    return q1[None, :] + t[:, None] * (q2 - q1)[None, :]


def _bisection_order(n: int) -> np.ndarray:
    """Endpoints first, then recursive midpoints: finds blocked configs early."""
    order = [0, n - 1] if n > 1 else [0]
    seen = set(order)
    spans = [(0, n - 1)]
    while spans:
        lo, hi = spans.pop(0)
        mid = (lo + hi) // 2
        if mid not in seen:
            seen.add(mid)
            order.append(mid)
        if mid - lo > 1:
            spans.append((lo, mid))
        if hi - mid > 1:
            spans.append((mid, hi))
    return np.array(order)


def edge_collision_free(world: CollisionWorld, chain: KinematicChain, model: SphereModel,
                        q1: Sequence[float], q2: Sequence[float], resolution: float = 0.01,
                        in_hand: Optional[InHandObject] = None) -> bool:
    """Densely check the straight joint-space segment, endpoints included.
    Configs are visited in bisection order with early exit on the first hit."""
    qs = interpolate_configs(np.asarray(q1), np.asarray(q2), resolution)
    order = _bisection_order(len(qs))
    for lo in range(0, len(order), 32):
        chunk = qs[order[lo:lo + 32]]
        colliding, _ = batch_collision(world, chain, model, chunk, in_hand)
        if np.any(colliding):
            return False
    return True


# ---------------------------------------------------------------------------
# in-hand objects
# ---------------------------------------------------------------------------

SPAWN_HALF_EXTENT = 0.05   # object center sampled in a 5 cm cube around the EE midpoint
SCALE_RANGE = (0.03, 0.30)  # longest dimension


def sample_in_hand_object(rng: np.random.Generator,
                          mesh: Optional[TriMesh] = None) -> InHandObject:
    """Randomized object to spawn between the grippers: primitive type and a
    scale whose longest dimension lies in [0.03, 0.30] m. The grasp offset is
    zero until the object is attached."""
    if mesh is not None:
        primitive = "mesh"
    else:
        primitive = str(rng.choice(["box", "cylinder", "sphere"]))
    longest = rng.uniform(*SCALE_RANGE)
    if primitive == "box":
        ratios = rng.uniform(0.3, 1.0, size=3)
        scale = longest * ratios / ratios.max()
    elif primitive == "cylinder":
        height = longest
        radius = rng.uniform(0.3, 0.5) * longest
        scale = np.array([2 * radius, 2 * radius, height])
        scale = longest * scale / scale.max()
    elif primitive == "sphere":
        scale = np.full(3, longest)
    else:  # mesh: scale its bounding box to the sampled longest dimension
        lo, hi = mesh.bounds()
        extent = hi - lo
        scale = extent * (longest / extent.max())
    offsets, radii = _cover_primitive(primitive, scale)
    return InHandObject(primitive, scale, np.zeros(3), offsets, radii)


def attach_in_hand(world: CollisionWorld, obj: InHandObject,
                   rng: np.random.Generator) -> Tuple[CollisionWorld, InHandObject]:
    """Attach an object to the end-effector: its center is sampled uniformly in
    a 5 cm cube around the EE midpoint and its spheres transform rigidly with
    the EE from then on. Object points are never part of the obstacle cloud, so
    the returned world is a fresh copy with the same cloud."""
    offset = rng.uniform(-SPAWN_HALF_EXTENT, SPAWN_HALF_EXTENT, size=3)
    base_offsets = obj.sphere_offsets - obj.grasp_offset
    attached = InHandObject(obj.primitive, obj.scale.copy(), offset,
                            base_offsets + offset, obj.sphere_radii.copy())
    return world.with_cloud(world.cloud), attached


def _cover_primitive(primitive: str, scale: np.ndarray,
                     max_spheres: int = 32) -> Tuple[np.ndarray, np.ndarray]:
    """Conservative sphere covering of a primitive: the sphere union contains
    the primitive surface. Grid resolution chosen so the count stays <= 32."""
    half = np.asarray(scale, dtype=float) / 2.0
    if primitive == "sphere":
        return np.zeros((1, 3)), np.array([half.max()])
    if primitive == "cylinder":
        # stack along z covering a cylinder of radius half[0], height scale[2]
        n = min(8, max(1, int(np.ceil(scale[2] / max(scale[0], 1e-6)))))
        zs = (np.arange(n) + 0.5) / n * scale[2] - half[2]
        seg_half = half[2] / n
        r = float(np.hypot(half[0], seg_half))
        offsets = np.stack([np.zeros(n), np.zeros(n), zs], axis=1)
        return offsets, np.full(n, r)
    # box or mesh proxy: subdivide axes greedily, largest cell first, until
    # the sphere budget is spent
    counts = np.ones(3, dtype=int)
    while True:
        axis = int(np.argmax(half / counts))
        grown = counts.copy()
        grown[axis] += 1
        if grown.prod() > max_spheres:
            break
        counts = grown
    cell_half = half / counts
    r = float(np.linalg.norm(cell_half))
    grids = [(np.arange(c) + 0.5) / c * 2 * h - h for c, h in zip(counts, half)]
    xs, ys, zs = np.meshgrid(*grids, indexing="ij")
    offsets = np.stack([xs.ravel(), ys.ravel(), zs.ravel()], axis=1)
    return offsets, np.full(len(offsets), r)
