"""Geometric primitives: labeled point clouds, analytic cuboids, triangle
meshes, surface sampling and the crop/voxel/outlier cloud pipeline."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Optional, Tuple, Union

import numpy as np
from scipy.spatial import cKDTree

from .kinematics import Pose

# point labels
LABEL_ROBOT = 0
LABEL_GOAL_ROBOT = 1
LABEL_OBSTACLE = 2
LABEL_IN_HAND = 3

LABEL_NAMES = {
    LABEL_ROBOT: "robot",
    LABEL_GOAL_ROBOT: "goal_robot",
    LABEL_OBSTACLE: "obstacle",
    LABEL_IN_HAND: "in_hand",
}


@dataclass
class PointCloud:
    points: np.ndarray                 # (N, 3) float64
    labels: np.ndarray                 # (N,) uint8
    seed: Optional[int] = None         # provenance of the sampling rng, if any

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 3)
        self.labels = np.asarray(self.labels, dtype=np.uint8).reshape(-1)
        if len(self.labels) != len(self.points):
            raise ValueError("labels length must match point count")
        if len(self.points) and not np.all(np.isfinite(self.points)):
            raise ValueError("point cloud contains non-finite coordinates")

    def __len__(self) -> int:
        return len(self.points)

    @staticmethod
    def empty() -> "PointCloud":
        return PointCloud(np.zeros((0, 3)), np.zeros(0, dtype=np.uint8))

    @staticmethod
    def concat(clouds) -> "PointCloud":
        clouds = [c for c in clouds if len(c)]
        if not clouds:
            return PointCloud.empty()
        return PointCloud(
            np.vstack([c.points for c in clouds]),
            np.concatenate([c.labels for c in clouds]),
        )

    def relabeled(self, label: int) -> "PointCloud":
        return PointCloud(self.points.copy(), np.full(len(self), label, dtype=np.uint8), self.seed)


@dataclass(frozen=True)
class Cuboid:
    half_extents: np.ndarray
    pose: Pose

    def __post_init__(self):
        object.__setattr__(self, "half_extents", np.asarray(self.half_extents, dtype=float))
        if np.any(self.half_extents <= 0):
            raise ValueError("cuboid half-extents must be positive")

    def sdf(self, pts: np.ndarray) -> np.ndarray:
        """Exact signed distance from world points, negative inside."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        from .kinematics import quat_conj, quat_rotate
        local = quat_rotate(quat_conj(self.pose.orientation), pts - self.pose.position)
        d = np.abs(local) - self.half_extents
        outside = np.linalg.norm(np.maximum(d, 0.0), axis=1)
        inside = np.minimum(np.max(d, axis=1), 0.0)
        return outside + inside

    def corners(self) -> np.ndarray:
        signs = np.array([[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)], dtype=float)
        return self.pose.transform_points(signs * self.half_extents)

    def aabb(self) -> Tuple[np.ndarray, np.ndarray]:
        c = self.corners()
        return c.min(axis=0), c.max(axis=0)


@dataclass
class TriMesh:
    vertices: np.ndarray   # (V, 3)
    faces: np.ndarray      # (F, 3) int
    scale: float = 1.0

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float).reshape(-1, 3)
        self.faces = np.asarray(self.faces, dtype=int).reshape(-1, 3)
        if len(self.faces) and self.faces.max() >= len(self.vertices):
            raise ValueError("face index out of range")
        # prune zero-area faces at load time
        if len(self.faces):
            areas = self._face_areas()
            self.faces = self.faces[areas > 1e-14]

    def _face_areas(self) -> np.ndarray:
        v = self.vertices[self.faces]
        return 0.5 * np.linalg.norm(np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]), axis=1)

    def scaled_vertices(self) -> np.ndarray:
        return self.vertices * self.scale

    def bounds(self) -> Tuple[np.ndarray, np.ndarray]:
        v = self.scaled_vertices()
        return v.min(axis=0), v.max(axis=0)


@dataclass(frozen=True)
class WorkspaceBox:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lo", np.asarray(self.lo, dtype=float))
        object.__setattr__(self, "hi", np.asarray(self.hi, dtype=float))
        if not np.all(self.lo < self.hi):
            raise ValueError("workspace box requires lo < hi componentwise")

    def contains(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(pts)
        return np.all((pts >= self.lo) & (pts <= self.hi), axis=1)


@dataclass
class DepthMap:
    depths: np.ndarray  # (H, W) meters, 0 marks invalid pixels

    def __post_init__(self):
        self.depths = np.asarray(self.depths, dtype=float)
        if self.depths.ndim != 2:
            raise ValueError("depth map must be HxW")
        if not np.all(np.isfinite(self.depths)) or np.any(self.depths < 0):
            raise ValueError("depths must be finite and >= 0")

    @property
    def shape(self) -> Tuple[int, int]:
        return self.depths.shape


# ---------------------------------------------------------------------------
# surface sampling
# ---------------------------------------------------------------------------

def sample_surface(shape: Union[Cuboid, TriMesh], n: int, rng: np.random.Generator,
                   label: int = LABEL_OBSTACLE) -> PointCloud:
    """Area-weighted uniform samples on the surface of a cuboid or mesh."""
    if n == 0:
        return PointCloud.empty()
    if n < 0:
        raise ValueError("sample count must be >= 0")
    if isinstance(shape, Cuboid):
        pts = _sample_cuboid_surface(shape, n, rng)
    elif isinstance(shape, TriMesh):
        if len(shape.faces) == 0:
            raise ValueError("cannot sample an empty mesh")
        pts = _sample_mesh_surface(shape, n, rng)
    else:
        raise TypeError(f"unsupported shape {type(shape)!r}")
    return PointCloud(pts, np.full(n, label, dtype=np.uint8))


def _sample_cuboid_surface(c: Cuboid, n: int, rng: np.random.Generator) -> np.ndarray:
    h = c.half_extents
    face_areas = 4.0 * np.array([h[1] * h[2], h[1] * h[2], h[0] * h[2], h[0] * h[2], h[0] * h[1], h[0] * h[1]])
    face = rng.choice(6, size=n, p=face_areas / face_areas.sum())
    uv = rng.uniform(-1.0, 1.0, size=(n, 2))
    local = np.empty((n, 3))
    axis = face // 2
    sign = np.where(face % 2 == 0, 1.0, -1.0)
    for a in range(3):
        mask = axis == a
        if not np.any(mask):
            continue
        others = [i for i in range(3) if i != a]
        local[mask, a] = sign[mask] * h[a]
        local[mask, others[0]] = uv[mask, 0] * h[others[0]]
        local[mask, others[1]] = uv[mask, 1] * h[others[1]]
    return c.pose.transform_points(local)


def _sample_mesh_surface(m: TriMesh, n: int, rng: np.random.Generator) -> np.ndarray:
    verts = m.scaled_vertices()
    tri = verts[m.faces]
    areas = 0.5 * np.linalg.norm(np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]), axis=1)
    picks = rng.choice(len(areas), size=n, p=areas / areas.sum())
    # uniform barycentric via the square-root trick
    r1 = np.sqrt(rng.uniform(size=n))[:, None]
    r2 = rng.uniform(size=n)[:, None]
    a, b, c = tri[picks, 0], tri[picks, 1], tri[picks, 2]
    return (1 - r1) * a + r1 * (1 - r2) * b + r1 * r2 * c


# ---------------------------------------------------------------------------
# cloud processing: crop -> voxel -> statistical outlier removal
# ---------------------------------------------------------------------------

def voxel_downsample(cloud: PointCloud, voxel: float) -> PointCloud:
    """One centroid per occupied voxel. Deterministic under point reordering:
    voxels are emitted sorted by integer key and the representative is the
    centroid of a voxel's points."""
    if voxel <= 0:
        raise ValueError("voxel size must be positive")
    if len(cloud) == 0:
        return cloud
    keys = np.floor(cloud.points / voxel).astype(np.int64)
    order = np.lexsort((keys[:, 2], keys[:, 1], keys[:, 0]))
    keys_sorted = keys[order]
    pts_sorted = cloud.points[order]
    labels_sorted = cloud.labels[order]
    boundaries = np.any(np.diff(keys_sorted, axis=0) != 0, axis=1)
    starts = np.concatenate([[0], np.nonzero(boundaries)[0] + 1])
    ends = np.concatenate([starts[1:], [len(pts_sorted)]])
    centroids = np.add.reduceat(pts_sorted, starts, axis=0) / (ends - starts)[:, None]
    # label of the first point in each voxel (clouds fed here are single-label)
    labels = labels_sorted[starts]
    return PointCloud(centroids, labels, cloud.seed)


def remove_statistical_outliers(cloud: PointCloud, k_neighbors: int = 20,
                                std_ratio: float = 2.0) -> Tuple[PointCloud, int]:
    """Prune points whose mean k-NN distance exceeds the cloud-wide mean of
    that statistic by more than std_ratio standard deviations."""
    n = len(cloud)
    if n <= 1:
        return cloud, 0
    k = min(k_neighbors, n - 1)
    tree = cKDTree(cloud.points)
    dists, _ = tree.query(cloud.points, k=k + 1)   # first neighbor is the point itself
    mean_knn = dists[:, 1:].mean(axis=1)
    mu = mean_knn.mean()
    sigma = mean_knn.std()
    if sigma < 1e-12:
        # homogeneous neighborhoods: any spread is floating-point dust, not outliers
        return cloud, 0
    keep = mean_knn <= mu + std_ratio * sigma
    removed = int(n - keep.sum())
    return PointCloud(cloud.points[keep], cloud.labels[keep], cloud.seed), removed


def process_cloud(cloud: PointCloud, ws: WorkspaceBox, voxel: float = 0.005,
                  k_neighbors: int = 20, std_ratio: float = 2.0) -> PointCloud:
    """Crop to the workspace, voxel-downsample, then drop statistical
    outliers, in that order."""
    if len(cloud) == 0:
        return cloud
    inside = ws.contains(cloud.points)
    cropped = PointCloud(cloud.points[inside], cloud.labels[inside], cloud.seed)
    if len(cropped) == 0:
        return cropped
    voxed = voxel_downsample(cropped, voxel)
    cleaned, _ = remove_statistical_outliers(voxed, k_neighbors, std_ratio)
    return cleaned


def subsample(cloud: PointCloud, n: int, rng: np.random.Generator) -> PointCloud:
    """Uniform subsample to exactly n points: without replacement when the
    cloud is large enough, with replacement otherwise."""
    if n <= 0:
        raise ValueError("subsample size must be positive")
    if len(cloud) == 0:
        raise ValueError("cannot subsample an empty cloud")
    if len(cloud) == n:
        return cloud
    replace = len(cloud) < n
    idx = rng.choice(len(cloud), size=n, replace=replace)
    return PointCloud(cloud.points[idx], cloud.labels[idx], cloud.seed)


# ---------------------------------------------------------------------------
# I/O: binary cloud interchange and OFF/OBJ meshes
# ---------------------------------------------------------------------------

_CLOUD_MAGIC = b"PFC1"


def write_cloud(path: str, cloud: PointCloud) -> None:
    """Binary little-endian: magic, count, then N x (3 float32 + uint8)."""
    with open(path, "wb") as fh:
        fh.write(_CLOUD_MAGIC)
        fh.write(struct.pack("<I", len(cloud)))
        pts = cloud.points.astype("<f4")
        for i in range(len(cloud)):
            fh.write(pts[i].tobytes())
            fh.write(struct.pack("<B", int(cloud.labels[i])))


def read_cloud(path: str) -> PointCloud:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _CLOUD_MAGIC:
            raise ValueError(f"{path}: not a point cloud file")
        (count,) = struct.unpack("<I", fh.read(4))
        pts = np.empty((count, 3), dtype=np.float64)
        labels = np.empty(count, dtype=np.uint8)
        rec = struct.Struct("<fffB")
        for i in range(count):
            x, y, z, lab = rec.unpack(fh.read(rec.size))
            pts[i] = (x, y, z)
            labels[i] = lab
    return PointCloud(pts, labels)


def load_mesh(path: str, scale: float = 1.0) -> TriMesh:
    """Load an OFF or OBJ mesh (vertices and triangular faces only)."""
    if path.lower().endswith(".off"):
        return _load_off(path, scale)
    if path.lower().endswith(".obj"):
        return _load_obj(path, scale)
    raise ValueError(f"unsupported mesh format: {path}")


def _load_off(path: str, scale: float) -> TriMesh:
    with open(path, "r", encoding="utf-8") as fh:
        tokens = []
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if line:
                tokens.extend(line.split())
    if tokens[0] != "OFF":
        raise ValueError(f"{path}: missing OFF header")
    nv, nf = int(tokens[1]), int(tokens[2])
    cursor = 4
    verts = np.array(tokens[cursor:cursor + 3 * nv], dtype=float).reshape(nv, 3)
    cursor += 3 * nv
    faces = []
    for _ in range(nf):
        cnt = int(tokens[cursor])
        poly = [int(t) for t in tokens[cursor + 1:cursor + 1 + cnt]]
        cursor += 1 + cnt
        for i in range(1, cnt - 1):   # fan-triangulate
            faces.append((poly[0], poly[i], poly[i + 1]))
    return TriMesh(verts, np.array(faces, dtype=int), scale)


def _load_obj(path: str, scale: float) -> TriMesh:
    verts, faces = [], []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "v":
                verts.append([float(x) for x in parts[1:4]])
            elif parts[0] == "f":
                idx = [int(p.split("/")[0]) - 1 for p in parts[1:]]
                for i in range(1, len(idx) - 1):
                    faces.append((idx[0], idx[i], idx[i + 1]))
    if not verts:
        raise ValueError(f"{path}: no vertices")
    return TriMesh(np.array(verts), np.array(faces, dtype=int), scale)
