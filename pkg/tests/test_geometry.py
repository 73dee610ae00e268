import numpy as np
import pytest
from scipy.stats import binomtest

from planfactory import geometry as geo
from planfactory.kinematics import Pose

IDENTITY = np.array([1.0, 0.0, 0.0, 0.0])


def make_cloud(pts, label=geo.LABEL_OBSTACLE):
    pts = np.asarray(pts, dtype=float)
    return geo.PointCloud(pts, np.full(len(pts), label, dtype=np.uint8))


def brute_force_knn_means(points, k):
    """Oracle: exhaustive mean distance to the k nearest neighbors."""
    n = len(points)
    out = np.empty(n)
    for i in range(n):
        d = np.linalg.norm(points - points[i], axis=1)
        d = np.sort(d)[1:k + 1]
        out[i] = d.mean()
    return out


# ---------------------------------------------------------------------------
# surface sampling
# ---------------------------------------------------------------------------

def test_cuboid_sampling_counts_per_face(rng):
    cube = geo.Cuboid(np.array([0.5, 0.5, 0.5]), Pose(np.zeros(3), IDENTITY))
    cloud = geo.sample_surface(cube, 6000, rng)
    assert len(cloud) == 6000
    # all points on the surface
    assert np.abs(cube.sdf(cloud.points)).max() < 1e-9
    # equal-area faces: counts within 3 sigma of 1000
    counts = []
    for axis in range(3):
        for sign in (1.0, -1.0):
            on_face = np.isclose(cloud.points[:, axis], sign * 0.5)
            counts.append(int(on_face.sum()))
    sigma = np.sqrt(6000 * (1 / 6) * (5 / 6))
    for c in counts:
        assert abs(c - 1000) < 3 * sigma


def test_sampling_zero_points_gives_empty(rng):
    cube = geo.Cuboid(np.ones(3), Pose(np.zeros(3), IDENTITY))
    assert len(geo.sample_surface(cube, 0, rng)) == 0


def test_sampling_empty_mesh_rejected(rng):
    mesh = geo.TriMesh(np.zeros((3, 3)), np.zeros((0, 3), dtype=int))
    with pytest.raises(ValueError):
        geo.sample_surface(mesh, 10, rng)


def test_flat_tetrahedron_area_weighting(rng):
    # apex barely above the base: base area approaches half the total, and the
    # expected fraction is computed by the area oracle, not assumed
    verts = np.array([
        [0.0, 0.0, 0.0],
        [1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [1 / 3, 1 / 3, 0.02],
    ])
    faces = np.array([[0, 1, 2], [0, 1, 3], [1, 2, 3], [0, 2, 3]])
    mesh = geo.TriMesh(verts, faces)
    tri = verts[faces]
    areas = 0.5 * np.linalg.norm(np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]), axis=1)
    p_base = areas[0] / areas.sum()
    assert abs(p_base - 0.5) < 0.02  # geometry sanity: base is ~half the area

    n = 20000
    cloud = geo.sample_surface(mesh, n, rng)
    on_base = np.isclose(cloud.points[:, 2], 0.0, atol=1e-12).sum()
    assert binomtest(int(on_base), n, p_base).pvalue > 0.01


def test_sampling_deterministic_given_seed():
    cube = geo.Cuboid(np.array([0.2, 0.3, 0.4]), Pose(np.array([1.0, 2.0, 3.0]), IDENTITY))
    a = geo.sample_surface(cube, 500, np.random.default_rng(7))
    b = geo.sample_surface(cube, 500, np.random.default_rng(7))
    assert np.array_equal(a.points, b.points)


def test_mesh_sampling_points_on_surface(rng):
    verts = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0]], dtype=float)
    faces = np.array([[0, 1, 2]])
    cloud = geo.sample_surface(geo.TriMesh(verts, faces, scale=2.0), 200, rng)
    # single scaled triangle in the z=0 plane
    assert np.allclose(cloud.points[:, 2], 0.0)
    assert (cloud.points[:, 0] / 2 + cloud.points[:, 1] / 2).max() <= 1.0 + 1e-12


# ---------------------------------------------------------------------------
# process_cloud: crop -> voxel -> outlier removal
# ---------------------------------------------------------------------------

def big_workspace():
    return geo.WorkspaceBox(np.array([-10.0, -10, -10]), np.array([10.0, 10, 10]))


def test_cloud_within_one_voxel_collapses_to_centroid(rng):
    pts = rng.uniform(0.0, 0.004, size=(50, 3))
    out = geo.process_cloud(make_cloud(pts), big_workspace(), voxel=0.005)
    assert len(out) == 1
    assert np.allclose(out.points[0], pts.mean(axis=0), atol=1e-12)


def test_cloud_outside_workspace_empties():
    ws = geo.WorkspaceBox(np.zeros(3), np.ones(3))
    pts = np.full((40, 3), 5.0)
    out = geo.process_cloud(make_cloud(pts), ws)
    assert len(out) == 0


def test_grid_cloud_outlier_removal_matches_knn_oracle(rng):
    grid = np.stack(np.meshgrid(*[np.arange(8) * 0.02] * 3, indexing="ij"), axis=-1).reshape(-1, 3)
    outliers = np.array([[5.0, 5, 5], [-4.0, 2, 1], [3.0, -3, 2], [0.5, 6.0, -2], [-2.0, -2, 6]])
    pts = np.vstack([grid, outliers])
    cloud = make_cloud(pts)
    out = geo.process_cloud(cloud, big_workspace(), voxel=0.005, k_neighbors=20)

    # oracle: exhaustive k-NN statistic on the voxel stage output
    voxed = geo.voxel_downsample(
        geo.PointCloud(pts[big_workspace().contains(pts)],
                       np.full(len(pts), geo.LABEL_OBSTACLE, dtype=np.uint8)), 0.005)
    means = brute_force_knn_means(voxed.points, 20)
    keep = means <= means.mean() + 2.0 * means.std()
    expected = voxed.points[keep]
    assert len(out) == len(expected)
    assert np.allclose(np.sort(out.points, axis=0), np.sort(expected, axis=0))
    # exactly the 5 injected points are gone
    assert len(out) == len(grid)
    for bad in outliers:
        assert not np.any(np.all(np.isclose(out.points, bad), axis=1))


def test_process_cloud_idempotent():
    # ring corpus: every point has an identical neighborhood by symmetry, so
    # the outlier statistic is homogeneous and a second pass must be a no-op
    t = np.linspace(0, 2 * np.pi, 500, endpoint=False)
    ring = np.stack([np.cos(t), np.sin(t), np.zeros_like(t)], axis=1)
    outliers = np.array([[6.0, 0, 0], [0, 7.0, 0], [0, 0, 8.0]])
    once = geo.process_cloud(make_cloud(np.vstack([ring, outliers])), big_workspace())
    assert len(once) == 500
    twice = geo.process_cloud(once, big_workspace())
    assert len(twice) == len(once)
    assert np.abs(once.points - twice.points).max() < 1e-12


def test_voxel_stage_idempotent_on_any_cloud(rng):
    # each voxel representative is alone in its voxel, so a second voxel pass
    # reproduces it exactly regardless of the cloud
    pts = rng.uniform(-1, 1, size=(2000, 3))
    once = geo.voxel_downsample(make_cloud(pts), 0.05)
    twice = geo.voxel_downsample(once, 0.05)
    assert len(once) == len(twice)
    assert np.abs(np.sort(once.points, axis=0) - np.sort(twice.points, axis=0)).max() < 1e-12


def test_voxel_output_points_inside_their_voxel(rng):
    pts = rng.uniform(-1, 1, size=(500, 3))
    voxel = 0.05
    out = geo.voxel_downsample(make_cloud(pts), voxel)
    occupied = set(map(tuple, np.floor(pts / voxel).astype(int)))
    assert len(out) <= len(occupied)
    for p in out.points:
        assert tuple(np.floor(p / voxel).astype(int)) in occupied


# ---------------------------------------------------------------------------
# subsample
# ---------------------------------------------------------------------------

def test_subsample_identity_when_sizes_match(rng):
    cloud = make_cloud(rng.uniform(size=(64, 3)))
    out = geo.subsample(cloud, 64, rng)
    assert out is cloud


@pytest.mark.parametrize("n_in", [10, 4096, 100000])
def test_subsample_output_size(n_in, rng):
    cloud = make_cloud(rng.uniform(size=(n_in, 3)))
    out = geo.subsample(cloud, 4096, rng)
    assert len(out) == 4096


def test_subsample_preserves_label_proportions(rng):
    n = 30000
    labels = np.concatenate([
        np.full(int(n * 0.7), geo.LABEL_OBSTACLE, dtype=np.uint8),
        np.full(n - int(n * 0.7), geo.LABEL_ROBOT, dtype=np.uint8),
    ])
    cloud = geo.PointCloud(rng.uniform(size=(n, 3)), labels)
    out = geo.subsample(cloud, 4096, rng)
    frac = float(np.mean(out.labels == geo.LABEL_OBSTACLE))
    sigma = np.sqrt(0.7 * 0.3 / 4096)
    assert abs(frac - 0.7) < 3 * sigma


def test_subsample_empty_rejected(rng):
    with pytest.raises(ValueError):
        geo.subsample(geo.PointCloud.empty(), 10, rng)


# ---------------------------------------------------------------------------
# I/O
# ---------------------------------------------------------------------------

def test_cloud_binary_roundtrip(tmp_path, rng):
    pts = rng.uniform(-2, 2, size=(257, 3)).astype(np.float32).astype(float)
    labels = rng.integers(0, 4, size=257).astype(np.uint8)
    cloud = geo.PointCloud(pts, labels)
    path = tmp_path / "cloud.bin"
    geo.write_cloud(str(path), cloud)
    back = geo.read_cloud(str(path))
    assert np.array_equal(back.points.astype(np.float32), pts.astype(np.float32))
    assert np.array_equal(back.labels, labels)


def test_off_and_obj_loading(tmp_path):
    off = tmp_path / "tri.off"
    off.write_text("OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n")
    mesh = geo.load_mesh(str(off))
    assert len(mesh.vertices) == 3 and len(mesh.faces) == 1

    obj = tmp_path / "quad.obj"
    obj.write_text("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n")
    mesh = geo.load_mesh(str(obj))
    assert len(mesh.faces) == 2  # quad fan-triangulated


def test_degenerate_faces_pruned():
    verts = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [2, 0, 0]], dtype=float)
    faces = np.array([[0, 1, 2], [0, 1, 3]])  # second face has zero area
    mesh = geo.TriMesh(verts, faces)
    assert len(mesh.faces) == 1
