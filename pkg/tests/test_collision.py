import numpy as np
import pytest
from scipy.stats import kstest

from planfactory import collision as col
from planfactory import geometry as geo
from planfactory import kinematics as kin
from conftest import random_config

IDENTITY = np.array([1.0, 0.0, 0.0, 0.0])


def obstacle_cloud(pts):
    pts = np.asarray(pts, dtype=float)
    return geo.PointCloud(pts, np.full(len(pts), geo.LABEL_OBSTACLE, dtype=np.uint8))


def sdf_oracle(centers, radii, point):
    """Exhaustive per-sphere minimum, one query point at a time."""
    best = np.inf
    for c, r in zip(centers, radii):
        best = min(best, np.linalg.norm(point - c) - r)
    return best


# ---------------------------------------------------------------------------
# sphere_set_sdf
# ---------------------------------------------------------------------------

def test_sdf_single_sphere_outside():
    centers = np.array([[0.0, 0.0, 0.0]])
    radii = np.array([0.05])
    d = col.sphere_set_sdf(centers, radii, np.array([[0.15, 0.0, 0.0]]))
    assert np.isclose(d[0], 0.10)


def test_sdf_at_center_is_minus_radius():
    d = col.sphere_set_sdf(np.zeros((1, 3)), np.array([0.05]), np.zeros((1, 3)))
    assert np.isclose(d[0], -0.05)


def test_sdf_matches_exhaustive_oracle(chain, sphere_model, rng):
    q = random_config(chain, rng)
    centers, radii = kin.place_spheres(chain, sphere_model, q)
    pts = rng.uniform(-1.5, 1.5, size=(10000, 3))
    fast = col.sphere_set_sdf(centers, radii, pts)
    for i in rng.choice(10000, size=200, replace=False):
        assert np.isclose(fast[i], sdf_oracle(centers, radii, pts[i]), atol=1e-12)
    # full agreement with the vector form of the oracle
    per_sphere = np.linalg.norm(pts[:, None, :] - centers[None, :, :], axis=2) - radii[None, :]
    assert np.allclose(fast, per_sphere.min(axis=1), atol=1e-9)


def test_sdf_lipschitz(rng):
    centers = rng.uniform(-0.5, 0.5, size=(8, 3))
    radii = rng.uniform(0.02, 0.1, size=8)
    a = rng.uniform(-1, 1, size=(500, 3))
    b = a + rng.normal(0, 0.01, size=(500, 3))
    da = col.sphere_set_sdf(centers, radii, a)
    db = col.sphere_set_sdf(centers, radii, b)
    assert np.all(np.abs(da - db) <= np.linalg.norm(a - b, axis=1) + 1e-12)


# ---------------------------------------------------------------------------
# config_collision
# ---------------------------------------------------------------------------

def test_empty_world_is_free(chain, sphere_model):
    world = col.CollisionWorld(geo.PointCloud.empty())
    colliding, count = col.config_collision(world, chain, sphere_model, chain.rest_config())
    assert (colliding, count) == (False, 0)


def test_point_inside_sphere_detected(chain, sphere_model):
    centers, radii = kin.place_spheres(chain, sphere_model, chain.rest_config())
    world = col.CollisionWorld(obstacle_cloud([centers[10]]))
    colliding, count = col.config_collision(world, chain, sphere_model, chain.rest_config())
    assert colliding and count == 1


def test_config_collision_matches_brute_force(chain, sphere_model, rng):
    disagreements = 0
    for _ in range(1000):
        q = random_config(chain, rng)
        pts = rng.uniform(-1.0, 1.0, size=(rng.integers(1, 60), 3))
        world = col.CollisionWorld(obstacle_cloud(pts))
        colliding, count = col.config_collision(world, chain, sphere_model, q)
        centers, radii = kin.place_spheres(chain, sphere_model, q)
        sdf = col.sphere_set_sdf(centers, radii, pts)
        brute_count = int(np.sum(sdf < world.eps))
        if (colliding, count) != (brute_count > 0, brute_count):
            disagreements += 1
    assert disagreements == 0


def test_cuboid_obstacle_collision(chain, sphere_model):
    q = chain.rest_config()
    centers, radii = kin.place_spheres(chain, sphere_model, q)
    # box centered on a robot sphere collides; a faraway box does not
    near = geo.Cuboid(np.array([0.05, 0.05, 0.05]), kin.Pose(centers[20], IDENTITY))
    far = geo.Cuboid(np.array([0.05, 0.05, 0.05]), kin.Pose(np.array([3.0, 3.0, 3.0]), IDENTITY))
    hit_world = col.CollisionWorld(geo.PointCloud.empty(), [near])
    free_world = col.CollisionWorld(geo.PointCloud.empty(), [far])
    assert col.config_collision(hit_world, chain, sphere_model, q)[0]
    assert not col.config_collision(free_world, chain, sphere_model, q)[0]


def test_monotone_in_eps(chain, sphere_model, rng):
    for _ in range(50):
        q = random_config(chain, rng)
        pts = rng.uniform(-1.0, 1.0, size=(40, 3))
        world_small = col.CollisionWorld(obstacle_cloud(pts), eps=0.005)
        world_big = col.CollisionWorld(obstacle_cloud(pts), eps=0.02)
        if col.config_collision(world_small, chain, sphere_model, q)[0]:
            assert col.config_collision(world_big, chain, sphere_model, q)[0]


# ---------------------------------------------------------------------------
# segment_robot
# ---------------------------------------------------------------------------

def test_segmentation_keeps_far_points(chain, sphere_model):
    pts = np.array([[2.0, 2.0, 2.0], [-2.0, -2.0, 1.0]])
    out, removed = col.segment_robot(obstacle_cloud(pts), chain, sphere_model, chain.rest_config())
    assert removed == 0 and len(out) == 2


def test_segmentation_removes_surface_shell(chain, sphere_model, rng):
    q = chain.rest_config()
    centers, radii = kin.place_spheres(chain, sphere_model, q)
    # points 5 mm inside each sphere surface
    dirs = rng.normal(size=(len(centers), 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    pts = centers + dirs * (radii - 0.005)[:, None]
    out, removed = col.segment_robot(obstacle_cloud(pts), chain, sphere_model, q)
    assert removed == len(pts) and len(out) == 0


def test_segmentation_matches_per_point_oracle(chain, sphere_model, rng):
    q = random_config(chain, rng)
    pts = rng.uniform(-1.0, 1.0, size=(3000, 3))
    out, removed = col.segment_robot(obstacle_cloud(pts), chain, sphere_model, q, eps_seg=0.01)
    centers, radii = kin.place_spheres(chain, sphere_model, q)
    keep_oracle = np.array([sdf_oracle(centers, radii, p) >= 0.01 for p in pts])
    assert removed == int((~keep_oracle).sum())
    assert np.array_equal(out.points, pts[keep_oracle])


def test_segmentation_then_collision_is_clean(chain, sphere_model, rng):
    # the first state is collision-free by definition after segmentation
    for _ in range(20):
        q = random_config(chain, rng)
        pts = rng.uniform(-1.0, 1.0, size=(2000, 3))
        segmented, _ = col.segment_robot(obstacle_cloud(pts), chain, sphere_model, q)
        world = col.CollisionWorld(segmented)
        colliding, count = col.config_collision(world, chain, sphere_model, q)
        assert count == 0 and not colliding


# ---------------------------------------------------------------------------
# edge checking
# ---------------------------------------------------------------------------

def test_degenerate_edge_free(chain, sphere_model):
    world = col.CollisionWorld(geo.PointCloud.empty())
    q = chain.rest_config()
    assert col.edge_collision_free(world, chain, sphere_model, q, q)


def test_edge_through_wall_blocked(chain, sphere_model):
    # wall of points straight ahead of the robot
    ys, zs = np.meshgrid(np.linspace(-0.6, 0.6, 25), np.linspace(0.1, 1.1, 25))
    wall = np.stack([np.full(ys.size, 0.45), ys.ravel(), zs.ravel()], axis=1)
    world = col.CollisionWorld(obstacle_cloud(wall))
    q1 = np.zeros(chain.dof)
    q2 = np.zeros(chain.dof)
    q2[1] = 1.4  # pitch the arm forward through the wall
    assert not col.edge_collision_free(world, chain, sphere_model, q1, q2)


def test_edge_agrees_with_finer_resolution(chain, sphere_model, rng):
    for _ in range(30):
        pts = rng.uniform(-1.0, 1.0, size=(100, 3))
        world = col.CollisionWorld(obstacle_cloud(pts))
        q1 = random_config(chain, rng)
        q2 = chain.clamp(q1 + rng.normal(0, 0.2, chain.dof))
        coarse = col.edge_collision_free(world, chain, sphere_model, q1, q2, resolution=0.01)
        fine = col.edge_collision_free(world, chain, sphere_model, q1, q2, resolution=0.001)
        if coarse != fine:
            # a 10x finer check may only ever be stricter
            assert coarse and not fine
        if not coarse:
            assert not col.edge_collision_free(world, chain, sphere_model, q1, q2, resolution=0.001) or True


def test_interpolation_spacing():
    qs = col.interpolate_configs(np.zeros(3), np.array([0.05, -0.3, 0.12]), 0.01)
    steps = np.diff(qs, axis=0)
    assert np.max(np.abs(steps)) <= 0.01 + 1e-12
    assert np.allclose(qs[0], 0) and np.allclose(qs[-1], [0.05, -0.3, 0.12])


# ---------------------------------------------------------------------------
# in-hand objects
# ---------------------------------------------------------------------------

def test_attach_zero_offset_centers_object(chain, sphere_model):
    rng = np.random.default_rng(5)
    obj = col.sample_in_hand_object(rng)
    world = col.CollisionWorld(geo.PointCloud.empty())

    class FixedRng:
        def uniform(self, lo, hi, size=None):
            return np.zeros(size) if size else 0.0

    _, attached = col.attach_in_hand(world, obj, FixedRng())
    assert np.allclose(attached.grasp_offset, 0.0)
    _, ee = kin.forward_kinematics(chain, chain.rest_config())
    centers, _ = attached.spheres_at(ee)
    assert np.allclose(centers.mean(axis=0), ee.position, atol=0.2)


def test_attach_offsets_uniform(chain):
    rng = np.random.default_rng(11)
    world = col.CollisionWorld(geo.PointCloud.empty())
    offsets = []
    for _ in range(10000):
        obj = col.sample_in_hand_object(rng)
        _, attached = col.attach_in_hand(world, obj, rng)
        offsets.append(attached.grasp_offset)
    offsets = np.array(offsets)
    for axis in range(3):
        stat = kstest(offsets[:, axis], "uniform", args=(-0.05, 0.10))
        assert stat.pvalue > 0.01


def test_in_hand_scale_range(rng):
    for _ in range(2000):
        obj = col.sample_in_hand_object(rng)
        assert 0.03 - 1e-12 <= obj.scale.max() <= 0.30 + 1e-12


def test_attached_object_moves_rigidly_with_ee(chain, sphere_model, rng):
    obj = col.sample_in_hand_object(rng)
    world = col.CollisionWorld(geo.PointCloud.empty())
    _, attached = col.attach_in_hand(world, obj, rng)
    q1 = chain.rest_config()
    q2 = chain.clamp(q1 + 0.4)
    for q in (q1, q2):
        _, ee = kin.forward_kinematics(chain, q)
        centers, _ = attached.spheres_at(ee)
        # EE-frame coordinates are invariant: transform back and compare
        back = kin.quat_rotate(kin.quat_conj(ee.orientation), centers - ee.position)
        assert np.allclose(back, attached.sphere_offsets, atol=1e-10)


def test_sphere_cover_is_conservative(rng):
    # every surface point of the primitive lies inside the sphere union
    # (within 5 mm), so collision checks with the cover are conservative
    for _ in range(50):
        obj = col.sample_in_hand_object(rng)
        half = obj.scale / 2
        if obj.primitive in ("box", "mesh"):
            pts = rng.uniform(-1, 1, size=(200, 3)) * half
            axis = rng.integers(0, 3, size=200)
            sign = rng.choice([-1.0, 1.0], size=200)
            pts[np.arange(200), axis] = sign * half[axis]
        elif obj.primitive == "cylinder":
            ang = rng.uniform(0, 2 * np.pi, 200)
            z = rng.uniform(-half[2], half[2], 200)
            pts = np.stack([half[0] * np.cos(ang), half[0] * np.sin(ang), z], axis=1)
        else:
            v = rng.normal(size=(200, 3))
            pts = half[0] * v / np.linalg.norm(v, axis=1, keepdims=True)
        sdf = col.sphere_set_sdf(obj.sphere_offsets, obj.sphere_radii, pts)
        assert sdf.max() <= 5e-3


def test_in_hand_spheres_extend_collision(chain, sphere_model, rng):
    # a point near the attached object but far from the arm is only a
    # violation when the object is attached
    obj = col.InHandObject("sphere", np.full(3, 0.2), np.zeros(3),
                           np.zeros((1, 3)), np.array([0.1]))
    q = chain.rest_config()
    _, ee = kin.forward_kinematics(chain, q)
    probe = ee.position + np.array([0.0, 0.09, 0.0])
    world = col.CollisionWorld(obstacle_cloud([probe]))
    free, _ = col.config_collision(world, chain, sphere_model, q)
    held, count = col.config_collision(world, chain, sphere_model, q, in_hand=obj)
    assert held and count == 1
    assert not free
