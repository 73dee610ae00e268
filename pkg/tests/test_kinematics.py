import math

import numpy as np
import pytest

from planfactory import kinematics as kin
from conftest import random_config


# ---------------------------------------------------------------------------
# independent homogeneous-matrix FK oracle (Rodrigues rotations, 4x4 products)
# ---------------------------------------------------------------------------

def _rodrigues(axis, angle):
    axis = np.asarray(axis, dtype=float)
    K = np.array([
        [0, -axis[2], axis[1]],
        [axis[2], 0, -axis[0]],
        [-axis[1], axis[0], 0],
    ])
    return np.eye(3) + math.sin(angle) * K + (1 - math.cos(angle)) * (K @ K)


def _homogeneous(R, t):
    T = np.eye(4)
    T[:3, :3] = R
    T[:3, 3] = t
    return T


def fk_matrix_oracle(chain, q):
    """4x4 matrix-product forward kinematics. Returns frame matrices 1..dof
    plus the end-effector matrix."""
    T = np.eye(4)
    frames = []
    for link, angle in zip(chain.links, q):
        T = T @ _homogeneous(kin.quat_to_matrix(link.rotation), link.offset)
        T = T @ _homogeneous(_rodrigues(link.axis, angle), np.zeros(3))
        frames.append(T.copy())
    T_ee = T @ _homogeneous(kin.quat_to_matrix(chain.ee_rotation), chain.ee_offset)
    return frames, T_ee


def make_translation_chain(offsets):
    links = [
        kin.Link(np.asarray(o, dtype=float), np.array([1.0, 0, 0, 0]),
                 np.array([0.0, 0, 1.0]), -np.pi, np.pi)
        for o in offsets
    ]
    return kin.KinematicChain(links)


# ---------------------------------------------------------------------------
# forward kinematics
# ---------------------------------------------------------------------------

def test_fk_zero_config_pure_translations():
    offsets = [(0.1, 0, 0), (0, 0.2, 0), (0, 0, 0.3)]
    chain = make_translation_chain(offsets)
    _, ee = kin.forward_kinematics(chain, np.zeros(3))
    assert np.allclose(ee.position, np.sum(offsets, axis=0), atol=1e-15)


def test_fk_single_revolute_z_quarter_turn():
    # joint at origin rotates the downstream (1,0,0) offset onto (0,1,0)
    links = [
        kin.Link(np.zeros(3), np.array([1.0, 0, 0, 0]), np.array([0.0, 0, 1.0]), -np.pi, np.pi),
    ]
    chain = kin.KinematicChain(links, ee_offset=np.array([1.0, 0.0, 0.0]))
    _, ee = kin.forward_kinematics(chain, [np.pi / 2])
    assert np.allclose(ee.position, [0.0, 1.0, 0.0], atol=1e-12)


def test_fk_matches_matrix_oracle(chain, rng):
    for _ in range(100):
        q = random_config(chain, rng)
        poses, ee = kin.forward_kinematics(chain, q)
        frames, T_ee = fk_matrix_oracle(chain, q)
        for pose, T in zip(poses, frames):
            assert np.linalg.norm(pose.position - T[:3, 3]) < 1e-10
            assert np.abs(kin.quat_to_matrix(pose.orientation) - T[:3, :3]).max() < 1e-10
        assert np.linalg.norm(ee.position - T_ee[:3, 3]) < 1e-10


def test_fk_rejects_dimension_mismatch(chain):
    with pytest.raises(ValueError):
        kin.forward_kinematics(chain, np.zeros(chain.dof + 1))


def test_fk_deterministic(chain, rng):
    q = random_config(chain, rng)
    _, a = kin.forward_kinematics(chain, q)
    _, b = kin.forward_kinematics(chain, q)
    assert np.array_equal(a.position, b.position)
    assert np.array_equal(a.orientation, b.orientation)


# ---------------------------------------------------------------------------
# inverse kinematics
# ---------------------------------------------------------------------------

def test_ik_fixed_point(chain, rng):
    q = random_config(chain, rng, margin=0.3)
    _, target = kin.forward_kinematics(chain, q)
    sol = kin.inverse_kinematics(chain, target, q)
    assert sol is not None
    assert np.allclose(sol, q, atol=1e-9)


def test_ik_unreachable_target(chain):
    target = kin.Pose(np.array([10.0, 0.0, 0.0]), np.array([1.0, 0, 0, 0]))
    assert kin.inverse_kinematics(chain, target, chain.rest_config()) is None


def test_ik_roundtrip_with_perturbed_seeds(chain, rng):
    successes = 0
    trials = 500
    for _ in range(trials):
        q = random_config(chain, rng, margin=0.4)
        _, target = kin.forward_kinematics(chain, q)
        seed = chain.clamp(q + rng.normal(0.0, 0.05, size=chain.dof))
        sol = kin.inverse_kinematics(chain, target, seed)
        if sol is None:
            continue
        assert chain.within_limits(sol, tol=1e-9)
        _, reached = kin.forward_kinematics(chain, sol)
        if np.linalg.norm(reached.position - target.position) < 1e-3:
            successes += 1
    assert successes / trials >= 0.95


def test_ik_solution_within_limits_and_near_seed(chain, rng):
    # solutions returned must be the converged iterate closest to the seed
    for _ in range(25):
        q = random_config(chain, rng, margin=0.4)
        _, target = kin.forward_kinematics(chain, q)
        seed = chain.clamp(q + rng.normal(0.0, 0.05, size=chain.dof))
        sol = kin.inverse_kinematics(chain, target, seed)
        if sol is None:
            continue
        # a generous sanity bound: DLS from a nearby seed stays near it
        assert np.max(np.abs(sol - seed)) < 1.0


def test_ik_rejects_out_of_limits_seed(chain):
    seed = chain.joint_limits[:, 1] + 0.5
    target = kin.Pose(np.array([0.3, 0.0, 0.5]), np.array([1.0, 0, 0, 0]))
    with pytest.raises(ValueError):
        kin.inverse_kinematics(chain, target, seed)


# ---------------------------------------------------------------------------
# sphere placement
# ---------------------------------------------------------------------------

def test_place_spheres_identity_chain():
    chain = make_translation_chain([(0, 0, 0), (0, 0, 0)])
    model = kin.SphereModel(np.array([0, 1, 2]),
                            np.array([[0.1, 0, 0], [0, 0.2, 0], [0, 0, 0.3]]),
                            np.array([0.05, 0.05, 0.05]))
    centers, radii = kin.place_spheres(chain, model, np.zeros(2))
    assert np.allclose(centers, model.offsets, atol=1e-15)
    assert np.array_equal(radii, model.radii)


def test_place_sphere_rotated_link():
    links = [kin.Link(np.zeros(3), np.array([1.0, 0, 0, 0]), np.array([0.0, 0, 1.0]), -np.pi, np.pi)]
    chain = kin.KinematicChain(links)
    model = kin.SphereModel(np.array([1]), np.array([[0.0, 0.0, 0.1]]), np.array([0.02]))
    centers, _ = kin.place_spheres(chain, model, [np.pi])
    # offset along z is invariant under rotation about z
    assert np.allclose(centers[0], [0, 0, 0.1], atol=1e-12)
    model_x = kin.SphereModel(np.array([1]), np.array([[0.1, 0.0, 0.0]]), np.array([0.02]))
    centers_x, _ = kin.place_spheres(chain, model_x, [np.pi])
    assert np.allclose(centers_x[0], [-0.1, 0, 0], atol=1e-12)


def test_place_spheres_matches_fk_oracle(chain, sphere_model, rng):
    for _ in range(20):
        q = random_config(chain, rng)
        centers, _ = kin.place_spheres(chain, sphere_model, q)
        frames, _ = fk_matrix_oracle(chain, q)
        mats = [np.eye(4)] + frames
        for c, idx, off in zip(centers, sphere_model.link_index, sphere_model.offsets):
            expected = mats[idx][:3, :3] @ off + mats[idx][:3, 3]
            assert np.linalg.norm(c - expected) < 1e-10


def test_default_model_matches_published_shape(chain, sphere_model):
    sphere_model.validate(chain)
    assert sphere_model.num_spheres == 56
    assert sphere_model.radii.min() >= 0.02
    assert sphere_model.radii.max() <= 0.10


# ---------------------------------------------------------------------------
# config files
# ---------------------------------------------------------------------------

def test_chain_file_roundtrip(tmp_path, chain):
    path = tmp_path / "chain.txt"
    lines = []
    for link in chain.links:
        lines.append(
            "link offset %.17g %.17g %.17g rot %.17g %.17g %.17g %.17g "
            "axis %.17g %.17g %.17g limits %.17g %.17g"
            % (*link.offset, *link.rotation, *link.axis, link.lo, link.hi)
        )
    lines.append("ee offset %.17g %.17g %.17g rot %.17g %.17g %.17g %.17g"
                 % (*chain.ee_offset, *chain.ee_rotation))
    path.write_text("\n".join(lines))
    loaded = kin.load_chain(str(path))
    assert loaded.dof == chain.dof
    q = np.full(chain.dof, 0.37)
    _, a = kin.forward_kinematics(chain, q)
    _, b = kin.forward_kinematics(loaded, q)
    assert np.allclose(a.position, b.position, atol=1e-12)


def test_bad_limits_rejected():
    with pytest.raises(ValueError):
        kin.KinematicChain([
            kin.Link(np.zeros(3), np.array([1.0, 0, 0, 0]), np.array([0.0, 0, 1.0]), 1.0, -1.0)
        ])
