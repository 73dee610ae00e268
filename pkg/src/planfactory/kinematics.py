"""Serial-manipulator model: forward kinematics, damped-least-squares IK and
placement of the robot's sphere approximation.

A chain is a sequence of revolute links. Each link applies a fixed rigid
transform followed by a rotation about its joint axis. Frame 0 is the robot
base; frame i (1-based) is the frame after joint i. An optional fixed tool
transform defines the end-effector frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

QUAT_TOL = 1e-9


# ---------------------------------------------------------------------------
# quaternion helpers (w, x, y, z convention)
# ---------------------------------------------------------------------------

def quat_normalize(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    n = np.linalg.norm(q)
    if n == 0.0:
        raise ValueError("zero quaternion")
    return q / n


def quat_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def quat_conj(q: np.ndarray) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]])


def cross3(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Component-wise cross product for (..., 3) arrays. np.cross carries too
    much axis-handling overhead for the small vectors in the FK hot path."""
    ax, ay, az = a[..., 0], a[..., 1], a[..., 2]
    bx, by, bz = b[..., 0], b[..., 1], b[..., 2]
    return np.stack([ay * bz - az * by, az * bx - ax * bz, ax * by - ay * bx], axis=-1)


def quat_rotate(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotate vector(s) v by unit quaternion q. v may be (3,) or (N, 3)."""
    v = np.asarray(v, dtype=float)
    qv = q[1:]
    w = q[0]
    t = 2.0 * cross3(qv, v)
    return v + w * t + cross3(qv, t)


def quat_mul_batch(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Hamilton product with broadcasting over leading axes; (..., 4)."""
    aw, ax, ay, az = a[..., 0], a[..., 1], a[..., 2], a[..., 3]
    bw, bx, by, bz = b[..., 0], b[..., 1], b[..., 2], b[..., 3]
    return np.stack([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ], axis=-1)


def quat_rotate_batch(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotate vectors by quaternions with broadcasting: q (..., 4), v (..., 3)."""
    qv = q[..., 1:]
    w = q[..., 0:1]
    t = 2.0 * cross3(qv, v)
    return v + w * t + cross3(qv, t)


def quat_from_axis_angle(axis: np.ndarray, angle: float) -> np.ndarray:
    half = 0.5 * angle
    s = math.sin(half)
    return np.array([math.cos(half), axis[0] * s, axis[1] * s, axis[2] * s])


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def rotation_log(q: np.ndarray) -> np.ndarray:
    """Axis-angle vector of a unit quaternion (angle * axis)."""
    w = min(1.0, max(-1.0, float(q[0])))
    s = np.linalg.norm(q[1:])
    if s < 1e-12:
        return np.zeros(3)
    angle = 2.0 * math.atan2(s, w)
    if angle > math.pi:
        angle -= 2.0 * math.pi
    return (angle / s) * np.asarray(q[1:], dtype=float)


# ---------------------------------------------------------------------------
# domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Pose:
    """Rigid transform: position in meters, orientation as unit quaternion."""

    position: np.ndarray
    orientation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float))
        q = np.asarray(self.orientation, dtype=float)
        if abs(np.linalg.norm(q) - 1.0) > QUAT_TOL:
            raise ValueError("orientation quaternion is not unit norm")
        object.__setattr__(self, "orientation", q)

    def transform_points(self, pts: np.ndarray) -> np.ndarray:
        return quat_rotate(self.orientation, pts) + self.position

    def compose(self, other: "Pose") -> "Pose":
        return Pose(
            self.position + quat_rotate(self.orientation, other.position),
            quat_normalize(quat_mul(self.orientation, other.orientation)),
        )


IDENTITY_POSE = Pose(np.zeros(3), np.array([1.0, 0.0, 0.0, 0.0]))


@dataclass(frozen=True)
class Link:
    offset: np.ndarray          # fixed translation, meters
    rotation: np.ndarray        # fixed rotation, unit quaternion wxyz
    axis: np.ndarray            # joint axis, unit vector in the link frame
    lo: float
    hi: float


@dataclass
class KinematicChain:
    """Revolute serial chain plus an optional fixed tool transform."""

    links: List[Link]
    ee_offset: np.ndarray = field(default_factory=lambda: np.zeros(3))
    ee_rotation: np.ndarray = field(default_factory=lambda: np.array([1.0, 0, 0, 0]))

    def __post_init__(self):
        for link in self.links:
            if abs(np.linalg.norm(link.rotation) - 1.0) > QUAT_TOL:
                raise ValueError("link rotation quaternion is not unit norm")
            if not link.lo < link.hi:
                raise ValueError("joint limits must satisfy lo < hi")
        if abs(np.linalg.norm(self.ee_rotation) - 1.0) > QUAT_TOL:
            raise ValueError("ee rotation quaternion is not unit norm")

    @property
    def dof(self) -> int:
        return len(self.links)

    @property
    def joint_limits(self) -> np.ndarray:
        return np.array([[l.lo, l.hi] for l in self.links])

    def clamp(self, q: np.ndarray) -> np.ndarray:
        lim = self.joint_limits
        return np.clip(q, lim[:, 0], lim[:, 1])

    def within_limits(self, q: np.ndarray, tol: float = 0.0) -> bool:
        lim = self.joint_limits
        return bool(np.all(q >= lim[:, 0] - tol) and np.all(q <= lim[:, 1] + tol))

    def rest_config(self) -> np.ndarray:
        """Mid-range configuration, used as the canonical IK seed."""
        lim = self.joint_limits
        return 0.5 * (lim[:, 0] + lim[:, 1])


@dataclass(frozen=True)
class SphereModel:
    """Per-link sphere approximation of the robot.

    Each entry is (link index, offset in that link's frame, radius). Link
    index 0 is the base frame; index dof is the last joint frame.
    """

    link_index: np.ndarray  # (S,) int
    offsets: np.ndarray     # (S, 3)
    radii: np.ndarray       # (S,)

    def __post_init__(self):
        object.__setattr__(self, "link_index", np.asarray(self.link_index, dtype=int))
        object.__setattr__(self, "offsets", np.asarray(self.offsets, dtype=float))
        object.__setattr__(self, "radii", np.asarray(self.radii, dtype=float))
        if np.any(self.radii <= 0):
            raise ValueError("sphere radii must be positive")

    @property
    def num_spheres(self) -> int:
        return len(self.radii)

    def validate(self, chain: KinematicChain) -> None:
        if np.any(self.link_index < 0) or np.any(self.link_index >= chain.dof + 1):
            raise ValueError("sphere link index out of range")


# ---------------------------------------------------------------------------
# forward kinematics
# ---------------------------------------------------------------------------

def _rotate_one(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    vx, vy, vz = v
    tx = 2.0 * (y * vz - z * vy)
    ty = 2.0 * (z * vx - x * vz)
    tz = 2.0 * (x * vy - y * vx)
    return np.array([
        vx + w * tx + (y * tz - z * ty),
        vy + w * ty + (z * tx - x * tz),
        vz + w * tz + (x * ty - y * tx),
    ])


def fk_arrays(chain: KinematicChain, q: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Pose-free FK core: frame positions (dof+1, 3) and quaternions
    (dof+1, 4) with frame 0 the base, plus the end-effector position and
    quaternion."""
    q = np.asarray(q, dtype=float)
    if q.shape != (chain.dof,):
        raise ValueError(f"expected {chain.dof} joint angles, got shape {q.shape}")
    pos = np.zeros((chain.dof + 1, 3))
    rot = np.zeros((chain.dof + 1, 4))
    rot[0, 0] = 1.0
    p = pos[0]
    r = rot[0]
    for i, (link, angle) in enumerate(zip(chain.links, q)):
        p = p + _rotate_one(r, link.offset)
        r = quat_mul(r, link.rotation)
        half = 0.5 * angle
        s = math.sin(half)
        ax = link.axis
        r = quat_mul(r, np.array([math.cos(half), ax[0] * s, ax[1] * s, ax[2] * s]))
        r = r / math.sqrt(r @ r)
        pos[i + 1] = p
        rot[i + 1] = r
    ee_pos = p + _rotate_one(r, chain.ee_offset)
    ee_rot = quat_mul(r, chain.ee_rotation)
    ee_rot = ee_rot / math.sqrt(ee_rot @ ee_rot)
    return pos, rot, ee_pos, ee_rot


def forward_kinematics(chain: KinematicChain, q: Sequence[float]) -> Tuple[List[Pose], Pose]:
    """Compose link transforms left to right.

    Returns the pose of every joint frame (1..dof) and the end-effector pose.
    """
    pos, rot, ee_pos, ee_rot = fk_arrays(chain, np.asarray(q, dtype=float))
    poses = [Pose(pos[i], rot[i]) for i in range(1, chain.dof + 1)]
    return poses, Pose(ee_pos, ee_rot)


def frame_poses(chain: KinematicChain, q: Sequence[float]) -> List[Pose]:
    """All dof+1 frames addressable by a SphereModel: base then joint frames."""
    poses, _ = forward_kinematics(chain, q)
    return [IDENTITY_POSE] + poses


def place_spheres(chain: KinematicChain, model: SphereModel, q: Sequence[float]) -> Tuple[np.ndarray, np.ndarray]:
    """World-frame sphere centers and radii for configuration q."""
    model.validate(chain)
    frames = frame_poses(chain, q)
    centers = np.empty((model.num_spheres, 3))
    for frame_idx in np.unique(model.link_index):
        mask = model.link_index == frame_idx
        centers[mask] = frames[frame_idx].transform_points(model.offsets[mask])
    return centers, model.radii.copy()


def forward_kinematics_batch(chain: KinematicChain, qs: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized FK over N configurations.

    Returns (frame positions (N, dof+1, 3), frame quaternions (N, dof+1, 4),
    ee positions (N, 3), ee quaternions (N, 4)); frame 0 is the base.
    """
    qs = np.atleast_2d(np.asarray(qs, dtype=float))
    n = len(qs)
    if qs.shape[1] != chain.dof:
        raise ValueError(f"expected dof {chain.dof}, got {qs.shape[1]}")
    pos = np.zeros((n, chain.dof + 1, 3))
    rot = np.zeros((n, chain.dof + 1, 4))
    rot[:, 0, 0] = 1.0
    p = np.zeros((n, 3))
    r = np.tile(np.array([1.0, 0.0, 0.0, 0.0]), (n, 1))
    for i, link in enumerate(chain.links):
        p = p + quat_rotate_batch(r, link.offset[None, :])
        r = quat_mul_batch(r, link.rotation[None, :])
        half = 0.5 * qs[:, i]
        joint_q = np.concatenate([np.cos(half)[:, None], np.sin(half)[:, None] * link.axis[None, :]], axis=1)
        r = quat_mul_batch(r, joint_q)
        r = r / np.linalg.norm(r, axis=1, keepdims=True)
        pos[:, i + 1] = p
        rot[:, i + 1] = r
    ee_pos = p + quat_rotate_batch(r, chain.ee_offset[None, :])
    ee_rot = quat_mul_batch(r, chain.ee_rotation[None, :])
    ee_rot = ee_rot / np.linalg.norm(ee_rot, axis=1, keepdims=True)
    return pos, rot, ee_pos, ee_rot


def place_spheres_batch(chain: KinematicChain, model: SphereModel, qs: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """World-frame sphere centers for N configurations: (N, S, 3) plus the
    shared radii (S,)."""
    model.validate(chain)
    pos, rot, _, _ = forward_kinematics_batch(chain, qs)
    frame_pos = pos[:, model.link_index]        # (N, S, 3)
    frame_rot = rot[:, model.link_index]        # (N, S, 4)
    centers = frame_pos + quat_rotate_batch(frame_rot, model.offsets[None, :, :])
    return centers, model.radii.copy()


# ---------------------------------------------------------------------------
# inverse kinematics (damped least squares)
# ---------------------------------------------------------------------------

def _geometric_jacobian(chain: KinematicChain, q: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """6 x dof Jacobian (linear on top, angular below) at the end-effector,
    plus the EE position and quaternion."""
    pos, rot, ee_pos, ee_rot = fk_arrays(chain, q)
    J = np.zeros((6, chain.dof))
    for i, link in enumerate(chain.links):
        axis_world = _rotate_one(rot[i + 1], link.axis)
        J[0:3, i] = cross3(axis_world, ee_pos - pos[i + 1])
        J[3:6, i] = axis_world
    return J, ee_pos, ee_rot


def pose_error(target: Pose, current: Pose) -> np.ndarray:
    """6-vector twist error: position difference and axis-angle of the
    relative rotation."""
    dp = target.position - current.position
    dq = quat_mul(target.orientation, quat_conj(current.orientation))
    return np.concatenate([dp, rotation_log(quat_normalize(dq))])


def inverse_kinematics(
    chain: KinematicChain,
    target: Pose,
    seed: Sequence[float],
    max_iters: int = 150,
    timeout: Optional[float] = None,
    pos_tol: float = 1e-3,
    ori_tol: float = 1e-2,
    damping: float = 0.05,
    step_clamp: float = 0.2,
) -> Optional[np.ndarray]:
    """Seeded damped-least-squares IK.

    Iterates from the seed and, among all iterates that reach the tolerance,
    returns the one closest to the seed. Returns None on no convergence.
    `timeout` (seconds) is a wall-clock cap on top of max_iters; leave it None
    for deterministic behavior.
    """
    import time

    seed = np.asarray(seed, dtype=float)
    if not chain.within_limits(seed, tol=1e-12):
        raise ValueError("IK seed outside joint limits")
    deadline = None if timeout is None else time.monotonic() + timeout

    q = seed.copy()
    best: Optional[np.ndarray] = None
    best_dist = math.inf
    polish_left = 4   # keep a few iterations after first convergence so the
    # returned iterate is the one closest to the seed, then stop
    for _ in range(max_iters):
        J, ee_pos, ee_rot = _geometric_jacobian(chain, q)
        dq_rel = quat_mul(target.orientation, quat_conj(ee_rot))
        err = np.concatenate([target.position - ee_pos, rotation_log(quat_normalize(dq_rel))])
        if np.linalg.norm(err[:3]) < pos_tol and np.linalg.norm(err[3:]) < ori_tol:
            dist = float(np.linalg.norm(q - seed))
            if dist < best_dist:
                best = q.copy()
                best_dist = dist
            polish_left -= 1
            if polish_left < 0:
                break
        JJt = J @ J.T + (damping ** 2) * np.eye(6)
        dq = J.T @ np.linalg.solve(JJt, err)
        step = np.max(np.abs(dq))
        if step > step_clamp:
            dq *= step_clamp / step
        q = chain.clamp(q + dq)
        if step < 1e-12:
            break
        if deadline is not None and time.monotonic() > deadline:
            break
    return best


# ---------------------------------------------------------------------------
# config files
# ---------------------------------------------------------------------------

def load_chain(path: str) -> KinematicChain:
    """Parse a chain from the plain-text key/value format.

    Each `link` line: offset x y z rot w x y z axis x y z limits lo hi.
    An optional `ee` line: offset x y z rot w x y z.
    """
    links: List[Link] = []
    ee_offset = np.zeros(3)
    ee_rotation = np.array([1.0, 0.0, 0.0, 0.0])
    with open(path, "r", encoding="utf-8") as fh:
        for raw in fh:
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            tokens = line.split()
            kind = tokens[0]
            fields = _parse_fields(tokens[1:])
            if kind == "link":
                links.append(Link(
                    offset=np.array(fields["offset"]),
                    rotation=quat_normalize(np.array(fields.get("rot", [1, 0, 0, 0]))),
                    axis=_unit(np.array(fields["axis"])),
                    lo=fields["limits"][0],
                    hi=fields["limits"][1],
                ))
            elif kind == "ee":
                ee_offset = np.array(fields["offset"])
                ee_rotation = quat_normalize(np.array(fields.get("rot", [1, 0, 0, 0])))
            else:
                raise ValueError(f"unknown chain entry {kind!r}")
    if not links:
        raise ValueError("chain file defines no links")
    return KinematicChain(links, ee_offset, ee_rotation)


def load_sphere_model(path: str) -> SphereModel:
    """One sphere per line: link_index ox oy oz radius."""
    idx, offs, radii = [], [], []
    with open(path, "r", encoding="utf-8") as fh:
        for raw in fh:
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 5:
                raise ValueError(f"bad sphere line: {raw!r}")
            idx.append(int(parts[0]))
            offs.append([float(p) for p in parts[1:4]])
            radii.append(float(parts[4]))
    if not idx:
        raise ValueError("sphere model file is empty")
    return SphereModel(np.array(idx), np.array(offs), np.array(radii))


def _parse_fields(tokens: List[str]) -> dict:
    fields: dict = {}
    key = None
    for tok in tokens:
        try:
            val = float(tok)
        except ValueError:
            key = tok
            fields[key] = []
            continue
        if key is None:
            raise ValueError("value before key in chain file")
        fields[key].append(val)
    return fields


def _unit(v: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(v)
    if n == 0:
        raise ValueError("zero axis")
    return v / n


def default_chain() -> KinematicChain:
    from .data import default_chain_path

    return load_chain(default_chain_path())


def default_sphere_model() -> SphereModel:
    from .data import default_sphere_model_path

    return load_sphere_model(default_sphere_model_path())
