"""Problem sampling and an anytime bidirectional sampling-based planner.

Problems pair free-space and tight-space endpoints (tight: the end-effector
is driven into a scene sampling region via seeded inverse kinematics) and
carry an optional in-hand object. Planning is bidirectional RRT with
goal-biased uniform sampling, followed by anytime improvement (random
restarts plus straight-line shortcutting) that keeps the best path under the
inf-norm cost. All randomness flows from the config seed; the optional wall
clock budget is a safety cap that is off by default so repeated runs are
bit-identical.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .collision import (
    CollisionWorld,
    InHandObject,
    batch_collision,
    config_collision,
    edge_collision_free,
    interpolate_configs,
    sample_in_hand_object,
    attach_in_hand,
)
from .geometry import PointCloud
from .kinematics import (
    KinematicChain,
    Pose,
    SphereModel,
    forward_kinematics,
    inverse_kinematics,
    quat_from_axis_angle,
    quat_mul,
    quat_normalize,
)
from .scenegen import Scene

Z_AXIS = np.array([0.0, 0.0, 1.0])


class UnsampleableSceneError(RuntimeError):
    """No collision-free endpoint could be sampled for the scene."""


@dataclass
class PlannerConfig:
    step_size: float = 0.1            # inf-norm extension step, rad
    goal_bias: float = 0.05
    resolution: float = 0.01          # dense edge-check spacing, rad
    max_rrt_iters: int = 3000
    shortcut_iters: int = 120
    restarts: int = 1                 # anytime restarts after the first solution
    time_budget_s: Optional[float] = None   # wall-clock cap; None keeps runs deterministic
    allow_approximate: bool = False
    tight_ratio: float = 0.5
    in_hand_ratio: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.max_rrt_iters <= 0:
            raise ValueError("iteration budget must be positive")
        if not 0.0 <= self.goal_bias <= 1.0:
            raise ValueError("goal bias must be in [0, 1]")
        if self.time_budget_s is not None and self.time_budget_s <= 0:
            raise ValueError("time budget must be positive")


@dataclass
class PlanningProblem:
    start: np.ndarray
    goal: np.ndarray
    world: CollisionWorld
    in_hand: Optional[InHandObject] = None
    tight_start: bool = False
    tight_goal: bool = False
    scene_seed: int = 0


@dataclass
class RawPath:
    waypoints: np.ndarray          # (N, dof)
    cost: float
    approximate: bool = False


def path_cost(waypoints: np.ndarray) -> float:
    """Sum over segments of the inf-norm joint distance."""
    waypoints = np.atleast_2d(np.asarray(waypoints, dtype=float))
    if len(waypoints) < 2:
        return 0.0
    return float(np.sum(np.max(np.abs(np.diff(waypoints, axis=0)), axis=1)))


# ---------------------------------------------------------------------------
# problem sampling
# ---------------------------------------------------------------------------

def world_from_scene(scene: Scene, eps: float = 0.01) -> CollisionWorld:
    """Analytic collision world: every asset cuboid plus clutter bounding
    cuboids. Lets the planner run before any cloud exists."""
    boxes = scene.all_cuboids() + [c.obb for c in scene.clutter]
    return CollisionWorld(PointCloud.empty(), boxes, eps)


def _sample_free_config(world, chain, model, rng, in_hand, max_tries=1000):
    lim = chain.joint_limits
    for _ in range(max_tries):
        q = rng.uniform(lim[:, 0], lim[:, 1])
        colliding, _ = config_collision(world, chain, model, q, in_hand)
        if not colliding:
            return q
    raise UnsampleableSceneError("no collision-free configuration found")


def _reach_envelope(chain: KinematicChain) -> Tuple[np.ndarray, float]:
    """Crude reachability ball: the shoulder point (second joint frame at the
    rest config) and the stretched length of everything past it."""
    rest = chain.rest_config()
    poses, _ = forward_kinematics(chain, rest)
    pivot_idx = min(1, chain.dof - 1)
    shoulder = poses[pivot_idx].position
    arm_len = sum(float(np.linalg.norm(l.offset)) for l in chain.links[pivot_idx + 1:])
    arm_len += float(np.linalg.norm(chain.ee_offset))
    return shoulder, arm_len


def reachable_regions(scene: Scene, chain: KinematicChain) -> List[Tuple[np.ndarray, np.ndarray]]:
    """Sampling regions whose closest point lies inside the arm's reach ball."""
    shoulder, arm_len = _reach_envelope(chain)
    out = []
    for lo, hi in scene.sampling_regions():
        closest = np.clip(shoulder, lo, hi)
        if np.linalg.norm(closest - shoulder) <= arm_len * 0.95:
            out.append((lo, hi))
    return out


def _align_z_to(direction: np.ndarray) -> np.ndarray:
    """Quaternion mapping the local +z axis onto `direction` (unit)."""
    d = direction / np.linalg.norm(direction)
    c = float(np.clip(d @ Z_AXIS, -1.0, 1.0))
    if c > 1.0 - 1e-12:
        return np.array([1.0, 0.0, 0.0, 0.0])
    if c < -1.0 + 1e-12:
        return np.array([0.0, 1.0, 0.0, 0.0])
    axis = np.cross(Z_AXIS, d)
    axis = axis / np.linalg.norm(axis)
    return quat_from_axis_angle(axis, math.acos(c))


def _sample_tight_config(regions, world, chain, model, rng, in_hand, max_tries=60):
    """Sample an EE position inside a task-relevant region and solve seeded IK
    until a collision-free, in-region configuration appears.

    The approach axis points radially out from the shoulder (the orientation
    family IK can reach at rung depth) with random roll; positions hugging a
    wall are skipped before spending IK iterations on them.
    """
    rest = chain.rest_config()
    shoulder, arm_len = _reach_envelope(chain)
    r_eff = 0.93 * arm_len
    tries = 0
    while tries < max_tries:
        lo, hi = regions[int(rng.integers(0, len(regions)))]
        # bias positions away from region walls so the gripper body clears them
        margin = np.minimum(0.03, 0.25 * (hi - lo))
        pos = None
        for _ in range(20):
            cand = rng.uniform(lo + margin, hi - margin)
            if np.linalg.norm(cand - shoulder) <= r_eff:
                pos = cand
                break
        if pos is None:
            tries += 1
            continue
        if world.cuboid_sdf(pos[None, :])[0] < 0.045:
            tries += 1
            continue
        approach = pos - shoulder
        align = _align_z_to(approach)
        axis = approach / np.linalg.norm(approach)
        for _ in range(2):
            tries += 1
            roll = rng.uniform(-math.pi, math.pi)
            orient = quat_normalize(quat_mul(quat_from_axis_angle(axis, roll), align))
            sol = inverse_kinematics(chain, Pose(pos, orient), rest, max_iters=60)
            if sol is None:
                continue
            colliding, _ = config_collision(world, chain, model, sol, in_hand)
            if colliding:
                continue
            _, ee = forward_kinematics(chain, sol)
            if np.all(ee.position >= lo - 1e-6) and np.all(ee.position <= hi + 1e-6):
                return sol
    return None


def sample_problem(scene: Scene, chain: KinematicChain, model: SphereModel,
                   cfg: PlannerConfig, rng: np.random.Generator) -> PlanningProblem:
    """Draw a start/goal pair: each endpoint is tight-space with probability
    tight_ratio, free-space otherwise; an in-hand object is attached with
    probability in_hand_ratio.

    Scenes without reachable sampling regions (including empty scenes) fall
    back to free-space endpoints; a reachable region that defeats every IK
    attempt raises UnsampleableSceneError.
    """
    world = world_from_scene(scene)
    in_hand = None
    if rng.uniform() < cfg.in_hand_ratio:
        obj = sample_in_hand_object(rng)
        world, in_hand = attach_in_hand(world, obj, rng)

    regions = reachable_regions(scene, chain)
    configs = []
    tight_flags = []
    for _ in range(2):
        tight = bool(regions) and (rng.uniform() < cfg.tight_ratio)
        if tight:
            q = _sample_tight_config(regions, world, chain, model, rng, in_hand)
            if q is None:
                raise UnsampleableSceneError("tight-space sampling exhausted its attempts")
        else:
            q = _sample_free_config(world, chain, model, rng, in_hand)
        configs.append(q)
        tight_flags.append(tight)
    return PlanningProblem(configs[0], configs[1], world, in_hand,
                           tight_flags[0], tight_flags[1], scene.seed)


# ---------------------------------------------------------------------------
# bidirectional RRT with anytime improvement
# ---------------------------------------------------------------------------

class _Tree:
    def __init__(self, root: np.ndarray, capacity: int):
        self.configs = np.empty((capacity + 1, len(root)))
        self.parents = np.empty(capacity + 1, dtype=int)
        self.configs[0] = root
        self.parents[0] = -1
        self.size = 1

    def nearest(self, q: np.ndarray) -> int:
        d = np.max(np.abs(self.configs[:self.size] - q), axis=1)
        return int(np.argmin(d))

    def add(self, q: np.ndarray, parent: int) -> int:
        idx = self.size
        self.configs[idx] = q
        self.parents[idx] = parent
        self.size += 1
        return idx

    def path_to_root(self, idx: int) -> List[np.ndarray]:
        out = []
        while idx >= 0:
            out.append(self.configs[idx].copy())
            idx = self.parents[idx]
        return out


def _steer(q_from: np.ndarray, q_to: np.ndarray, step: float) -> np.ndarray:
    span = float(np.max(np.abs(q_to - q_from)))
    if span <= step:
        return q_to.copy()
    return q_from + (step / span) * (q_to - q_from)


def _dedupe(waypoints: List[np.ndarray]) -> np.ndarray:
    out = [waypoints[0]]
    for q in waypoints[1:]:
        if np.max(np.abs(q - out[-1])) > 1e-12:
            out.append(q)
    return np.array(out)


def _shortcut(waypoints: np.ndarray, world, chain, model, in_hand, rng,
              iters: int, resolution: float, deadline: Optional[float]) -> np.ndarray:
    """Straight-line shortcutting on the polyline: sample two points along the
    path (segment interiors included) and splice when collision-free and
    cost-reducing."""
    pts = waypoints
    for _ in range(iters):
        if deadline is not None and time.monotonic() > deadline:
            break
        if len(pts) < 3:
            break
        seg_lens = np.max(np.abs(np.diff(pts, axis=0)), axis=1)
        total = seg_lens.sum()
        if total <= 0:
            break
        s1, s2 = np.sort(rng.uniform(0.0, total, size=2))
        if s2 - s1 < 1e-9:
            continue
        i1, q1 = _point_at(pts, seg_lens, s1)
        i2, q2 = _point_at(pts, seg_lens, s2)
        if i2 <= i1 and np.max(np.abs(q2 - q1)) < 1e-12:
            continue
        candidate = np.vstack([pts[:i1 + 1], q1[None, :], q2[None, :], pts[i2 + 1:]])
        candidate = _dedupe(list(candidate))
        if path_cost(candidate) >= path_cost(pts) - 1e-12:
            continue
        if edge_collision_free(world, chain, model, q1, q2, resolution, in_hand):
            pts = candidate
    return pts


def _point_at(pts: np.ndarray, seg_lens: np.ndarray, s: float) -> Tuple[int, np.ndarray]:
    """Segment index and interpolated config at arc position s."""
    acc = 0.0
    for i, L in enumerate(seg_lens):
        if s <= acc + L or i == len(seg_lens) - 1:
            t = 0.0 if L == 0 else (s - acc) / L
            t = min(max(t, 0.0), 1.0)
            return i, pts[i] + t * (pts[i + 1] - pts[i])
        acc += L
    return len(seg_lens) - 1, pts[-1].copy()


def _birrt_connect(problem, chain, model, cfg, rng, iters, deadline):
    """One bidirectional RRT run. Returns a waypoint array or None."""
    world, in_hand = problem.world, problem.in_hand
    lim = chain.joint_limits
    ta = _Tree(problem.start, iters + 2)
    tb = _Tree(problem.goal, iters + 2)
    swapped = False
    for _ in range(iters):
        if deadline is not None and time.monotonic() > deadline:
            return None
        if rng.uniform() < cfg.goal_bias:
            q_rand = tb.configs[0].copy()
        else:
            q_rand = rng.uniform(lim[:, 0], lim[:, 1])
        # extend tree a toward the sample
        near_a = ta.nearest(q_rand)
        q_new = _steer(ta.configs[near_a], q_rand, cfg.step_size)
        if not edge_collision_free(world, chain, model, ta.configs[near_a], q_new,
                                   cfg.resolution, in_hand):
            ta, tb = tb, ta
            swapped = not swapped
            continue
        idx_a = ta.add(q_new, near_a)
        # greedily connect tree b to the new node
        near_b = tb.nearest(q_new)
        reached = False
        current = near_b
        while True:
            q_step = _steer(tb.configs[current], q_new, cfg.step_size)
            if not edge_collision_free(world, chain, model, tb.configs[current], q_step,
                                       cfg.resolution, in_hand):
                break
            current = tb.add(q_step, current)
            if np.max(np.abs(q_step - q_new)) < 1e-12:
                reached = True
                break
        if reached:
            path_a = ta.path_to_root(idx_a)[::-1]   # ta root .. q_new
            path_b = tb.path_to_root(current)       # q_new .. tb root
            pts = _dedupe(path_a + path_b[1:])
            if np.max(np.abs(pts[0] - problem.start)) > 1e-12:
                pts = pts[::-1].copy()
            return pts
        ta, tb = tb, ta
        swapped = not swapped
    return None


def certify_path(waypoints: np.ndarray, problem: PlanningProblem, chain, model,
                 resolution: float = 0.01) -> bool:
    """Independent dense recheck of every consecutive pair."""
    for a, b in zip(waypoints[:-1], waypoints[1:]):
        if not edge_collision_free(problem.world, chain, model, a, b, resolution, problem.in_hand):
            return False
    return True


def plan(problem: PlanningProblem, chain: KinematicChain, model: SphereModel,
         cfg: PlannerConfig) -> Optional[RawPath]:
    """Anytime bidirectional planning: first connection, then restarts and
    shortcutting keep the lowest inf-norm-cost path until the budget runs out.
    Returns None on failure (or an approximate path when allowed)."""
    rng = np.random.default_rng(cfg.seed)
    deadline = None if cfg.time_budget_s is None else time.monotonic() + cfg.time_budget_s

    for endpoint, name in ((problem.start, "start"), (problem.goal, "goal")):
        colliding, _ = config_collision(problem.world, chain, model, endpoint, problem.in_hand)
        if colliding:
            raise ValueError(f"problem {name} configuration is in collision")

    if np.max(np.abs(problem.goal - problem.start)) < 1e-12:
        return RawPath(np.vstack([problem.start, problem.goal]), 0.0, False)

    # straight-line connect is both the trivial-scene fast path and the
    # lower-bound incumbent
    best: Optional[np.ndarray] = None
    if edge_collision_free(problem.world, chain, model, problem.start, problem.goal,
                           cfg.resolution, problem.in_hand):
        best = np.vstack([problem.start, problem.goal])

    attempts = 1 + max(0, cfg.restarts)
    iters_per = max(50, cfg.max_rrt_iters // attempts)
    if best is None:
        for attempt in range(attempts):
            pts = _birrt_connect(problem, chain, model, cfg, rng, iters_per, deadline)
            if pts is not None:
                pts = _shortcut(pts, problem.world, chain, model, problem.in_hand, rng,
                                cfg.shortcut_iters, cfg.resolution, deadline)
                if best is None or path_cost(pts) < path_cost(best):
                    best = pts
            if deadline is not None and time.monotonic() > deadline:
                break
    else:
        best = _shortcut(best, problem.world, chain, model, problem.in_hand, rng,
                         cfg.shortcut_iters, cfg.resolution, deadline)

    if best is None:
        if not cfg.allow_approximate:
            return None
        # closest-approach fallback: plan toward the goal, keep the best leaf
        tree = _Tree(problem.start, cfg.max_rrt_iters + 2)
        lim = chain.joint_limits
        for _ in range(iters_per):
            q_rand = problem.goal if rng.uniform() < cfg.goal_bias else rng.uniform(lim[:, 0], lim[:, 1])
            near = tree.nearest(q_rand)
            q_new = _steer(tree.configs[near], q_rand, cfg.step_size)
            if edge_collision_free(problem.world, chain, model, tree.configs[near], q_new,
                                   cfg.resolution, problem.in_hand):
                tree.add(q_new, near)
            if deadline is not None and time.monotonic() > deadline:
                break
        leaf = tree.nearest(problem.goal)
        if leaf == 0:
            return None
        pts = _dedupe(tree.path_to_root(leaf)[::-1])
        pts = _shortcut(pts, problem.world, chain, model, problem.in_hand, rng,
                        cfg.shortcut_iters, cfg.resolution, deadline)
        if not certify_path(pts, problem, chain, model, cfg.resolution):
            return None
        return RawPath(pts, path_cost(pts), approximate=True)

    if not certify_path(best, problem, chain, model, cfg.resolution):
        # hard postcondition: a returned path is always certified
        return None
    return RawPath(best, path_cost(best), approximate=False)
