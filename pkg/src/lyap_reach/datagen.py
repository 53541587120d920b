"""Training-set generation: random start poses, controller-driven partial reaches,
and exact (V, u) labels under min-cLf selection."""
from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .controller import SymmetrySpec, TargetInstance, clf_gradient, clf_value, controls_for_targets, select_target
from .geometry import Pose, euler_zyx, vee
from .kinematics import KinematicChain, fk_and_jacobian, solve_joint_velocity
from .rng import substream
from .simulator import ExactController, RolloutConfig, Scene, TargetRegion, random_scene, rollout

log = logging.getLogger(__name__)

HOME_Q = (np.pi, -1.3, 1.7, -1.97, -1.5708, 0.0)
IK_TOL = 1e-6


@dataclass(frozen=True)
class SamplerConfig:
    start_min: tuple = (0.35, -0.25, 0.20)
    start_max: tuple = (0.70, 0.25, 0.50)
    # roll is measured from the straight-down orientation
    roll_bound: float = 0.6
    pitch_bound: float = 0.6
    yaw_bound: float = float(np.pi)
    tabletop_min: tuple = (0.15, -0.45)
    tabletop_max: tuple = (0.90, 0.45)
    table_height: float = 0.0
    t_max: float = 4.0
    n_scenes: int = 2000
    instances: tuple = (1, 2, 3)
    samples_per_scene: tuple = (3, 7)  # inclusive range, mean 5
    eval_fraction: float = 0.1
    home_q: tuple = HOME_Q
    ik_restarts: int = 100
    region: TargetRegion = field(default_factory=TargetRegion)

    def __post_init__(self):
        if np.any(np.asarray(self.start_min) > np.asarray(self.start_max)):
            raise ValueError("empty start box")
        if self.t_max <= 0:
            raise ValueError("t_max must be positive")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SamplerConfig":
        d = dict(d)
        if "region" in d and isinstance(d["region"], dict):
            d["region"] = TargetRegion(**{k: tuple(v) if isinstance(v, list) else v for k, v in d["region"].items()})
        return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in d.items()})


@dataclass(frozen=True, eq=False)
class Sample:
    scene: int
    q: np.ndarray
    target_poses: tuple
    selected_index: int
    V: float
    u: np.ndarray

    def to_json(self) -> str:
        return json.dumps({
            "scene": self.scene,
            "q": [float(x) for x in self.q],
            "targets": [p.to_list() for p in self.target_poses],
            "selected": self.selected_index,
            "V": float(self.V),
            "u": [float(x) for x in self.u],
        })

    @classmethod
    def from_json(cls, line: str) -> "Sample":
        d = json.loads(line)
        return cls(d["scene"], np.array(d["q"]), tuple(Pose.from_list(p) for p in d["targets"]),
                   d["selected"], d["V"], np.array(d["u"]))


def points_at_table(pose: Pose, cfg: SamplerConfig) -> bool:
    """Does the end-effector z axis hit the tabletop rectangle?"""
    z = pose.rotation[:, 2]
    if z[2] >= 0:
        return False
    s = (cfg.table_height - pose.translation[2]) / z[2]
    hit = pose.translation[:2] + s * z[:2]
    return bool(np.all(hit >= cfg.tabletop_min) and np.all(hit <= cfg.tabletop_max))


def solve_ik(chain: KinematicChain, goal: Pose, seed_q, max_iter: int = 60) -> np.ndarray | None:
    """Gauss-Newton on the plain (symmetry-free) cLf towards ``goal``.

    Returns None unless the residual ``||T_H - T_goal||_F`` drops below IK_TOL.
    """
    target = TargetInstance(goal, SymmetrySpec.none())
    q = np.asarray(seed_q, dtype=float).copy()
    lo, hi = chain.joint_limits[:, 0], chain.joint_limits[:, 1]
    prev = np.inf
    for it in range(max_iter):
        T_H, J = fk_and_jacobian(chain, q)
        resid = np.linalg.norm(T_H.matrix() - goal.matrix())
        if resid < IK_TOL:
            return q
        # near the solution convergence is quadratic; a stalled residual won't recover
        if it >= 20 and resid > 0.5 * prev:
            return None
        prev = resid
        _, goal_star = clf_value(T_H, target)
        step = solve_joint_velocity(J, vee(clf_gradient(T_H, goal_star))).qdot
        q = q - step
        if not chain.within_limits(q):
            return None
    return None


def ik_seed(chain: KinematicChain, home, goal: Pose) -> np.ndarray:
    """Home configuration with base and wrist turned towards the goal's azimuth and yaw."""
    from .kinematics import forward_kinematics

    seed = np.asarray(home, dtype=float).copy()
    T0 = forward_kinematics(chain, seed)
    dphi = np.arctan2(goal.translation[1], goal.translation[0]) - np.arctan2(T0.translation[1], T0.translation[0])
    seed[0] += dphi
    T1 = forward_kinematics(chain, seed)
    rel = T1.rotation.T @ goal.rotation
    seed[5] += np.arctan2(rel[1, 0], rel[0, 0])
    return seed


def propose_start_pose(cfg: SamplerConfig, rng: np.random.Generator) -> Pose:
    """Uniform position in the start box with bounded Euler angles around straight-down,
    orientation resampled until the tool points at the table."""
    p = rng.uniform(np.asarray(cfg.start_min), np.asarray(cfg.start_max))
    while True:
        roll = np.pi + rng.uniform(-cfg.roll_bound, cfg.roll_bound)
        pitch = rng.uniform(-cfg.pitch_bound, cfg.pitch_bound)
        yaw = rng.uniform(-cfg.yaw_bound, cfg.yaw_bound)
        pose = Pose(euler_zyx(roll, pitch, yaw), p)
        if points_at_table(pose, cfg):
            return pose


def sample_start_pose(chain: KinematicChain, cfg: SamplerConfig, rng: np.random.Generator) -> tuple[Pose, np.ndarray]:
    """A proposed start pose together with joint angles reaching it; proposals
    whose IK fails after ``ik_restarts`` perturbed seeds are discarded."""
    home = np.asarray(cfg.home_q, dtype=float)
    while True:
        pose = propose_start_pose(cfg, rng)
        base_seed = ik_seed(chain, home, pose)
        for attempt in range(cfg.ik_restarts):
            seed = base_seed if attempt == 0 else base_seed + rng.normal(0.0, 0.3, 6)
            q = solve_ik(chain, pose, seed)
            if q is not None:
                return pose, q
        log.debug("IK failed at %s after %d restarts; resampling", pose.translation, cfg.ik_restarts)


def label(chain: KinematicChain, q, targets) -> tuple[int, float, np.ndarray]:
    outs = controls_for_targets(chain, q, targets)
    k = select_target(outs)
    return k, outs[k].clf_value, outs[k].u


def scene_samples(chain: KinematicChain, cfg: SamplerConfig, seed: int, scene_idx: int) -> list[Sample]:
    rng = substream(seed, "datagen", scene_idx)
    n_inst = int(rng.choice(cfg.instances))
    scene = random_scene(n_inst, rng, cfg.region, seed=scene_idx)
    n_samples = int(rng.integers(cfg.samples_per_scene[0], cfg.samples_per_scene[1] + 1))
    ctrl = ExactController(chain)
    out = []
    for _ in range(n_samples):
        _, q0 = sample_start_pose(chain, cfg, rng)
        goal = int(rng.integers(n_inst))
        duration = rng.uniform(0.0, cfg.t_max)
        q = q0
        n_steps = int(round(duration / RolloutConfig.dt))
        if n_steps > 0:
            single = Scene([scene.targets[goal]], rng_seed=scene_idx)
            rc = RolloutConfig(max_steps=n_steps, eta=0.0, stall_speed=0.0)
            q = rollout(chain, single, ctrl, rc, q0).steps[-1].q
        k, V, u = label(chain, q, scene.targets)
        out.append(Sample(scene_idx, q, tuple(t.goal_pose for t in scene.targets), k, V, u))
    return out


def split_scenes(n_scenes: int, eval_fraction: float, seed: int) -> tuple[set, set]:
    rng = substream(seed, "split")
    perm = rng.permutation(n_scenes)
    n_eval = int(round(eval_fraction * n_scenes))
    return set(perm[n_eval:].tolist()), set(perm[:n_eval].tolist())


def generate_dataset(chain: KinematicChain, cfg: SamplerConfig, seed: int) -> tuple[list[Sample], list[Sample]]:
    train_ids, eval_ids = split_scenes(cfg.n_scenes, cfg.eval_fraction, seed)
    train, evals = [], []
    for i in range(cfg.n_scenes):
        try:
            samples = scene_samples(chain, cfg, seed, i)
        except (ValueError, np.linalg.LinAlgError) as exc:
            log.warning("scene %d skipped: %s", i, exc)
            continue
        (evals if i in eval_ids else train).extend(samples)
    return train, evals


def write_jsonl(samples, path) -> None:
    with open(path, "w") as f:
        for s in samples:
            f.write(s.to_json() + "\n")


def read_jsonl(path) -> list[Sample]:
    with open(path) as f:
        return [Sample.from_json(line) for line in f if line.strip()]


def config_hash(d: dict) -> str:
    return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]


def write_dataset(out_dir, train, evals, cfg: SamplerConfig, seed: int) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_jsonl(train, out / "train.jsonl")
    write_jsonl(evals, out / "eval.jsonl")
    return {
        "train_samples": len(train),
        "eval_samples": len(evals),
        "train_scenes": len({s.scene for s in train}),
        "eval_scenes": len({s.scene for s in evals}),
        "seed": seed,
        "config_hash": config_hash(cfg.to_dict()),
    }
