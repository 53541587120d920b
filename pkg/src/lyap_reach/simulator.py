"""Kinematic closed-loop reaching: multi-instance scenes, phantom (false-positive)
targets, explicit-Euler rollouts and grasp adjudication."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, asdict
from typing import Protocol, Sequence

import numpy as np

from .controller import (
    MomentumState,
    SymmetrySpec,
    TargetInstance,
    clf_value,
    controls_for_targets,
    momentum_step,
    select_target,
)
from .geometry import Pose, rot_x, rot_z
from .kinematics import KinematicChain, forward_kinematics

MAX_TARGETS = 4


@dataclass(frozen=True, eq=False)
class Scene:
    targets: tuple
    workspace_min: np.ndarray = field(default_factory=lambda: np.array([0.30, -0.30, 0.0]))
    workspace_max: np.ndarray = field(default_factory=lambda: np.array([0.75, 0.30, 0.55]))
    table_height: float = 0.0
    rng_seed: int = 0
    max_targets: int = MAX_TARGETS

    def __post_init__(self):
        object.__setattr__(self, "targets", tuple(self.targets))
        lo = np.asarray(self.workspace_min, dtype=float)
        hi = np.asarray(self.workspace_max, dtype=float)
        object.__setattr__(self, "workspace_min", lo)
        object.__setattr__(self, "workspace_max", hi)
        if not 1 <= len(self.targets) <= self.max_targets:
            raise ValueError(f"scene needs 1..{self.max_targets} targets, got {len(self.targets)}")
        if np.any(lo > hi):
            raise ValueError("workspace min exceeds max")
        for t in self.targets:
            p = t.goal_pose.translation
            if np.any(p < lo - 1e-12) or np.any(p > hi + 1e-12):
                raise ValueError(f"target at {p} lies outside the workspace")
            if not t.goal_pose.is_valid():
                raise ValueError("target pose is not a valid rigid transform")

    def to_dict(self) -> dict:
        return {
            "targets": [t.to_dict() for t in self.targets],
            "workspace": {"min": self.workspace_min.tolist(), "max": self.workspace_max.tolist()},
            "table_height": self.table_height,
            "seed": self.rng_seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Scene":
        kw = {"targets": [TargetInstance.from_dict(t) for t in d["targets"]]}
        if "workspace" in d:
            kw["workspace_min"] = d["workspace"]["min"]
            kw["workspace_max"] = d["workspace"]["max"]
        if "table_height" in d:
            kw["table_height"] = float(d["table_height"])
        if "seed" in d:
            kw["rng_seed"] = int(d["seed"])
        return cls(**kw)


def load_scene(path) -> Scene:
    with open(path) as f:
        return Scene.from_dict(json.load(f))


def save_scene(scene: Scene, path) -> None:
    with open(path, "w") as f:
        json.dump(scene.to_dict(), f, indent=2)


@dataclass(frozen=True)
class TargetRegion:
    """Where random mugs are placed: an x/y rectangle at a fixed grasp height,
    frames pointing down (z axis along the mug axis) with random yaw."""

    xy_min: tuple = (0.35, -0.20)
    xy_max: tuple = (0.65, 0.20)
    height: float = 0.12
    min_separation: float = 0.10


def target_pose_down(x: float, y: float, z: float, yaw: float) -> Pose:
    return Pose(rot_x(np.pi) @ rot_z(yaw), [x, y, z])


def random_scene(n_targets: int, rng: np.random.Generator, region: TargetRegion = TargetRegion(),
                 seed: int = 0) -> Scene:
    """Identical z-symmetric targets, pairwise at least ``min_separation`` apart."""
    pts: list[np.ndarray] = []
    targets = []
    while len(targets) < n_targets:
        xy = rng.uniform(region.xy_min, region.xy_max)
        yaw = rng.uniform(-np.pi, np.pi)
        if any(np.linalg.norm(xy - p) < region.min_separation for p in pts):
            continue
        pts.append(xy)
        targets.append(TargetInstance(target_pose_down(xy[0], xy[1], region.height, yaw), SymmetrySpec()))
    return Scene(targets, rng_seed=seed)


@dataclass(frozen=True)
class RolloutConfig:
    dt: float = 0.02  # 50 Hz control loop
    max_steps: int = 1000
    gain: float = 1.0
    eta: float = 0.6
    convergence_V: float = 5e-5
    success_pos_tol: float = 0.012
    success_V_tol: float = 1e-3
    stall_speed: float = 1e-3
    singular_patience: int = 50

    def __post_init__(self):
        if self.dt <= 0 or self.max_steps <= 0 or self.gain <= 0:
            raise ValueError("dt, max_steps and gain must be positive")
        if min(self.convergence_V, self.success_pos_tol, self.success_V_tol) <= 0:
            raise ValueError("tolerances must be positive")
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError("eta must lie in [0, 1]")


@dataclass(frozen=True)
class FalsePositiveInjector:
    spawn_probability: float = 0.0
    lifetime: int = 10
    clf_bias: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.spawn_probability <= 1.0:
            raise ValueError("spawn_probability must lie in [0, 1]")
        if self.lifetime < 1:
            raise ValueError("phantom lifetime must be at least one step")


@dataclass(frozen=True, eq=False)
class Phantom:
    ident: int
    target: TargetInstance
    bias: float


def inject_false_positives(scene: Scene, injector: FalsePositiveInjector, rng: np.random.Generator,
                           n_steps: int) -> list[list[Phantom]]:
    """Per-step list of live phantom targets.

    The schedule is drawn up front so it depends only on ``rng``, never on the
    arm's motion: paired runs with different controllers see the same phantoms.
    Phantom ids start after the real target indices.
    """
    if injector.spawn_probability == 0.0:
        return [[] for _ in range(n_steps)]
    height = float(scene.targets[0].goal_pose.translation[2])
    lo, hi = scene.workspace_min[:2], scene.workspace_max[:2]
    live: list[tuple[int, Phantom]] = []
    schedule = []
    next_id = len(scene.targets)
    for step in range(n_steps):
        live = [(end, ph) for end, ph in live if end > step]
        if rng.random() < injector.spawn_probability:
            xy = rng.uniform(lo, hi)
            yaw = rng.uniform(-np.pi, np.pi)
            tgt = TargetInstance(target_pose_down(xy[0], xy[1], height, yaw), SymmetrySpec())
            live.append((step + injector.lifetime, Phantom(next_id, tgt, injector.clf_bias)))
            next_id += 1
        schedule.append([ph for _, ph in live])
    return schedule


class Evaluation(Protocol):
    V: np.ndarray
    U: np.ndarray
    damped: bool


class ControlProvider(Protocol):
    exact: bool

    def __call__(self, q: np.ndarray, targets: Sequence[TargetInstance]) -> "ProviderOutput": ...


@dataclass(frozen=True, eq=False)
class ProviderOutput:
    V: np.ndarray
    U: np.ndarray
    damped: bool = False


class ExactController:
    """The full-state cLf controller as a per-target control provider."""

    exact = True

    def __init__(self, chain: KinematicChain):
        self.chain = chain

    def __call__(self, q, targets) -> ProviderOutput:
        outs = controls_for_targets(self.chain, q, targets)
        return ProviderOutput(
            np.array([o.clf_value for o in outs]),
            np.array([o.u for o in outs]).reshape(len(outs), 6),
            bool(outs and outs[0].damped),
        )


@dataclass(frozen=True, eq=False)
class StepRecord:
    t: float
    q: np.ndarray
    selected_target: int
    V: float
    u_raw: np.ndarray
    u_filtered: np.ndarray
    candidates: tuple
    V_all: np.ndarray
    damped: bool = False
    limit_hit: bool = False


@dataclass(frozen=True)
class Outcome:
    kind: str  # success | failure | timeout | singular_abort
    target: int | None = None

    @property
    def success(self) -> bool:
        return self.kind == "success"


@dataclass(eq=False)
class Trajectory:
    steps: list
    outcome: Outcome
    n_real: int

    @property
    def switch_count(self) -> int:
        sel = [s.selected_target for s in self.steps]
        return sum(a != b for a, b in zip(sel, sel[1:]))

    def V_series(self) -> np.ndarray:
        return np.array([s.V for s in self.steps])

    def u_norm_series(self) -> np.ndarray:
        return np.array([np.linalg.norm(s.u_filtered) for s in self.steps])


def adjudicate_success(chain: KinematicChain, q_final, scene: Scene, target: int,
                       config: RolloutConfig) -> Outcome:
    """One grasp attempt at ``q_final`` on target ``target``. Phantoms (ids past the
    real targets) have nothing to grasp."""
    if target >= len(scene.targets):
        return Outcome("failure", target)
    T_H = forward_kinematics(chain, q_final)
    tgt = scene.targets[target]
    V, _ = clf_value(T_H, tgt)
    dpos = np.linalg.norm(T_H.translation - tgt.goal_pose.translation)
    if dpos < config.success_pos_tol and V < config.success_V_tol:
        return Outcome("success", target)
    return Outcome("failure", target)


def rollout(chain: KinematicChain, scene: Scene, controller: ControlProvider, config: RolloutConfig,
            q0, phantoms: list[list[Phantom]] | None = None) -> Trajectory:
    """Closed-loop reach from ``q0``.

    Each step evaluates every real and phantom target, executes the momentum-filtered
    control of the minimum-cLf candidate and integrates the joints with explicit Euler.
    Stops once the arm is physically at the selected target (cLf below
    ``convergence_V``), when it has settled (``|u_bar| < stall_speed``), after
    ``max_steps`` or after ``singular_patience`` consecutive damped solves.
    """
    q = np.asarray(q0, dtype=float).copy()
    if q.shape != (6,) or not chain.within_limits(q):
        raise ValueError("initial joint state invalid or outside joint limits")
    n_real = len(scene.targets)
    mom = MomentumState(np.zeros(6), config.eta)
    steps: list[StepRecord] = []
    damped_run = 0
    limit_hit = False
    for k in range(config.max_steps):
        live = phantoms[k] if phantoms is not None and k < len(phantoms) else []
        cands = list(scene.targets) + [p.target for p in live]
        ids = tuple(range(n_real)) + tuple(p.ident for p in live)
        ev = controller(q, cands)
        V_rep = ev.V.copy()
        for j, p in enumerate(live):
            V_rep[n_real + j] += p.bias
        sel = select_target(V_rep)
        mom = momentum_step(mom, ev.U[sel])
        steps.append(StepRecord(k * config.dt, q.copy(), ids[sel], float(V_rep[sel]), ev.U[sel].copy(),
                                mom.u_bar.copy(), ids, V_rep, ev.damped, limit_hit))
        damped_run = damped_run + 1 if ev.damped else 0
        if damped_run >= config.singular_patience:
            return Trajectory(steps, Outcome("singular_abort", ids[sel]), n_real)

        if controller.exact and sel < n_real:
            true_V = float(ev.V[sel])
        else:
            true_V = clf_value(forward_kinematics(chain, q), cands[sel])[0]
        if true_V < config.convergence_V:
            return Trajectory(steps, adjudicate_success(chain, q, scene, ids[sel], config), n_real)
        if k > 0 and np.linalg.norm(mom.u_bar) < config.stall_speed:
            return Trajectory(steps, adjudicate_success(chain, q, scene, ids[sel], config), n_real)

        q_next = q + config.dt * config.gain * mom.u_bar
        lo, hi = chain.joint_limits[:, 0], chain.joint_limits[:, 1]
        out = (q_next < lo) | (q_next > hi)
        limit_hit = bool(out.any())
        if limit_hit:
            # freeze offending joints for this step
            q_next[out] = q[out]
        q = q_next
    last = steps[-1].selected_target
    final = adjudicate_success(chain, steps[-1].q, scene, last, config)
    return Trajectory(steps, final if final.success else Outcome("timeout", last), n_real)


TRAJ_HEADER = (["t"] + [f"q{i}" for i in range(1, 7)] + ["target_idx", "V"]
               + [f"u{i}" for i in range(1, 7)] + [f"ubar{i}" for i in range(1, 7)])


def write_trajectory_csv(traj: Trajectory, path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(TRAJ_HEADER)
        for s in traj.steps:
            w.writerow([repr(float(s.t))] + [repr(float(x)) for x in s.q] + [s.selected_target, repr(float(s.V))]
                       + [repr(float(x)) for x in s.u_raw] + [repr(float(x)) for x in s.u_filtered])


def read_trajectory_csv(path) -> dict[str, np.ndarray]:
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    if not rows or rows[0] != TRAJ_HEADER:
        raise ValueError(f"{path}: not a trajectory file")
    data = np.array(rows[1:], dtype=float).reshape(-1, len(TRAJ_HEADER))
    return {name: data[:, i] for i, name in enumerate(TRAJ_HEADER)}


def config_dict(cfg) -> dict:
    return asdict(cfg)
