"""Symmetry-aware control Lyapunov function (cLf) and the velocity controller built on it.

The cLf of an end-effector pose ``T_H`` against a target ``T_i`` is

    V = 1/2 || T_H - T_i T_G* ||_F^2

where ``T_G*`` is the rotation in the target's symmetry set closest to ``R_i^T R_H``
(zero translation). Its se(3) gradient is ``proj(T_H^T (T_H - T_i T_G*))`` and the
joint velocity ``u = -J^-1 vee(grad)`` gives ``dV/dt = -||grad||_F^2``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .geometry import Pose, proj_se3, rot_about_axis, rot_z, vee, ROT_TOL
from .kinematics import KinematicChain, fk_and_jacobian, solve_joint_velocity

# Flattening tr(hat(a)^T hat(b)) into a^T Q b: the skew block counts each omega entry twice.
Q = np.diag([2.0, 2.0, 2.0, 1.0, 1.0, 1.0])
TIE_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class SymmetrySpec:
    kind: str = "continuous_axis"
    axis: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 1.0]))
    elements: tuple = ()

    def __post_init__(self):
        if self.kind == "continuous_axis":
            axis = np.asarray(self.axis, dtype=float).reshape(3)
            if abs(np.linalg.norm(axis) - 1.0) > ROT_TOL:
                raise ValueError("symmetry axis must be a unit vector")
            object.__setattr__(self, "axis", axis)
            object.__setattr__(self, "_basis", _basis_for_axis(axis))
        elif self.kind == "discrete":
            els = tuple(np.asarray(E, dtype=float).reshape(3, 3) for E in self.elements)
            if not els:
                raise ValueError("discrete symmetry needs at least the identity")
            for E in els:
                if not Pose(E, np.zeros(3)).is_valid():
                    raise ValueError("discrete symmetry element is not a rotation")
            if not any(np.allclose(E, np.eye(3), atol=ROT_TOL) for E in els):
                raise ValueError("discrete symmetry set must contain the identity")
            object.__setattr__(self, "elements", els)
        else:
            raise ValueError(f"unknown symmetry kind {self.kind!r}")

    @classmethod
    def none(cls) -> "SymmetrySpec":
        return cls(kind="discrete", elements=(np.eye(3),))

    def to_dict(self) -> dict:
        if self.kind == "continuous_axis":
            return {"kind": self.kind, "axis": [float(x) for x in self.axis]}
        return {"kind": self.kind, "elements": [[float(x) for x in E.ravel()] for E in self.elements]}

    @classmethod
    def from_dict(cls, d: dict) -> "SymmetrySpec":
        if d["kind"] == "continuous_axis":
            return cls(kind="continuous_axis", axis=np.asarray(d["axis"], dtype=float))
        return cls(kind="discrete", elements=tuple(np.asarray(E, dtype=float).reshape(3, 3) for E in d["elements"]))


def _basis_for_axis(axis: np.ndarray) -> np.ndarray:
    """A rotation B with B @ e_z = axis."""
    z = axis
    helper = np.array([1.0, 0.0, 0.0]) if abs(z[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    x = helper - z * (helper @ z)
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    return np.column_stack([x, y, z])


@dataclass(frozen=True, eq=False)
class TargetInstance:
    goal_pose: Pose
    symmetry: SymmetrySpec = field(default_factory=SymmetrySpec)

    def to_dict(self) -> dict:
        return {"pose": self.goal_pose.to_list(), "symmetry": self.symmetry.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "TargetInstance":
        sym = SymmetrySpec.from_dict(d["symmetry"]) if "symmetry" in d else SymmetrySpec()
        return cls(Pose.from_list(d["pose"]), sym)


@dataclass(frozen=True, eq=False)
class ControlOutput:
    clf_value: float
    u: np.ndarray
    grad: np.ndarray
    optimal_goal: Pose
    damped: bool = False


@dataclass(frozen=True, eq=False)
class MomentumState:
    u_bar: np.ndarray
    eta: float = 0.6

    def __post_init__(self):
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError("momentum eta must lie in [0, 1]")


def optimal_symmetry_rotation(R_H: np.ndarray, R_i: np.ndarray, sym: SymmetrySpec):
    """Element of the symmetry set minimising ||R_H - R_i E||_F.

    Returns ``(E, angle)`` for a continuous axis and ``(E, index)`` for a discrete set.
    """
    if sym.kind == "continuous_axis":
        B = sym._basis
        M = B.T @ R_i.T @ R_H @ B
        phi = float(np.arctan2(M[1, 0] - M[0, 1], M[0, 0] + M[1, 1]))
        return B @ rot_z(phi) @ B.T, phi
    costs = np.array([np.linalg.norm(R_H - R_i @ E) for E in sym.elements])
    # rounding noise must not break ties: the lowest index within TIE_TOL wins
    k = int(np.flatnonzero(costs <= costs.min() + TIE_TOL)[0])
    return sym.elements[k], k


def clf_value(T_H: Pose, target: TargetInstance) -> tuple[float, Pose]:
    R_i = target.goal_pose.rotation
    E, _ = optimal_symmetry_rotation(T_H.rotation, R_i, target.symmetry)
    goal = Pose(R_i @ E, target.goal_pose.translation)
    dR = T_H.rotation - goal.rotation
    dt = T_H.translation - goal.translation
    V = 0.5 * (float(np.sum(dR * dR)) + float(dt @ dt))
    return V, goal


def clf_gradient(T_H: Pose, T_G_star: Pose) -> np.ndarray:
    """proj_se3(T_H^T (T_H - T_G*)), written blockwise: the bottom row of the
    difference is zero, so only R_H^T dR and R_H^T dt survive."""
    RtH = T_H.rotation.T
    A = RtH @ (T_H.rotation - T_G_star.rotation)
    G = np.zeros((4, 4))
    G[:3, :3] = 0.5 * (A - A.T)
    G[:3, 3] = RtH @ (T_H.translation - T_G_star.translation)
    return G


def _vee_unchecked(G: np.ndarray) -> np.ndarray:
    return np.array([G[2, 1], G[0, 2], G[1, 0], G[0, 3], G[1, 3], G[2, 3]])


def velocity_control(chain: KinematicChain, q, target: TargetInstance, kin=None) -> ControlOutput:
    """``kin`` may carry a precomputed ``(pose, J)`` for ``q``."""
    T_H, J = kin if kin is not None else fk_and_jacobian(chain, q)
    V, goal = clf_value(T_H, target)
    grad = clf_gradient(T_H, goal)
    sol = solve_joint_velocity(J, vee(grad))
    return ControlOutput(V, -sol.qdot, grad, goal, sol.damped)


def controls_for_targets(chain: KinematicChain, q, targets: Sequence[TargetInstance]) -> list[ControlOutput]:
    """velocity_control for every target, sharing one FK/Jacobian evaluation and one solve."""
    T_H, J = fk_and_jacobian(chain, q)
    vals, goals, grads = [], [], []
    for t in targets:
        V, goal = clf_value(T_H, t)
        vals.append(V)
        goals.append(goal)
        grads.append(clf_gradient(T_H, goal))
    if not grads:
        return []
    sol = solve_joint_velocity(J, np.column_stack([_vee_unchecked(g) for g in grads]))
    U = -sol.qdot
    return [ControlOutput(V, U[:, k].copy(), g, goal, sol.damped)
            for k, (V, g, goal) in enumerate(zip(vals, grads, goals))]


def clf_of_joints(chain: KinematicChain, target: TargetInstance) -> Callable[[np.ndarray], float]:
    from .kinematics import forward_kinematics

    return lambda q: clf_value(forward_kinematics(chain, q), target)[0]


def differential_residual(chain: KinematicChain, q, u, V_fn: Callable[[np.ndarray], float],
                          dtheta: float, i: int, J: np.ndarray | None = None) -> float:
    """r_i = e_i^T J^T Q J u + (V(q + dtheta e_i) - V(q)) / dtheta."""
    if dtheta == 0:
        raise ValueError("dtheta must be nonzero")
    q = np.asarray(q, dtype=float)
    if J is None:
        J = fk_and_jacobian(chain, q)[1]
    qp = q.copy()
    qp[i] += dtheta
    lin = (J.T @ Q @ J @ np.asarray(u, dtype=float))[i]
    return float(lin + (V_fn(qp) - V_fn(q)) / dtheta)


def select_target(values: Sequence) -> int:
    """Index of the minimum cLf; ties go to the lowest index.

    Accepts ControlOutput objects or plain numbers.
    """
    if len(values) == 0:
        raise ValueError("select_target needs at least one candidate")
    vals = [v.clf_value if isinstance(v, ControlOutput) else float(v) for v in values]
    return int(np.argmin(vals))


def momentum_step(state: MomentumState, u_hat) -> MomentumState:
    u_bar = state.eta * state.u_bar + (1.0 - state.eta) * np.asarray(u_hat, dtype=float)
    return MomentumState(u_bar, state.eta)
