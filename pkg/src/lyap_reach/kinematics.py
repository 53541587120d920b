"""Forward kinematics and body Jacobian of a 6-DoF revolute arm (standard DH)."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .geometry import Pose

SIGMA_TOL = 1e-4
DAMPING = 0.01


@dataclass(frozen=True, eq=False)
class KinematicChain:
    """DH rows are ``(a, d, alpha, theta_offset)``; ``tool`` maps flange -> end-effector."""

    dh: np.ndarray
    joint_limits: np.ndarray = field(
        default_factory=lambda: np.tile([-2 * np.pi, 2 * np.pi], (6, 1))
    )
    tool: Pose = field(default_factory=Pose.identity)

    def __post_init__(self):
        dh = np.asarray(self.dh, dtype=float)
        lim = np.asarray(self.joint_limits, dtype=float)
        if dh.shape != (6, 4):
            raise ValueError(f"need exactly 6 revolute joints as a 6x4 DH table, got {dh.shape}")
        if lim.shape != (6, 2) or np.any(lim[:, 0] >= lim[:, 1]):
            raise ValueError("joint limits must be 6 (lo, hi) pairs with lo < hi")
        object.__setattr__(self, "dh", dh)
        object.__setattr__(self, "joint_limits", lim)
        object.__setattr__(self, "_dh_rows", [tuple(r) for r in dh.tolist()])

    def within_limits(self, q) -> bool:
        q = np.asarray(q)
        return bool(np.all(q >= self.joint_limits[:, 0]) and np.all(q <= self.joint_limits[:, 1]))

    def clamp(self, q) -> np.ndarray:
        return np.clip(q, self.joint_limits[:, 0], self.joint_limits[:, 1])

    def to_dict(self) -> dict:
        return {
            "dh": self.dh.tolist(),
            "joint_limits": self.joint_limits.tolist(),
            "tool": self.tool.to_list(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "KinematicChain":
        kw = {"dh": d["dh"]}
        if "joint_limits" in d:
            kw["joint_limits"] = d["joint_limits"]
        if "tool" in d:
            kw["tool"] = Pose.from_list(d["tool"])
        return cls(**kw)


def load_chain(path) -> KinematicChain:
    with open(path) as f:
        return KinematicChain.from_dict(json.load(f))


def ur5_chain() -> KinematicChain:
    """The bundled UR5 parameter file."""
    text = resources.files("lyap_reach").joinpath("data/ur5.json").read_text()
    return KinematicChain.from_dict(json.loads(text))


def ur5_chain_path() -> Path:
    return Path(str(resources.files("lyap_reach").joinpath("data/ur5.json")))


def _check(chain: KinematicChain, q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if q.shape != (6,):
        raise ValueError(f"joint state must have 6 entries, got shape {q.shape}")
    if not (np.all(q >= chain.joint_limits[:, 0]) and np.all(q <= chain.joint_limits[:, 1])):
        raise ValueError("joint state outside joint limits")
    return q


def _frames(chain: KinematicChain, q: np.ndarray):
    """Cumulative base->frame_i rotations and origins, i = 0..6, as nested float tuples.

    Scalar arithmetic: for 4x4 products numpy call overhead dominates.
    """
    R = ((1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0))
    p = (0.0, 0.0, 0.0)
    Rs, ps = [R], [p]
    cos, sin = math.cos, math.sin
    for (a, d, alpha, off), th in zip(chain._dh_rows, q.tolist()):
        th = th + off
        ct, st = cos(th), sin(th)
        ca, sa = cos(alpha), sin(alpha)
        c1x, c1y = -st * ca, ct * ca
        c2x, c2y = st * sa, -ct * sa
        tx, ty = a * ct, a * st
        rows = []
        pn = []
        for r, pk in zip(R, p):
            r0, r1, r2 = r
            rows.append((r0 * ct + r1 * st,
                         r0 * c1x + r1 * c1y + r2 * sa,
                         r0 * c2x + r1 * c2y + r2 * ca))
            pn.append(r0 * tx + r1 * ty + r2 * d + pk)
        R = tuple(rows)
        p = tuple(pn)
        Rs.append(R)
        ps.append(p)
    return Rs, ps


def _end_effector(chain: KinematicChain, R6, p6) -> tuple[np.ndarray, np.ndarray]:
    R6 = np.array(R6)
    return R6 @ chain.tool.rotation, R6 @ chain.tool.translation + np.array(p6)


def forward_kinematics(chain: KinematicChain, q) -> Pose:
    q = _check(chain, q)
    Rs, ps = _frames(chain, q)
    R, p = _end_effector(chain, Rs[-1], ps[-1])
    return Pose(R, p)


def fk_and_jacobian(chain: KinematicChain, q) -> tuple[Pose, np.ndarray]:
    """End-effector pose and the body Jacobian in one pass.

    Rows of J are (omega, v) of the end-effector expressed in its own frame.
    """
    q = _check(chain, q)
    Rs, ps = _frames(chain, q)
    R, p = _end_effector(chain, Rs[-1], ps[-1])
    ex, ey, ez = p.tolist()
    # joint i turns about the z axis of frame i-1
    cols = []
    for Ri, (px, py, pz) in zip(Rs[:6], ps[:6]):
        zx, zy, zz = Ri[0][2], Ri[1][2], Ri[2][2]
        dx, dy, dz = ex - px, ey - py, ez - pz
        cols.append((zx, zy, zz, zy * dz - zz * dy, zz * dx - zx * dz, zx * dy - zy * dx))
    Js = np.array(cols).T
    J = np.empty((6, 6))
    J[:3] = R.T @ Js[:3]
    J[3:] = R.T @ Js[3:]
    return Pose(R, p), J


def body_jacobian(chain: KinematicChain, q) -> np.ndarray:
    return fk_and_jacobian(chain, q)[1]


class JointVelocity(NamedTuple):
    qdot: np.ndarray
    damped: bool


def solve_joint_velocity(J: np.ndarray, twist, sigma_tol: float = SIGMA_TOL,
                         damping: float = DAMPING) -> JointVelocity:
    """Exact J^-1 twist when J is well conditioned, damped least squares otherwise.

    ``twist`` may be a 6-vector or a 6xk matrix of stacked twists.
    """
    twist = np.asarray(twist, dtype=float)
    smin = np.linalg.svd(J, compute_uv=False)[-1]
    if smin >= sigma_tol:
        return JointVelocity(np.linalg.solve(J, twist), False)
    A = J @ J.T + damping ** 2 * np.eye(J.shape[0])
    return JointVelocity(J.T @ np.linalg.solve(A, twist), True)
