"""Regression loss, the Siamese finite-difference differential loss, and their
joint parameter gradient."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..controller import Q
from ..kinematics import KinematicChain, body_jacobian
from ..metrics import differential_residuals
from .model import Regressor


@dataclass(frozen=True)
class LossWeights:
    lambda_V: float = 0.2
    lambda_u: float = 1.0
    lambda_diff: float = 0.1
    # presence-score weights: kept for completeness, nothing here detects objects
    lambda_obj: float = 0.8
    lambda_no_obj: float = 0.08

    def __post_init__(self):
        if min(self.lambda_V, self.lambda_u, self.lambda_diff, self.lambda_obj, self.lambda_no_obj) < 0:
            raise ValueError("loss weights must be nonnegative")


@dataclass(eq=False)
class Batch:
    """Per-sample arrays for the labelled target of each sample."""

    Q: np.ndarray     # (N, 6) joints
    P: np.ndarray     # (N, 12) flattened target pose
    V: np.ndarray     # (N,)
    U: np.ndarray     # (N, 6)
    JQJ: np.ndarray   # (N, 6, 6) J^T Q J at Q

    def __len__(self):
        return len(self.V)

    def take(self, idx) -> "Batch":
        return Batch(self.Q[idx], self.P[idx], self.V[idx], self.U[idx], self.JQJ[idx])


def jqj(chain: KinematicChain, q) -> np.ndarray:
    J = body_jacobian(chain, q)
    return J.T @ Q @ J


def regression_loss(V_hat, U_hat, V, U, weights: LossWeights) -> float:
    """Mean over labelled targets of lambda_V |V - V_hat| + lambda_u / 6 * sum |u - u_hat|."""
    V_hat, V = np.atleast_1d(V_hat), np.atleast_1d(V)
    U_hat, U = np.atleast_2d(U_hat), np.atleast_2d(U)
    if V_hat.shape != V.shape or U_hat.shape != U.shape:
        raise ValueError("prediction and label shapes differ")
    per = weights.lambda_V * np.abs(V - V_hat) + weights.lambda_u / 6.0 * np.abs(U - U_hat).sum(axis=1)
    return float(np.mean(per))


def siamese_differential_loss(reg, chain: KinematicChain, q, targets, dtheta: float,
                              weights: LossWeights) -> float:
    """Differential loss of one joint state against each of its targets.

    ``reg`` is anything with ``forward(q, targets) -> [(V, u), ...]``; the
    perturbed branch reuses the same target encoding.
    """
    q = np.asarray(q, dtype=float)
    M = jqj(chain, q)
    base = reg.forward(q, targets)
    total = 0.0
    for i in range(6):
        qp = q.copy()
        qp[i] += dtheta
        pert = reg.forward(qp, targets)
        for (V0, u), (V1, _) in zip(base, pert):
            total += abs((M @ u)[i] + (V1 - V0) / dtheta)
    return weights.lambda_diff * total / (6.0 * len(targets))


def perturbed_inputs(reg: Regressor, batch: Batch, dtheta: float) -> np.ndarray:
    """Stacked inputs: the unperturbed rows, then rows perturbed along joint 0, 1, ..., 5."""
    N = len(batch)
    Qs = [batch.Q]
    for i in range(6):
        Qp = batch.Q.copy()
        Qp[:, i] += dtheta
        Qs.append(Qp)
    return reg.inputs(np.vstack(Qs), np.tile(batch.P, (7, 1))), N


def loss_and_grad(reg: Regressor, batch: Batch, dtheta: float, weights: LossWeights,
                  use_diff: bool = True, need_grad: bool = True):
    """Total loss L_reg + L_diff on a batch and its gradient w.r.t. ``reg.params``.

    Gradients flow through both Siamese branches and through u_hat.
    """
    N = len(batch)
    use_diff = use_diff and weights.lambda_diff > 0
    if use_diff:
        X, _ = perturbed_inputs(reg, batch, dtheta)
    else:
        X = reg.inputs(batch.Q, batch.P)
    out, cache = reg.raw(X)
    V_all, U_all = reg.outputs(out)
    V_hat, U_hat = V_all[:N], U_all[:N]

    dV_res = V_hat - batch.V
    dU_res = U_hat - batch.U
    l_reg = float(np.mean(weights.lambda_V * np.abs(dV_res)
                          + weights.lambda_u / 6.0 * np.abs(dU_res).sum(axis=1)))
    parts = {"reg": l_reg, "diff": 0.0}
    dV = np.zeros_like(V_all)
    dU = np.zeros_like(U_all)
    dV[:N] = weights.lambda_V * np.sign(dV_res) / N
    dU[:N] = weights.lambda_u / 6.0 * np.sign(dU_res) / N

    if use_diff:
        V_pert = V_all[N:].reshape(6, N).T
        r = differential_residuals(batch.JQJ, U_hat, V_hat, V_pert, dtheta)
        scale = weights.lambda_diff / (6.0 * N)
        parts["diff"] = float(scale * np.abs(r).sum())
        g = scale * np.sign(r)                      # (N, 6) dL/dr
        dU[:N] += np.einsum("nij,ni->nj", batch.JQJ, g)
        dV[:N] -= g.sum(axis=1) / dtheta
        dV[N:] += (g / dtheta).T.reshape(-1)

    loss = parts["reg"] + parts["diff"]
    if not need_grad:
        return loss, parts, None
    return loss, parts, reg.backward(cache, dV, dU)
