"""Evaluation metrics: MAE, MRE, mean differential error and ADD-S."""
from __future__ import annotations

import numpy as np

MRE_EPS = 1e-3


def metric_mae(V_hat, V, U_hat=None, U=None) -> dict[str, float]:
    """Mean absolute error of V, and of u averaged over its 6 components."""
    out = {"V": float(np.mean(np.abs(np.asarray(V, float) - np.asarray(V_hat, float))))}
    if U is not None:
        out["u"] = float(np.mean(np.abs(np.asarray(U, float) - np.asarray(U_hat, float))))
    return out


def metric_mre(V_hat, V, U_hat=None, U=None, eps: float = MRE_EPS) -> dict[str, float]:
    """Elementwise |y - y_hat| / (|y| + eps), then averaged."""
    def mre(y, yh):
        y = np.asarray(y, float)
        return float(np.mean(np.abs(y - np.asarray(yh, float)) / (np.abs(y) + eps)))

    out = {"V": mre(V, V_hat)}
    if U is not None:
        out["u"] = mre(U, U_hat)
    return out


def differential_residuals(JQJ: np.ndarray, U_hat: np.ndarray, V0: np.ndarray, V_pert: np.ndarray,
                           dtheta: float) -> np.ndarray:
    """r[n, i] = (J^T Q J u_hat)_i + (V(q + dtheta e_i) - V(q)) / dtheta.

    JQJ (N, 6, 6), U_hat (N, 6), V0 (N,), V_pert (N, 6) holding V at q + dtheta e_i.
    """
    lin = np.einsum("nij,nj->ni", JQJ, U_hat)
    return lin + (V_pert - V0[:, None]) / dtheta


def metric_diff_error(JQJ, U_hat, V0, V_pert, dtheta: float) -> float:
    """Mean |r| over samples and joint directions (the differential loss with unit weight)."""
    return float(np.mean(np.abs(differential_residuals(JQJ, U_hat, V0, V_pert, dtheta))))


def metric_adds(model_points, pose_true, pose_est) -> float:
    """Mean over model points of the distance to the closest point of the
    model under the other pose (brute-force nearest neighbour)."""
    X = np.asarray(model_points, dtype=float).reshape(-1, 3)
    if len(X) == 0:
        raise ValueError("ADD-S needs at least one model point")
    A = X @ pose_true.rotation.T + pose_true.translation
    B = X @ pose_est.rotation.T + pose_est.translation
    d = np.linalg.norm(A[:, None, :] - B[None, :, :], axis=2)
    return float(np.mean(d.min(axis=1)))
