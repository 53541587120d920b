"""State-based cLf regressor: a tanh MLP applied per target with shared weights.

Input per (joint state, target) pair: joint angles with their sines and cosines,
plus the target pose (9 rotation entries, 3 translation), standardised with
training-set statistics. Output: ``V_hat = v_scale * softplus(o_0) >= 0`` and
``u_hat = u_scale * o_{1:7}``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

N_FEATURES = 30
N_OUT = 7


def featurize(q: np.ndarray, poses: np.ndarray) -> np.ndarray:
    """(N, 6) joints and (N, 12) flattened poses -> (N, 30) raw features."""
    q = np.atleast_2d(q)
    poses = np.atleast_2d(poses)
    if q.shape[1] != 6 or poses.shape[1] != 12 or q.shape[0] != poses.shape[0]:
        raise ValueError(f"feature shapes mismatch: q {q.shape}, poses {poses.shape}")
    return np.hstack([q, np.sin(q), np.cos(q), poses])


def softplus(x):
    return np.logaddexp(0.0, x)


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


@dataclass
class Cache:
    acts: list
    pre_out: np.ndarray


class Regressor:
    """Flat parameter vector with per-layer views; ``widths`` are the hidden layers."""

    def __init__(self, widths=(128, 128, 128), n_in: int = N_FEATURES, rng: np.random.Generator | None = None,
                 zero_last: bool = False):
        self.widths = tuple(int(w) for w in widths)
        self.n_in = n_in
        dims = (n_in,) + self.widths + (N_OUT,)
        self.shapes = []
        for a, b in zip(dims[:-1], dims[1:]):
            self.shapes += [(a, b), (b,)]
        self.params = np.zeros(sum(int(np.prod(s)) for s in self.shapes))
        self.feature_mean = np.zeros(n_in)
        self.feature_std = np.ones(n_in)
        self.v_scale = 1.0
        self.u_scale = np.ones(6)
        if rng is not None:
            self.init_params(rng, zero_last)

    def init_params(self, rng: np.random.Generator, zero_last: bool = False) -> None:
        views = self.layers()
        n_layers = len(views) // 2
        for k in range(n_layers):
            W, b = views[2 * k], views[2 * k + 1]
            if k == n_layers - 1:
                W[...] = 0.0 if zero_last else rng.normal(0.0, 0.01, W.shape)
            else:
                W[...] = rng.normal(0.0, np.sqrt(1.0 / W.shape[0]), W.shape)
            b[...] = 0.0

    def layers(self) -> list[np.ndarray]:
        out, i = [], 0
        for s in self.shapes:
            n = int(np.prod(s))
            out.append(self.params[i:i + n].reshape(s))
            i += n
        return out

    @property
    def n_params(self) -> int:
        return self.params.size

    def set_normalization(self, X_raw: np.ndarray, V: np.ndarray, U: np.ndarray) -> None:
        self.feature_mean = X_raw.mean(axis=0)
        std = X_raw.std(axis=0)
        self.feature_std = np.where(std > 1e-8, std, 1.0)
        self.u_scale = np.maximum(np.std(U, axis=0), 1e-3)

    def inputs(self, q, poses) -> np.ndarray:
        return (featurize(q, poses) - self.feature_mean) / self.feature_std

    def raw(self, X: np.ndarray) -> tuple[np.ndarray, Cache]:
        views = self.layers()
        h = X
        acts = [h]
        n_layers = len(views) // 2
        for k in range(n_layers - 1):
            h = np.tanh(h @ views[2 * k] + views[2 * k + 1])
            acts.append(h)
        out = h @ views[-2] + views[-1]
        return out, Cache(acts, out)

    def outputs(self, out: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return self.v_scale * softplus(out[:, 0]), out[:, 1:] * self.u_scale

    def predict(self, q, poses) -> tuple[np.ndarray, np.ndarray]:
        """Batched (V_hat, u_hat) for rows of joints and flattened target poses."""
        out, _ = self.raw(self.inputs(q, poses))
        return self.outputs(out)

    def forward(self, q, targets) -> list[tuple[float, np.ndarray]]:
        """One (V_hat, u_hat) per target for a single joint state."""
        q = np.asarray(q, dtype=float).reshape(6)
        poses = np.array([_pose12(t) for t in targets]).reshape(-1, 12)
        Q = np.repeat(q[None, :], len(poses), axis=0)
        V, U = self.predict(Q, poses)
        return [(float(v), u) for v, u in zip(V, U)]

    def backward(self, cache: Cache, dV: np.ndarray, dU: np.ndarray) -> np.ndarray:
        """Parameter gradient given upstream gradients w.r.t. V_hat (N,) and u_hat (N, 6)."""
        views = self.layers()
        grad = np.zeros_like(self.params)
        gviews = []
        i = 0
        for s in self.shapes:
            n = int(np.prod(s))
            gviews.append(grad[i:i + n].reshape(s))
            i += n
        dout = np.empty_like(cache.pre_out)
        dout[:, 0] = dV * self.v_scale * sigmoid(cache.pre_out[:, 0])
        dout[:, 1:] = dU * self.u_scale
        n_layers = len(views) // 2
        delta = dout
        for k in range(n_layers - 1, -1, -1):
            h = cache.acts[k]
            gviews[2 * k][...] = h.T @ delta
            gviews[2 * k + 1][...] = delta.sum(axis=0)
            if k > 0:
                delta = (delta @ views[2 * k].T) * (1.0 - h * h)
        return grad

    def to_dict(self) -> dict:
        return {
            "architecture": {"widths": list(self.widths), "activation": "tanh", "n_in": self.n_in,
                             "n_out": N_OUT, "v_transform": "softplus"},
            "params": self.params.tolist(),
            "feature_mean": self.feature_mean.tolist(),
            "feature_std": self.feature_std.tolist(),
            "v_scale": self.v_scale,
            "u_scale": self.u_scale.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Regressor":
        arch = d["architecture"]
        reg = cls(arch["widths"], arch["n_in"])
        params = np.asarray(d["params"], dtype=float)
        if params.shape != reg.params.shape:
            raise ValueError("checkpoint parameter count does not match its architecture")
        reg.params = params
        reg.feature_mean = np.asarray(d["feature_mean"], dtype=float)
        reg.feature_std = np.asarray(d["feature_std"], dtype=float)
        reg.v_scale = float(d["v_scale"])
        reg.u_scale = np.asarray(d["u_scale"], dtype=float)
        return reg

    def copy(self) -> "Regressor":
        return Regressor.from_dict(self.to_dict())


def _pose12(t) -> list[float]:
    pose = getattr(t, "goal_pose", t)
    return pose.to_list()


def save_checkpoint(reg: Regressor, path, extra: dict | None = None) -> None:
    d = reg.to_dict()
    if extra:
        d.update(extra)
    with open(path, "w") as f:
        json.dump(d, f)


def load_checkpoint(path) -> Regressor:
    with open(path) as f:
        return Regressor.from_dict(json.load(f))


class LearnedController:
    """Regressor outputs as a per-target control provider for the simulator."""

    exact = False

    def __init__(self, reg: Regressor):
        self.reg = reg

    def __call__(self, q, targets):
        from ..simulator import ProviderOutput

        q = np.asarray(q, dtype=float)
        poses = np.array([_pose12(t) for t in targets]).reshape(-1, 12)
        V, U = self.reg.predict(np.repeat(q[None, :], len(poses), axis=0), poses)
        return ProviderOutput(V, U, False)
