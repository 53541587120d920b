"""Minibatch Adam training of the regressor with an annealed Siamese perturbation."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, asdict, field

import numpy as np

from ..kinematics import KinematicChain
from ..metrics import metric_diff_error, metric_mae, metric_mre
from ..rng import substream
from .losses import Batch, LossWeights, jqj, loss_and_grad, perturbed_inputs
from .model import Regressor, featurize

log = logging.getLogger(__name__)

LOG_HEADER = ["epoch", "train_loss", "eval_loss", "mae_V", "mae_u", "mre_V", "mre_u", "diff_err", "dtheta"]


@dataclass(frozen=True)
class PerturbationSchedule:
    initial: float = 0.05
    decrement: float = 0.002
    floor: float = 0.003

    def __post_init__(self):
        if self.floor <= 0 or self.initial < self.floor:
            raise ValueError("need 0 < floor <= initial")

    def at(self, epoch: int) -> float:
        return max(self.floor, self.initial - self.decrement * epoch)


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 64
    lr: float = 1e-3
    lr_decay: float = 0.1
    lr_step: int = 15
    epochs: int = 40
    widths: tuple = (128, 128, 128)
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if self.batch_size <= 0 or self.lr <= 0 or self.epochs <= 0 or self.lr_step <= 0:
            raise ValueError("training hyperparameters must be positive")


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch: int, loss: float):
        super().__init__(f"training diverged at epoch {epoch} (loss={loss})")
        self.epoch = epoch
        self.loss = loss


class Adam:
    def __init__(self, n: int, beta1=0.9, beta2=0.999, eps=1e-8):
        self.m = np.zeros(n)
        self.v = np.zeros(n)
        self.t = 0
        self.beta1, self.beta2, self.eps = beta1, beta2, eps

    def step(self, params: np.ndarray, grad: np.ndarray, lr: float) -> None:
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        mhat = self.m / (1 - self.beta1 ** self.t)
        vhat = self.v / (1 - self.beta2 ** self.t)
        params -= lr * mhat / (np.sqrt(vhat) + self.eps)


def make_batch(chain: KinematicChain, samples) -> Batch:
    """Arrays for the labelled (min-cLf) target of each sample."""
    Q = np.array([s.q for s in samples], dtype=float).reshape(-1, 6)
    P = np.array([s.target_poses[s.selected_index].to_list() for s in samples]).reshape(-1, 12)
    V = np.array([s.V for s in samples], dtype=float)
    U = np.array([s.u for s in samples], dtype=float).reshape(-1, 6)
    M = np.array([jqj(chain, q) for q in Q]).reshape(-1, 6, 6)
    return Batch(Q, P, V, U, M)


def init_regressor(train: Batch, cfg: TrainConfig, seed: int) -> Regressor:
    reg = Regressor(cfg.widths, rng=substream(seed, "init"))
    reg.set_normalization(featurize(train.Q, train.P), train.V, train.U)
    return reg


def evaluate(reg: Regressor, data: Batch, dtheta: float, weights: LossWeights) -> dict:
    """MAE, MRE and differential error on ``data``; the differential error uses unit weight at ``dtheta``."""
    X, N = perturbed_inputs(reg, data, dtheta)
    out, _ = reg.raw(X)
    V_all, U_all = reg.outputs(out)
    V_hat, U_hat = V_all[:N], U_all[:N]
    V_pert = V_all[N:].reshape(6, N).T
    mae = metric_mae(V_hat, data.V, U_hat, data.U)
    mre = metric_mre(V_hat, data.V, U_hat, data.U)
    diff = metric_diff_error(data.JQJ, U_hat, V_hat, V_pert, dtheta)
    loss, _, _ = loss_and_grad(reg, data, dtheta, weights, use_diff=True, need_grad=False)
    return {"loss": loss, "mae_V": mae["V"], "mae_u": mae["u"], "mre_V": mre["V"], "mre_u": mre["u"],
            "diff_err": diff}


@dataclass
class TrainResult:
    regressor: Regressor
    log: list = field(default_factory=list)
    final: dict = field(default_factory=dict)


def train(reg: Regressor, train_data: Batch, eval_data: Batch | None, cfg: TrainConfig,
          weights: LossWeights = LossWeights(), schedule: PerturbationSchedule = PerturbationSchedule(),
          use_diff: bool = True, seed: int | None = None) -> TrainResult:
    """Train in place. With ``use_diff`` off the differential weight is zeroed.

    The reported eval loss always includes the differential term (unit schedule
    floor) so diff-on and diff-off runs are scored identically.
    """
    if len(train_data) == 0:
        raise ValueError("empty training set")
    seed = cfg.seed if seed is None else seed
    shuffle = substream(seed, "shuffle")
    w_train = weights if use_diff else LossWeights(weights.lambda_V, weights.lambda_u, 0.0,
                                                   weights.lambda_obj, weights.lambda_no_obj)
    opt = Adam(reg.n_params, cfg.beta1, cfg.beta2, cfg.adam_eps)
    rows = []
    N = len(train_data)
    for epoch in range(cfg.epochs):
        lr = cfg.lr * cfg.lr_decay ** (epoch // cfg.lr_step)
        dtheta = schedule.at(epoch)
        perm = shuffle.permutation(N)
        total, count = 0.0, 0
        for start in range(0, N, cfg.batch_size):
            idx = perm[start:start + cfg.batch_size]
            loss, _, grad = loss_and_grad(reg, train_data.take(idx), dtheta, w_train, use_diff)
            if not np.isfinite(loss) or loss > 1e6:
                raise TrainingDiverged(epoch, loss)
            opt.step(reg.params, grad, lr)
            total += loss * len(idx)
            count += len(idx)
        row = {"epoch": epoch, "train_loss": total / count, "dtheta": dtheta}
        if eval_data is not None and len(eval_data):
            m = evaluate(reg, eval_data, schedule.floor, weights)
            row.update({"eval_loss": m["loss"], **{k: m[k] for k in ("mae_V", "mae_u", "mre_V", "mre_u", "diff_err")}})
        rows.append(row)
        log.info("epoch %d train %.5f eval %s", epoch, row["train_loss"], row.get("eval_loss"))
    final = evaluate(reg, eval_data, schedule.floor, weights) if eval_data is not None and len(eval_data) else {}
    return TrainResult(reg, rows, final)


def write_log_csv(rows, path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(LOG_HEADER)
        for r in rows:
            w.writerow([r["epoch"]] + [repr(float(r[k])) if k in r else "" for k in LOG_HEADER[1:]])


def train_config_dict(cfg: TrainConfig, weights: LossWeights, schedule: PerturbationSchedule, use_diff: bool) -> dict:
    return {"train": asdict(cfg), "weights": asdict(weights), "schedule": asdict(schedule), "use_diff": use_diff}
