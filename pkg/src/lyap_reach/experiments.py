"""Seeded batch experiments: grasping batches laid out per instance count, and the
paired with/without differential-constraint ablation."""
from __future__ import annotations

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from functools import partial
from dataclasses import dataclass, asdict

import numpy as np

from .datagen import SamplerConfig, sample_start_pose
from .kinematics import KinematicChain
from .learning.losses import LossWeights
from .learning.model import LearnedController
from .learning.train import PerturbationSchedule, TrainConfig, TrainingDiverged, init_regressor, train
from .rng import substream
from .simulator import (
    ExactController,
    FalsePositiveInjector,
    RolloutConfig,
    Trajectory,
    inject_false_positives,
    random_scene,
    rollout,
)

log = logging.getLogger(__name__)


def thread_cap() -> int:
    try:
        return max(1, int(os.environ.get("LYAP_REACH_THREADS", "1")))
    except ValueError:
        return 1


@dataclass(frozen=True)
class BatchSpec:
    instance_counts: tuple = (1, 2, 3, 4)
    n_scenes: int = 10
    trajectories_per_scene: int = 10
    seed: int = 0


@dataclass(eq=False)
class RolloutRecord:
    n_instances: int
    scene: int
    trial: int
    trajectory: Trajectory


def _one(chain, controller, spec: BatchSpec, config: RolloutConfig, sampler: SamplerConfig,
         injector: FalsePositiveInjector | None, n: int, s: int, k: int) -> RolloutRecord:
    scene = random_scene(n, substream(spec.seed, "scenes", n, s), sampler.region, seed=s)
    _, q0 = sample_start_pose(chain, sampler, substream(spec.seed, "starts", n, s, k))
    phantoms = None
    if injector is not None:
        phantoms = inject_false_positives(scene, injector, substream(spec.seed, "phantoms", n, s, k),
                                          config.max_steps)
    return RolloutRecord(n, s, k, rollout(chain, scene, controller, config, q0, phantoms))


def run_batch(chain: KinematicChain, controller, spec: BatchSpec, config: RolloutConfig = RolloutConfig(),
              sampler: SamplerConfig = SamplerConfig(),
              injector: FalsePositiveInjector | None = None) -> list[RolloutRecord]:
    """Every unit draws from its own (seed, n, scene, trial) substreams, so results
    do not depend on execution order."""
    jobs = [(n, s, k) for n in spec.instance_counts for s in range(spec.n_scenes)
            for k in range(spec.trajectories_per_scene)]
    workers = min(thread_cap(), len(jobs))
    if workers <= 1:
        return [_one(chain, controller, spec, config, sampler, injector, *job) for job in jobs]
    run = partial(_one_packed, (chain, controller, spec, config, sampler, injector))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        # map preserves job order, so the record list is independent of scheduling
        return list(pool.map(run, jobs, chunksize=max(1, len(jobs) // (4 * workers))))


def _one_packed(common, job):
    return _one(*common, *job)


def summarize(records: list[RolloutRecord], spec: BatchSpec, label: str = "exact") -> dict:
    """Success counts per instance-count bucket plus an ``all`` row."""
    def bucket(recs):
        n = len(recs)
        succ = sum(r.trajectory.outcome.success for r in recs)
        kinds: dict[str, int] = {}
        for r in recs:
            kinds[r.trajectory.outcome.kind] = kinds.get(r.trajectory.outcome.kind, 0) + 1
        return {
            "trajectories": n,
            "successes": succ,
            "success_rate": succ / n if n else None,
            "outcomes": dict(sorted(kinds.items())),
            "mean_switches": float(np.mean([r.trajectory.switch_count for r in recs])) if n else None,
            "mean_steps": float(np.mean([len(r.trajectory.steps) for r in recs])) if n else None,
        }

    buckets = {str(n): bucket([r for r in records if r.n_instances == n]) for n in spec.instance_counts}
    overall = bucket(records)
    return {"controller": label, "spec": asdict(spec), "buckets": buckets, "all": overall,
            "success_rate": overall["success_rate"]}


@dataclass(frozen=True)
class AblationSpec:
    seeds: tuple = (0, 1, 2)
    train: TrainConfig = TrainConfig()
    weights: LossWeights = LossWeights()
    schedule: PerturbationSchedule = PerturbationSchedule()
    grasp: BatchSpec = BatchSpec(n_scenes=5, trajectories_per_scene=5, seed=1000)
    rollout: RolloutConfig = RolloutConfig()


def run_ablation(chain: KinematicChain, train_data, eval_data, spec: AblationSpec,
                 sampler: SamplerConfig = SamplerConfig()) -> dict:
    """Paired diff-on/diff-off training per seed (shared data, init and shuffling),
    then eval metrics and simulated grasp success for each model."""
    runs = []
    for seed in spec.seeds:
        for use_diff in (True, False):
            entry = {"seed": seed, "diff": use_diff}
            reg = init_regressor(train_data, spec.train, seed)
            try:
                res = train(reg, train_data, eval_data, spec.train, spec.weights, spec.schedule,
                            use_diff=use_diff, seed=seed)
            except TrainingDiverged as exc:
                log.warning("seed %d diff=%s diverged at epoch %d", seed, use_diff, exc.epoch)
                entry["diverged_epoch"] = exc.epoch
                runs.append(entry)
                continue
            entry.update(res.final)
            recs = run_batch(chain, LearnedController(res.regressor), spec.grasp, spec.rollout, sampler)
            entry["grasp_success"] = summarize(recs, spec.grasp, "learned")["success_rate"]
            entry["regressor"] = res.regressor
            entry["log"] = res.log
            runs.append(entry)
    return ablation_report(runs, len(spec.seeds))


REPORT_COLUMNS = ("mae_V", "mae_u", "mre_V", "mre_u", "diff_err", "grasp_success")


def ablation_report(runs: list[dict], n_seeds: int) -> dict:
    rows = {}
    for use_diff, name in ((True, "with_diff"), (False, "without_diff")):
        ok = [r for r in runs if r["diff"] == use_diff and "diverged_epoch" not in r]
        row = {"per_seed": [{k: r.get(k) for k in ("seed",) + REPORT_COLUMNS} for r in ok]}
        if n_seeds > 1 and ok:
            row["median"] = {k: float(np.median([r[k] for r in ok])) for k in REPORT_COLUMNS}
        rows[name] = row
    diverged = [{"seed": r["seed"], "diff": r["diff"], "epoch": r["diverged_epoch"]}
                for r in runs if "diverged_epoch" in r]
    return {"rows": rows, "diverged": diverged, "runs": runs}
