#!/usr/bin/env python3
"""Momentum filter vs transient false-positive detections: mean target switches and
success for eta = 0.6 and eta = 0 over paired seeds and several phantom settings."""
import argparse

import numpy as np

from lyap_reach.experiments import BatchSpec, run_batch
from lyap_reach.kinematics import ur5_chain
from lyap_reach.simulator import ExactController, FalsePositiveInjector, RolloutConfig

SETTINGS = [(0.02, 2, -0.05), (0.02, 2, -0.2), (0.05, 1, -0.2), (0.02, 5, -0.05)]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=100)
    ap.add_argument("--instances", type=int, default=1)
    args = ap.parse_args()
    chain = ur5_chain()
    print(f"{'spawn':>6s} {'life':>5s} {'bias':>6s} | {'eta':>4s} {'switches':>9s} {'success':>8s} {'steps':>7s}")
    for p, life, bias in SETTINGS:
        inj = FalsePositiveInjector(p, life, bias)
        for eta in (0.6, 0.0):
            recs = [r for seed in range(args.seeds)
                    for r in run_batch(chain, ExactController(chain), BatchSpec((args.instances,), 1, 1, seed),
                                       RolloutConfig(eta=eta), injector=inj)]
            sw = np.mean([r.trajectory.switch_count for r in recs])
            ok = np.mean([r.trajectory.outcome.success for r in recs])
            steps = np.mean([len(r.trajectory.steps) for r in recs])
            print(f"{p:6.2f} {life:5d} {bias:6.2f} | {eta:4.1f} {sw:9.2f} {100 * ok:7.1f}% {steps:7.1f}")


if __name__ == "__main__":
    main()
