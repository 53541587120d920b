import dataclasses

import numpy as np
import pytest

from lyap_reach.controller import SymmetrySpec, TargetInstance
from lyap_reach.datagen import (
    HOME_Q, Sample, SamplerConfig, generate_dataset, ik_seed, label, points_at_table, propose_start_pose, read_jsonl,
    sample_start_pose, scene_samples, solve_ik, split_scenes, write_dataset,
)
from lyap_reach.geometry import Pose, euler_zyx
from lyap_reach.kinematics import forward_kinematics
from lyap_reach.rng import substream

CFG = SamplerConfig()


def test_start_positions_centered():
    rng = substream(0, "test-starts")
    P = np.array([propose_start_pose(CFG, rng).translation for _ in range(10000)])
    lo, hi = np.array(CFG.start_min), np.array(CFG.start_max)
    se = (hi - lo) / np.sqrt(12) / np.sqrt(len(P))
    assert np.all(np.abs(P.mean(axis=0) - (lo + hi) / 2) < 3 * se)
    assert np.all(P >= lo) and np.all(P <= hi)


def test_start_positions_after_ik_centered(chain):
    rng = substream(1, "test-starts")
    P = np.array([sample_start_pose(chain, CFG, rng)[0].translation for _ in range(300)])
    lo, hi = np.array(CFG.start_min), np.array(CFG.start_max)
    se = (hi - lo) / np.sqrt(12) / np.sqrt(len(P))
    assert np.all(np.abs(P.mean(axis=0) - (lo + hi) / 2) < 3 * se)


def test_collapsed_bounds_identical(chain):
    cfg = dataclasses.replace(CFG, start_min=(0.5, 0.0, 0.3), start_max=(0.5, 0.0, 0.3),
                              roll_bound=0.0, pitch_bound=0.0, yaw_bound=0.0)
    rng = substream(2, "test-starts")
    draws = [sample_start_pose(chain, cfg, rng) for _ in range(5)]
    for pose, q in draws[1:]:
        assert np.array_equal(pose.matrix(), draws[0][0].matrix())
        assert np.array_equal(q, draws[0][1])


def test_accepted_starts_point_at_table_and_solve_ik(chain):
    rng = substream(3, "test-starts")
    for _ in range(30):
        pose, q = sample_start_pose(chain, CFG, rng)
        assert points_at_table(pose, CFG)
        assert np.linalg.norm(forward_kinematics(chain, q).matrix() - pose.matrix()) < 1e-6


def test_pointing_predicate():
    down = Pose(euler_zyx(np.pi, 0, 0), [0.5, 0.0, 0.3])
    up = Pose(np.eye(3), [0.5, 0.0, 0.3])
    assert points_at_table(down, CFG)
    assert not points_at_table(up, CFG)
    assert not points_at_table(Pose(euler_zyx(np.pi, 0, 0), [2.0, 0.0, 0.3]), CFG)


def test_ik_reaches_reachable_pose(chain):
    q_true = np.array([2.9, -1.4, 1.6, -1.8, -1.5, 0.4])
    goal = forward_kinematics(chain, q_true)
    q = solve_ik(chain, goal, ik_seed(chain, HOME_Q, goal))
    assert q is not None
    assert np.linalg.norm(forward_kinematics(chain, q).matrix() - goal.matrix()) < 1e-6


def test_ik_unreachable_returns_none(chain):
    assert solve_ik(chain, Pose(np.eye(3), [3.0, 0.0, 0.0]), HOME_Q) is None


def test_zero_duration_samples_are_starts(chain):
    cfg = dataclasses.replace(CFG, t_max=0.009)  # rounds to zero control steps
    for s in scene_samples(chain, cfg, 0, 0):
        T = forward_kinematics(chain, s.q)
        assert points_at_table(T, cfg)
        assert np.all(T.translation >= np.array(cfg.start_min) - 1e-6)
        k, V, u = label(chain, s.q, [TargetInstance(p, SymmetrySpec()) for p in s.target_poses])
        assert (k, V) == (s.selected_index, s.V) and np.array_equal(u, s.u)


@pytest.fixture(scope="module")
def small_dataset():
    from lyap_reach.kinematics import ur5_chain
    cfg = dataclasses.replace(CFG, n_scenes=20)
    return ur5_chain(), cfg, generate_dataset(ur5_chain(), cfg, 11)


def test_labels_reproduce_bit_exactly(small_dataset, tmp_path):
    chain, cfg, (train, evals) = small_dataset
    write_dataset(tmp_path, train, evals, cfg, 11)
    for s in read_jsonl(tmp_path / "train.jsonl") + read_jsonl(tmp_path / "eval.jsonl"):
        k, V, u = label(chain, s.q, [TargetInstance(p, SymmetrySpec()) for p in s.target_poses])
        assert k == s.selected_index
        assert V == s.V
        assert np.array_equal(u, s.u)


def test_train_eval_scene_disjoint(small_dataset):
    _, cfg, (train, evals) = small_dataset
    a, b = {s.scene for s in train}, {s.scene for s in evals}
    assert not a & b
    assert len(b) == 2
    tr_ids, ev_ids = split_scenes(100, 0.1, 5)
    assert not tr_ids & ev_ids and len(tr_ids | ev_ids) == 100


def test_dataset_deterministic(small_dataset, tmp_path):
    chain, cfg, (train, evals) = small_dataset
    train2, evals2 = generate_dataset(chain, cfg, 11)
    assert [s.to_json() for s in train] == [s.to_json() for s in train2]
    assert [s.to_json() for s in evals] == [s.to_json() for s in evals2]


def test_samples_per_scene_range(small_dataset):
    _, cfg, (train, evals) = small_dataset
    counts = np.bincount([s.scene for s in train + evals])
    assert counts.min() >= cfg.samples_per_scene[0] and counts.max() <= cfg.samples_per_scene[1]


def test_denser_near_goal_than_starts(chain):
    near = dataclasses.replace(CFG, n_scenes=40)
    starts_only = dataclasses.replace(near, t_max=0.009)
    V_near = [s.V for i in range(40) for s in scene_samples(chain, near, 21, i)]
    V_start = [s.V for i in range(40) for s in scene_samples(chain, starts_only, 21, i)]
    assert np.mean(np.array(V_near) <= 0.5) > np.mean(np.array(V_start) <= 0.5)


def test_sample_json_roundtrip(small_dataset):
    s = small_dataset[2][0][0]
    s2 = Sample.from_json(s.to_json())
    assert s2.to_json() == s.to_json()


def test_sampler_config_roundtrip():
    assert SamplerConfig.from_dict(CFG.to_dict()) == CFG
    with pytest.raises(ValueError):
        SamplerConfig(start_min=(1, 0, 0), start_max=(0, 0, 0))
