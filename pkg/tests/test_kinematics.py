import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lyap_reach.datagen import HOME_Q
from lyap_reach.geometry import vee
from lyap_reach.kinematics import (
    DAMPING, KinematicChain, body_jacobian, fk_and_jacobian, forward_kinematics, load_chain, solve_joint_velocity,
    ur5_chain_path,
)

# UR5 at q = 0, derived by hand from the DH table: the arm lies stretched along -x,
# the wrist offsets d4, d6 and the 0.1 m tool point along -y, and the net frame
# rotation is R_x(pi/2).
UR5_ZERO_POSE = np.array([
    [1.0, 0.0, 0.0, -0.81725],
    [0.0, 0.0, -1.0, -0.10915 - 0.0823 - 0.1],
    [0.0, 1.0, 0.0, 0.089159 - 0.09465],
    [0.0, 0.0, 0.0, 1.0],
])
HOME_COND = 8.0414  # condition number of J at HOME_Q, frozen

joints = st.lists(st.floats(-np.pi, np.pi), min_size=6, max_size=6).map(np.array)


def flat_chain():
    return KinematicChain(np.zeros((6, 4)))


def test_ur5_zero_pose_golden(chain):
    assert np.allclose(forward_kinematics(chain, np.zeros(6)).matrix(), UR5_ZERO_POSE, atol=1e-12)


@given(joints)
def test_degenerate_chain_is_identity(q):
    assert np.allclose(forward_kinematics(flat_chain(), q).matrix()[:3, 3], 0.0)
    # every axis is the same z axis, so the pose is a pure z rotation by sum(q)
    R = forward_kinematics(flat_chain(), q).rotation
    assert np.isclose(R[2, 2], 1.0)


def test_degenerate_chain_zero_joints_identity():
    assert np.allclose(forward_kinematics(flat_chain(), np.zeros(6)).matrix(), np.eye(4))


@given(joints)
@settings(max_examples=30)
def test_fk_continuity(q):
    chain = load_chain(ur5_chain_path())
    T = forward_kinematics(chain, q).matrix()
    gaps = [np.linalg.norm(forward_kinematics(chain, q + d).matrix() - T) for d in (1e-3, 1e-5, 1e-7)]
    assert gaps[0] > gaps[1] > gaps[2]
    assert gaps[2] < 1e-5


def test_jacobian_finite_difference(chain, rng):
    eps = 1e-6
    for _ in range(20):
        q = rng.uniform(-np.pi, np.pi, 6)
        T, J = fk_and_jacobian(chain, q)
        Tinv = T.inverse().matrix()
        for i in range(6):
            qp = q.copy()
            qp[i] += eps
            D = Tinv @ (forward_kinematics(chain, qp).matrix() - T.matrix()) / eps
            # the finite-difference rotation block is skew only to first order
            D[:3, :3] = 0.5 * (D[:3, :3] - D[:3, :3].T)
            assert np.allclose(vee(D), J[:, i], atol=1e-4)


def test_degenerate_chain_has_no_lever_arms(rng):
    J = body_jacobian(flat_chain(), rng.uniform(-1, 1, 6))
    assert np.allclose(J[3:], 0.0)
    assert np.allclose(J[:3], np.array([[0, 0, 1]] * 6).T)


def test_home_configuration_well_conditioned(chain):
    c = np.linalg.cond(body_jacobian(chain, HOME_Q))
    assert c < 1e6
    assert c == pytest.approx(HOME_COND, rel=1e-4)


def test_fk_rejects_bad_input(chain):
    with pytest.raises(ValueError):
        forward_kinematics(chain, np.zeros(5))
    with pytest.raises(ValueError):
        forward_kinematics(chain, np.full(6, 7.0))


def test_solve_identity_and_scalar():
    xi = np.arange(1.0, 7.0)
    assert np.allclose(solve_joint_velocity(np.eye(6), xi).qdot, xi)
    out = solve_joint_velocity(2 * np.eye(6), np.full(6, 2.0))
    assert np.allclose(out.qdot, np.ones(6))
    assert not out.damped


def test_solve_damped_matches_svd_oracle(rng):
    J = rng.normal(size=(6, 6))
    J[3] = 0.0
    xi = rng.normal(size=6)
    out = solve_joint_velocity(J, xi)
    assert out.damped
    U, s, Vt = np.linalg.svd(J)
    oracle = Vt.T @ np.diag(s / (s ** 2 + DAMPING ** 2)) @ U.T @ xi
    assert np.allclose(out.qdot, oracle, atol=1e-8)


def test_solve_batched_columns(rng):
    J = rng.normal(size=(6, 6))
    X = rng.normal(size=(6, 3))
    out = solve_joint_velocity(J, X)
    for k in range(3):
        assert np.allclose(out.qdot[:, k], solve_joint_velocity(J, X[:, k]).qdot)


def test_chain_roundtrip(tmp_path, chain):
    p = tmp_path / "c.json"
    p.write_text(json.dumps(chain.to_dict()))
    c2 = load_chain(p)
    q = np.linspace(-1, 1, 6)
    assert np.allclose(forward_kinematics(c2, q).matrix(), forward_kinematics(chain, q).matrix())


def test_chain_validation():
    with pytest.raises(ValueError):
        KinematicChain(np.zeros((5, 4)))
    with pytest.raises(ValueError):
        KinematicChain(np.zeros((6, 4)), joint_limits=[[1, -1]] * 6)
