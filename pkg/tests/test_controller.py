import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import random_nonsingular_q, random_target
from lyap_reach.controller import (
    Q, MomentumState, SymmetrySpec, TargetInstance, clf_gradient, clf_of_joints, clf_value, differential_residual,
    momentum_step, optimal_symmetry_rotation, select_target, velocity_control,
)
from lyap_reach.datagen import solve_ik
from lyap_reach.geometry import Pose, hat, random_rotation, rot_about_axis, rot_x, rot_z, vee
from lyap_reach.kinematics import fk_and_jacobian, forward_kinematics


def expm_se3(X):
    """Matrix exponential by scaling and squaring a Taylor series."""
    n = 10
    A = X / 2 ** n
    E, term = np.eye(4), np.eye(4)
    for k in range(1, 12):
        term = term @ A / k
        E = E + term
    for _ in range(n):
        E = E @ E
    return E


def test_symmetry_angle_thirty_degrees():
    E, phi = optimal_symmetry_rotation(rot_z(np.radians(30)), np.eye(3), SymmetrySpec())
    assert abs(phi - np.radians(30)) < 1e-9
    grid = np.arange(0, 2 * np.pi, 1e-5)
    costs = 6 - 2 * (2 * np.cos(grid - np.radians(30)) + 1)
    assert abs(grid[np.argmin(costs)] - np.radians(30)) < 1e-5


def test_symmetry_aligned():
    R = rot_x(0.4)
    E, phi = optimal_symmetry_rotation(R, R, SymmetrySpec())
    assert abs(phi) < 1e-12
    assert np.allclose(E, np.eye(3))


def test_discrete_symmetry_picks_half_turn():
    sym = SymmetrySpec(kind="discrete", elements=(np.eye(3), rot_z(np.pi)))
    R_H = rot_z(np.radians(170))
    E, k = optimal_symmetry_rotation(R_H, np.eye(3), sym)
    norms = [np.linalg.norm(R_H - E_) for E_ in sym.elements]
    assert norms[1] < norms[0]
    assert k == 1


def test_discrete_symmetry_tie_goes_to_first():
    sym = SymmetrySpec(kind="discrete", elements=(np.eye(3), rot_z(np.pi)))
    _, k = optimal_symmetry_rotation(rot_z(np.pi / 2), np.eye(3), sym)
    assert k == 0


def test_symmetry_spec_validation():
    with pytest.raises(ValueError):
        SymmetrySpec(axis=np.array([0.0, 0.0, 2.0]))
    with pytest.raises(ValueError):
        SymmetrySpec(kind="discrete", elements=(rot_z(0.3),))
    with pytest.raises(ValueError):
        SymmetrySpec(kind="mirror")


def test_general_axis_matches_coarse_grid(rng):
    for _ in range(20):
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        R_H, R_i = random_rotation(rng), random_rotation(rng)
        _, phi = optimal_symmetry_rotation(R_H, R_i, SymmetrySpec(axis=axis))
        grid = np.linspace(-np.pi, np.pi, 20001)
        costs = [np.linalg.norm(R_H - R_i @ rot_about_axis(axis, g)) for g in grid]
        best = np.linalg.norm(R_H - R_i @ rot_about_axis(axis, phi))
        assert best <= min(costs) + 1e-9


def test_clf_zero_at_goal_and_symmetric_pose():
    tgt = TargetInstance(Pose(rot_x(0.3), [0.1, 0.2, 0.3]), SymmetrySpec())
    assert clf_value(tgt.goal_pose, tgt)[0] == 0.0
    turned = Pose(rot_x(0.3) @ rot_z(1.234), [0.1, 0.2, 0.3])
    assert clf_value(turned, tgt)[0] < 1e-24


def test_clf_half_turn_off_axis():
    R_i = rot_x(0.3)
    tgt = TargetInstance(Pose(R_i, [0.0, 0.0, 0.0]), SymmetrySpec())
    V, _ = clf_value(Pose(R_i @ rot_x(np.pi), [0.0, 0.0, 0.0]), tgt)
    assert V == pytest.approx(4.0, abs=1e-12)


def test_gradient_zero_at_goal():
    T = Pose(rot_x(0.2), [0.1, 0.0, 0.3])
    assert np.array_equal(clf_gradient(T, T), np.zeros((4, 4)))


def test_gradient_pure_translation():
    R = rot_z(0.7)
    T_H = Pose(R, [0.5, 0.2, 0.1])
    G = clf_gradient(T_H, Pose(R, [0.4, 0.2, 0.1]))
    assert np.allclose(G[:3, :3], 0.0)
    assert np.allclose(G[:3, 3], R.T @ [0.1, 0, 0])


def test_gradient_is_projection_of_full_expression(rng):
    T_H = Pose(random_rotation(rng), rng.normal(size=3))
    T_G = Pose(random_rotation(rng), rng.normal(size=3))
    full = T_H.matrix().T @ (T_H.matrix() - T_G.matrix())
    expected = full.copy()
    expected[:3, :3] = 0.5 * (full[:3, :3] - full[:3, :3].T)
    expected[3] = 0.0
    assert np.allclose(clf_gradient(T_H, T_G), expected)


def test_gradient_directional_derivative(rng):
    eps = 1e-6
    for _ in range(50):
        tgt = random_target(rng, symmetric=False)
        T_H = Pose(random_rotation(rng), rng.normal(size=3))
        V0, goal = clf_value(T_H, tgt)
        g = vee(clf_gradient(T_H, goal))
        d = rng.normal(size=6)
        T1 = Pose.from_matrix(T_H.matrix() @ expm_se3(hat(d * eps)))
        fd = (clf_value(T1, tgt)[0] - V0) / eps
        assert fd == pytest.approx(g @ Q @ d, rel=1e-3, abs=1e-6)


def test_equilibrium_control_is_zero(chain):
    q = np.array([0.1, -1.2, 1.5, -1.9, -1.5, 0.3])
    tgt = TargetInstance(forward_kinematics(chain, q), SymmetrySpec())
    out = velocity_control(chain, q, tgt)
    assert out.clf_value < 1e-24
    assert np.allclose(out.u, 0.0, atol=1e-12)


def test_lyapunov_decrease(chain, rng):
    dt = 1e-6
    for _ in range(50):
        q = random_nonsingular_q(chain, rng)
        tgt = random_target(rng)
        out = velocity_control(chain, q, tgt)
        V1 = clf_of_joints(chain, tgt)(q + dt * out.u)
        expected = -np.sum(out.grad * out.grad)  # -||grad V||_F^2
        assert (V1 - out.clf_value) / dt == pytest.approx(expected, rel=1e-3)


def test_control_is_linear_in_gradient(chain, rng):
    q = random_nonsingular_q(chain, rng)
    _, J = fk_and_jacobian(chain, q)
    g = rng.normal(size=6)
    u1 = -np.linalg.solve(J, g)
    for c in (0.5, 3.0):
        assert np.allclose(-np.linalg.solve(J, c * g), c * u1)


def test_differential_residual_small_and_first_order(chain, rng):
    means = {}
    for d in (1e-2, 1e-3, 1e-4):
        local = np.random.default_rng(1)
        vals = []
        for _ in range(20):
            q = random_nonsingular_q(chain, local)
            tgt = random_target(local)
            out = velocity_control(chain, q, tgt)
            vals += [abs(differential_residual(chain, q, out.u, clf_of_joints(chain, tgt), d, i)) for i in range(6)]
        means[d] = np.mean(vals)
    assert means[1e-2] > means[1e-3] > means[1e-4]
    # first-order truncation: tenfold smaller step, roughly tenfold smaller residual
    assert 5 < means[1e-3] / means[1e-4] < 20


def test_differential_residual_exact_pair(chain, rng):
    q = random_nonsingular_q(chain, rng)
    tgt = random_target(rng)
    out = velocity_control(chain, q, tgt)
    V = clf_of_joints(chain, tgt)
    assert all(abs(differential_residual(chain, q, out.u, V, 1e-5, i)) < 1e-3 for i in range(6))


def test_differential_residual_trivial(chain):
    r = differential_residual(chain, np.zeros(6), np.zeros(6), lambda q: 1.5, 1e-3, 2)
    assert r == 0.0
    with pytest.raises(ValueError):
        differential_residual(chain, np.zeros(6), np.zeros(6), lambda q: 1.5, 0.0, 2)


def test_select_target_cases():
    assert select_target([0.8, 0.3, 0.5]) == 1
    assert select_target([0.4, 0.4, 0.4]) == 0
    with pytest.raises(ValueError):
        select_target([])


@given(st.lists(st.floats(0, 100), min_size=1, max_size=6), st.floats(1e-3, 1e3))
def test_select_target_scale_invariant(vals, c):
    assert select_target([c * v for v in vals]) == select_target(vals)


def test_momentum_cases():
    ones, zeros = np.ones(6), np.zeros(6)
    u = np.arange(6.0)
    assert np.array_equal(momentum_step(MomentumState(ones, 0.0), u).u_bar, u)
    assert np.array_equal(momentum_step(MomentumState(ones, 1.0), u).u_bar, ones)
    assert np.allclose(momentum_step(MomentumState(ones, 0.6), zeros).u_bar, 0.6)
    with pytest.raises(ValueError):
        MomentumState(ones, 1.5)


def test_target_roundtrip(rng):
    t = random_target(rng)
    t2 = TargetInstance.from_dict(t.to_dict())
    assert np.allclose(t2.goal_pose.matrix(), t.goal_pose.matrix())
    assert np.allclose(t2.symmetry.axis, t.symmetry.axis)
