import numpy as np
import pytest

from lyap_reach.controller import SymmetrySpec, TargetInstance
from lyap_reach.geometry import Pose, random_rotation
from lyap_reach.kinematics import body_jacobian, ur5_chain


@pytest.fixture(scope="session")
def chain():
    return ur5_chain()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_target(rng, symmetric=True):
    pose = Pose(random_rotation(rng), rng.uniform(-0.5, 0.5, 3))
    return TargetInstance(pose, SymmetrySpec() if symmetric else SymmetrySpec.none())


def random_nonsingular_q(chain, rng, min_sigma=1e-2):
    while True:
        q = rng.uniform(-np.pi, np.pi, 6)
        if np.linalg.svd(body_jacobian(chain, q), compute_uv=False)[-1] > min_sigma:
            return q


_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def criterion():
    """record(n, ok, detail): log one acceptance verdict line."""
    def record(n: int, ok: bool, detail: str) -> bool:
        line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        _ACCEPTANCE_LINES.append(line)
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
