import numpy as np
import pytest

ACCEPTANCE = {}


def record(n, ok, detail):
    ACCEPTANCE[n] = (bool(ok), detail)


@pytest.fixture
def accept():
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def unit_sphere():
    from mcfsurgery.shapes import icosphere
    return icosphere(4)


@pytest.fixture(scope="session")
def tube():
    from mcfsurgery.shapes import cylinder_tube
    return cylinder_tube(1.0, 24.0, 64)


@pytest.fixture(scope="session")
def pinched_dumbbell():
    """Axisymmetric dumbbell flowed until max H reaches 500 (grid 512)."""
    from mcfsurgery.axisym import from_profile, redistribute, stable_dt, step_axisymmetric
    from mcfsurgery.shapes import dumbbell_profile
    p = redistribute(from_profile(*dumbbell_profile(1.0, 0.3, 3.0, n=513)), 512)
    steps = 0
    while p.H().max() < 500:
        p = step_axisymmetric(p, stable_dt(p), (steps + 1) % 10 == 0)
        steps += 1
    return p


def nearest(mesh, x):
    return int(np.argmin(np.linalg.norm(mesh.vertices - np.asarray(x, float), axis=1)))
