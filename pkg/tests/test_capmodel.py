import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mcfsurgery.capmodel import (ModelCap, ball_containment, cap_radius, model_curvatures,
                                 model_inscribed_radius, validate_model)


@settings(max_examples=200, deadline=None)
@given(s=st.floats(0.0, 20.0))
def test_lambda2_times_inscribed_radius_is_one(s):
    _, l2, _ = model_curvatures(np.array([s]))
    assert abs(l2[0] * model_inscribed_radius(np.array([s]))[0] - 1) < 1e-12


def test_curvatures_ordered_and_positive():
    s = np.linspace(0.0, 20.0, 1001)
    l1, l2, mu = model_curvatures(s)
    assert np.all(l1 > 0) and np.all(l1 <= l2 + 1e-15)
    assert np.allclose(mu, l2, rtol=1e-14)


def test_tip_is_umbilic():
    l1, l2, _ = model_curvatures(np.array([0.0]))
    assert l1[0] == pytest.approx(l2[0], rel=1e-12)


def test_radius_monotone():
    s = np.linspace(0.0, 20.0, 2001)
    assert np.all(np.diff(cap_radius(s)) > 0)


def test_mesh_is_closed():
    m, s_v = ModelCap(20.0, 32).mesh()
    m.validate()
    assert m.euler_characteristic() == 2
    assert len(s_v) == m.n_vertices


def test_touching_balls_stay_inside():
    rep = ball_containment(np.linspace(0.0, 10.0, 41))
    assert rep["pass"], rep["min_clearance"]


@pytest.mark.slow
def test_validation_converges():
    rep = validate_model((64, 128))
    assert rep["monotone"] and rep["worst"][-1] <= 0.02
