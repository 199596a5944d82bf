import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mcfsurgery.curves import (CurveError, build_homotopy, circle, csf_evolve, curvature_profile,
                               ellipse, noncollapse_monitor, noncollapse_ratio, perturbed_circle,
                               rounded_square, z_matrix)


def test_unit_circle_z_vanishes():
    z = z_matrix(circle(256))
    assert np.max(np.abs(z)) < 1e-6


@settings(max_examples=20, deadline=None)
@given(R=st.floats(0.05, 50.0), n=st.integers(32, 256))
def test_circle_curvature_is_reciprocal_radius(R, n):
    prof = curvature_profile(circle(n, R))
    assert np.allclose(prof.kappa, 1 / R, rtol=1e-10)
    assert np.max(np.abs(z_matrix(circle(n, R)))) < 1e-9 * R


def test_ellipse_has_negative_z():
    assert z_matrix(ellipse(2.0, 1.0, 256)).min() < 0


def test_circle_ratio_is_one_and_ellipse_larger():
    assert noncollapse_ratio(circle(256)) == pytest.approx(1.0, abs=1e-9)
    assert noncollapse_ratio(ellipse(1.05, 1.0, 512)) > 1.0


def test_csf_circle_radius_law():
    R0, T = 1.0, 0.3
    run = csf_evolve(circle(256, R0), T)
    r = np.linalg.norm(run.states[-1].points, axis=1).mean()
    assert r == pytest.approx(np.sqrt(R0**2 - 2 * T), rel=0.01)


@pytest.mark.parametrize("curve", [ellipse(2.0, 1.0, 256), ellipse(1.3, 1.0, 256),
                                   perturbed_circle(0.05, 256)])
def test_sup_ratio_nonincreasing(curve):
    run = csf_evolve(curve, 0.2, save_every=20)
    q = noncollapse_monitor(run)
    assert np.all(np.diff(q) <= 1e-3)


def test_csf_refuses_nonconvex():
    th = np.linspace(0, 2 * np.pi, 200, endpoint=False)
    r = 1 + 0.4 * np.cos(5 * th)
    from mcfsurgery.curves import PlaneCurve
    with pytest.raises(CurveError):
        csf_evolve(PlaneCurve(np.column_stack([r * np.cos(th), r * np.sin(th)])), 0.1)


def test_homotopy_endpoints():
    g = perturbed_circle(0.005, 128)
    fam = build_homotopy(g, 0.05)
    assert np.array_equal(fam(0.1).points, g.points)
    assert np.array_equal(fam(0.25).points, g.points)
    tgt = fam(0.5).points
    assert np.allclose(np.linalg.norm(tgt, axis=1), 1.0, atol=1e-12)
    assert fam.worst_ratio <= 1.05


def test_homotopy_refuses_collapsed_source():
    with pytest.raises(CurveError):
        build_homotopy(ellipse(2.0, 1.0, 256), 0.05)
    with pytest.raises(CurveError):
        build_homotopy(perturbed_circle(0.01, 128), 0.05)


def test_rounded_square_is_not_strictly_convex():
    with pytest.raises(CurveError):
        csf_evolve(rounded_square(2.0, 0.5, 256), 0.1)
