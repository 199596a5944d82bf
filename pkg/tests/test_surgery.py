import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mcfsurgery.neck import check_neck, fit_axis_and_sections
from mcfsurgery.shapes import cylinder_tube, dumbbell
from mcfsurgery.surgery import (SectionFamily, SurgeryError, SurgeryParams, bending_profile,
                                bending_scan, build_cap, cutoff, gluing_profile, perform_surgery,
                                radial_profile, smooth_abs, tail_radius, verify_cap)

E4 = 1 - np.exp(-4.0)


# frozen values (computed independently from the closed forms)
@pytest.mark.parametrize("Lam,s,value", [(1e4, 1e4, 1.963369), (1e4, 1e4 + 10.0, 1.932043)])
def test_gluing_frozen(Lam, s, value):
    p = SurgeryParams(Lam=Lam, L=1e3 * Lam)
    assert gluing_profile(p, np.array([s]))[0] == pytest.approx(value, abs=1e-6)


def test_radius_at_lambda_frozen():
    assert radial_profile(SurgeryParams(Lam=100.0), np.array([100.0]))[0][0] == pytest.approx(0.981684, abs=1e-6)


@pytest.mark.parametrize("Lam", [16.0, 50.0, 100.0, 1000.0, 1e4])
def test_gluing_endpoint_identities(Lam):
    p = SurgeryParams(Lam=Lam, L=1e3 * Lam)
    k = p.lam4
    v0 = gluing_profile(p, np.array([Lam]))[0]
    v1 = gluing_profile(p, np.array([Lam + k]))[0]
    assert abs(v0 - 2 * E4) < 1e-9
    assert abs(v1 - 2 * tail_radius(p, np.array([Lam + k]))[0][0]) < 1e-9
    assert abs(v1 - 2 * p.a * np.sqrt(k / (p.a + k))) < 1e-9


@settings(max_examples=30, deadline=None)
@given(Lam=st.floats(16.0, 1e4))
def test_gluing_concave(Lam):
    p = SurgeryParams(Lam=Lam, L=1e3 * Lam)
    s = np.linspace(Lam, Lam + p.lam4, 2001)
    _, _, v2 = gluing_profile(p, s, derivatives=True)
    assert np.all(v2 <= 1e-9)


@settings(max_examples=30, deadline=None)
@given(z=st.floats(-1.0, 1.0))
def test_smooth_abs_properties(z):
    phi, d1, d2 = smooth_abs(np.array([z, -z]))
    assert phi[0] == pytest.approx(phi[1])
    assert phi[0] >= abs(z) - 1e-15
    assert abs(d1[0]) <= 1 + 1e-12
    assert d2[0] >= -1e-9
    if abs(z) >= 0.01:
        assert phi[0] == abs(z)


def test_cutoff_values():
    x = np.array([-5.0, 0.5, 1.0, 1.5, 2.0, 3.0])
    c = cutoff(x)
    assert c[0] == c[1] == c[2] == 1.0 and c[4] == c[5] == 0.0
    assert 0 < c[3] < 1 and np.all(np.diff(c) <= 0)


def test_bending_derivatives_match_finite_differences():
    Lam = 100.0
    s = np.linspace(1.0, 3.0, 9)
    h = 1e-5
    u, u1, u2 = bending_profile(Lam, s)
    up, _, _ = bending_profile(Lam, s + h)
    um, _, _ = bending_profile(Lam, s - h)
    assert np.allclose(u1, (up - um) / (2 * h), rtol=1e-5, atol=1e-300)
    with pytest.raises(ValueError):
        bending_profile(Lam, np.array([0.0]))


def test_bending_scan_large_lambda_passes_small_fails():
    assert bending_scan(1e4)["pass"]
    assert not bending_scan(4.0)["pass"]


def test_cap_is_unchanged_for_nonpositive_s():
    p = SurgeryParams(Lam=50.0, L=1e6)
    fam = SectionFamily.cylinder(48, L=6 + 2 * p.lam4)
    cap = build_cap(fam, p, s_start=-4.0)
    neg = cap.s <= 0
    assert np.array_equal(cap.local[neg, :, :2], fam(cap.s[neg]))
    assert np.all(cap.labels[neg] == 0)


def test_cap_tip_closes():
    p = SurgeryParams(Lam=50.0, L=1e6)
    cap = build_cap(SectionFamily.cylinder(48, L=6 + 2 * p.lam4), p, s_start=-2.0)
    rho = np.linalg.norm(cap.local[:, :, :2], axis=2).mean(1)
    tail = cap.labels == 5
    assert np.allclose(rho[tail], tail_radius(p, cap.s[tail])[0], rtol=1e-9)
    assert np.all(np.diff(rho[tail]) < 0)
    assert cap.tip_local[2] == pytest.approx(p.s_tip)


def test_refuses_short_sections():
    p = SurgeryParams(Lam=100.0, L=1e6)
    with pytest.raises(SurgeryError):
        build_cap(SectionFamily.cylinder(48, L=2.0), p, s_start=-1.0)


@pytest.mark.slow
def test_battery_lambda_50():
    p = SurgeryParams(Lam=50.0, L=1e7)
    cap = build_cap(SectionFamily.cylinder(48, L=6 + 2 * p.lam4), p, s_start=-4.0)
    rep = verify_cap(cap)
    assert rep["failed"] == []
    # the bending inequality with c0 = 0.1 needs a much larger Lambda
    assert rep["parameter_violations"] == ["bending inequality fails"]


# -- mesh surgery ------------------------------------------------------------------------------

DESK = SurgeryParams(Lam=3.0, gap=0.25)


def _tube_region(scale=1.0):
    m = cylinder_tube(1, 24, 64).transformed(scale=scale)
    seed = int(np.argmin(np.linalg.norm(m.vertices - [scale, 0, 0], axis=1)))
    reg = fit_axis_and_sections(m, seed, 8.0, scale)
    return m, reg, check_neck(reg, 0.55, 0.05, 0.01, L=5)


def test_mesh_surgery_on_cylinder():
    m, reg, cert = _tube_region()
    assert cert.passed
    res = perform_surgery(m, reg, cert, DESK)
    assert res.event["components"] == 2
    assert res.event["removed_vertices"] > 0
    assert len(res.labels) == res.mesh.n_vertices
    assert "Lambda = 3 below Lambda_min = 16" in res.event["parameter_violations"]


def test_mesh_surgery_scale_equivariant():
    m, reg, cert = _tube_region()
    a = perform_surgery(m, reg, cert, DESK)
    m2, reg2, cert2 = _tube_region(2.5)
    b = perform_surgery(m2, reg2, cert2, DESK)
    assert b.event["max_H_modified"] * 2.5 == pytest.approx(a.event["max_H_modified"], rel=1e-6)
    assert b.mesh.n_vertices == a.mesh.n_vertices


def test_mesh_surgery_on_dumbbell_gives_two_spheres():
    m = dumbbell(1, 0.3, 3)
    seed = int(np.argmin(np.linalg.norm(m.vertices - [0.3, 0, 0], axis=1)))
    reg = fit_axis_and_sections(m, seed, 7.0, 0.3)
    cert = check_neck(reg, 0.55, 0.05, 0.5, L=1)
    assert cert.passed
    res = perform_surgery(m, reg, cert, DESK)
    n, comp = res.mesh.components()
    assert n == 2
    for k in range(n):
        sub, _ = res.mesh.submesh(comp == k)
        sub = type(sub)(sub.vertices, sub.triangles, closed=True)
        sub.validate()
        assert sub.euler_characteristic() == 2
        assert sub.volume() > 0


def test_mesh_surgery_refuses_failed_certificate():
    from mcfsurgery.shapes import icosphere
    sph = icosphere(4)
    seed = int(np.argmin(np.abs(sph.vertices[:, 2])))
    reg = fit_axis_and_sections(sph, seed, 10, 1.0)
    cert = check_neck(reg, 0.5, 0.1, 0.01)
    assert not cert.passed
    with pytest.raises(SurgeryError):
        perform_surgery(sph, reg, cert, DESK)


def test_mesh_surgery_refuses_out_of_range_size():
    m, reg, cert = _tube_region()
    with pytest.raises(SurgeryError):
        perform_surgery(m, reg, cert, DESK, H1=10.0)
