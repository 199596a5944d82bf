import numpy as np
import pytest

from mcfsurgery.axisym import from_profile, sphere
from mcfsurgery.flow import (Component, FlowAbort, FlowSettings, FlowState, RemovalRefused,
                             _candidates, certify_profile_neck, derive_parameters, evolve_mesh,
                             f_integral, genealogy, perform_surgery_profile, profile_alpha,
                             profile_mu, read_events, remove_component, run_with_surgery,
                             surgery_pass)
from mcfsurgery.shapes import dumbbell_profile, icosphere
from mcfsurgery.surgery import SurgeryParams

DESK = SurgeryParams(Lam=3.0, gap=0.25)


def desk_thresholds():
    return derive_parameters(0.5, 1.0, 2.0, 5.0, {"H2": 50.0, "H3": 500.0})


# -- thresholds ------------------------------------------------------------------------------

def test_derived_parameters():
    th = derive_parameters(0.5, 1.0, 2.0, 1.0)
    assert th.Theta == 800.0
    assert th.theta0 == pytest.approx(1e-6 / 800.0**3, rel=1e-12)
    assert th.theta0 == pytest.approx(1.953e-15, rel=1e-3)
    assert (th.H2, th.H3) == (2000.0, 20000.0)
    assert th.alpha_hat > th.alpha
    assert th.overridden == []


def test_overrides_recorded_and_validated():
    th = desk_thresholds()
    assert th.overridden == ["H2", "H3"]
    with pytest.raises(ValueError):
        derive_parameters(0.5, 1.0, 2.0, 5.0, {"H2": 4.0})
    with pytest.raises(ValueError):
        derive_parameters(0.5, 1.0, 2.0, 5.0, {"bogus": 1.0})
    with pytest.raises(ValueError):
        derive_parameters(3.0, 1.0, 2.0, 5.0)


# -- measures ---------------------------------------------------------------------------------

def test_sphere_profile_is_round():
    s = sphere(1.0, 129)
    a_in, _ = profile_alpha(s)
    assert a_in == pytest.approx(2.0, rel=0.02)
    assert np.allclose(profile_mu(s), 1.0, rtol=0.02)
    assert f_integral(s, FlowSettings()) == pytest.approx(0.0, abs=1e-10)


# -- profile surgery --------------------------------------------------------------------------

@pytest.fixture(scope="module")
def neck(pinched_dumbbell):
    th = desk_thresholds()
    s = FlowSettings()
    c = Component(0, pinched_dumbbell)
    for i in _candidates(c, th, s):
        cert = certify_profile_neck(pinched_dumbbell, int(i), DESK.alpha_hat, DESK.delta_hat,
                                    s.neck_eps, s.neck_L)
        if cert["pass"]:
            return int(i), cert
    pytest.fail("no certifiable neck on the pinched dumbbell")


def test_profile_surgery_caps(pinched_dumbbell, neck):
    i, cert = neck
    left, right, info = perform_surgery_profile(pinched_dumbbell, i, DESK)
    r = cert["r"]
    assert info["tips"][1] - info["tips"][0] == pytest.approx(DESK.gap * r)
    assert left.z.max() == pytest.approx(info["tips"][0], abs=1e-9)
    assert right.z.min() == pytest.approx(info["tips"][1], abs=1e-9)
    for prof in (left, right):
        assert np.all(prof.H()[prof.labels > 0] > 0)
        assert prof.r[0] == 0 and prof.r[-1] == 0
    # untouched nodes are copied exactly
    keep = pinched_dumbbell.z < info["window"][0]
    assert np.array_equal(left.z[:keep.sum()], pinched_dumbbell.z[keep])


def test_profile_surgery_refuses_unknown_taper(pinched_dumbbell, neck):
    with pytest.raises(ValueError):
        perform_surgery_profile(pinched_dumbbell, neck[0], DESK, taper="spline")


def test_pass_removes_convex_sphere():
    th = derive_parameters(0.5, 1.0, 2.0, 0.5, {"H2": 1.0, "H3": 10.0})
    s = sphere(0.5, 129)
    state = FlowState.initial(s)
    # lambda1 > 0 everywhere, so the pass removes the sphere instead of failing
    surgery_pass(state, th, DESK, FlowSettings(), 128, 1.0, s.diameter())
    assert state.components == []
    assert state.events[0]["data"]["reason"] == "convex"


def test_pass_aborts_without_certifiable_neck(pinched_dumbbell):
    th = derive_parameters(0.5, 1.0, 2.0, 5.0, {"H2": 50.0, "H3": 500.0})
    s = FlowSettings(neck_eps=1e-6)
    state = FlowState.initial(pinched_dumbbell)
    with pytest.raises(FlowAbort) as exc:
        surgery_pass(state, th, DESK, s, 512, 1.0, pinched_dumbbell.diameter())
    assert exc.value.diagnostic["max_H"] > th.H2


def test_removal_refused_for_dumbbell(pinched_dumbbell):
    state = FlowState.initial(pinched_dumbbell)
    with pytest.raises(RemovalRefused):
        remove_component(state, 0, "convex", desk_thresholds(), FlowSettings(), 1.0)
    with pytest.raises(RemovalRefused):
        remove_component(state, 7, "convex", desk_thresholds(), FlowSettings(), 1.0)


# -- full run -----------------------------------------------------------------------------------

@pytest.fixture(scope="module")
def run():
    prof = from_profile(*dumbbell_profile(1, 0.3, 3, n=257))
    return run_with_surgery(prof, desk_thresholds(), DESK, grid=256)


def test_run_goes_extinct_with_surgery(run):
    kinds = [e["kind"] for e in run.state.events]
    assert run.status == "extinct"
    assert kinds[0] == "start" and kinds[-1] == "end"
    assert kinds.count("surgery") >= 1
    for p in run.passes:
        assert p["max_H_after"] <= 50.0
        assert p["f_after"] <= p["f_before"] * (1 + 1e-6)


def test_genealogy_and_event_roundtrip(run, tmp_path):
    run.write(tmp_path)
    ev = read_events(tmp_path / "events.jsonl")
    assert len(ev) == len(run.state.events)
    parent = genealogy(ev)
    for e in ev:
        if e["kind"] == "surgery":
            assert all(parent[k] == e["component"] for k in e["data"]["children"])
    removed = {e["component"] for e in ev if e["kind"] == "removal"}
    leaves = set(parent) - {p for p in parent.values() if p is not None}
    assert leaves <= removed
    header = (tmp_path / "series.csv").read_text().splitlines()[0]
    assert header.startswith("t,maxH,minH,area,volume,alpha_in")


def test_series_time_monotone(run):
    t = [row["t"] for row in run.series]
    assert np.all(np.diff(t) >= 0)


# -- mesh mode ----------------------------------------------------------------------------------

def test_mesh_sphere_radius_law():
    m, t = evolve_mesh(icosphere(3), 0.1)[:2]
    R = np.linalg.norm(m.vertices, axis=1).mean()
    assert R == pytest.approx(np.sqrt(1 - 4 * 0.1), rel=0.01)
