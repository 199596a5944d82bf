import json

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from mcfsurgery.geometry import compute_curvature
from mcfsurgery.mesh import SurfaceMesh, merge_meshes
from mcfsurgery.neck import (NeckError, check_neck, fit_axis_and_sections, scan_for_necks,
                             slice_loops, write_certificate)
from mcfsurgery.shapes import capsule, cylinder_tube, dumbbell, icosphere


@pytest.fixture(scope="module")
def cyl():
    return cylinder_tube(1.0, 24.0, 64)


def _seed(m):
    return int(np.argmin(np.abs(m.vertices[:, 2])))


def _cert(m, scale=1.0, eps=0.01):
    return check_neck(fit_axis_and_sections(m, _seed(m), 10, scale), 0.5, 0.1, eps)


def test_cylinder_passes_with_margins(cyl):
    c = _cert(cyl)
    assert c.passed
    assert all(v["margin"] > 0 for v in c.conditions.values())
    assert c.r == pytest.approx(1.0, rel=1e-3)


def test_sphere_fails_c1():
    s = icosphere(4)
    c = _cert(s)
    assert not c.conditions["C1"]["pass"]


def test_parallel_wall_flips_c5(cyl):
    y, z = np.meshgrid(np.linspace(-3, 3, 31), np.linspace(-12, 12, 97))
    P = np.column_stack([np.full(y.size, 1.5), y.ravel(), z.ravel()])
    idx = np.arange(y.size).reshape(y.shape)
    a, b, c, d = idx[:-1, :-1].ravel(), idx[:-1, 1:].ravel(), idx[1:, 1:].ravel(), idx[1:, :-1].ravel()
    wall = SurfaceMesh(P, np.vstack([np.column_stack([a, b, c]), np.column_stack([a, c, d])]),
                       closed=False)
    both = merge_meshes([cyl, wall], closed=False)
    before, after = _cert(cyl), _cert(both)
    assert before.conditions["C5"]["pass"] and not after.conditions["C5"]["pass"]
    for k in ("C1", "C2", "C3", "C4"):
        assert after.conditions[k]["pass"]


@pytest.mark.parametrize("scale", [0.01, 3.7])
def test_scale_equivariant(cyl, scale):
    a = _cert(cyl)
    b = _cert(cyl.transformed(scale=scale), scale)
    assert b.r / scale == pytest.approx(a.r, abs=1e-9)
    for k in a.conditions:
        assert abs(a.conditions[k]["margin"] - b.conditions[k]["margin"]) < 1e-9


def test_rigid_motion_recovers_axis(cyl):
    R = Rotation.from_rotvec([0.3, 0.5, 0.1]).as_matrix()
    moved = cyl.transformed(rotation=R, translation=[1, 2, 3])
    reg = fit_axis_and_sections(moved, _seed(cyl), 10, 1.0)
    assert abs(reg.axis @ R[:, 2]) > np.cos(np.radians(0.5))


def test_elliptic_neck_fails_c2_beyond_delta(cyl):
    m = SurfaceMesh(cyl.vertices * np.array([1.05, 1, 1]), cyl.triangles, closed=False)
    c = _cert(m)
    assert not c.conditions["C2"]["pass"]
    assert c.conditions["C2"]["value"] == pytest.approx(1.1022, abs=2e-3)


def test_c3_is_stricter_than_c2(cyl):
    # a 2% elliptic neck satisfies noncollapsing but not the derivative bound
    m = SurfaceMesh(cyl.vertices * np.array([1.02, 1, 1]), cyl.triangles, closed=False)
    c = _cert(m)
    assert c.conditions["C2"]["pass"] and not c.conditions["C3"]["pass"]


def test_scan_finds_dumbbell_waist_only():
    db = dumbbell(1, 0.3, 3, n_theta=64, n=257)
    f = compute_curvature(db)
    found = scan_for_necks(db, f, H1=3.3, Theta=1.0, eta0=0.1)
    assert found
    assert abs(db.vertices[found[0]["seed"], 2]) < 0.2
    sph = icosphere(4)
    assert scan_for_necks(sph, compute_curvature(sph), 1, 1, 0.1) == []


def test_capsule_neck_clusters_on_straight_part():
    cap = capsule(1.0, 8.0, 64)
    found = scan_for_necks(cap, compute_curvature(cap), 1, 1, 0.1)
    assert found
    assert all(abs(cap.vertices[c["seed"], 2]) <= 4.0 for c in found)


def test_slice_loops_of_sphere_equator():
    loops = slice_loops(icosphere(4), np.zeros(3), np.array([0, 0, 1.0]))
    assert len(loops) == 1
    assert np.allclose(np.linalg.norm(loops[0], axis=1), 1.0, atol=2e-3)


def test_fit_refuses_concave_seed():
    s = icosphere(3)
    inv = SurfaceMesh(s.vertices, s.triangles[:, ::-1], closed=True)
    with pytest.raises(NeckError):
        fit_axis_and_sections(inv, 0, 2.0, 1.0)


def test_certificate_json(cyl, tmp_path):
    c = _cert(cyl)
    write_certificate(tmp_path / "c.json", c)
    d = json.loads((tmp_path / "c.json").read_text())
    assert d["pass"] and set(d["conditions"]) == {"C1", "C2", "C3", "C4", "C5"}
