"""Builtin test surfaces as meshes or generating curves of surfaces of revolution."""

from __future__ import annotations

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq

from .mesh import SurfaceMesh


def icosphere(subdiv: int = 4, radius: float = 1.0, center=(0.0, 0.0, 0.0)) -> SurfaceMesh:
    t = (1.0 + 5**0.5) / 2.0
    v = [(-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0),
         (0, -1, t), (0, 1, t), (0, -1, -t), (0, 1, -t),
         (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1)]
    f = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
         (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
         (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
         (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)]
    verts = [np.array(p, float) / np.linalg.norm(p) for p in v]
    faces = np.array(f)
    for _ in range(subdiv):
        cache = {}

        def mid(a, b):
            key = (a, b) if a < b else (b, a)
            if key not in cache:
                m = verts[a] + verts[b]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        new = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = np.array(new)
    vv = np.array(verts) * radius + np.asarray(center, float)
    return SurfaceMesh(vv, faces, closed=True)


def ellipsoid(a: float, b: float, c: float, subdiv: int = 4) -> SurfaceMesh:
    s = icosphere(subdiv)
    return SurfaceMesh(s.vertices * np.array([a, b, c]), s.triangles, closed=True)


def revolve(z, r, n_theta: int = 64, close_start: bool | None = None,
            close_end: bool | None = None, loop: bool = False) -> SurfaceMesh:
    """Mesh of the surface swept by the generating curve (z_i, r_i) about the z-axis.

    Ends with r == 0 collapse to a single apex vertex. `loop=True` treats the
    curve as closed (torus-like). Orientation is fixed afterwards so normals
    point away from the enclosed region.
    """
    z = np.asarray(z, float)
    r = np.asarray(r, float)
    if close_start is None:
        close_start = (not loop) and r[0] == 0.0
    if close_end is None:
        close_end = (not loop) and r[-1] == 0.0
    th = 2 * np.pi * np.arange(n_theta) / n_theta
    c, s = np.cos(th), np.sin(th)
    lo = 1 if close_start else 0
    hi = len(z) - 1 if close_end else len(z)
    rings = np.arange(lo, hi)
    verts = [np.column_stack([r[i] * c, r[i] * s, np.full(n_theta, z[i])]) for i in rings]
    verts = np.vstack(verts)
    n_rings = len(rings)
    idx = np.arange(n_rings * n_theta).reshape(n_rings, n_theta)
    tris = []
    pairs = [(j, j + 1) for j in range(n_rings - 1)]
    if loop:
        pairs.append((n_rings - 1, 0))
    k = np.arange(n_theta)
    k1 = (k + 1) % n_theta
    for a, b in pairs:
        tris.append(np.column_stack([idx[a, k], idx[a, k1], idx[b, k1]]))
        tris.append(np.column_stack([idx[a, k], idx[b, k1], idx[b, k]]))
    extra = []
    if close_start:
        apex = len(verts) + len(extra)
        extra.append([0.0, 0.0, z[0]])
        tris.append(np.column_stack([np.full(n_theta, apex), idx[0, k1], idx[0, k]]))
    if close_end:
        apex = len(verts) + len(extra)
        extra.append([0.0, 0.0, z[-1]])
        tris.append(np.column_stack([np.full(n_theta, apex), idx[-1, k], idx[-1, k1]]))
    if extra:
        verts = np.vstack([verts, np.array(extra)])
    tris = np.vstack(tris)
    closed = loop or (close_start and close_end)
    mesh = SurfaceMesh(verts, tris, closed=closed)
    if closed:
        if mesh.volume() < 0:
            mesh = SurfaceMesh(verts, tris[:, ::-1], closed=True)
    else:
        # open tube: orient so face normals point away from the axis
        fn = mesh.face_normals()
        cen = verts[tris].mean(axis=1)
        radial = cen.copy()
        radial[:, 2] = 0.0
        if np.sum(np.einsum("ij,ij->i", fn, radial)) < 0:
            mesh = SurfaceMesh(verts, tris[:, ::-1], closed=False)
    return mesh


def resample_curve(points, n: int, density=None):
    """Redistribute a planar polyline to n nodes, uniform in (weighted) arclength.

    `density`, if given, is a callable of the node coordinates returning a
    positive weight; nodes concentrate where the weight is large.
    """
    p = np.asarray(points, float)
    seg = np.linalg.norm(np.diff(p, axis=0), axis=1)
    keep = np.concatenate([[True], seg > 1e-14])
    p = p[keep]
    seg = np.linalg.norm(np.diff(p, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    spline = CubicSpline(s, p, axis=0)
    if density is None:
        target = np.linspace(0.0, s[-1], n)
    else:
        fine = np.linspace(0.0, s[-1], 8 * n)
        w = density(spline(fine))
        cw = np.concatenate([[0.0], np.cumsum(0.5 * (w[1:] + w[:-1]) * np.diff(fine))])
        target = np.interp(np.linspace(0.0, cw[-1], n), cw, fine)
    out = spline(target)
    out[0], out[-1] = p[0], p[-1]
    return out


def sphere_profile(radius: float = 1.0, n: int = 257):
    phi = np.linspace(np.pi, 0.0, n)
    z, r = radius * np.cos(phi), radius * np.sin(phi)
    r[0] = r[-1] = 0.0
    return z, r


def capsule_profile(radius: float, length: float, n: int = 401):
    """Cylinder of the given barrel length closed by hemispheres (C^1 junctions)."""
    h = length / 2.0
    arc = np.pi * radius / 2
    total = 2 * arc + length
    s = np.linspace(0.0, total, n)
    z = np.empty(n)
    r = np.empty(n)
    a = s < arc
    phi = s[a] / radius
    z[a] = -h - radius * np.cos(phi)
    r[a] = radius * np.sin(phi)
    b = (s >= arc) & (s <= arc + length)
    z[b] = -h + (s[b] - arc)
    r[b] = radius
    c = s > arc + length
    phi = (s[c] - arc - length) / radius
    z[c] = h + radius * np.sin(phi)
    r[c] = radius * np.cos(phi)
    r[0] = r[-1] = 0.0
    return z, r


def _smooth_step(x):
    """C-infinity step: 0 for x <= 0, 1 for x >= 1."""
    x = np.clip(np.asarray(x, float), 0.0, 1.0)
    out = np.zeros_like(x)
    inner = (x > 0) & (x < 1)
    xi = x[inner]
    f = np.exp(-1.0 / xi)
    g = np.exp(-1.0 / (1.0 - xi))
    out[inner] = f / (f + g)
    out[x >= 1] = 1.0
    return out


def _flare(r0, th0, H0, Hu, ramp):
    """Generating curve with prescribed mean curvature ramping from H0 to Hu.

    Integrates z' = cos th, r' = sin th, th' = cos th / r - H(s) in arclength
    until the tangent turns horizontal again (the bulge).
    """
    def rhs(s, y):
        _, r, th = y
        H = Hu + (H0 - Hu) * (1.0 - _smooth_step(np.array([s / ramp]))[0])
        return [np.cos(th), np.sin(th), np.cos(th) / r - H]

    def bulge(s, y):
        return y[2] if s > ramp else 1.0
    bulge.terminal = True
    bulge.direction = -1
    return solve_ivp(rhs, [0.0, 100.0 / Hu], [0.0, r0, th0], events=bulge,
                     max_step=min(0.01, r0 / 4), rtol=1e-10, atol=1e-12)


def dumbbell_profile(bulb: float = 1.0, waist: float = 0.3, separation: float = 3.0,
                     n: int = 513, dip: float = 0.1):
    """Two bulbs of radius `bulb` joined by a tube of radius `waist` and length `separation`.

    The tube radius is waist * (1 + dip (z/c)^2) on |z| <= c = separation/2,
    so the pinch happens at z = 0. Each flare is integrated with a mean
    curvature that ramps from the tube value down to the constant that makes
    the bulge radius equal `bulb`; the bulb is closed by a spherical cap of
    that radius. Mean curvature is positive everywhere by construction.
    """
    if not (0 < waist < bulb):
        raise ValueError("dumbbell needs 0 < waist < bulb")
    if separation <= 0:
        raise ValueError("separation must be positive")
    c = separation / 2.0
    zt = np.linspace(0.0, c, 400)
    rt = waist * (1.0 + dip * (zt / c) ** 2)
    r_c = rt[-1]
    slope = 2 * dip * waist / c
    curv = 2 * dip * waist / c**2
    th0 = np.arctan(slope)
    # tube mean curvature at z = c (profile curvature bends away from the axis)
    H0 = np.cos(th0) / r_c - curv / (1 + slope**2) ** 1.5
    ramp = 0.3 * bulb

    def excess(Hu):
        sol = _flare(r_c, th0, H0, Hu, ramp)
        return sol.y[1, -1] - bulb

    Hu = brentq(excess, 0.5 / bulb, min(H0, 4.0 / bulb) * 0.999, xtol=1e-12)
    sol = _flare(r_c, th0, H0, Hu, ramp)
    fz = c + sol.y[0]
    fr = sol.y[1]
    zb, rb = fz[-1], fr[-1]
    phi = np.linspace(0.0, np.pi / 2, 400)[1:]
    cz = zb + rb * np.sin(phi)
    cr = rb * np.cos(phi)
    right_z = np.concatenate([zt, fz[1:], cz])
    right_r = np.concatenate([rt, fr[1:], cr])
    z = np.concatenate([-right_z[::-1], right_z[1:]])
    r = np.concatenate([right_r[::-1], right_r[1:]])
    pts = resample_curve(np.column_stack([z, r]), n)
    pts[0, 1] = pts[-1, 1] = 0.0
    return pts[:, 0], pts[:, 1]


def torus(R: float = 2.0, r: float = 0.5, n_major: int = 96, n_minor: int = 32) -> SurfaceMesh:
    if not (0 < r < R):
        raise ValueError("torus needs 0 < r < R")
    phi = 2 * np.pi * np.arange(n_minor) / n_minor
    z = r * np.sin(phi)
    rr = R + r * np.cos(phi)
    return revolve(z, rr, n_theta=n_major, loop=True)


def cylinder_tube(radius: float = 1.0, length: float = 24.0, n_theta: int = 64,
                  n_z: int | None = None) -> SurfaceMesh:
    """Open tube along e3, centred at the origin."""
    if n_z is None:
        n_z = int(round(length / (2 * np.pi * radius / n_theta))) + 1
    z = np.linspace(-length / 2, length / 2, n_z)
    return revolve(z, np.full(n_z, radius), n_theta, close_start=False, close_end=False)


def capsule(radius: float = 1.0, length: float = 8.0, n_theta: int = 64) -> SurfaceMesh:
    h = 2 * np.pi * radius / n_theta
    total = np.pi * radius + length
    z, r = capsule_profile(radius, length, n=int(round(total / h)) + 1)
    return revolve(z, r, n_theta)


def dumbbell(bulb: float = 1.0, waist: float = 0.3, separation: float = 3.0,
             n_theta: int = 64, n: int = 257, **kw) -> SurfaceMesh:
    z, r = dumbbell_profile(bulb, waist, separation, n=n, **kw)
    return revolve(z, r, n_theta)


def disk(radius: float = 1.5, h: float = 0.02, center=(0.0, 0.0, 0.0)) -> SurfaceMesh:
    """Flat disk in the plane z = center[2], Delaunay on concentric rings of spacing h (open)."""
    from scipy.spatial import Delaunay
    n_r = int(np.ceil(radius / h))
    pts = [np.zeros((1, 2))]
    for k in range(1, n_r + 1):
        rho = radius * k / n_r
        m = max(6, int(round(2 * np.pi * rho / h)))
        th = 2 * np.pi * (np.arange(m) + 0.5 * (k % 2)) / m
        pts.append(rho * np.column_stack([np.cos(th), np.sin(th)]))
    P = np.vstack(pts)
    tri = Delaunay(P).simplices
    a, b, c = P[tri[:, 0]], P[tri[:, 1]], P[tri[:, 2]]
    cross = (b - a)[:, 0] * (c - a)[:, 1] - (b - a)[:, 1] * (c - a)[:, 0]
    tri[cross < 0] = tri[cross < 0][:, [0, 2, 1]]
    V = np.column_stack([P, np.zeros(len(P))]) + np.asarray(center, float)
    return SurfaceMesh(V, tri, closed=False)
