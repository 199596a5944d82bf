"""Estimates along a flow: Gaussian density, convexity, cylindrical and gradient checks."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geometry import CurvatureField, RadiusField, _derivative_estimates
from .mesh import SurfaceMesh

P_MAX = 40.0


# -- Gaussian density -----------------------------------------------------------------------------

@dataclass
class DensityQuery:
    x0: np.ndarray
    t0: float
    r: float
    refine: int = 1

    def __post_init__(self):
        self.x0 = np.asarray(self.x0, float)
        if self.r <= 0:
            raise ValueError("density radius must be positive")


def density_integrand(x, x0, r):
    d2 = ((x - x0) ** 2).sum(-1)
    w = np.maximum(1.0 - d2 + 4 * r * r, 0.0) ** 3
    return np.exp(-d2 / (4 * r * r)) * w / (4 * np.pi * r * r)


def _subdivide(V, T):
    """Split every triangle into four (midpoint subdivision, positions only)."""
    a, b, c = V[T[:, 0]], V[T[:, 1]], V[T[:, 2]]
    ab, bc, ca = (a + b) / 2, (b + c) / 2, (c + a) / 2
    tris = np.stack([np.stack([a, ab, ca], 1), np.stack([ab, b, bc], 1),
                     np.stack([ca, bc, c], 1), np.stack([ab, bc, ca], 1)], 1)
    return tris.reshape(-1, 3, 3)


def surface_density(mesh: SurfaceMesh, x0, r: float, refine: int = 1) -> float:
    """Quadrature of the density integrand over a mesh (7-point rule on refined triangles)."""
    tri = mesh.vertices[mesh.triangles]
    for _ in range(refine):
        tri = _subdivide(tri.reshape(-1, 3), np.arange(len(tri) * 3).reshape(-1, 3))
    a, b, c = tri[:, 0], tri[:, 1], tri[:, 2]
    area = 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)
    # degree-5 Dunavant rule
    w = np.array([0.225] + [0.132394152788506] * 3 + [0.125939180544827] * 3)
    a1, b1 = 0.059715871789770, 0.470142064105115
    a2, b2 = 0.797426985353087, 0.101286507323456
    bary = np.array([[1 / 3, 1 / 3, 1 / 3], [a1, b1, b1], [b1, a1, b1], [b1, b1, a1],
                     [a2, b2, b2], [b2, a2, b2], [b2, b2, a2]])
    x0 = np.asarray(x0, float)
    total = 0.0
    for wk, (l1, l2, l3) in zip(w, bary):
        pts = l1 * a + l2 * b + l3 * c
        total += wk * np.sum(area * density_integrand(pts, x0, r))
    return float(total)


def profile_density(z, rr, x0_z: float, r: float, n_gauss: int = 8) -> float:
    """Density over a surface of revolution about the z-axis for x0 on the axis.

    Gauss-Legendre on each segment of the generating curve, exact in the angle.
    """
    z, rr = np.asarray(z, float), np.asarray(rr, float)
    g, gw = np.polynomial.legendre.leggauss(n_gauss)
    u = 0.5 * (g + 1)
    zq = z[:-1, None] + u * np.diff(z)[:, None]
    rq = rr[:-1, None] + u * np.diff(rr)[:, None]
    seg = np.hypot(np.diff(z), np.diff(rr))
    d2 = (zq - x0_z) ** 2 + rq**2
    wgt = np.maximum(1.0 - d2 + 4 * r * r, 0.0) ** 3
    f = np.exp(-d2 / (4 * r * r)) * wgt / (4 * np.pi * r * r) * 2 * np.pi * rq
    return float(np.sum(seg[:, None] * 0.5 * gw * f))


class History:
    """Snapshots (t, mesh) for density queries; linear interpolation in time is first order."""

    def __init__(self, snapshots=None):
        self.snapshots = sorted(snapshots or [], key=lambda s: s[0])

    def add(self, t: float, item):
        self.snapshots.append((float(t), item))
        self.snapshots.sort(key=lambda s: s[0])

    @property
    def times(self):
        return np.array([s[0] for s in self.snapshots])

    def at(self, t: float, tol: float):
        ts = self.times
        if not len(ts) or t < ts[0] - tol or t > ts[-1] + tol:
            raise ValueError(f"no snapshot near t = {t:g} (history spans "
                             f"[{ts.min() if len(ts) else float('nan'):g}, "
                             f"{ts.max() if len(ts) else float('nan'):g}])")
        i = int(np.argmin(np.abs(ts - t)))
        return self.snapshots[i]


def gaussian_density(history, q: DensityQuery, tol: float | None = None) -> float:
    """Theta(x0, t0; r) from the snapshot nearest to t0 - r^2.

    `history` is a History or a callable t -> mesh (exact histories such as
    shrinking spheres). With a History the snapshot must lie within `tol`
    (default r^2/8) of t0 - r^2.
    """
    t = q.t0 - q.r**2
    if callable(history) and not isinstance(history, History):
        item = history(t)
    else:
        tol = q.r**2 / 8 if tol is None else tol
        if t < history.times.min() - tol:
            raise ValueError("r^2 exceeds the stored history span")
        _, item = history.at(t, tol)
    if isinstance(item, SurfaceMesh):
        return surface_density(item, q.x0, q.r, q.refine)
    z, rr = item
    return profile_density(z, rr, float(q.x0[2]), q.r)


def density_scan(history, x0, t0, radii, refine=1) -> np.ndarray:
    return np.array([gaussian_density(history, DensityQuery(x0, t0, r, refine)) for r in radii])


def write_density_csv(path, radii, theta):
    with Path(path).open("w") as fh:
        fh.write("r,theta\n")
        for r, th in zip(radii, theta):
            fh.write(f"{float(r)!r},{float(th)!r}\n")


# -- pointwise estimates ------------------------------------------------------------------------------

def convexity_check(fld: CurvatureField, eta: float, C1: float, H_ref: float) -> dict:
    """min of lambda1 + eta H + C1 H_ref, and the smallest C1 that would make it nonnegative."""
    ok = np.isfinite(fld.lambda1)
    m = fld.lambda1 + eta * fld.H + C1 * H_ref
    i = int(np.nanargmin(np.where(ok, m, np.inf)))
    need = float(np.nanmax(np.where(ok, -fld.lambda1 - eta * fld.H, -np.inf)) / H_ref)
    return {"margin": float(m[i]), "argmin": i, "C1_required": max(need, 0.0), "pass": bool(m[i] >= 0)}


def f_field(H, mu, delta: float, sigma: float, C1: float):
    """f = H^(sigma-1) (mu - (1+delta) H) - C1; +inf where H <= 0 (the monitor is undefined)."""
    H = np.asarray(H, float)
    with np.errstate(invalid="ignore", divide="ignore"):
        f = H ** (sigma - 1) * (np.asarray(mu, float) - (1 + delta) * H) - C1
    return np.where(H > 0, f, np.inf)


def cylindrical_check(fld: CurvatureField, radii: RadiusField, delta: float, sigma: float,
                      C1: float = 0.0, p: float = 10.0, weights=None) -> dict:
    """sup (mu - (1+delta) H)/H^(1-sigma) and the integral of f_+^p (vertex-area weights)."""
    H = fld.H
    if np.any(H[np.isfinite(H)] <= 0):
        raise ValueError("cylindrical check needs H > 0")
    if p > P_MAX:
        warnings.warn(f"p = {p} clamped to {P_MAX}")
        p = P_MAX
    q = (radii.mu - (1 + delta) * H) / H ** (1 - sigma)
    f = f_field(H, radii.mu, delta, sigma, C1)
    fp = np.maximum(f, 0.0)
    ok = np.isfinite(q)
    i = int(np.argmax(np.where(ok, q, -np.inf)))
    w = np.ones_like(H) if weights is None else np.asarray(weights)
    return {"sup": float(q[i]), "argmax": i, "f_plus": fp,
            "integral": float(np.nansum(w * fp**p)), "p": p}


def gradient_check(mesh: SurfaceMesh, fld: CurvatureField, C_sharp: float, H1: float) -> dict:
    """max |grad A|/(H + H1)^2 and |grad^2 A|/(H + H1)^3 from the fitted derivatives."""
    g, h = _derivative_estimates(mesh, fld)
    base = fld.H + H1
    r1 = g / base**2
    r2 = h / base**3
    ok = np.isfinite(r1) & np.isfinite(r2)
    i1 = int(np.argmax(np.where(ok, r1, -np.inf)))
    i2 = int(np.argmax(np.where(ok, r2, -np.inf)))
    return {"ratio1": float(r1[i1]), "argmax1": i1, "ratio2": float(r2[i2]), "argmax2": i2,
            "pass": bool(r1[i1] <= C_sharp and r2[i2] <= C_sharp)}


def write_report(path, report: dict):
    clean = {k: v for k, v in report.items() if not isinstance(v, np.ndarray)}
    Path(path).write_text(json.dumps({"schema": 1, **clean}, indent=2, default=float))
