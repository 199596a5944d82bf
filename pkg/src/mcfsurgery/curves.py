"""Plane curves: discrete curvature, the Z-function, curve inscribed radius,
curve shortening flow and the homotopy from a convex section to the unit circle.

Closed curves are stored counter-clockwise, so the outward normal of a
convex curve is the tangent rotated by -90 degrees and kappa > 0.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.interpolate import CubicSpline
from shapely.geometry import LinearRing, LineString


class CurveError(ValueError):
    pass


@dataclass(frozen=True)
class PlaneCurve:
    points: np.ndarray
    closed: bool = True

    def __post_init__(self):
        p = np.array(self.points, dtype=float)
        if p.ndim != 2 or p.shape[1] != 2:
            raise CurveError("points must have shape (n, 2)")
        if self.closed and len(p) > 2 and _shoelace(p) < 0:
            p = p[::-1].copy()
        p.setflags(write=False)
        object.__setattr__(self, "points", p)

    def __len__(self):
        return len(self.points)

    def segments(self) -> np.ndarray:
        p = self.points
        nxt = np.roll(p, -1, axis=0) if self.closed else p[1:]
        return np.linalg.norm(nxt - p[: len(nxt)], axis=1)

    def arclength(self) -> np.ndarray:
        """Arclength parameter at each sample, starting at 0."""
        return np.concatenate([[0.0], np.cumsum(self.segments())])[: len(self)]

    def length(self) -> float:
        return float(self.segments().sum())

    def area(self) -> float:
        return float(_shoelace(self.points)) if self.closed else 0.0

    def centroid(self) -> np.ndarray:
        """Arclength-weighted centroid of the polygon edges."""
        p = self.points
        nxt = np.roll(p, -1, axis=0)
        seg = self.segments()
        return (0.5 * (p + nxt) * seg[:, None]).sum(axis=0) / seg.sum()

    def is_simple(self) -> bool:
        if self.closed:
            return bool(LinearRing(self.points).is_simple)
        return bool(LineString(self.points).is_simple)

    def translated(self, v) -> "PlaneCurve":
        return PlaneCurve(self.points + np.asarray(v, float), self.closed)

    def scaled(self, c: float) -> "PlaneCurve":
        return PlaneCurve(self.points * c, self.closed)


def _shoelace(p):
    x, y = p[:, 0], p[:, 1]
    return 0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)


def circle(n: int = 256, radius: float = 1.0, phase: float = 0.0) -> PlaneCurve:
    th = phase + 2 * np.pi * np.arange(n) / n
    return PlaneCurve(np.column_stack([radius * np.cos(th), radius * np.sin(th)]))


def ellipse(a: float, b: float, n: int = 512, uniform: bool = True) -> PlaneCurve:
    """Ellipse x^2/a^2 + y^2/b^2 = 1, sampled uniformly in arclength by default."""
    th = 2 * np.pi * np.arange(n) / n
    c = PlaneCurve(np.column_stack([a * np.cos(th), b * np.sin(th)]))
    return resample_closed(c, n) if uniform else c


def rounded_square(side: float, rho: float, n: int = 512) -> PlaneCurve:
    """Square of the given side length with corners rounded to radius rho."""
    h = side / 2 - rho
    if h < 0:
        raise CurveError("corner radius exceeds half the side")
    arc = np.pi / 2 * rho
    L = 4 * (2 * h + arc)
    s = L * np.arange(n) / n
    pts = np.empty((n, 2))
    centres = [(h, h), (-h, h), (-h, -h), (h, -h)]
    for k in range(4):
        # piece k: corner arc k followed by the straight side to corner k+1
        lo = k * (2 * h + arc)
        u = s - lo
        on_arc = (u >= 0) & (u < arc)
        on_side = (u >= arc) & (u < arc + 2 * h)
        th = k * np.pi / 2 + u[on_arc] / rho
        cx, cy = centres[k]
        pts[on_arc] = np.column_stack([cx + rho * np.cos(th), cy + rho * np.sin(th)])
        th_end = (k + 1) * np.pi / 2
        start = np.array([cx + rho * np.cos(th_end), cy + rho * np.sin(th_end)])
        direction = np.array([-np.sin(th_end), np.cos(th_end)])
        pts[on_side] = start + (u[on_side] - arc)[:, None] * direction
    return PlaneCurve(pts)


def perturbed_circle(eps: float, n: int = 256, modes=(2, 3), seed: int = 0) -> PlaneCurve:
    """Unit circle with a smooth radial perturbation of relative size eps."""
    rng = np.random.default_rng(seed)
    th = 2 * np.pi * np.arange(n) / n
    r = np.ones(n)
    for m in modes:
        r += eps / len(modes) * np.cos(m * th + rng.uniform(0, 2 * np.pi))
    return PlaneCurve(np.column_stack([r * np.cos(th), r * np.sin(th)]))


def resample_closed(c: PlaneCurve, n: int | None = None, start: float = 0.0) -> PlaneCurve:
    """Periodic cubic spline through the samples, re-evaluated at uniform arclength."""
    n = len(c) if n is None else n
    p = c.points
    seg = c.segments()
    s = np.concatenate([[0.0], np.cumsum(seg)])
    spline = CubicSpline(s, np.vstack([p, p[:1]]), axis=0, bc_type="periodic")
    L = s[-1]
    target = (start + L * np.arange(n) / n) % L
    return PlaneCurve(spline(target))


# -- discrete curvature -------------------------------------------------------

@dataclass
class CurveProfile:
    kappa: np.ndarray
    normal: np.ndarray
    dkappa: np.ndarray
    d2kappa: np.ndarray
    flagged: np.ndarray


def _circumcircle(a, b, c):
    """Signed curvature and circumcentre of the triples (a, b, c)."""
    ab, bc, ca = b - a, c - b, a - c
    cross = ab[:, 0] * bc[:, 1] - ab[:, 1] * bc[:, 0]
    la, lb, lc = (np.linalg.norm(v, axis=1) for v in (ab, bc, ca))
    kappa = 2.0 * cross / (la * lb * lc)
    # circumcentre via perpendicular bisectors (undefined for collinear triples)
    d = 2.0 * cross
    with np.errstate(divide="ignore", invalid="ignore"):
        a2 = (a**2).sum(1)
        b2 = (b**2).sum(1)
        c2 = (c**2).sum(1)
        ux = (a2 * (b[:, 1] - c[:, 1]) + b2 * (c[:, 1] - a[:, 1]) + c2 * (a[:, 1] - b[:, 1])) / d
        uy = (a2 * (c[:, 0] - b[:, 0]) + b2 * (a[:, 0] - c[:, 0]) + c2 * (b[:, 0] - a[:, 0])) / d
    return kappa, np.column_stack([ux, uy])


def _periodic_gradient(f, s, L):
    """d f / d s on a periodic nonuniform grid (second order)."""
    ext_s = np.concatenate([s[-2:] - L, s, s[:2] + L])
    ext_f = np.concatenate([f[-2:], f, f[:2]])
    return np.gradient(ext_f, ext_s)[2:-2]


def curvature_profile(c: PlaneCurve) -> CurveProfile:
    """kappa from the circumradius of consecutive triples, outward normal, ds-derivatives."""
    if len(c) < 8:
        raise CurveError("need at least 8 samples")
    p = c.points
    if c.closed:
        prv, nxt = np.roll(p, 1, axis=0), np.roll(p, -1, axis=0)
    else:
        prv = np.vstack([p[:1], p[:-1]])
        nxt = np.vstack([p[1:], p[-1:]])
    kappa, centre = _circumcircle(prv, p, nxt)
    chord = nxt - prv
    flat = ~np.isfinite(kappa) | (np.abs(kappa) * np.linalg.norm(chord, axis=1) < 1e-12)
    if not c.closed:
        flat[[0, -1]] = True
    kappa = np.where(flat, 0.0, kappa)
    tang = chord / np.linalg.norm(chord, axis=1, keepdims=True)
    normal = np.column_stack([tang[:, 1], -tang[:, 0]])
    # on non-flat triples the radial direction from the circumcentre is exact for circles
    good = ~flat
    radial = p[good] - centre[good]
    radial /= np.linalg.norm(radial, axis=1, keepdims=True)
    radial *= np.sign(kappa[good])[:, None]
    normal[good] = radial
    s = c.arclength()
    if c.closed:
        L = c.length()
        dk = _periodic_gradient(kappa, s, L)
        d2k = _periodic_gradient(dk, s, L)
    else:
        dk = np.gradient(kappa, s)
        d2k = np.gradient(dk, s)
    return CurveProfile(kappa, normal, dk, d2k, np.flatnonzero(flat))


def z_function(c: PlaneCurve, i: int, j: int, prof: CurveProfile | None = None) -> float:
    """Z = 1/2 kappa(s_i) |g_i - g_j|^2 - <g_i - g_j, nu(s_i)>."""
    if i == j:
        raise CurveError("Z needs two distinct samples")
    prof = curvature_profile(c) if prof is None else prof
    d = c.points[i] - c.points[j]
    return float(0.5 * prof.kappa[i] * d @ d - d @ prof.normal[i])


def z_matrix(c: PlaneCurve, prof: CurveProfile | None = None) -> np.ndarray:
    """Z over all ordered pairs; the diagonal is set to 0."""
    prof = curvature_profile(c) if prof is None else prof
    d = c.points[:, None, :] - c.points[None, :, :]
    z = 0.5 * prof.kappa[:, None] * (d**2).sum(-1) - np.einsum("ijk,ik->ij", d, prof.normal)
    np.fill_diagonal(z, 0.0)
    return z


def curve_mu(c: PlaneCurve, idx=None, prof: CurveProfile | None = None) -> np.ndarray:
    """Reciprocal inscribed radius max(kappa, max_j 2<g_i - g_j, nu_i>/|g_i - g_j|^2)."""
    prof = curvature_profile(c) if prof is None else prof
    if not c.closed or np.any(prof.kappa <= 0):
        raise CurveError("curve_mu needs a closed strictly convex curve")
    idx = np.arange(len(c)) if idx is None else np.atleast_1d(idx)
    p = c.points
    out = np.empty(len(idx))
    for start in range(0, len(idx), 256):
        sel = idx[start:start + 256]
        d = p[sel, None, :] - p[None, :, :]
        d2 = (d**2).sum(-1)
        num = 2.0 * np.einsum("ijk,ik->ij", d, prof.normal[sel])
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(d2 > 0, num / d2, -np.inf)
        out[start:start + 256] = np.maximum(prof.kappa[sel], ratio.max(axis=1))
    return out


def noncollapse_ratio(c: PlaneCurve) -> float:
    """sup over samples of mu / kappa."""
    prof = curvature_profile(c)
    return float(np.max(curve_mu(c, prof=prof) / prof.kappa))


# -- curve shortening flow ----------------------------------------------------

CFL = 0.25
BLOWUP = 1e4


@dataclass
class CsfRun:
    times: list = field(default_factory=list)
    states: list = field(default_factory=list)
    dt: float = 0.0
    status: str = "ok"

    def at(self, t: float) -> PlaneCurve:
        """State at time t, linear interpolation between stored states (same index order)."""
        times = np.asarray(self.times)
        if t <= times[0]:
            return self.states[0]
        if t >= times[-1]:
            return self.states[-1]
        k = int(np.searchsorted(times, t)) - 1
        w = (t - times[k]) / (times[k + 1] - times[k])
        a, b = self.states[k].points, self.states[k + 1].points
        return PlaneCurve((1 - w) * a + w * b)


def stable_dt(c: PlaneCurve, prof: CurveProfile | None = None) -> float:
    """Explicit Euler bound: CFL * min(h^2, 1/kappa_max^2)."""
    prof = curvature_profile(c) if prof is None else prof
    h = float(c.segments().min())
    kmax = float(np.max(np.abs(prof.kappa)))
    return CFL * min(h * h, 1.0 / max(kmax, 1e-300) ** 2)


def csf_step(c: PlaneCurve, dt: float, prof: CurveProfile | None = None) -> PlaneCurve:
    prof = curvature_profile(c) if prof is None else prof
    moved = c.points - dt * prof.kappa[:, None] * prof.normal
    return PlaneCurve(moved)


def csf_evolve(c: PlaneCurve, T: float, dt: float | None = None, save_every: int = 1,
               blowup: float = BLOWUP) -> CsfRun:
    """Evolve a closed convex curve by -kappa nu up to time T.

    `dt` is the largest step allowed; every step also respects the stability
    bound of the current state. Samples return to uniform arclength after
    each step.
    """
    prof = curvature_profile(c)
    if not c.closed or np.any(prof.kappa <= 0):
        raise CurveError("csf_evolve needs a closed strictly convex curve")
    bound = stable_dt(c, prof)
    if dt is None:
        dt = bound
    elif dt > bound * (1 + 1e-12):
        raise CurveError(f"dt = {dt:g} exceeds the stability bound {bound:g}")
    k0 = float(prof.kappa.max())
    run = CsfRun([0.0], [c], dt)
    t, cur, step = 0.0, c, 0
    while t < T - 1e-15 * max(T, 1.0):
        h = min(dt, stable_dt(cur, prof), T - t)
        cur = resample_closed(csf_step(cur, h, prof))
        t += h
        step += 1
        prof = curvature_profile(cur)
        if prof.kappa.max() > blowup * k0 or not np.all(np.isfinite(prof.kappa)):
            run.times.append(t)
            run.states.append(cur)
            run.status = "singular"
            return run
        if step % save_every == 0 or t >= T - 1e-15 * max(T, 1.0):
            run.times.append(t)
            run.states.append(cur)
    return run


def kappa_rate_check(c: PlaneCurve, dt: float) -> dict:
    """Compare the finite-difference d kappa/dt along normal trajectories with kappa_ss + kappa^3."""
    prof = curvature_profile(c)
    after = curvature_profile(csf_step(c, dt, prof))
    measured = (after.kappa - prof.kappa) / dt
    predicted = prof.d2kappa + prof.kappa**3
    rel = np.abs(measured - predicted) / np.max(np.abs(predicted))
    return {"measured": measured, "predicted": predicted, "max_rel_err": float(rel.max())}


def noncollapse_monitor(run: CsfRun) -> np.ndarray:
    """Per state sup mu/kappa."""
    return np.array([noncollapse_ratio(s) for s in run.states])


# -- homotopy to the unit circle -------------------------------------------------

def _smooth_step(x):
    x = np.clip(np.asarray(x, float), 0.0, 1.0)
    out = np.where(x >= 1.0, 1.0, 0.0)
    inner = (x > 0) & (x < 1)
    xi = x[inner]
    f, g = np.exp(-1.0 / xi), np.exp(-1.0 / (1.0 - xi))
    out[inner] = f / (f + g)
    return out if out.ndim else float(out)


def _polar(points):
    th = np.unwrap(np.arctan2(points[:, 1], points[:, 0]))
    return th, np.linalg.norm(points, axis=1)


def _polar_spline(points):
    th, r = _polar(points)
    order = np.argsort(th)
    th, r = th[order], r[order]
    return CubicSpline(np.append(th, th[0] + 2 * np.pi), np.append(r, r[0]),
                       bc_type="periodic")


@dataclass
class HomotopyFamily:
    """r -> curve with r <= 1/4 the source curve and r >= 1/2 the unit circle.

    In between, in polar form about the centroid, the source radius function
    is deformed by the change D = R_sigma - R_0 that curve shortening flow
    produces by time sigma(r); the enclosed area is ramped to that of the
    regular n-gon inscribed in the unit circle, and finally the radius is
    blended to 1 while sample angles move to uniform spacing.
    """
    source: PlaneCurve
    delta_hat: float
    run: CsfRun
    t_hold: float
    shift: np.ndarray
    theta0: float
    source_angles: np.ndarray
    omega: float = float("nan")

    def __post_init__(self):
        self._r_src = _polar_spline(self.source.points - self.shift)
        self._r0 = self._state_spline(0.0)
        self._area0 = abs(_shoelace(self.source.points))

    @property
    def n(self) -> int:
        return len(self.source)

    def target(self) -> PlaneCurve:
        return circle(self.n, 1.0, self.theta0)

    def _state_spline(self, sigma):
        st = self.run.at(sigma)
        return _polar_spline(st.points - st.centroid())

    def __call__(self, r: float) -> PlaneCurve:
        if r <= 0.25:
            return self.source
        if r >= 0.5:
            return self.target()
        n = self.n
        rho = _smooth_step((r - 0.25) / 0.15)
        beta = _smooth_step((r - 0.4) / 0.1)
        uniform = self.theta0 + 2 * np.pi * np.arange(n) / n
        ang = (1 - beta) * self.source_angles + beta * uniform
        rad = self._r_src(ang)
        if rho > 0:
            rad = rad + self._state_spline(rho * self.t_hold)(ang) - self._r0(ang)
        ngon = 0.5 * n * np.sin(2 * np.pi / n)
        pts = np.column_stack([rad * np.cos(ang), rad * np.sin(ang)])
        target_area = (1 - rho) * self._area0 + rho * ngon
        rad = rad * np.sqrt(target_area / abs(_shoelace(pts)))
        rad = (1 - beta) * rad + beta
        out = np.column_stack([rad * np.cos(ang), rad * np.sin(ang)])
        return PlaneCurve(out + (1 - rho) * self.shift)


def build_homotopy(gamma: PlaneCurve, delta_hat: float, n_grid: int = 101,
                   n_flow: int = 128, check: bool = True) -> HomotopyFamily:
    """Homotopy from a convex 1/(1+delta_hat)-noncollapsed curve to the unit circle.

    The flow runs on an `n_flow`-sample resampling of the centred source;
    only its polar-radius change is used, so the join at r = 1/4 is exact.
    """
    prof = curvature_profile(gamma)
    if not gamma.closed or np.any(prof.kappa <= 0):
        raise CurveError("homotopy source must be closed and strictly convex")
    ratio = float(np.max(curve_mu(gamma, prof=prof) / prof.kappa))
    if ratio > 1 + delta_hat:
        raise CurveError(f"source is not 1/(1+delta_hat)-noncollapsed: sup mu/kappa = {ratio:.6g} "
                         f"> {1 + delta_hat:.6g} (margin {1 + delta_hat - ratio:.3g})")
    shift = gamma.centroid()
    centred = gamma.translated(-shift)
    # convex CSF loses area at rate 2 pi; stop once the area has quartered
    t_hold = 0.75 * centred.area() / (2 * np.pi)
    run = csf_evolve(resample_closed(centred, n_flow), t_hold)
    th, _ = _polar(centred.points)
    theta0 = float(th[0])
    fam = HomotopyFamily(gamma, delta_hat, run, run.times[-1], shift, theta0, th)
    if check:
        rs = np.linspace(0.25, 0.5, n_grid)
        curves = [fam(r) for r in rs]
        worst = max(noncollapse_ratio(cv) for cv in curves[1:-1])
        if worst > 1 + delta_hat:
            raise CurveError(f"homotopy slice violates noncollapsing: sup mu/kappa = {worst:.6g}")
        dr = rs[1] - rs[0]
        diffs = [np.max(np.linalg.norm(b.points - a.points, axis=1)) / dr
                 for a, b in zip(curves[:-1], curves[1:])]
        fam.omega = float(max(diffs))
        fam.worst_ratio = worst
    return fam


# -- I/O -------------------------------------------------------------------------

def write_curve_csv(path, c: PlaneCurve):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y"])
        for x, y in c.points:
            w.writerow([repr(float(x)), repr(float(y))])


def read_curve_csv(path) -> PlaneCurve:
    with Path(path).open() as fh:
        rows = list(csv.DictReader(fh))
    if not rows or set(rows[0]) != {"x", "y"}:
        raise CurveError("curve CSV needs the header x,y")
    return PlaneCurve(np.array([[float(r["x"]), float(r["y"])] for r in rows]))


def write_csf_csv(path, run: CsfRun):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "index", "x", "y", "kappa", "mu"])
        for t, st in zip(run.times, run.states):
            prof = curvature_profile(st)
            mu = curve_mu(st, prof=prof)
            for i, ((x, y), k, m) in enumerate(zip(st.points, prof.kappa, mu)):
                w.writerow([repr(float(t)), i, repr(float(x)), repr(float(y)),
                            repr(float(k)), repr(float(m))])
