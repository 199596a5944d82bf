"""Lambda-surgery: bending profile, gluing profile and the capped neck.

All cap quantities are in units of the neck size r, with s the axial
coordinate measured from the start of the bending region. A capped neck is
the parametrized surface

    F(s, t) = (rho(s) c(s, t), s)

where c(s, .) is a closed plane section and rho a radial profile. Its
curvatures are computed from exact s-derivatives of rho and finite or
spectral derivatives of c, so long caps (Lambda = 1000) need no fine mesh.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.interpolate import CubicSpline

from .curves import CurveError, PlaneCurve, build_homotopy, circle
from .geometry import RHO_OUT_CAP_FACTOR, pair_scan
from .mesh import SurfaceMesh

LOG_FLUSH = -700.0
# below this (relative to |A|) the bending term is under finite-difference noise
STRICT_FLOOR = 1e-9
# the outer scan only needs to resolve alpha_out up to this multiple of alpha
OUTER_RESOLVE = 4.0
PHI_WIDTH = 0.01
PHI_AMP = 0.25


class SurgeryError(ValueError):
    pass


# -- profiles -----------------------------------------------------------------------

def bending_profile(Lam: float, s):
    """u = exp(-4 Lam / s) and its first two derivatives, flushed to 0 below e^-700."""
    s = np.asarray(s, float)
    if np.any(s <= 0):
        raise ValueError("bending profile needs s > 0")
    log_u = -4.0 * Lam / s
    live = log_u >= LOG_FLUSH
    u = np.zeros_like(s)
    u1 = np.zeros_like(s)
    u2 = np.zeros_like(s)
    sl, ul = s[live], np.exp(log_u[live])
    u[live] = ul
    u1[live] = 4.0 * Lam / sl**2 * ul
    u2[live] = (16.0 * Lam**2 / sl**4 - 8.0 * Lam / sl**3) * ul
    return u, u1, u2


def bending_scan(Lam: float, c0: float = 0.1, n: int = 10_000) -> dict:
    """Check u'' >= (|u| + |u'|)/c0^2 on n points of (0, Lam^(1/4)].

    Points where u underflows are compared in log space: both sides share
    the factor u, so the sign of (16 Lam^2/s^4 - 8 Lam/s^3) - (1 + 4 Lam/s^2)/c0^2
    decides the inequality.
    """
    s = np.linspace(0.0, Lam**0.25, n + 1)[1:]
    lhs = 16.0 * Lam**2 / s**4 - 8.0 * Lam / s**3
    rhs = (1.0 + 4.0 * Lam / s**2) / c0**2
    ratio = lhs / rhs
    i = int(np.argmin(ratio))
    return {"Lambda": Lam, "c0": c0, "n": n, "pass": bool(np.all(ratio >= 1)),
            "worst_s": float(s[i]), "worst_margin_ratio": float(lhs[i] / rhs[i])}


def _bump(w):
    """exp(1 - 1/(1 - w^2)) on |w| < 1 with its first two derivatives."""
    w = np.asarray(w, float)
    inside = np.abs(w) < 1
    wi = w[inside]
    q = 1 - wi * wi
    f = np.exp(1 - 1 / q)
    df = f * (-2 * wi / q**2)
    d2f = f * (4 * wi**2 / q**4 - (2 * q**2 + 8 * wi**2 * q) / q**4)
    out = [np.zeros_like(w) for _ in range(3)]
    out[0][inside], out[1][inside], out[2][inside] = f, df, d2f
    return out


def smooth_abs(z):
    """Phi(z) = sqrt(z^2 + h^2 phi(z/h)/4), h = 1/100: smooth, convex, even, |z| for |z| >= h.

    Returns (Phi, Phi', Phi''). The bump amplitude 1/4 keeps Phi convex
    and |Phi'| <= 1.
    """
    z = np.asarray(z, float)
    h = PHI_WIDTH
    b, db, d2b = _bump(z / h)
    q = z * z + PHI_AMP * h * h * b
    q1 = 2 * z + PHI_AMP * h * db
    q2 = 2 + PHI_AMP * d2b
    phi = np.sqrt(q)
    with np.errstate(divide="ignore", invalid="ignore"):
        d1 = np.where(phi > 0, q1 / (2 * phi), 0.0)
        d2 = np.where(phi > 0, (2 * q * q2 - q1 * q1) / (4 * q**1.5), 0.0)
    outside = np.abs(z) >= h
    phi = np.where(outside, np.abs(z), phi)
    d1 = np.where(outside, np.sign(z), d1)
    d2 = np.where(outside, 0.0, d2)
    return phi, d1, d2


def _smooth_step(x):
    x = np.clip(np.asarray(x, float), 0.0, 1.0)
    out = np.where(x >= 1, 1.0, 0.0)
    inner = (x > 0) & (x < 1)
    xi = x[inner]
    f, g = np.exp(-1 / xi), np.exp(-1 / (1 - xi))
    out[inner] = f / (f + g)
    return out


def cutoff(x):
    """Smooth chi: 1 on (-inf, 1], 0 on [2, inf)."""
    return 1.0 - _smooth_step(np.asarray(x, float) - 1.0)


# -- parameters -------------------------------------------------------------------------

@dataclass
class SurgeryParams:
    Lam: float = 100.0
    alpha_hat: float = 0.55
    delta_hat: float = 0.05
    eps: float = 0.01
    L: float = 1e5
    H1: float = 1.0
    c0: float = 0.1
    Lam_min: float = 16.0
    delta: float = 0.1
    alpha: float = 0.5
    gap: float = 0.25
    tol: float = 0.02

    def __post_init__(self):
        if self.Lam <= 0 or self.L <= 0 or self.H1 <= 0:
            raise SurgeryError("Lambda, L and H1 must be positive")

    @property
    def lam4(self) -> float:
        return self.Lam**0.25

    @property
    def a(self) -> float:
        e = 1 - np.exp(-4.0)
        return e + e * e / 3.0 * self.Lam**-0.25

    @property
    def s_tip(self) -> float:
        return self.Lam + 2 * self.lam4

    def violations(self) -> list:
        out = []
        if self.Lam < self.Lam_min:
            out.append(f"Lambda = {self.Lam:g} below Lambda_min = {self.Lam_min:g}")
        if self.L / 1000 < self.Lam:
            out.append(f"L/1000 = {self.L / 1000:g} < Lambda = {self.Lam:g}")
        if not self.delta_hat < self.delta:
            out.append("delta_hat must be smaller than delta")
        return out

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def gluing_parts(p: SurgeryParams, s):
    """A = 1 - u, B = a sqrt(sigma/(a + sigma)) with sigma = s_tip - s, and derivatives."""
    s = np.asarray(s, float)
    u, u1, u2 = bending_profile(p.Lam, s)
    A, A1, A2 = 1 - u, -u1, -u2
    a = p.a
    sig = np.maximum(p.s_tip - s, 0.0)
    B = a * np.sqrt(sig / (a + sig))
    with np.errstate(divide="ignore", invalid="ignore"):
        g1 = 0.5 * a * sig**-0.5 * (a + sig) ** -1.5
        g2 = -0.25 * a * (a + 4 * sig) * sig**-1.5 * (a + sig) ** -2.5
    return (A, A1, A2), (B, -a * g1, a * g2)


def gluing_profile(p: SurgeryParams, s, derivatives: bool = False):
    """v = A + B - Lam^(-1/4) Phi(Lam^(1/4) (A - B)) on [Lam, Lam + Lam^(1/4)]."""
    (A, A1, A2), (B, B1, B2) = gluing_parts(p, s)
    k = p.lam4
    z = k * (A - B)
    phi, dphi, d2phi = smooth_abs(z)
    v = A + B - phi / k
    if not derivatives:
        return v
    v1 = A1 + B1 - dphi * (A1 - B1)
    v2 = A2 + B2 - d2phi * k * (A1 - B1) ** 2 - dphi * (A2 - B2)
    return v, v1, v2


def tail_radius(p: SurgeryParams, s):
    _, (B, B1, B2) = gluing_parts(p, s)
    return B, B1, B2


LABELS = ("original", "bent", "interpolated", "homotopy", "glued", "model-tail")


def radial_profile(p: SurgeryParams, s):
    """rho, rho', rho'' and the region label index at each s."""
    s = np.asarray(s, float)
    rho = np.ones_like(s)
    r1 = np.zeros_like(s)
    r2 = np.zeros_like(s)
    lab = np.zeros(s.shape, dtype=np.int64)
    k = p.lam4
    bend = (s > 0) & (s <= p.Lam)
    if bend.any():
        u, u1, u2 = bending_profile(p.Lam, s[bend])
        rho[bend], r1[bend], r2[bend] = 1 - u, -u1, -u2
    glue = (s > p.Lam) & (s <= p.Lam + k)
    if glue.any():
        v, v1, v2 = gluing_profile(p, s[glue], derivatives=True)
        rho[glue], r1[glue], r2[glue] = 0.5 * v, 0.5 * v1, 0.5 * v2
    tail = s > p.Lam + k
    if tail.any():
        rho[tail], r1[tail], r2[tail] = tail_radius(p, s[tail])
    lab[(s > 0) & (s <= k)] = 1
    lab[(s > k) & (s <= 2 * k)] = 2
    lab[(s > 2 * k) & (s <= p.Lam)] = 3
    lab[glue] = 4
    lab[tail] = 5
    return rho, r1, r2, lab


# -- sections -----------------------------------------------------------------------------

@dataclass
class SectionFamily:
    """Plane sections gamma_s at axial stations (neck units), sharing the t-sampling.

    `gamma` is the reference section Gamma. Everything is expressed in the
    frame where Gamma's centroid is the origin.
    """
    stations: np.ndarray
    curves: np.ndarray
    gamma: np.ndarray

    def __post_init__(self):
        self.stations = np.asarray(self.stations, float)
        self.curves = np.asarray(self.curves, float)
        self.gamma = np.asarray(self.gamma, float)
        if len(self.stations) >= 2:
            self._spline = CubicSpline(self.stations, self.curves, axis=0)
        else:
            self._spline = None

    @property
    def n_t(self) -> int:
        return self.curves.shape[1]

    @classmethod
    def cylinder(cls, n_t: int = 64, L: float = 10.0, spacing: float = 0.25):
        st = np.arange(-L, L + 0.5 * spacing, spacing)
        g = circle(n_t).points
        return cls(st, np.repeat(g[None], len(st), axis=0), g)

    @classmethod
    def extruded(cls, gamma: PlaneCurve, L: float = 10.0, spacing: float = 0.25):
        st = np.arange(-L, L + 0.5 * spacing, spacing)
        g = gamma.points - gamma.centroid()
        return cls(st, np.repeat(g[None], len(st), axis=0), g)

    def __call__(self, s):
        s = np.atleast_1d(np.asarray(s, float))
        lo, hi = self.stations[0], self.stations[-1]
        if np.any(s < lo - 1e-9) or np.any(s > hi + 1e-9):
            bad = s[(s < lo - 1e-9) | (s > hi + 1e-9)]
            raise SurgeryError(f"no section data at s = {bad[:5].tolist()} "
                               f"(stations cover [{lo:g}, {hi:g}])")
        return self._spline(np.clip(s, lo, hi))

    def mirrored(self) -> "SectionFamily":
        """Family seen from the other end: s -> -s, with t reversed to keep orientation."""
        st = -self.stations[::-1]
        # seen from the other end (frame e1, -e2, -e3) y flips; reversing t keeps sections
        # counter-clockwise
        cv = self.curves[::-1, ::-1].copy()
        cv[..., 1] *= -1
        g = self.gamma[::-1].copy()
        g[:, 1] *= -1
        return SectionFamily(st, cv, g)

    def shifted(self, ds: float) -> "SectionFamily":
        return SectionFamily(self.stations - ds, self.curves, self.gamma)


# -- the capped neck ------------------------------------------------------------------------

def _s_grid(p: SurgeryParams, s_start: float, n_t: int, aspect: float = 2.0,
            h_max: float = 0.25):
    """Axial nodes from s_start to the tip with spacing ~ aspect * ring spacing."""
    fine = np.concatenate([np.linspace(s_start, p.s_tip, 200_001)])
    rho, _, _, _ = radial_profile(p, fine)
    h = np.clip(aspect * 2 * np.pi * np.maximum(rho, 0.02) / n_t, 1e-3, h_max)
    # extra resolution where the profile bends (glued part and tail)
    w = 1.0 / h
    cw = np.concatenate([[0.0], np.cumsum(0.5 * (w[1:] + w[:-1]) * np.diff(fine))])
    n = int(np.ceil(cw[-1])) + 1
    s = np.interp(np.linspace(0, cw[-1], n), cw, fine)
    keys = [0.0, p.lam4, 2 * p.lam4, p.Lam, p.Lam + p.lam4]
    s = np.unique(np.concatenate([s, [k for k in keys if s_start <= k <= p.s_tip]]))
    # drop near-duplicates created by the inserted breakpoints
    keep = np.concatenate([[True], np.diff(s) > 1e-6])
    return s[keep]


def _fft_dt(c, order):
    """Spectral t-derivative of periodic samples along axis 1 (t in [0, 1))."""
    n = c.shape[1]
    k = np.fft.fftfreq(n, d=1.0 / n) * 2j * np.pi
    if n % 2 == 0:
        k[n // 2] = 0.0 if order % 2 else k[n // 2]
    ch = np.fft.fft(c, axis=1)
    return np.real(np.fft.ifft(ch * (k**order)[None, :, None], axis=1))


def surface_curvatures(rho, r1, r2, c, s):
    """Principal curvatures, mean curvature and outward normals of F = (rho c, s)."""
    cs = np.gradient(c, s, axis=0, edge_order=2) if len(s) > 2 else np.zeros_like(c)
    css = np.gradient(cs, s, axis=0, edge_order=2) if len(s) > 2 else np.zeros_like(c)
    ct = _fft_dt(c, 1)
    ctt = _fft_dt(c, 2)
    cst = _fft_dt(cs, 1)
    R, R1, R2 = rho[:, None, None], r1[:, None, None], r2[:, None, None]
    nz = np.ones(c.shape[:2] + (1,))
    Fs = np.concatenate([R1 * c + R * cs, nz], axis=2)
    Ft = np.concatenate([R * ct, 0 * nz], axis=2)
    Fss = np.concatenate([R2 * c + 2 * R1 * cs + R * css, 0 * nz], axis=2)
    Fst = np.concatenate([R1 * ct + R * cst, 0 * nz], axis=2)
    Ftt = np.concatenate([R * ctt, 0 * nz], axis=2)
    nu = np.cross(Ft, Fs)
    nrm = np.linalg.norm(nu, axis=2, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        nu = nu / nrm
    E = (Fs * Fs).sum(2)
    Fm = (Fs * Ft).sum(2)
    G = (Ft * Ft).sum(2)
    hss = -(Fss * nu).sum(2)
    hst = -(Fst * nu).sum(2)
    htt = -(Ftt * nu).sum(2)
    det = E * G - Fm * Fm
    with np.errstate(invalid="ignore", divide="ignore"):
        Hm = (E * htt - 2 * Fm * hst + G * hss) / det
        K = (hss * htt - hst * hst) / det
    disc = np.sqrt(np.clip(Hm**2 / 4 - K, 0.0, None))
    # the small eigenvalue as K / big avoids cancellation when one curvature is tiny
    big = Hm / 2 + np.copysign(disc, Hm)
    with np.errstate(invalid="ignore", divide="ignore"):
        small = np.where(big != 0, K / big, 0.0)
    return np.fmin(small, big), np.fmax(small, big), nu


@dataclass
class CappedNeck:
    params: SurgeryParams
    s: np.ndarray
    t: np.ndarray
    local: np.ndarray
    normal_local: np.ndarray
    lambda1: np.ndarray
    lambda2: np.ndarray
    labels: np.ndarray
    original_lambda1: np.ndarray
    original_H: np.ndarray
    r: float = 1.0
    origin: np.ndarray = field(default_factory=lambda: np.zeros(3))
    frame: np.ndarray = field(default_factory=lambda: np.eye(3))
    omega: float = float("nan")

    @property
    def H(self):
        return self.lambda1 + self.lambda2

    @property
    def tip_local(self):
        return np.array([0.0, 0.0, self.params.s_tip])

    @property
    def tip_curvature(self) -> float:
        # the tail is the model cap scaled by a, whose tip curvature is 2
        return 2.0 / self.params.a

    def to_world(self, x_local):
        """Local (neck units, frame columns e1 e2 e3) to world coordinates."""
        return self.origin + self.r * x_local @ self.frame.T

    def points(self):
        return self.to_world(self.local.reshape(-1, 3))

    def mesh(self) -> SurfaceMesh:
        """Open mesh: rings in s order closed by an apex at the tip."""
        ns, nt = self.local.shape[:2]
        idx = np.arange(ns * nt).reshape(ns, nt)
        j = np.arange(nt)
        j1 = (j + 1) % nt
        tris = []
        for i in range(ns - 1):
            tris.append(np.column_stack([idx[i, j], idx[i, j1], idx[i + 1, j1]]))
            tris.append(np.column_stack([idx[i, j], idx[i + 1, j1], idx[i + 1, j]]))
        apex = ns * nt
        tris.append(np.column_stack([idx[-1, j], idx[-1, j1], np.full(nt, apex)]))
        verts = np.vstack([self.points(), self.to_world(self.tip_local[None])])
        tris = np.vstack(tris)
        m = SurfaceMesh(verts, tris, closed=False)
        # sections are counter-clockwise about +e3, so this winding is outward
        return m

    def export(self, obj_path, labels_path=None):
        from .mesh import write_obj
        write_obj(self.mesh(), obj_path, comment=f"capped neck Lambda={self.params.Lam:g}")
        if labels_path is not None:
            ns, nt = self.local.shape[:2]
            with Path(labels_path).open("w") as fh:
                fh.write("vertex,s,label\n")
                for i in range(ns):
                    for j in range(nt):
                        fh.write(f"{i * nt + j},{self.s[i]!r},{LABELS[self.labels[i]]}\n")
                fh.write(f"{ns * nt},{self.params.s_tip!r},model-tail\n")


def build_cap(sections: SectionFamily, params: SurgeryParams, s_start: float | None = None,
              n_t: int | None = None, r: float = 1.0, origin=None, frame=None,
              homotopy=None) -> CappedNeck:
    """Sample the capped surface F_Lambda on [s_start, Lambda + 2 Lambda^(1/4)].

    s_start defaults to -(L - 1) clipped to the available sections.
    """
    p = params
    k = p.lam4
    if s_start is None:
        s_start = max(-(p.L - 1), sections.stations[0])
    need_hi = 2 * k
    if sections.stations[-1] < need_hi - 1e-9 or sections.stations[0] > s_start + 1e-9:
        raise SurgeryError(f"sections must cover [{s_start:g}, {need_hi:g}]; "
                           f"have [{sections.stations[0]:g}, {sections.stations[-1]:g}]")
    gamma = PlaneCurve(sections.gamma)
    if homotopy is None:
        try:
            homotopy = build_homotopy(gamma, p.delta_hat)
        except CurveError as exc:
            raise SurgeryError(f"homotopy refused: {exc}") from exc
    nt = sections.n_t
    if n_t is not None and n_t != nt:
        raise SurgeryError("n_t must match the section sampling")
    s = _s_grid(p, s_start, nt)
    rho, r1, r2, lab = radial_profile(p, s)
    c = np.empty((len(s), nt, 2))
    near = s <= 2 * k
    c[near] = sections(s[near])
    chi = cutoff(s / k)
    blend = (s > k) & (s <= 2 * k)
    if blend.any():
        c[blend] = chi[blend, None, None] * c[blend] + (1 - chi[blend, None, None]) * gamma.points
    far = (s > 2 * k) & (s <= p.Lam)
    for i in np.flatnonzero(far):
        c[i] = homotopy(s[i] / p.Lam).points
    unit = circle(nt, 1.0, homotopy.theta0).points
    c[s > p.Lam] = unit
    # rings at rho = 0 would be degenerate; the grid stops short of the tip
    body = s < p.s_tip - 1e-12
    s, rho, r1, r2, lab, c = s[body], rho[body], r1[body], r2[body], lab[body], c[body]
    lam1, lam2, nu = surface_curvatures(rho, r1, r2, c, s)
    local = np.concatenate([rho[:, None, None] * c, np.broadcast_to(s[:, None, None], c.shape[:2] + (1,))],
                           axis=2)
    # original neck on the same grid, where it exists
    orig_l1 = np.full(lam1.shape, np.nan)
    orig_H = np.full(lam1.shape, np.nan)
    o = s <= min(2 * k, sections.stations[-1])
    if o.any():
        one = np.ones(o.sum())
        ol1, ol2, _ = surface_curvatures(one, 0 * one, 0 * one, sections(s[o]), s[o])
        orig_l1[o], orig_H[o] = ol1, ol1 + ol2
    origin = np.zeros(3) if origin is None else np.asarray(origin, float)
    frame = np.eye(3) if frame is None else np.asarray(frame, float)
    return CappedNeck(p, s, np.arange(nt) / nt, local, nu, lam1, lam2, lab, orig_l1, orig_H,
                      r, origin, frame, homotopy.omega)


# -- verification ------------------------------------------------------------------------------

def _closed_points(cap: CappedNeck):
    """Cap plus its mirror image about the first ring: a closed convex-ish body (local units)."""
    s0 = cap.s[0]
    P = cap.local.reshape(-1, 3)
    N = cap.normal_local.reshape(-1, 3)
    l1, l2 = cap.lambda1.ravel(), cap.lambda2.ravel()
    tip = cap.tip_local[None]
    kt = cap.tip_curvature
    Pm = P * np.array([1, 1, -1]) + np.array([0, 0, 2 * s0])
    Nm = N * np.array([1, 1, -1])
    tipm = tip * np.array([1, 1, -1]) + np.array([0, 0, 2 * s0])
    pts = np.vstack([P, tip, Pm[len(cap.t):], tipm])
    nrm = np.vstack([N, [[0, 0, 1.0]], Nm[len(cap.t):], [[0, 0, -1.0]]])
    lam1 = np.concatenate([l1, [kt], l1[len(cap.t):], [kt]])
    lam2 = np.concatenate([l2, [kt], l2[len(cap.t):], [kt]])
    return pts, nrm, lam1, lam2


def _worst(mask, values, cap, name):
    if not np.any(mask):
        return None
    flat = np.where(mask, values, np.inf)
    i, j = np.unravel_index(np.argmin(flat), flat.shape)
    return {"check": name, "s": float(cap.s[i]), "t": float(cap.t[j]),
            "margin": float(flat[i, j]), "world": cap.to_world(cap.local[i, j][None])[0].tolist()}


def verify_cap(cap: CappedNeck, params: SurgeryParams | None = None) -> dict:
    """Run the surgery battery on one capped neck (neck units, tolerance params.tol)."""
    p = cap.params if params is None else params
    tol = p.tol
    k = p.lam4
    s = cap.s[:, None] * np.ones_like(cap.lambda1)
    l1, H = cap.lambda1, cap.H
    scale = np.sqrt(cap.lambda1**2 + cap.lambda2**2)
    checks = {}

    bent = (s > 0) & (s <= k)
    m1 = l1 - cap.original_lambda1 + tol * scale
    mH = H - cap.original_H + tol * np.abs(cap.original_H)
    checks["bent_lambda1"] = _worst(bent, m1, cap, "bent_lambda1")
    checks["bent_H"] = _worst(bent, mH, cap, "bent_H")

    # convexity beyond Lambda^(1/4); strictness only where the bending term is representable
    convex = s > k
    checks["convex_psd"] = _worst(convex, l1 + tol * scale, cap, "convex_psd")
    u2 = bending_profile(p.Lam, np.maximum(cap.s, 1e-300))[2]
    region = (cap.s > k) & (cap.s <= p.Lam)
    strict_rows = region & (u2 > STRICT_FLOOR)
    strict = strict_rows[:, None] & np.ones_like(l1, dtype=bool)
    checks["convex_strict"] = _worst(strict, np.where(l1 > 0, l1, l1 - 1.0), cap, "convex_strict")
    if checks["convex_strict"] is not None:
        checks["convex_strict"]["unresolved_rows"] = int(np.sum(region & ~strict_rows))

    glued = s > p.Lam
    checks["glued_H_low"] = _worst(glued, H - 0.5 * (1 - tol), cap, "glued_H_low")
    checks["glued_H_high"] = _worst(glued, 10 * (1 + tol) - H, cap, "glued_H_high")

    # modified region: lambda1 >= 0, or dominated by the original neck at the same (s, t)
    mod = s > 0
    dom = np.fmin(l1 - cap.original_lambda1, H - cap.original_H)
    ok_val = np.where(np.isnan(dom), l1, np.fmax(l1, dom)) + tol * scale
    checks["modified_lambda1"] = _worst(mod, ok_val, cap, "modified_lambda1")

    # global noncollapsing by the pair scan over the closed body
    pts, nrm, lam1, lam2 = _closed_points(cap)
    Hc = lam1 + lam2
    mu = pair_scan(pts, nrm, None, 1.0, lower_bound=np.maximum(lam2, 1e-12))
    diam = float(np.linalg.norm(pts.max(0) - pts.min(0)))
    floor_out = np.maximum(1.0 / (RHO_OUT_CAP_FACTOR * diam), Hc / (OUTER_RESOLVE * p.alpha))
    mo = pair_scan(pts, nrm, None, -1.0, lower_bound=np.maximum(-lam1, floor_out))
    a_in = Hc / mu
    a_out = Hc / mo
    i_in, i_out = int(np.argmin(a_in)), int(np.argmin(a_out))
    target_in = 1.0 / (1.0 + p.delta)
    checks["alpha_in"] = {"check": "alpha_in", "value": float(a_in[i_in]),
                          "margin": float(a_in[i_in] - target_in * (1 - tol)),
                          "world": cap.to_world(pts[i_in][None])[0].tolist()}
    checks["alpha_out"] = {"check": "alpha_out", "value": float(a_out[i_out]),
                           "resolved_up_to": OUTER_RESOLVE * p.alpha,
                           "margin": float(a_out[i_out] - p.alpha * (1 - tol)),
                           "world": cap.to_world(pts[i_out][None])[0].tolist()}
    checks = {k_: v for k_, v in checks.items() if v is not None}
    bend = bending_scan(p.Lam, p.c0)
    return {"Lambda": p.Lam, "n_t": len(cap.t), "n_rings": len(cap.s), "checks": checks,
            "failed": sorted(k_ for k_, v in checks.items() if v["margin"] < 0),
            "bending_inequality": bend,
            "parameter_violations": p.violations() + ([] if bend["pass"] else
                                                      ["bending inequality fails"]),
            "omega": cap.omega}


def verify_surgery(caps, params: SurgeryParams | None = None) -> dict:
    """Battery at one or more resolutions; a check fails only if it fails at every resolution."""
    caps = [caps] if isinstance(caps, CappedNeck) else list(caps)
    reports = [verify_cap(c, params) for c in caps]
    failed = set(reports[0]["failed"])
    for r in reports[1:]:
        failed &= set(r["failed"])
    worst = {}
    for name in failed:
        worst[name] = min((r["checks"][name] for r in reports), key=lambda c: c["margin"])
    return {"schema": 1, "resolutions": reports, "failed": sorted(failed), "worst": worst,
            "parameter_violations": reports[0]["parameter_violations"],
            "pass": not failed}


def write_report(path, report: dict):
    Path(path).write_text(json.dumps(report, indent=2, default=float))


# -- mesh surgery ------------------------------------------------------------------------------

@dataclass
class SurgeryResult:
    mesh: SurfaceMesh
    labels: np.ndarray
    caps: tuple
    event: dict


def _boundary_loops(mesh: SurfaceMesh) -> list:
    """Boundary loops as ordered vertex arrays, following triangle orientation."""
    t = mesh.triangles
    d = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
    n = mesh.n_vertices
    key = d[:, 0] * n + d[:, 1]
    rev = d[:, 1] * n + d[:, 0]
    b = d[~np.isin(key, rev)]
    nxt = dict(zip(b[:, 0].tolist(), b[:, 1].tolist()))
    loops, seen = [], set()
    for v0 in nxt:
        if v0 in seen:
            continue
        loop, v = [], v0
        while v not in seen:
            seen.add(v)
            loop.append(v)
            v = nxt.get(v)
            if v is None:
                raise SurgeryError("open boundary chain")
        loops.append(np.array(loop))
    return loops


def _zip_rings(P, ia, ib, axis_pt, frame):
    """Triangulate the band between two loops around the axis, outward oriented."""
    def angles(idx):
        q = (P[idx] - axis_pt) @ frame
        return np.arctan2(q[:, 1], q[:, 0])
    out = []
    order = []
    for idx in (ia, ib):
        th = angles(idx)
        k = np.argsort(th)
        order.append((idx[k], th[k]))
    (a, ta), (b, tb) = order
    na, nb = len(a), len(b)
    ta_ext = np.concatenate([ta, ta[:1] + 2 * np.pi])
    tb_ext = np.concatenate([tb, tb[:1] + 2 * np.pi])
    i = j = 0
    while i < na or j < nb:
        if j >= nb or (i < na and ta_ext[i + 1] <= tb_ext[j + 1]):
            out.append((a[i], a[(i + 1) % na], b[j % nb]))
            i += 1
        else:
            out.append((a[i % na], b[(j + 1) % nb], b[j]))
            j += 1
    tri = np.array(out)
    # outward: normal along the radial direction away from the axis
    e3 = frame[:, 2]
    c = P[tri].mean(1)
    rad = (c - axis_pt) - np.outer((c - axis_pt) @ e3, e3)
    nrm = np.cross(P[tri[:, 1]] - P[tri[:, 0]], P[tri[:, 2]] - P[tri[:, 0]])
    flip = (nrm * rad).sum(1) < 0
    tri[flip] = tri[flip][:, [0, 2, 1]]
    return tri


def _ring_star(cap: CappedNeck) -> bool:
    """Every ring winds once around the axis with monotone angle (no fold at sample resolution)."""
    xy = cap.local[..., :2]
    th = np.unwrap(np.arctan2(xy[..., 1], xy[..., 0]), axis=1)
    d = np.diff(np.concatenate([th, th[:, :1] + 2 * np.pi], axis=1), axis=1)
    return bool(np.all(d > 0))


def perform_surgery(mesh: SurfaceMesh, region, certificate, params: SurgeryParams,
                    H1: float | None = None, s_start: float = -0.5) -> SurgeryResult:
    """Replace a certified neck of a mesh by two caps, one on each side of its midplane.

    The left cap is built on the sections seen from s = -D, the right cap on
    the mirrored family seen from s = +D, where D = gap/2 + Lambda +
    2 Lambda^(1/4); their tips are gap r apart. Mesh vertices within |s| <
    D - s_start of the neck centre (and near the axis) are removed and each
    cut is zipped to the first ring of its cap.
    """
    if not certificate.passed:
        raise SurgeryError(f"neck certificate fails {certificate.failed()}")
    r = region.r
    if H1 is not None and not (1 / (2 * H1) - 1e-12 <= r <= 2 / H1 + 1e-12):
        raise SurgeryError(f"neck size {r:g} outside [1/(2 H1), 2/H1]")
    p = params
    D = p.gap / 2 + p.s_tip
    need = D - s_start
    lo, hi = region.stations[0], region.stations[-1]
    if lo > -(D - 2 * p.lam4) + s_start or hi < D - 2 * p.lam4 - s_start or lo > -need or hi < need:
        raise SurgeryError(f"sections cover [{lo:g}, {hi:g}] but surgery needs [{-need:g}, {need:g}]")
    fam = region.section_family()
    g0, _ = region.gamma_polar()
    e1, e2, e3 = region.frame.T
    base = region.center + r * (g0[0] * e1 + g0[1] * e2)
    capL = build_cap(fam.shifted(-D), p, s_start=s_start, r=r, origin=base - D * r * e3,
                     frame=region.frame)
    capR = build_cap(fam.mirrored().shifted(-D), p, s_start=s_start, r=r,
                     origin=base + D * r * e3, frame=np.column_stack([e1, -e2, -e3]))
    for cap, side in ((capL, "left"), (capR, "right")):
        if not _ring_star(cap):
            raise SurgeryError(f"{side} cap folds at sample resolution")
    q = (mesh.vertices - base) @ region.frame / r
    rmax = 1.25 * float(np.max(np.linalg.norm(fam.curves, axis=2)))
    cut = (np.abs(q[:, 2]) < need) & (np.hypot(q[:, 0], q[:, 1]) < rmax)
    if not cut.any():
        raise SurgeryError("nothing to cut at the neck")
    kept, old = mesh.submesh(~cut)
    loops = _boundary_loops(kept)
    qk = q[old]
    sides = {"left": [], "right": []}
    for lp in loops:
        s_mean = qk[lp, 2].mean()
        if abs(abs(s_mean) - need) < 2.0 and np.all(np.abs(qk[lp, 2]) < need + 2.0):
            sides["left" if s_mean < 0 else "right"].append(lp)
    if len(sides["left"]) != 1 or len(sides["right"]) != 1:
        raise SurgeryError(f"cut produced {len(sides['left'])} left and {len(sides['right'])} "
                           "right loops; the neck is not a clean tube")
    mL, mR = capL.mesh(), capR.mesh()
    nk = kept.n_vertices
    P = np.vstack([kept.vertices, mL.vertices, mR.vertices])
    nt = capL.local.shape[1]
    ringL = nk + np.arange(nt)
    ringR = nk + mL.n_vertices + np.arange(nt)
    bandL = _zip_rings(P, sides["left"][0], ringL, base, region.frame)
    bandR = _zip_rings(P, sides["right"][0], ringR, base, region.frame)
    tris = np.vstack([kept.triangles, mL.triangles + nk, mR.triangles + nk + mL.n_vertices,
                      bandL, bandR])
    out = SurfaceMesh(P, tris, closed=mesh.closed)
    out.validate()

    def cap_labels(cap):
        return np.concatenate([np.repeat(cap.labels, cap.local.shape[1]), [len(LABELS) - 1]])
    labels = np.concatenate([np.zeros(nk, dtype=np.int64), cap_labels(capL), cap_labels(capR)])
    mod = labels > 0
    Hmod = max(float(np.max(capL.H)), float(np.max(capR.H))) / r
    ncomp, comp = out.components()
    event = {"kind": "surgery", "r": r, "center": region.center.tolist(),
             "axis": region.axis.tolist(), "D": D, "Lambda": p.Lam, "gap": p.gap,
             "removed_vertices": int(cut.sum()), "components": int(ncomp),
             "max_H_modified": Hmod, "modified_vertices": int(mod.sum()),
             "parameter_violations": p.violations(),
             "labels": {LABELS[k]: int((labels == k).sum()) for k in range(len(LABELS))}}
    return SurgeryResult(out, labels, (capL, capR), event)


def write_labels_csv(path, labels):
    with Path(path).open("w") as fh:
        fh.write("vertex,label\n")
        for i, k in enumerate(labels):
            fh.write(f"{i},{LABELS[k]}\n")
