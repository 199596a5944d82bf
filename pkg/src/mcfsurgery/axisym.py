"""Axially symmetric mean curvature flow on a parametric generating curve.

The generating curve lives in the (z, r) half-plane. It is traversed so that
the enclosed region lies to its right, which makes N = (-r', z') (unit
tangent rotated counter-clockwise) the outward normal. Kinds:

  closed    both ends on the axis (sphere-like component)
  periodic  r > 0 throughout, periodic in z with the given period
  loop      closed curve off the axis (torus-like)

Each step moves nodes by -H N dt with H = k + N_r / r, then redistributes
them along a spline of the curve with density increasing with |A|.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.interpolate import CubicSpline


class StepRejected(RuntimeError):
    pass


KINDS = ("closed", "periodic", "loop")


@dataclass
class AxiProfile:
    z: np.ndarray
    r: np.ndarray
    kind: str = "closed"
    period: float = 0.0
    labels: np.ndarray | None = None
    tags: dict = field(default_factory=dict)

    def __post_init__(self):
        self.z = np.asarray(self.z, float)
        self.r = np.asarray(self.r, float)
        if self.kind not in KINDS:
            raise ValueError(f"unknown profile kind {self.kind!r}")
        if self.labels is None:
            self.labels = np.zeros(len(self.z), dtype=np.int64)
        if self.kind == "closed":
            if self.r[0] != 0.0 or self.r[-1] != 0.0:
                raise ValueError("closed profile must start and end on the axis")
            if np.any(self.r[1:-1] <= 0):
                raise ValueError("closed profile needs r > 0 between the ends")
        elif np.any(self.r <= 0):
            raise ValueError("profile needs r > 0")
        if self.kind == "periodic" and self.period <= 0:
            raise ValueError("periodic profile needs a positive period")
        if self.kind == "loop" and _signed_area(self.z, self.r) > 0:
            # enclosed region must be on the right: clockwise in (z, r)
            self.z, self.r = self.z[::-1].copy(), self.r[::-1].copy()
            self.labels = self.labels[::-1].copy()

    def __len__(self):
        return len(self.z)

    @property
    def points(self):
        return np.column_stack([self.z, self.r])

    def _ext(self):
        """Nodes with one neighbour on each side (wrapped for periodic and loop)."""
        P = self.points
        if self.kind == "loop":
            return np.vstack([P[-1:], P, P[:1]])
        if self.kind == "periodic":
            sh = np.array([self.period, 0.0])
            return np.vstack([P[-1:] - sh, P, P[:1] + sh])
        return P

    def curvatures(self):
        """Meridian curvature k, parallel curvature p = N_r / r, outward normal N, per node."""
        E = self._ext()
        a, b, c = E[:-2], E[1:-1], E[2:]
        ab, bc, ac = b - a, c - b, c - a
        cross = ab[:, 0] * bc[:, 1] - ab[:, 1] * bc[:, 0]
        la, lb, lc = (np.linalg.norm(v, axis=1) for v in (ab, bc, ac))
        k = -2.0 * cross / (la * lb * lc)
        T = ac / lc[:, None]
        N = np.column_stack([-T[:, 1], T[:, 0]])
        if self.kind != "closed":
            p = N[:, 1] / b[:, 1]
            return k, p, N
        n = len(self.z)
        kk = np.empty(n)
        NN = np.empty((n, 2))
        pp = np.empty(n)
        kk[1:-1], NN[1:-1] = k, N
        pp[1:-1] = N[:, 1] / b[:, 1]
        for end, nb, sgn in ((0, 1, -1.0), (n - 1, n - 2, 1.0)):
            dz = (self.z[nb] - self.z[end]) * -sgn
            r1 = self.r[nb]
            kk[end] = 2 * dz / (dz * dz + r1 * r1)
            pp[end] = kk[end]
            NN[end] = (sgn, 0.0)
        return kk, pp, NN

    def H(self):
        k, p, _ = self.curvatures()
        return k + p

    def lambdas(self):
        k, p, _ = self.curvatures()
        return np.minimum(k, p), np.maximum(k, p)

    def arclength(self):
        E = self.points
        if self.kind in ("loop", "periodic"):
            E = self._ext()[1:]
        seg = np.linalg.norm(np.diff(E, axis=0), axis=1)
        return np.concatenate([[0.0], np.cumsum(seg)])

    def area(self) -> float:
        """Surface area (Pappus); per period for periodic profiles."""
        E = self.points if self.kind == "closed" else self._ext()[1:]
        seg = np.linalg.norm(np.diff(E, axis=0), axis=1)
        return float(np.pi * np.sum(seg * (E[1:, 1] + E[:-1, 1])))

    def volume(self) -> float:
        """Enclosed volume (frusta); per period for periodic profiles."""
        E = self.points if self.kind == "closed" else self._ext()[1:]
        if self.kind == "periodic":
            r0, r1, dz = E[:-1, 1], E[1:, 1], np.diff(E[:, 0])
            return float(np.pi * np.sum((r0 * r0 + r0 * r1 + r1 * r1) * dz) / 3.0)
        r0, r1, dz = E[:-1, 1], E[1:, 1], np.diff(E[:, 0])
        return float(abs(np.pi * np.sum((r0 * r0 + r0 * r1 + r1 * r1) * dz) / 3.0))

    def diameter(self) -> float:
        if self.kind == "periodic":
            return float("inf")
        zr = np.ptp(self.z)
        return float(max(zr, 2 * self.r.max()) if self.kind == "closed"
                     else max(zr, 2 * self.r.max()))

    def integrate(self, f) -> float:
        """Surface integral of a nodal function (trapezoid on segments, Pappus weight)."""
        f = np.asarray(f, float)
        if self.kind == "closed":
            E, F = self.points, f
        else:
            E = self._ext()[1:]
            F = np.concatenate([f, f[:1]])
        seg = np.linalg.norm(np.diff(E, axis=0), axis=1)
        w = E[:, 1] * F
        return float(np.pi * np.sum(seg * (w[1:] + w[:-1])))

    def copy(self, **kw) -> "AxiProfile":
        base = dict(z=self.z.copy(), r=self.r.copy(), labels=self.labels.copy(),
                    tags=dict(self.tags))
        base.update(kw)
        return replace(self, **base)


def _signed_area(z, r):
    return 0.5 * float(np.sum(z * np.roll(r, -1) - np.roll(z, -1) * r))


# -- generators --------------------------------------------------------------------------

def sphere(R: float = 1.0, n: int = 257) -> AxiProfile:
    phi = np.linspace(np.pi, 0.0, n)
    z, r = R * np.cos(phi), R * np.sin(phi)
    r[0] = r[-1] = 0.0
    return AxiProfile(z, r, "closed")


def cylinder(R: float = 1.0, period: float = 1.0, n: int = 64) -> AxiProfile:
    z = period * np.arange(n) / n
    return AxiProfile(z, np.full(n, R), "periodic", period=period)


def from_profile(z, r) -> AxiProfile:
    """Closed profile from a generating curve that starts and ends on the axis."""
    z = np.asarray(z, float).copy()
    r = np.asarray(r, float).copy()
    if z[0] > z[-1]:
        z, r = z[::-1], r[::-1]
    r[0] = r[-1] = 0.0
    return AxiProfile(z, r, "closed")


def torus(R: float = 2.0, a: float = 0.5, n: int = 128) -> AxiProfile:
    th = 2 * np.pi * np.arange(n) / n
    return AxiProfile(a * np.sin(th), R + a * np.cos(th), "loop")


# -- redistribution --------------------------------------------------------------------------

def _spline(profile: AxiProfile):
    """Spline through the curve in arclength; (curve, total length)."""
    P = profile.points
    if profile.kind == "closed":
        # odd extension in r across the axis keeps the ends smooth
        m = min(3, len(P) - 2)
        left = P[m:0:-1] * np.array([1, -1])
        right = P[-2:-2 - m:-1] * np.array([1, -1])
        E = np.vstack([left, P, right])
        seg = np.linalg.norm(np.diff(E, axis=0), axis=1)
        s = np.concatenate([[0.0], np.cumsum(seg)])
        s0, s1 = s[m], s[m + len(P) - 1]
        cs = CubicSpline(s - s0, E)
        return cs, s1 - s0
    E = profile._ext()[1:]
    seg = np.linalg.norm(np.diff(E, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    if profile.kind == "periodic":
        E = E.copy()
        E[:, 0] -= profile.period * s / s[-1]  # remove the secular drift so the data is periodic
        cs = CubicSpline(s, E, bc_type="periodic")
        drift = profile.period / s[-1]

        def curve(x, cs=cs, drift=drift):
            out = cs(x)
            out[..., 0] += drift * np.asarray(x)
            return out
        return curve, s[-1]
    return CubicSpline(s, E, bc_type="periodic"), s[-1]


def redistribute(profile: AxiProfile, n: int | None = None, resolve: float = 0.15,
                 smooth: int = 3) -> AxiProfile:
    """New nodes along the spline, spacing ~ min(length/n, resolve/|A|)."""
    n = len(profile) if n is None else n
    curve, S = _spline(profile)
    k, p, _ = profile.curvatures()
    A = np.sqrt(k * k + p * p)
    for _ in range(smooth):
        A = np.maximum(A, 0.5 * (np.roll(A, 1) + np.roll(A, -1)))
    s_old = profile.arclength()
    if profile.kind != "closed":
        A = np.concatenate([A, A[:1]])
    fine = np.linspace(0.0, S, 8 * n + 1)
    w = np.sqrt(1.0 + (np.interp(fine, s_old, A) * S / (resolve * n)) ** 2)
    cw = np.concatenate([[0.0], np.cumsum(0.5 * (w[1:] + w[:-1]) * np.diff(fine))])
    if profile.kind == "closed":
        target = np.interp(np.linspace(0.0, cw[-1], n), cw, fine)
    else:
        target = np.interp(cw[-1] * np.arange(n) / n, cw, fine)
    P = curve(target)
    labels = profile.labels[np.clip(np.searchsorted(s_old, target), 0, len(profile) - 1)]
    if profile.kind == "closed":
        P[0, 1] = P[-1, 1] = 0.0
        P[0, 0] = profile.z[0]
        P[-1, 0] = profile.z[-1]
        P[1:-1, 1] = np.abs(P[1:-1, 1])
    return profile.copy(z=P[:, 0].copy(), r=P[:, 1].copy(), labels=labels)


# -- stepping ------------------------------------------------------------------------------------

CFL = 0.2
REDISTRIBUTE_EVERY = 10


def stable_dt(profile: AxiProfile, cfl: float = CFL) -> float:
    """dt <= cfl * min(h^2, r^2) over segments and interior nodes."""
    E = profile.points if profile.kind == "closed" else profile._ext()
    h = np.linalg.norm(np.diff(E, axis=0), axis=1)
    r = profile.r[1:-1] if profile.kind == "closed" else profile.r
    return float(cfl * min(h.min() ** 2, r.min() ** 2))


def step_axisymmetric(profile: AxiProfile, dt: float, redistribute_nodes: bool = True,
                      resolve: float = 0.15) -> AxiProfile:
    """One explicit step of X_t = -H N; raises StepRejected if r <= 0 is reached."""
    k, p, N = profile.curvatures()
    H = k + p
    z = profile.z - dt * H * N[:, 0]
    r = profile.r - dt * H * N[:, 1]
    if profile.kind == "closed":
        r[0] = r[-1] = 0.0
        if np.any(r[1:-1] <= 0) or z[0] >= z[-1]:
            raise StepRejected("radius reached zero")
    elif np.any(r <= 0):
        raise StepRejected("radius reached zero")
    if not np.all(np.isfinite(z)) or not np.all(np.isfinite(r)):
        raise StepRejected("non-finite positions")
    out = profile.copy(z=z, r=r)
    if redistribute_nodes:
        out = redistribute(out, resolve=resolve)
    return out


def evolve(profile: AxiProfile, T: float, cfl: float = CFL, max_steps: int = 10**7,
           resolve: float = 0.15, every: int = REDISTRIBUTE_EVERY):
    """Flow to time T (or until a step is rejected below 1e-14 dt); returns (profile, t, steps)."""
    t = 0.0
    steps = 0
    while t < T and steps < max_steps:
        dt = min(stable_dt(profile, cfl), T - t)
        while True:
            try:
                profile = step_axisymmetric(profile, dt, (steps + 1) % every == 0, resolve)
                break
            except StepRejected:
                dt *= 0.5
                if dt < 1e-14:
                    return profile, t, steps
        t += dt
        steps += 1
    return profile, t, steps


def extinction_time(profile: AxiProfile, cfl: float = CFL, shrink: float = 1e-2,
                    resolve: float = 0.15, every: int = REDISTRIBUTE_EVERY) -> float:
    """Flow until the diameter falls below `shrink` times its initial value, then extrapolate.

    A shrinking round component has diameter^2 linear in t, so the last two
    samples extrapolate to the extinction time.
    """
    d0 = profile.diameter()
    t, steps = 0.0, 0
    hist = []
    while profile.diameter() > shrink * d0:
        dt = stable_dt(profile, cfl)
        profile = step_axisymmetric(profile, dt, (steps + 1) % every == 0, resolve)
        t += dt
        steps += 1
        hist.append((t, profile.diameter() ** 2))
    (t1, d1), (t2, d2) = hist[-2], hist[-1]
    return t2 + d2 * (t2 - t1) / (d1 - d2)
