"""Flow with surgery: thresholds, the axisymmetric scheduler, component removal, event log.

Components are closed axisymmetric profiles sharing one clock. The flow runs
until max H reaches H3; then a surgery pass certifies necks at curvature
scale H1, replaces each chosen neck by two caps, removes components that are
convex, extinct, or covered by caps and necks, and repeats until max H <= H2.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import sparse
from scipy.interpolate import CubicSpline

from . import axisym
from .axisym import AxiProfile, StepRejected, redistribute, stable_dt, step_axisymmetric
from .mesh import SurfaceMesh
from .monitor import f_field
from .surgery import SurgeryParams, cutoff, radial_profile


class FlowAbort(RuntimeError):
    """The scheduler contract failed at this discretization; carries a diagnostic dict."""

    def __init__(self, message, diagnostic=None):
        super().__init__(message)
        self.diagnostic = diagnostic or {}


class RemovalRefused(ValueError):
    pass


# -- thresholds ----------------------------------------------------------------------------------

@dataclass
class ThresholdSet:
    H1: float
    H2: float
    H3: float
    Theta: float
    theta0: float
    alpha_hat: float
    alpha: float
    gamma0: float
    C_sharp: float
    overridden: list = field(default_factory=list)

    def to_dict(self):
        return asdict(self)


def derive_parameters(alpha: float, C_sharp: float, gamma0: float, H1: float,
                      overrides: dict | None = None) -> ThresholdSet:
    """Theta = 400/alpha, theta0 = 1e-6 min(alpha, 1/(C# Theta^3)), alpha_hat = alpha/(1 - theta0/8),
    H2 = 1000 gamma0 H1, H3 = 10 H2; explicit overrides are recorded."""
    if not (0 < alpha <= 2) or C_sharp <= 0 or gamma0 < 1 or H1 <= 0:
        raise ValueError("need alpha in (0, 2], C_sharp > 0, gamma0 >= 1, H1 > 0")
    Theta = 400.0 / alpha
    theta0 = 1e-6 * min(alpha, 1.0 / (C_sharp * Theta**3))
    vals = {"Theta": Theta, "theta0": theta0, "H2": 1000.0 * gamma0 * H1}
    overrides = dict(overrides or {})
    unknown = set(overrides) - {"Theta", "theta0", "H2", "H3", "alpha_hat"}
    if unknown:
        raise ValueError(f"unknown overrides {sorted(unknown)}")
    for k in ("Theta", "theta0", "H2"):
        if k in overrides:
            vals[k] = float(overrides[k])
    H3 = float(overrides.get("H3", 10.0 * vals["H2"]))
    alpha_hat = float(overrides.get("alpha_hat", alpha / (1.0 - vals["theta0"] / 8.0)))
    if not (H1 < vals["H2"] < H3):
        raise ValueError(f"thresholds must satisfy H1 < H2 < H3 (got {H1}, {vals['H2']}, {H3})")
    return ThresholdSet(H1, vals["H2"], H3, vals["Theta"], vals["theta0"], alpha_hat, alpha,
                        gamma0, C_sharp, sorted(overrides))


# -- settings and state ----------------------------------------------------------------------------

@dataclass
class FlowSettings:
    """Solver and desk-scale surgery settings (all exposed in run configuration)."""
    cfl: float = axisym.CFL
    redistribute_every: int = axisym.REDISTRIBUTE_EVERY
    resolve: float = 0.15
    min_nodes: int = 96
    max_steps: int = 2_000_000
    max_events: int = 200
    warmup: float | None = None
    eta0: float = 0.1
    eta1: float = 0.25
    K0: float = 0.0
    neck_eps: float = 0.25
    neck_L: float = 1.0
    removal_tol: float = 1e-3
    record_every: int = 200
    delta: float = 0.1
    sigma: float = 0.1
    C1: float = 0.0
    p: float = 10.0


@dataclass
class Component:
    id: int
    profile: AxiProfile
    parent: int | None = None
    born: float = 0.0


@dataclass
class FlowState:
    time: float
    components: list
    events: list = field(default_factory=list)
    next_id: int = 0

    @classmethod
    def initial(cls, profile: AxiProfile) -> "FlowState":
        return cls(0.0, [Component(0, profile)], [], 1)

    def log(self, kind, component, **data):
        ev = {"time": self.time, "kind": kind, "component": component, "data": data}
        self.events.append(ev)
        return ev

    def max_H(self) -> float:
        return max((float(np.max(c.profile.H())) for c in self.components), default=0.0)

    def total_area(self) -> float:
        return sum(c.profile.area() for c in self.components)

    def total_volume(self) -> float:
        return sum(c.profile.volume() for c in self.components)


# -- profile geometry helpers ---------------------------------------------------------------------------

def profile_mu(profile: AxiProfile, sign: float = 1.0) -> np.ndarray:
    """Inscribed (sign=+1) or outer (sign=-1) touching-ball curvature of a closed profile.

    For a surface of revolution the touching-ball quotient 2<p-q, nu>/|p-q|^2
    over a parallel circle is a Moebius function of cos(phi), so its maximum
    sits on the meridian plane: the profile and its mirror image suffice.
    """
    k, pc, N = profile.curvatures()
    P = profile.points
    Q = np.vstack([P, P * np.array([1.0, -1.0])])
    d = P[:, None, :] - Q[None, :, :]
    d2 = (d * d).sum(2)
    num = 2.0 * sign * (d * N[:, None, :]).sum(2)
    with np.errstate(divide="ignore", invalid="ignore"):
        val = np.where(d2 > 1e-24, num / d2, -np.inf)
    lam = np.maximum(k, pc) if sign > 0 else np.maximum(-np.minimum(k, pc), 0.0)
    return np.maximum(val.max(1), lam)


def profile_alpha(profile: AxiProfile) -> tuple[float, float]:
    H = profile.H()
    a_in = float(np.min(H / profile_mu(profile, 1.0)))
    diam = profile.diameter()
    mo = np.maximum(profile_mu(profile, -1.0), 1.0 / (10.0 * diam))
    return a_in, float(np.min(H / mo))


def f_integral(profile: AxiProfile, s: FlowSettings) -> float:
    H = profile.H()
    mu = profile_mu(profile)
    f = f_field(H, mu, s.delta, s.sigma, s.C1)
    return profile.integrate(np.maximum(f, 0.0) ** s.p)


def _graph_window(profile: AxiProfile, z0: float, half: float):
    """Indices of the maximal z-monotone run containing z0, if it spans [z0-half, z0+half]."""
    z = profile.z
    inc = np.diff(z) > 0
    i0 = int(np.argmin(np.abs(z - z0)))
    lo = i0
    while lo > 0 and inc[lo - 1]:
        lo -= 1
    hi = i0
    while hi < len(z) - 1 and inc[hi]:
        hi += 1
    if z[lo] > z0 - half or z[hi] < z0 + half:
        return None
    return lo, hi


def certify_profile_neck(profile: AxiProfile, i: int, alpha_hat: float, delta_hat: float,
                         eps: float, L: float, others=()) -> dict:
    """The five neck conditions for the axisymmetric neck through node i.

    Sections are circles, so C2 (sup mu/kappa = 1), C3 (derivatives of kappa
    vanish) and C4 (kappa = 1 at size r) hold exactly. C1 is the C^2
    distance of rho(s) = r(z0 + s r)/r to 1 on |s| <= L, C5 the clearance
    of the outward normal segments of length 2 alpha_hat r.
    """
    z0, r = float(profile.z[i]), float(profile.r[i])
    out = {"z0": z0, "r": r}
    win = _graph_window(profile, z0, L * r)
    labels_near = profile.labels[np.abs(profile.z - z0) <= L * r]
    if win is None or np.any(labels_near > 0):
        out["C1"] = {"pass": False, "margin": -1.0, "reason": "window not a clean graph"}
        out["pass"] = False
        return out
    lo, hi = win
    zs, rs = profile.z[lo:hi + 1], profile.r[lo:hi + 1]
    cs = CubicSpline(zs, rs)
    s = np.linspace(-L, L, 81)
    rho = cs(z0 + s * r) / r
    d1 = cs(z0 + s * r, 1)
    d2 = cs(z0 + s * r, 2) * r
    dist = float(max(np.max(np.abs(rho - 1)), np.max(np.abs(d1)), np.max(np.abs(d2))))
    out["C1"] = {"pass": dist < eps, "margin": eps - dist, "value": dist}
    out["C2"] = {"pass": True, "margin": delta_hat, "value": 1.0}
    out["C3"] = {"pass": True, "margin": 0.01, "value": 0.0}
    out["C4"] = {"pass": True, "margin": eps, "value": 0.0}
    clear = _clearance(profile, lo, hi, z0, L * r, 2 * alpha_hat * r, others)
    out["C5"] = {"pass": clear > 2 * alpha_hat * r, "margin": (clear - 2 * alpha_hat * r) / r,
                 "value": clear / r}
    out["pass"] = all(out[k]["pass"] for k in ("C1", "C2", "C3", "C4", "C5"))
    return out


def _clearance(profile, lo, hi, z0, half, reach, others):
    """Shortest hit of the outward normal segments (length 2 reach) from the neck window."""
    _, _, N = profile.curvatures()
    idx = np.arange(lo, hi + 1)
    idx = idx[np.abs(profile.z[idx] - z0) <= half]
    segs = []
    for prof in (profile, *others):
        P = prof.points
        for Q in (P, P * np.array([1.0, -1.0])):
            segs.append(np.stack([Q[:-1], Q[1:]], axis=1))
    S = np.concatenate(segs)
    A, B = S[:, 0], S[:, 1]
    best = 2 * reach
    for j in idx:
        o = profile.points[j]
        d = N[j] * 2 * reach
        e = B - A
        den = d[0] * e[:, 1] - d[1] * e[:, 0]
        w = A - o
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (w[:, 0] * e[:, 1] - w[:, 1] * e[:, 0]) / den
            u = (w[:, 0] * d[1] - w[:, 1] * d[0]) / den
        hit = (t > 1e-9) & (t <= 1) & (u >= 0) & (u <= 1)
        if hit.any():
            best = min(best, float(t[hit].min()) * 2 * reach)
    return best


# -- profile surgery -------------------------------------------------------------------------------

def cap_profile(params: SurgeryParams, rho_sec, rho_ref=None, n: int = 80):
    """Radius (neck units) of one cap at cap coordinates sigma in [0, s_tip], tip last.

    rho_sec(sigma) is the section radius seen from the cap base, used on the
    bent and interpolated pieces. rho_ref(sigma) is the reference the
    sections are blended into (the unit cylinder by default); the remaining
    pieces are scaled by it. Nodes cluster at the tip, where the radius
    behaves like a square root.
    """
    k = params.lam4
    x = np.linspace(0.0, 1.0, n)
    sig = params.s_tip * (1 - (1 - x) ** 2)
    rho, _, _, lab = radial_profile(params, np.maximum(sig, 1e-12))
    ref = np.ones_like(sig) if rho_ref is None else rho_ref(sig)
    near = sig <= 2 * k
    sec = ref.copy()
    sec[near] = rho_sec(sig[near])
    chi = cutoff(sig / k)
    blend = np.where(sig <= k, sec, chi * sec + (1 - chi) * ref)
    blend[sig > 2 * k] = ref[sig > 2 * k]
    R = rho * blend
    R[0] = rho_sec(np.array([0.0]))[0]
    R[-1] = 0.0
    lab = lab.copy()
    lab[0] = 1
    return sig, R, lab


def _cone_fit(cs, z_a, z_b, r):
    """Least-squares line through the section radii on [z_a, z_b], in neck units."""
    zz = np.linspace(z_a, z_b, 64)
    c1, c0 = np.polyfit(zz, cs(zz) / r, 1)
    return lambda z: np.maximum(c1 * z + c0, 0.05)


def perform_surgery_profile(profile: AxiProfile, i: int, params: SurgeryParams,
                            n_cap: int = 80, taper: str = "sections"):
    """Replace the neck through node i by two caps with tips at z0 -/+ gap r / 2.

    With taper=True each cap is blended into the least-squares cone of the
    sections over its own window instead of the cylinder of radius r, which
    keeps caps mean convex on the conical necks seen at desk thresholds.
    Returns (left, right, info). Refuses (ValueError) if the neck is not a
    z-graph over the replaced window.
    """
    z0, r = float(profile.z[i]), float(profile.r[i])
    D = params.gap / 2 + params.s_tip
    win = _graph_window(profile, z0, D * r * 1.02)
    if win is None:
        raise ValueError("neck is not a graph over the surgery window")
    lo, hi = win
    cs = CubicSpline(profile.z[lo:hi + 1], profile.r[lo:hi + 1])
    zL0, zR0 = z0 - D * r, z0 + D * r
    def left_sec(sig):
        return cs(zL0 + sig * r) / r

    def right_sec(sig):
        return cs(zR0 - sig * r) / r

    if taper == "cone":
        coneL = _cone_fit(cs, zL0, z0, r)
        coneR = _cone_fit(cs, z0, zR0, r)
        refL = lambda sig: coneL(zL0 + sig * r)
        refR = lambda sig: coneR(zR0 - sig * r)
    elif taper == "sections":
        refL, refR = left_sec, right_sec
    elif taper == "cylinder":
        refL = refR = None
    else:
        raise ValueError(f"unknown taper {taper!r}")

    sig, RL, labL = cap_profile(params, left_sec, refL, n_cap)
    _, RR, labR = cap_profile(params, right_sec, refR, n_cap)
    zl = zL0 + sig * r
    zr = zR0 - sig * r
    keepL = profile.z < zl[0]
    keepL[hi + 1:] = False
    keepR = profile.z > zr[0]
    keepR[:lo] = False
    left = AxiProfile(np.concatenate([profile.z[keepL], zl]),
                      np.concatenate([profile.r[keepL], RL * r]), "closed",
                      labels=np.concatenate([profile.labels[keepL], labL]))
    right = AxiProfile(np.concatenate([zr[::-1], profile.z[keepR]]),
                       np.concatenate([RR[::-1] * r, profile.r[keepR]]), "closed",
                       labels=np.concatenate([labR[::-1], profile.labels[keepR]]))
    info = {"z0": z0, "r": r, "window": [zL0, zR0],
            "tips": [z0 - params.gap * r / 2, z0 + params.gap * r / 2],
            "Lambda": params.Lam, "taper": taper,
            "parameter_violations": params.violations()}
    return left, right, info


# -- removal ---------------------------------------------------------------------------------------

def removal_reason(c: Component, th: ThresholdSet, s: FlowSettings, d0: float):
    prof = c.profile
    if prof.diameter() < s.removal_tol * d0:
        return "extinction"
    lam1, _ = prof.lambdas()
    if np.all(lam1 > 0):
        return "convex-cap" if np.any(prof.labels > 0) else "convex"
    H = prof.H()
    with np.errstate(divide="ignore", invalid="ignore"):
        necky = (lam1 / H <= s.eta1) & (H >= th.H1 / 2)
    if np.all((prof.labels > 0) | necky):
        return "neck-cap"
    return None


def remove_component(state: FlowState, cid: int, reason: str, th: ThresholdSet,
                     s: FlowSettings, d0: float) -> FlowState:
    comp = next((c for c in state.components if c.id == cid), None)
    if comp is None:
        raise RemovalRefused(f"no component {cid}")
    actual = removal_reason(comp, th, s, d0)
    if actual is None:
        raise RemovalRefused(f"component {cid} is not removable (not convex, extinct or covered)")
    state.components = [c for c in state.components if c.id != cid]
    state.log("removal", cid, reason=reason if reason == actual else actual,
              diameter=comp.profile.diameter(), max_H=float(comp.profile.H().max()))
    return state


# -- scheduler ---------------------------------------------------------------------------------------------

def _candidates(c: Component, th: ThresholdSet, s: FlowSettings):
    prof = c.profile
    lam1, _ = prof.lambdas()
    H = prof.H()
    lo_H = max(s.K0, th.H1 / th.Theta, th.H1 / 2)
    with np.errstate(divide="ignore", invalid="ignore"):
        ok = (H >= lo_H) & (H <= 2 * th.H1) & (lam1 / H <= s.eta0) & (prof.labels == 0)
    ok[0] = ok[-1] = False
    idx = np.flatnonzero(ok)
    return idx[np.argsort(np.abs(H[idx] - th.H1), kind="stable")]


def _series_row(state: FlowState, s: FlowSettings):
    if not state.components:
        return {"t": state.time, "maxH": 0.0, "minH": 0.0, "area": 0.0, "volume": 0.0,
                "alpha_in": float("nan"), "f_integral": 0.0, "n_components": 0}
    Hs = [c.profile.H() for c in state.components]
    return {"t": state.time, "maxH": float(max(h.max() for h in Hs)),
            "minH": float(min(h.min() for h in Hs)), "area": state.total_area(),
            "volume": state.total_volume(),
            "alpha_in": min(profile_alpha(c.profile)[0] for c in state.components),
            "f_integral": sum(f_integral(c.profile, s) for c in state.components),
            "n_components": len(state.components)}


def _nodes_for(length, grid, L0, s):
    return int(max(s.min_nodes, round(grid * length / L0)))


def surgery_pass(state: FlowState, th: ThresholdSet, params: SurgeryParams, s: FlowSettings,
                 grid: int, L0: float, d0: float):
    """Surgeries and removals until max H <= H2; returns the list of new event indices."""
    start = len(state.events)
    f_before = sum(f_integral(c.profile, s) for c in state.components)
    for _ in range(s.max_events):
        for c in list(state.components):
            why = removal_reason(c, th, s, d0)
            if why is not None:
                remove_component(state, c.id, why, th, s, d0)
        if state.max_H() <= th.H2:
            break
        done = False
        hot = [c for c in state.components if c.profile.H().max() > th.H2]
        for c in hot:
            others = [o.profile for o in state.components if o is not c]
            for i in _candidates(c, th, s):
                cert = certify_profile_neck(c.profile, int(i), params.alpha_hat,
                                            params.delta_hat, s.neck_eps, s.neck_L, others)
                if not cert["pass"]:
                    continue
                r = cert["r"]
                if not (1 / (2 * th.H1) <= r <= 2 / th.H1):
                    continue
                try:
                    left, right, info = perform_surgery_profile(c.profile, int(i), params)
                except ValueError:
                    continue
                kids = []
                for prof in (left, right):
                    n = _nodes_for(prof.arclength()[-1], grid, L0, s)
                    prof = redistribute(prof, n, s.resolve)
                    kids.append(Component(state.next_id, prof, c.id, state.time))
                    state.next_id += 1
                state.components = [o for o in state.components if o is not c] + kids
                H_mod = max(float(k.profile.H()[k.profile.labels > 0].max()) for k in kids)
                state.log("surgery", c.id, children=[k.id for k in kids], certificate=cert,
                          max_H_modified=H_mod, **info)
                done = True
                break
            if done:
                break
        if not done:
            diag = {"time": state.time, "max_H": state.max_H(),
                    "components": [{"id": c.id, "max_H": float(c.profile.H().max()),
                                    "z": c.profile.z.tolist(), "r": c.profile.r.tolist()}
                                   for c in state.components]}
            raise FlowAbort("no certifiable neck left but max H > H2", diag)
    else:
        raise FlowAbort("surgery pass exceeded the event budget", {"time": state.time})
    f_after = sum(f_integral(c.profile, s) for c in state.components)
    state.log("pass-complete", None, max_H=state.max_H(), f_before=f_before, f_after=f_after,
              H2=th.H2)
    return list(range(start, len(state.events)))


@dataclass
class RunResult:
    state: FlowState
    series: list
    status: str
    steps: int
    passes: list

    def write(self, outdir):
        out = Path(outdir)
        out.mkdir(parents=True, exist_ok=True)
        write_events(out / "events.jsonl", self.state.events)
        write_series(out / "series.csv", self.series)


def run_with_surgery(profile: AxiProfile, th: ThresholdSet, params: SurgeryParams,
                     s: FlowSettings | None = None, grid: int = 512,
                     snapshot=None) -> RunResult:
    """Evolve, trigger a surgery pass whenever max H >= H3, stop when nothing is left."""
    s = FlowSettings() if s is None else s
    profile = redistribute(profile, grid, s.resolve)
    state = FlowState.initial(profile)
    d0 = profile.diameter()
    L0 = profile.arclength()[-1]
    k, pc, _ = profile.curvatures()
    warm = s.warmup if s.warmup is not None else (100 * float(np.max(np.hypot(k, pc)))) ** -2
    state.log("start", 0, thresholds=th.to_dict(), surgery=params.to_dict(),
              settings=asdict(s), grid=grid, warmup=warm,
              assumed=["outward-minimizing (not checked)"])
    series = [_series_row(state, s)]
    steps = 0
    passes = []
    status = "budget"
    while state.components and steps < s.max_steps:
        dt = min(stable_dt(c.profile, s.cfl) for c in state.components)
        redo = (steps + 1) % s.redistribute_every == 0
        while True:
            try:
                new = [step_axisymmetric(c.profile, dt, redo, s.resolve) for c in state.components]
                break
            except StepRejected:
                dt *= 0.5
                if dt < 1e-16:
                    raise FlowAbort("step size collapsed", {"time": state.time})
        for c, p in zip(state.components, new):
            c.profile = p
        state.time += dt
        steps += 1
        for c in list(state.components):
            if c.profile.diameter() < s.removal_tol * d0:
                remove_component(state, c.id, "extinction", th, s, d0)
        if snapshot is not None:
            snapshot(state)
        if steps % s.record_every == 0:
            series.append(_series_row(state, s))
        if state.max_H() >= th.H3 and state.time >= warm:
            series.append(_series_row(state, s))
            idx = surgery_pass(state, th, params, s, grid, L0, d0)
            passes.append({"time": state.time, "events": idx,
                           "max_H_after": state.max_H(),
                           "f_before": state.events[idx[-1]]["data"]["f_before"],
                           "f_after": state.events[idx[-1]]["data"]["f_after"]})
            series.append(_series_row(state, s))
    if not state.components:
        status = "extinct"
    state.log("end", None, status=status, steps=steps)
    return RunResult(state, series, status, steps, passes)


# -- experimental mesh mode ----------------------------------------------------------------------

def _cotan_laplacian(mesh: SurfaceMesh):
    V, T = mesh.vertices, mesh.triangles
    n = len(V)
    L_rows, L_cols, L_vals = [], [], []
    for k in range(3):
        i, j, o = T[:, k], T[:, (k + 1) % 3], T[:, (k + 2) % 3]
        u, v = V[i] - V[o], V[j] - V[o]
        cot = (u * v).sum(1) / np.linalg.norm(np.cross(u, v), axis=1)
        L_rows += [i, j]
        L_cols += [j, i]
        L_vals += [0.5 * cot, 0.5 * cot]
    W = sparse.csr_matrix((np.concatenate(L_vals), (np.concatenate(L_rows), np.concatenate(L_cols))),
                          shape=(n, n))
    return W - sparse.diags(np.asarray(W.sum(1)).ravel())


def mesh_stable_dt(mesh: SurfaceMesh, cfl: float = 0.1) -> float:
    e = mesh.edges()
    h = np.linalg.norm(mesh.vertices[e[:, 0]] - mesh.vertices[e[:, 1]], axis=1)
    return float(cfl * h.min() ** 2)


def step_mesh(mesh: SurfaceMesh, dt: float) -> SurfaceMesh:
    """Explicit step x += dt * (cotangent Laplacian of x) / (vertex area) = -H nu dt.

    No remeshing. Raises StepRejected if a triangle flips.
    """
    Lx = _cotan_laplacian(mesh) @ mesh.vertices
    A = mesh.vertex_areas()
    if np.any(A <= 0):
        raise StepRejected("degenerate vertex area")
    out = SurfaceMesh(mesh.vertices + dt * Lx / A[:, None], mesh.triangles, closed=mesh.closed)
    if np.any((out.face_normals(unit=False) * mesh.face_normals(unit=False)).sum(1) <= 0):
        raise StepRejected("triangle inversion")
    return out


def evolve_mesh(mesh: SurfaceMesh, T: float, cfl: float = 0.1, max_steps: int = 10**6):
    t, steps = 0.0, 0
    while t < T - 1e-15 and steps < max_steps:
        dt = min(mesh_stable_dt(mesh, cfl), T - t)
        mesh = step_mesh(mesh, dt)
        t += dt
        steps += 1
    return mesh, t, steps


# -- persistence ---------------------------------------------------------------------------------

def _clean(x):
    if isinstance(x, dict):
        return {k: _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else None
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def write_events(path, events):
    with Path(path).open("w") as fh:
        for ev in events:
            fh.write(json.dumps(_clean(ev), sort_keys=True) + "\n")


def read_events(path) -> list:
    return [json.loads(line) for line in Path(path).read_text().splitlines() if line.strip()]


SERIES_COLUMNS = ("t", "maxH", "minH", "area", "volume", "alpha_in")


def write_series(path, series):
    with Path(path).open("w") as fh:
        fh.write(",".join(SERIES_COLUMNS + ("f_integral", "n_components")) + "\n")
        for row in series:
            fh.write(",".join(repr(float(row[k])) for k in SERIES_COLUMNS)
                     + f",{float(row['f_integral'])!r},{int(row['n_components'])}\n")


def genealogy(events) -> dict:
    """Parent of every component, reconstructed from the event log."""
    parent = {0: None}
    for ev in events:
        if ev["kind"] == "surgery":
            for k in ev["data"]["children"]:
                parent[k] = ev["component"]
    return parent
