"""Neck certification: axis and cross-section extraction, the five neck conditions, seed scan.

Sections are stored in units of the neck size r, in the frame (e1, e2, axis)
centred on the axis point. Each section is sampled at n_t polar angles about
its own centroid and low-pass filtered in the angle (keeping `lowpass`
Fourier modes), which removes the facet ripple of the mesh and makes the
curve derivatives used by the conditions well defined.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numba
import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components, dijkstra

from .curves import CurveError, PlaneCurve, noncollapse_ratio
from .geometry import CurvatureField, compute_curvature
from .mesh import SurfaceMesh

C3_BOUND = 0.01
C3_ORDERS = 4
FINE = 512
KAPPA_BAND = 4  # kappa is resolved up to this multiple of the section bandwidth
C5_REACH = 4.0  # clearance resolved up to this many times 2 alpha_hat r


class NeckError(ValueError):
    pass


def _flag_mask(fld: CurvatureField, n: int) -> np.ndarray:
    m = np.zeros(n, dtype=bool)
    m[np.asarray(fld.flagged, dtype=np.int64)] = True
    return m


# -- slicing ------------------------------------------------------------------------------

def slice_loops(mesh: SurfaceMesh, origin, normal):
    """Closed polygons of mesh ∩ plane, in 3D. Open chains (surface boundary) are dropped."""
    V, T = mesh.vertices, mesh.triangles
    n = len(V)
    d = (V - origin) @ normal
    scale = mesh.bbox_diameter()
    d = np.where(d == 0.0, 1e-12 * scale, d)
    sd = d[T] > 0
    cnt = sd.sum(1)
    cross = (cnt == 1) | (cnt == 2)
    if not cross.any():
        return []
    Tc = T[cross]
    # two crossing edges per triangle, keyed by sorted vertex pair
    ends = []
    for a, b in ((0, 1), (1, 2), (2, 0)):
        va, vb = Tc[:, a], Tc[:, b]
        hit = (d[va] > 0) != (d[vb] > 0)
        ends.append((hit, np.minimum(va, vb) * n + np.maximum(va, vb)))
    keys = np.full((len(Tc), 2), -1, dtype=np.int64)
    fill = np.zeros(len(Tc), dtype=np.int64)
    for hit, key in ends:
        rows = np.flatnonzero(hit)
        keys[rows, fill[rows]] = key[rows]
        fill[rows] += 1
    uk, inv = np.unique(keys.ravel(), return_inverse=True)
    inv = inv.reshape(-1, 2)
    ea, eb = uk // n, uk % n
    w = d[ea] / (d[ea] - d[eb])
    pts = V[ea] + w[:, None] * (V[eb] - V[ea])
    m = len(uk)
    g = sp.coo_matrix((np.ones(len(inv)), (inv[:, 0], inv[:, 1])), shape=(m, m))
    g = (g + g.T).tocsr()
    deg = np.diff(g.indptr)
    ncomp, lab = connected_components(g, directed=False)
    loops = []
    for c in range(ncomp):
        nodes = np.flatnonzero(lab == c)
        if len(nodes) < 3 or np.any(deg[nodes] != 2):
            continue
        order = [nodes[0]]
        prev, cur = -1, nodes[0]
        while True:
            nb = g.indices[g.indptr[cur]:g.indptr[cur + 1]]
            nxt = nb[0] if nb[0] != prev else nb[1]
            if nxt == order[0]:
                break
            order.append(nxt)
            prev, cur = cur, nxt
        loop = pts[np.array(order)]
        # a plane through mesh vertices yields coincident crossings; keep one of each
        step = np.linalg.norm(loop - np.roll(loop, 1, axis=0), axis=1)
        loop = loop[step > 1e-12 * scale]
        if len(loop) >= 3:
            loops.append(loop)
    return loops


def _inside(poly, p):
    """Even-odd point-in-polygon test in 2D."""
    x, y = poly[:, 0], poly[:, 1]
    x2, y2 = np.roll(x, -1), np.roll(y, -1)
    cond = (y > p[1]) != (y2 > p[1])
    with np.errstate(divide="ignore", invalid="ignore"):
        xin = x + (p[1] - y) * (x2 - x) / (y2 - y)
    return bool(np.sum(cond & (p[0] < xin)) % 2)


def polar_resample(poly, n_t: int, lowpass: int):
    """Polar radius about the centroid at n_t angles, truncated to `lowpass` modes.

    Returns (centre, Fourier coefficients of R over FINE angles) or None when a
    ray from the centroid does not hit the polygon exactly once (not star-shaped).
    """
    c0 = PlaneCurve(poly).centroid()
    q = PlaneCurve(poly).points - c0
    ang = np.unwrap(np.arctan2(q[:, 1], q[:, 0]))
    if np.any(np.diff(ang) <= 0) or not np.isclose(ang[-1] - ang[0] + _wrap(ang[0] - ang[-1]), 2 * np.pi):
        return None
    # edge j spans angles [ang[j], ang[j+1]); rotate so the spans start at angle 0
    start = ang[0]
    rel = np.concatenate([ang - start, [2 * np.pi]])
    q2 = np.vstack([q, q[:1]])
    th = 2 * np.pi * np.arange(FINE) / FINE
    j = np.clip(np.searchsorted(rel, (th - start) % (2 * np.pi), side="right") - 1, 0, len(q) - 1)
    dirs = np.column_stack([np.cos(th), np.sin(th)])
    a0, e = q2[j], q2[j + 1] - q2[j]
    den = dirs[:, 0] * e[:, 1] - dirs[:, 1] * e[:, 0]
    R = (a0[:, 0] * e[:, 1] - a0[:, 1] * e[:, 0]) / den
    coef = np.fft.rfft(R)
    coef[lowpass + 1:] = 0.0
    return c0, coef


def _wrap(x):
    return (x + np.pi) % (2 * np.pi) - np.pi


def _polar_points(c0, coef, n):
    """Band-limited polar curve evaluated at n uniform angles."""
    th = 2 * np.pi * np.arange(n) / n
    R = _eval_series(coef, n)
    return c0 + np.column_stack([R * np.cos(th), R * np.sin(th)])


def _eval_series(coef, n, order=0):
    """Real series with rfft coefficients (normalised to FINE samples) at n angles."""
    k = np.arange(len(coef))
    c = coef * (1j * k) ** order * (n / FINE)
    full = np.zeros(n // 2 + 1, dtype=complex)
    m = min(len(c), len(full))
    full[:m] = c[:m]
    return np.fft.irfft(full, n)


# -- regions ----------------------------------------------------------------------------------

@dataclass
class NeckRegion:
    vertices: np.ndarray
    axis: np.ndarray
    center: np.ndarray
    r: float
    frame: np.ndarray
    stations: np.ndarray
    centres: np.ndarray
    coefs: np.ndarray
    valid: np.ndarray
    issues: list
    L: float
    n_t: int = 64
    mesh: SurfaceMesh | None = field(default=None, repr=False)

    def section(self, k: int, n: int | None = None) -> PlaneCurve:
        return PlaneCurve(_polar_points(self.centres[k], self.coefs[k], n or self.n_t))

    @property
    def sections(self):
        return [self.section(k) if self.valid[k] else None for k in range(len(self.stations))]

    def gamma_polar(self):
        """Mean section: mean centre and mean polar coefficients over valid stations."""
        v = self.valid
        return self.centres[v].mean(0), self.coefs[v].mean(0)

    def section_family(self, n_t: int | None = None):
        """Sections (relative to Gamma's centroid) as a surgery SectionFamily."""
        from .surgery import SectionFamily
        if not self.valid.all():
            raise NeckError("section family needs every station")
        n = n_t or self.n_t
        g0, gc = self.gamma_polar()
        curves = np.stack([_polar_points(self.centres[k] - g0, self.coefs[k], n)
                           for k in range(len(self.stations))])
        return SectionFamily(self.stations, curves, _polar_points(np.zeros(2), gc, n))

    def to_world(self, local):
        """(x, y, s) in neck units to world coordinates."""
        local = np.atleast_2d(local)
        return self.center + self.r * local @ self.frame.T


def _frame(axis):
    axis = axis / np.linalg.norm(axis)
    helper = np.eye(3)[np.argmin(np.abs(axis))]
    e1 = np.cross(helper, axis)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(axis, e1)
    return np.column_stack([e1, e2, axis])


def _sections(mesh, center, frame, r, L, spacing, n_t, lowpass):
    stations = np.arange(-L, L + 0.5 * spacing, spacing)
    axis = frame[:, 2]
    K = len(stations)
    centres = np.zeros((K, 2))
    coefs = np.zeros((K, FINE // 2 + 1), dtype=complex)
    valid = np.zeros(K, dtype=bool)
    issues = []
    for k, s in enumerate(stations):
        o = center + s * r * axis
        best = None
        for loop in slice_loops(mesh, o, axis):
            loc = (loop - o) @ frame[:, :2] / r
            if not _inside(loc, np.zeros(2)):
                continue
            area = abs(PlaneCurve(loc).area())
            if best is None or area < best[0]:
                best = (area, loc)
        if best is None:
            issues.append(f"no closed section around the axis at s = {s:g}")
            continue
        curve = PlaneCurve(best[1])
        if not curve.is_simple():
            issues.append(f"non-simple section at s = {s:g}")
            continue
        pr = polar_resample(curve.points, n_t, lowpass)
        if pr is None:
            issues.append(f"section at s = {s:g} is not star-shaped about its centroid")
            continue
        centres[k], coefs[k] = pr
        valid[k] = True
    return stations, centres, coefs, valid, issues


def fit_axis_and_sections(mesh: SurfaceMesh, seed: int, L: float, r_guess: float,
                          fld: CurvatureField | None = None, n_t: int = 64,
                          lowpass: int = 10, spacing: float = 0.25) -> NeckRegion:
    """Estimate axis, centre and size of the neck through `seed`, then slice it.

    The axis starts as the dominant lambda1-direction near the seed, is refined
    by the least-squares normal fit (normals of a neck are orthogonal to its
    axis) and finally by a line fit through the section centres.
    """
    fld = compute_curvature(mesh) if fld is None else fld
    V = mesh.vertices
    near = np.linalg.norm(V - V[seed], axis=1) <= 2 * r_guess
    near &= ~_flag_mask(fld, len(V))
    if not near.any() or np.nanmean(fld.H[near]) <= 0:
        raise NeckError("mean curvature must be positive near the seed")
    d1 = fld.dir1[near]
    w, U = np.linalg.eigh(d1.T @ d1)
    axis = U[:, -1]
    nu = fld.normal[near]
    w2, U2 = np.linalg.eigh(nu.T @ nu)
    if abs(U2[:, 0] @ axis) > np.cos(np.radians(30)):
        axis = U2[:, 0] * np.sign(U2[:, 0] @ axis)
    frame = _frame(axis)
    # centre: centroid of the seed section
    loops = slice_loops(mesh, V[seed], axis)
    if not loops:
        raise NeckError("seed plane does not cut the surface")
    dist = [np.min(np.linalg.norm(lp - V[seed], axis=1)) for lp in loops]
    lp = loops[int(np.argmin(dist))]
    loc = (lp - V[seed]) @ frame[:, :2]
    c2 = PlaneCurve(loc).centroid()
    center = V[seed] + frame[:, :2] @ c2
    r = PlaneCurve(loc).length() / (2 * np.pi)
    for _ in range(2):
        st, cen, co, val, iss = _sections(mesh, center, frame, r, min(L, 1.0), spacing, n_t, lowpass)
        if val.sum() >= 3:
            # least-squares line through the section centres
            pts = center + r * (cen[val] @ frame[:, :2].T) + r * st[val, None] * frame[:, 2]
            m = pts.mean(0)
            _, _, Vt = np.linalg.svd(pts - m)
            a = Vt[0] * np.sign(Vt[0] @ frame[:, 2])
            frame = _frame(a)
            center = m + ((center - m) @ a) * a
            per = [PlaneCurve(_polar_points(cen[k], co[k], 256)).length()
                   for k in np.flatnonzero(val)]
            r = r * float(np.mean(per)) / (2 * np.pi)
    stations, centres, coefs, valid, issues = _sections(mesh, center, frame, r, L, spacing,
                                                       n_t, lowpass)
    rel = (V - center) @ frame
    radial = np.linalg.norm(rel[:, :2], axis=1)
    inside = (np.abs(rel[:, 2]) <= L * r) & (radial <= 3 * r)
    return NeckRegion(np.flatnonzero(inside), frame[:, 2].copy(), center, float(r), frame,
                      stations, centres, coefs, valid, issues, float(L), n_t, mesh)


# -- conditions ---------------------------------------------------------------------------------

def _spectral_dt(f, order=1, band=None):
    n = f.shape[-1]
    k = np.fft.fftfreq(n, d=1.0 / n)
    fh = np.fft.fft(f, axis=-1) * (1j * k) ** order
    if band is not None:
        # modes above the band carry only round-off, which k^order would amplify
        fh[..., np.abs(k) > band] = 0.0
    if n % 2 == 0 and order % 2:
        fh[..., n // 2] = 0.0
    return np.real(np.fft.ifft(fh, axis=-1))


def curve_derivative_sum(c0, coef, orders: int = C3_ORDERS):
    """kappa(theta) of the band-limited polar curve and sup of sum_{l=1..orders} |d^l kappa / ds^l|."""
    R = _eval_series(coef, FINE)
    R1 = _eval_series(coef, FINE, 1)
    R2 = _eval_series(coef, FINE, 2)
    speed = np.sqrt(R**2 + R1**2)
    kappa = (R**2 + 2 * R1**2 - R * R2) / speed**3
    nz = np.flatnonzero(np.abs(coef) > 0)
    band = KAPPA_BAND * max(int(nz.max()) if len(nz) else 1, 1)
    total = np.zeros(FINE)
    f = kappa
    for _ in range(orders):
        f = _spectral_dt(f, band=band) / speed
        total += np.abs(f)
    return kappa, float(total.max())


def _c1_distance(region: NeckRegion):
    """Discrete C^2 distance between the sections and the mean section extruded (neck units)."""
    n = 4 * region.n_t
    g0, gc = region.gamma_polar()
    G = _polar_points(g0, gc, n)
    C = np.stack([_polar_points(region.centres[k], region.coefs[k], n)
                  for k in range(len(region.stations))])
    D = C - G
    two_pi = 2 * np.pi
    Dt = _spectral_dt(np.moveaxis(D, 1, -1)) / two_pi
    Dtt = _spectral_dt(np.moveaxis(D, 1, -1), 2) / two_pi**2
    st = region.stations
    Cs = np.gradient(C, st, axis=0, edge_order=2)
    Css = np.gradient(Cs, st, axis=0, edge_order=2)
    Cst = _spectral_dt(np.moveaxis(Cs, 1, -1)) / two_pi
    per = np.max(np.stack([
        np.linalg.norm(D, axis=2).max(1),
        np.linalg.norm(Dt, axis=1).max(1),
        np.linalg.norm(Dtt, axis=1).max(1),
        np.linalg.norm(Cs, axis=2).max(1),
        np.linalg.norm(Css, axis=2).max(1),
        np.linalg.norm(Cst, axis=1).max(1),
    ]), axis=0)
    return float(per.max()), per


@numba.njit(cache=True)
def _ray_clearance(origins, dirs, skip, V, T, cen, rad, reach):
    out = np.full(len(origins), reach)
    for a in range(len(origins)):
        ox, oy, oz = origins[a, 0], origins[a, 1], origins[a, 2]
        dx, dy, dz = dirs[a, 0], dirs[a, 1], dirs[a, 2]
        best = reach
        for f in range(len(T)):
            cx, cy, cz = cen[f, 0] - ox, cen[f, 1] - oy, cen[f, 2] - oz
            if cx * cx + cy * cy + cz * cz > (best + rad[f]) ** 2:
                continue
            i0, i1, i2 = T[f, 0], T[f, 1], T[f, 2]
            if i0 == skip[a] or i1 == skip[a] or i2 == skip[a]:
                continue
            e1x, e1y, e1z = V[i1, 0] - V[i0, 0], V[i1, 1] - V[i0, 1], V[i1, 2] - V[i0, 2]
            e2x, e2y, e2z = V[i2, 0] - V[i0, 0], V[i2, 1] - V[i0, 1], V[i2, 2] - V[i0, 2]
            px, py, pz = dy * e2z - dz * e2y, dz * e2x - dx * e2z, dx * e2y - dy * e2x
            det = e1x * px + e1y * py + e1z * pz
            if abs(det) < 1e-300:
                continue
            inv = 1.0 / det
            tx, ty, tz = ox - V[i0, 0], oy - V[i0, 1], oz - V[i0, 2]
            u = (tx * px + ty * py + tz * pz) * inv
            if u < 0.0 or u > 1.0:
                continue
            qx, qy, qz = ty * e1z - tz * e1y, tz * e1x - tx * e1z, tx * e1y - ty * e1x
            v = (dx * qx + dy * qy + dz * qz) * inv
            if v < 0.0 or u + v > 1.0:
                continue
            t = (e2x * qx + e2y * qy + e2z * qz) * inv
            if t > 1e-9 * reach and t < best:
                best = t
        out[a] = best
    return out


def ray_clearance(mesh: SurfaceMesh, vertices, reach: float) -> np.ndarray:
    """Distance along the outward vertex normal to the next mesh hit, capped at `reach`."""
    V = np.ascontiguousarray(mesh.vertices)
    T = np.ascontiguousarray(mesh.triangles.astype(np.int64))
    vertices = np.asarray(vertices, dtype=np.int64)
    cen = V[T].mean(1)
    rad = np.linalg.norm(V[T] - cen[:, None], axis=2).max(1)
    dirs = mesh.vertex_normals()[vertices]
    return _ray_clearance(V[vertices], np.ascontiguousarray(dirs), vertices, V, T, cen, rad,
                          float(reach))


@dataclass
class NeckCertificate:
    conditions: dict
    r: float
    axis: list
    center: list
    residuals: list
    params: dict

    @property
    def passed(self) -> bool:
        return all(c["pass"] for c in self.conditions.values())

    def failed(self) -> list:
        return [k for k, c in self.conditions.items() if not c["pass"]]

    def to_dict(self) -> dict:
        return {"schema": 1, "pass": self.passed, "r": self.r, "axis": self.axis,
                "center": self.center, "conditions": self.conditions,
                "station_residuals": self.residuals, "params": self.params}


def _cond(margin, value, threshold, reason=""):
    margin = float(margin)
    return {"pass": bool(margin > 0), "margin": margin, "value": float(value),
            "threshold": float(threshold), "reason": reason}


def check_neck(region: NeckRegion, alpha_hat: float, delta_hat: float, eps: float,
               L: float | None = None, c3_bound: float = C3_BOUND) -> NeckCertificate:
    """The five neck conditions with margins (positive means satisfied); all in neck units."""
    L = region.L if L is None else L
    use = np.abs(region.stations) <= L + 1e-9
    if use.sum() < 8:
        raise NeckError("check_neck needs at least 8 stations")
    sub = NeckRegion(region.vertices, region.axis, region.center, region.r, region.frame,
                     region.stations[use], region.centres[use], region.coefs[use],
                     region.valid[use], region.issues, L, region.n_t, region.mesh)
    cond = {}
    residuals = []
    if not sub.valid.all():
        bad = [i for i in sub.issues]
        cond["C1"] = {"pass": False, "margin": -np.inf, "value": np.inf, "threshold": eps,
                      "reason": "; ".join(bad) or "missing sections"}
        fail = {"pass": False, "margin": -np.inf, "value": np.nan, "threshold": np.nan,
                "reason": "sections unavailable"}
        if sub.valid.any():
            g0, gc = sub.gamma_polar()
        else:
            for k in ("C2", "C3", "C4"):
                cond[k] = dict(fail)
            g0 = gc = None
    else:
        dist, per = _c1_distance(sub)
        residuals = per.tolist()
        cond["C1"] = _cond(eps - dist, dist, eps)
        g0, gc = sub.gamma_polar()
    if gc is not None:
        gamma = PlaneCurve(_polar_points(g0, gc, 4 * sub.n_t))
        try:
            ratio = noncollapse_ratio(gamma)
            cond["C2"] = _cond(1 + delta_hat - ratio, ratio, 1 + delta_hat)
        except CurveError as exc:
            cond["C2"] = {"pass": False, "margin": -np.inf, "value": np.nan,
                          "threshold": 1 + delta_hat, "reason": str(exc)}
        kappa, dsum = curve_derivative_sum(g0, gc)
        cond["C3"] = _cond(c3_bound - dsum, dsum, c3_bound)
        gap = float(np.min(np.abs(kappa - 1)))
        cond["C4"] = _cond(eps - gap, gap, eps)
    # C5: outward clearance of the neck vertices, in neck units
    mesh = sub.mesh
    rel = (mesh.vertices[sub.vertices] - sub.center) @ sub.frame
    keep = sub.vertices[np.abs(rel[:, 2]) <= L * sub.r]
    need = 2 * alpha_hat
    if len(keep):
        clear = ray_clearance(mesh, keep, C5_REACH * need * sub.r) / sub.r
        i = int(np.argmin(clear))
        cond["C5"] = _cond(clear[i] - need, clear[i], need)
        cond["C5"]["worst_vertex"] = int(keep[i])
    else:
        cond["C5"] = {"pass": False, "margin": -np.inf, "value": np.nan, "threshold": need,
                      "reason": "no neck vertices"}
    for k in ("C1", "C2", "C3", "C4", "C5"):
        for key in ("margin", "value", "threshold"):
            if not np.isfinite(cond[k][key]):
                cond[k][key] = None if np.isnan(cond[k][key]) else float(np.sign(cond[k][key])) * 1e308
    params = {"alpha_hat": alpha_hat, "delta_hat": delta_hat, "eps": eps, "L": L,
              "c3_bound": c3_bound}
    return NeckCertificate({k: cond[k] for k in ("C1", "C2", "C3", "C4", "C5")}, sub.r,
                           sub.axis.tolist(), sub.center.tolist(), residuals, params)


# -- scanning ----------------------------------------------------------------------------------

def scan_for_necks(mesh: SurfaceMesh, fld: CurvatureField, H1: float, Theta: float,
                   eta0: float, K0: float = 0.0) -> list:
    """Neck-like vertices (lambda1/H <= eta0, H >= max(K0, H1/Theta)) clustered geodesically.

    Clusters grow greedily from the highest-H unassigned candidate: geodesic
    radius 2/H around the seed's Euclidean 2/H ball (a bare geodesic disc of
    radius 2r does not reach around a neck of circumference 2 pi r). The
    result is ordered by cluster mean H, deepest first.
    """
    H = fld.H
    with np.errstate(invalid="ignore", divide="ignore"):
        cand = (~_flag_mask(fld, mesh.n_vertices)) & (H > 0) & (fld.lambda1 / H <= eta0) & (H >= max(K0, H1 / Theta))
    idx = np.flatnonzero(cand)
    if not len(idx):
        return []
    E = mesh.edges()
    w = np.linalg.norm(mesh.vertices[E[:, 0]] - mesh.vertices[E[:, 1]], axis=1)
    n = mesh.n_vertices
    g = sp.coo_matrix((w, (E[:, 0], E[:, 1])), shape=(n, n)).tocsr()
    free = np.zeros(n, dtype=bool)
    free[idx] = True
    out = []
    for v in idx[np.argsort(-H[idx], kind="stable")]:
        if not free[v]:
            continue
        # grow from the seed's Euclidean 2/H ball so the cluster spans the whole section
        ball = np.flatnonzero(np.linalg.norm(mesh.vertices - mesh.vertices[v], axis=1) <= 2.0 / H[v])
        dist = dijkstra(g, directed=False, indices=ball, limit=2.0 / H[v], min_only=True)
        members = np.flatnonzero(free & np.isfinite(dist))
        free[members] = False
        out.append({"seed": int(v), "H": float(H[v]), "mean_H": float(H[members].mean()),
                    "size": int(len(members)), "r_guess": float(1.0 / H[v])})
    out.sort(key=lambda c: -c["mean_H"])
    return out


# -- export ---------------------------------------------------------------------------------------

def write_certificate(path, cert: NeckCertificate):
    Path(path).write_text(json.dumps(cert.to_dict(), indent=2))


def write_sections_csv(path, region: NeckRegion):
    with Path(path).open("w") as fh:
        fh.write("station,s,index,x,y\n")
        for k, s in enumerate(region.stations):
            if not region.valid[k]:
                continue
            for j, (x, y) in enumerate(region.section(k).points):
                fh.write(f"{k},{s!r},{j},{x!r},{y!r}\n")
