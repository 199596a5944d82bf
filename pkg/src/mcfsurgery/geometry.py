"""Discrete curvature and touching-ball radii on triangle meshes.

Curvatures come from a least-squares quadric fit over the 2-ring of each
vertex. Mean curvature is the *sum* H = lambda1 + lambda2, so a round
cylinder of radius 1 has H = 1 and a unit sphere has H = 2.

Inscribed and outer radii are computed by the pair-scan formula

    mu(p) = max(lambda2(p), max_q 2 <p - q, nu(p)> / |p - q|^2)

over mesh *vertices* only. The error is O(h) in the edge length.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numba
import numpy as np

from .mesh import MeshError, SurfaceMesh

RHO_OUT_CAP_FACTOR = 10.0


@dataclass
class CurvatureField:
    normal: np.ndarray
    lambda1: np.ndarray
    lambda2: np.ndarray
    dir1: np.ndarray
    dir2: np.ndarray
    grad_A: np.ndarray
    hess_A: np.ndarray
    flagged: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    @property
    def H(self) -> np.ndarray:
        return self.lambda1 + self.lambda2

    def subset(self, idx) -> "CurvatureField":
        idx = np.asarray(idx)
        return CurvatureField(self.normal[idx], self.lambda1[idx], self.lambda2[idx],
                              self.dir1[idx], self.dir2[idx], self.grad_A[idx],
                              self.hess_A[idx])


@dataclass
class RadiusField:
    mu: np.ndarray
    rho_out: np.ndarray


def _tangent_frames(normals):
    n = normals
    helper = np.where(np.abs(n[:, [0]]) < 0.9, np.array([[1.0, 0, 0]]), np.array([[0, 1.0, 0]]))
    e1 = np.cross(n, helper)
    e1 /= np.linalg.norm(e1, axis=1, keepdims=True)
    e2 = np.cross(n, e1)
    return e1, e2


def _pairs(ring):
    ring = ring.tocoo()
    return ring.row.astype(np.int64), ring.col.astype(np.int64)


def _accumulate(rows, design, rhs, n):
    """Per-vertex normal equations sum_e a_e a_e^T and sum_e a_e b_e, grouped by `rows`."""
    k = design.shape[1]
    ata = np.empty((n, k, k))
    for i in range(k):
        for j in range(i, k):
            ata[:, i, j] = ata[:, j, i] = np.bincount(rows, design[:, i] * design[:, j], n)
    rhs2 = rhs.reshape(len(rhs), -1)
    atb = np.empty((n, k, rhs2.shape[1]))
    for i in range(k):
        for j in range(rhs2.shape[1]):
            atb[:, i, j] = np.bincount(rows, design[:, i] * rhs2[:, j], n)
    return ata, atb.reshape((n, k) + rhs.shape[1:])


def _quadric_pass(verts, normals, rows, cols, n):
    e1, e2 = _tangent_frames(normals)
    d = verts[cols] - verts[rows]
    x = np.einsum("ij,ij->i", d, e1[rows])
    y = np.einsum("ij,ij->i", d, e2[rows])
    z = np.einsum("ij,ij->i", d, normals[rows])
    # per-vertex length scale for conditioning
    h2 = np.bincount(rows, x * x + y * y, n)
    cnt = np.bincount(rows, None, n).astype(float)
    h = np.sqrt(h2 / np.maximum(cnt, 1.0))
    h[h == 0] = 1.0
    xs, ys, zs = x / h[rows], y / h[rows], z / h[rows]
    design = np.column_stack([xs * xs, xs * ys, ys * ys, xs, ys])
    ata, atb = _accumulate(rows, design, zs, n)
    # rank test on the scaled normal matrix
    ok = cnt >= 5
    cond = np.full(n, np.inf)
    if ok.any():
        ev = np.linalg.eigvalsh(ata[ok])
        cond[ok] = ev[:, -1] / np.maximum(ev[:, 0], 1e-300)
    ok &= cond < 1e10
    coef = np.zeros((n, 5))
    if ok.any():
        coef[ok] = np.linalg.solve(ata[ok], atb[ok][..., None])[..., 0]
    a, b, c, dx, dy = coef.T
    # undo scaling: z = h * f(x/h, y/h)
    fxx, fxy, fyy = 2 * a / h, b / h, 2 * c / h
    fx, fy = dx, dy
    return e1, e2, fx, fy, fxx, fxy, fyy, ok


def compute_curvature(mesh: SurfaceMesh, passes: int = 2) -> CurvatureField:
    """Principal curvatures, normals and derivative heuristics per vertex.

    Vertices whose 2-ring fit is rank deficient are reported in `flagged`
    and carry NaN curvature instead of raising.
    """
    verts = mesh.vertices
    n = mesh.n_vertices
    rows, cols = _pairs(mesh.ring(2))
    normals = mesh.vertex_normals().copy()
    for _ in range(passes):
        e1, e2, fx, fy, fxx, fxy, fyy, ok = _quadric_pass(verts, normals, rows, cols, n)
        w = np.sqrt(1 + fx**2 + fy**2)
        new = (-fx[:, None] * e1 - fy[:, None] * e2 + normals) / w[:, None]
        normals = np.where(ok[:, None], new, normals)
        normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    # final pass in the refined frame: fx, fy ~ 0 so the graph form is nearly exact
    e1, e2, fx, fy, fxx, fxy, fyy, ok = _quadric_pass(verts, normals, rows, cols, n)
    w = np.sqrt(1 + fx**2 + fy**2)
    g11, g12, g22 = 1 + fx**2, fx * fy, 1 + fy**2
    # outward normal: sphere bends away, so the shape operator is minus the graph hessian
    h11, h12, h22 = -fxx / w, -fxy / w, -fyy / w
    det_g = g11 * g22 - g12**2
    s11 = (g22 * h11 - g12 * h12) / det_g
    s12 = (g22 * h12 - g12 * h22) / det_g
    s21 = (g11 * h12 - g12 * h11) / det_g
    s22 = (g11 * h22 - g12 * h12) / det_g
    tr = s11 + s22
    det = s11 * s22 - s12 * s21
    disc = np.sqrt(np.clip(tr**2 / 4 - det, 0.0, None))
    lam1 = tr / 2 - disc
    lam2 = tr / 2 + disc
    # eigenvector of S for lam1 in (x, y) graph coordinates
    v1 = np.column_stack([s12, lam1 - s11])
    alt = np.column_stack([lam1 - s22, s21])
    use_alt = np.linalg.norm(v1, axis=1) < np.linalg.norm(alt, axis=1)
    v1[use_alt] = alt[use_alt]
    degenerate = np.linalg.norm(v1, axis=1) < 1e-12
    v1[degenerate] = np.array([1.0, 0.0])
    d1 = (v1[:, [0]] * (e1 + fx[:, None] * normals) + v1[:, [1]] * (e2 + fy[:, None] * normals))
    d1 -= np.einsum("ij,ij->i", d1, normals)[:, None] * normals
    d1 /= np.linalg.norm(d1, axis=1, keepdims=True)
    d2 = np.cross(normals, d1)
    lam1 = np.where(ok, lam1, np.nan)
    lam2 = np.where(ok, lam2, np.nan)
    field_ = CurvatureField(normals, lam1, lam2, d1, d2,
                            np.zeros(n), np.zeros(n), np.flatnonzero(~ok))
    field_.grad_A, field_.hess_A = _derivative_estimates(mesh, field_)
    return field_


def _tangent_gradient(verts, normals, rows, cols, values, n):
    """LS gradient of per-vertex tensors over the 1-ring, in the tangent plane."""
    e1, e2 = _tangent_frames(normals)
    d = verts[cols] - verts[rows]
    x = np.einsum("ij,ij->i", d, e1[rows])
    y = np.einsum("ij,ij->i", d, e2[rows])
    design = np.column_stack([x, y])
    dv = values[cols] - values[rows]
    ata, atb = _accumulate(rows, design, dv.reshape(len(dv), -1), n)
    ata += 1e-300 * np.eye(2)
    okm = np.abs(np.linalg.det(ata)) > 0
    grad = np.zeros(atb.shape)
    grad[okm] = np.linalg.solve(ata[okm], atb[okm])
    return grad


def _derivative_estimates(mesh, fld):
    """|grad A| and |grad^2 A| by LS differences of the tangent-projected shape operator.

    Heuristic diagnostics only: the shape operator at each neighbour is
    projected onto the tangent plane of the centre vertex before differencing.
    """
    verts = mesh.vertices
    n = mesh.n_vertices
    rows, cols = _pairs(mesh.ring(1))
    l1 = np.nan_to_num(fld.lambda1)
    l2 = np.nan_to_num(fld.lambda2)
    S = (l1[:, None, None] * fld.dir1[:, :, None] * fld.dir1[:, None, :]
         + l2[:, None, None] * fld.dir2[:, :, None] * fld.dir2[:, None, :])
    nrm = fld.normal
    P = np.eye(3)[None] - nrm[:, :, None] * nrm[:, None, :]
    # project neighbour tensors into the centre's tangent plane
    Sq = np.einsum("eij,ejk,ekl->eil", P[rows], S[cols], P[rows])
    Sp = S[rows]
    design_e1, design_e2 = _tangent_frames(nrm)
    d = verts[cols] - verts[rows]
    x = np.einsum("ij,ij->i", d, design_e1[rows])
    y = np.einsum("ij,ij->i", d, design_e2[rows])
    design = np.column_stack([x, y])
    dv = (Sq - Sp).reshape(len(rows), 9)
    ata, atb = _accumulate(rows, design, dv, n)
    good = np.abs(np.linalg.det(ata)) > 0
    g = np.zeros((n, 2, 9))
    g[good] = np.linalg.solve(ata[good], atb[good])
    grad_norm = np.sqrt((g**2).sum(axis=(1, 2)))
    gg = _tangent_gradient(verts, nrm, rows, cols, g.reshape(n, 18), n)
    hess_norm = np.sqrt((gg**2).sum(axis=(1, 2)))
    return grad_norm, hess_norm


# -- touching balls ---------------------------------------------------------

@numba.njit(cache=True)
def _pair_scan_full(points, normals, query, sign):
    out = np.full(len(query), -np.inf)
    n = len(points)
    for a in range(len(query)):
        p = query[a]
        px, py, pz = points[p, 0], points[p, 1], points[p, 2]
        nx, ny, nz = sign * normals[p, 0], sign * normals[p, 1], sign * normals[p, 2]
        best = -np.inf
        for q in range(n):
            if q == p:
                continue
            dx = px - points[q, 0]
            dy = py - points[q, 1]
            dz = pz - points[q, 2]
            d2 = dx * dx + dy * dy + dz * dz
            if d2 == 0.0:
                continue
            val = 2.0 * (dx * nx + dy * ny + dz * nz) / d2
            if val > best:
                best = val
        out[a] = best
    return out


@numba.njit(cache=True)
def _pair_scan_grid(points, normals, query, radius, sign, lo, cell, dims, order, starts):
    out = np.full(len(query), -np.inf)
    nx_, ny_, nz_ = dims[0], dims[1], dims[2]
    for a in range(len(query)):
        p = query[a]
        px, py, pz = points[p, 0], points[p, 1], points[p, 2]
        nx, ny, nz = sign * normals[p, 0], sign * normals[p, 1], sign * normals[p, 2]
        rad = radius[a]
        r2 = rad * rad
        i0 = max(int((px - rad - lo[0]) / cell), 0)
        i1 = min(int((px + rad - lo[0]) / cell), nx_ - 1)
        j0 = max(int((py - rad - lo[1]) / cell), 0)
        j1 = min(int((py + rad - lo[1]) / cell), ny_ - 1)
        k0 = max(int((pz - rad - lo[2]) / cell), 0)
        k1 = min(int((pz + rad - lo[2]) / cell), nz_ - 1)
        best = -np.inf
        for i in range(i0, i1 + 1):
            for j in range(j0, j1 + 1):
                base = (i * ny_ + j) * nz_
                for t in range(starts[base + k0], starts[base + k1 + 1]):
                    q = order[t]
                    if q == p:
                        continue
                    dx = px - points[q, 0]
                    dy = py - points[q, 1]
                    dz = pz - points[q, 2]
                    d2 = dx * dx + dy * dy + dz * dz
                    if d2 == 0.0 or d2 > r2:
                        continue
                    val = 2.0 * (dx * nx + dy * ny + dz * nz) / d2
                    if val > best:
                        best = val
        out[a] = best
    return out


def _grid(points, cell):
    lo = points.min(axis=0)
    dims = np.maximum(np.floor((points.max(axis=0) - lo) / cell).astype(np.int64) + 1, 1)
    ijk = np.minimum(((points - lo) / cell).astype(np.int64), dims - 1)
    lin = (ijk[:, 0] * dims[1] + ijk[:, 1]) * dims[2] + ijk[:, 2]
    order = np.argsort(lin, kind="stable")
    starts = np.searchsorted(lin[order], np.arange(int(np.prod(dims)) + 1))
    return lo, dims, order.astype(np.int64), starts.astype(np.int64)


def pair_scan(points, normals, query=None, sign=1.0, lower_bound=None):
    """max_q 2<p-q, sign*nu(p)>/|p-q|^2 over all other points q, for each query p.

    With a positive `lower_bound` per query the scan is restricted, exactly,
    to q within distance 2/lower_bound (found with a uniform cell grid):
    farther points cannot beat the bound. The returned value is then
    max(bound, scan) rather than the raw scan.
    """
    points = np.ascontiguousarray(points, float)
    normals = np.ascontiguousarray(normals, float)
    n = len(points)
    if query is None:
        query = np.arange(n)
    query = np.asarray(query, dtype=np.int64)
    if lower_bound is None or len(query) * n < 5e6:
        res = _pair_scan_full(points, normals, query, float(sign))
        if lower_bound is not None:
            res = np.maximum(res, lower_bound)
        return res
    lower_bound = np.asarray(lower_bound, float)
    res = np.empty(len(query))
    pos = lower_bound > 0
    if (~pos).any():
        res[~pos] = _pair_scan_full(points, normals, query[~pos], float(sign))
    if pos.any():
        radius = 2.0 / lower_bound[pos] * (1 + 1e-12)
        extent = float(np.max(points.max(axis=0) - points.min(axis=0)))
        # cells about half the typical search radius, at most ~128 per axis
        cell = max(0.5 * float(np.median(radius)), extent / 128.0)
        lo, dims, order, starts = _grid(points, cell)
        res[pos] = _pair_scan_grid(points, normals, query[pos], radius, float(sign),
                                   lo, cell, dims, order, starts)
    return np.maximum(res, lower_bound)


def _require_closed(mesh):
    if not mesh.closed:
        raise MeshError("touching-ball radii need a closed mesh (inscribed ball undefined)")


def inscribed_mu(mesh: SurfaceMesh, fld: CurvatureField, vertices=None) -> np.ndarray:
    """Reciprocal inscribed radius mu at the given vertices (all by default)."""
    _require_closed(mesh)
    q = np.arange(mesh.n_vertices) if vertices is None else np.atleast_1d(vertices)
    lam2 = np.nan_to_num(fld.lambda2[q], nan=0.0)
    return pair_scan(mesh.vertices, fld.normal, q, 1.0, lower_bound=lam2)


def inscribed_radius(mesh, fld, p):
    """Inscribed radius at one vertex (1/mu)."""
    return 1.0 / float(inscribed_mu(mesh, fld, [p])[0])


def outer_mu(mesh: SurfaceMesh, fld: CurvatureField, vertices=None) -> np.ndarray:
    """Reciprocal outer radius; at least the reciprocal of the domain cap."""
    _require_closed(mesh)
    q = np.arange(mesh.n_vertices) if vertices is None else np.atleast_1d(vertices)
    cap = RHO_OUT_CAP_FACTOR * mesh.bbox_diameter()
    lam1 = np.nan_to_num(fld.lambda1[q], nan=0.0)
    bound = np.maximum(-lam1, 1.0 / cap)
    return pair_scan(mesh.vertices, fld.normal, q, -1.0, lower_bound=bound)


def outer_radius(mesh, fld, p) -> float:
    return 1.0 / float(outer_mu(mesh, fld, [p])[0])


def radius_field(mesh, fld) -> RadiusField:
    return RadiusField(inscribed_mu(mesh, fld), 1.0 / outer_mu(mesh, fld))


def noncollapsing_report(mesh: SurfaceMesh, fld: CurvatureField | None = None,
                         vertices=None, radii: RadiusField | None = None) -> dict:
    """alpha_in = min H/mu and alpha_out = min H*rho_out with their argmin vertices."""
    if fld is None:
        fld = compute_curvature(mesh)
    q = np.arange(mesh.n_vertices) if vertices is None else np.asarray(vertices)
    H = fld.H[q]
    valid = np.isfinite(H)
    bad = q[valid & (H <= 0)]
    if len(bad):
        raise ValueError(f"surface is not mean convex at {len(bad)} vertices, "
                         f"e.g. {bad[:10].tolist()}")
    q = q[valid]
    H = H[valid]
    if radii is None:
        mu = inscribed_mu(mesh, fld, q)
        rho = 1.0 / outer_mu(mesh, fld, q)
    else:
        mu, rho = radii.mu[q], radii.rho_out[q]
    a_in = H / mu
    a_out = H * rho
    i, o = int(np.argmin(a_in)), int(np.argmin(a_out))
    return {"alpha_in": float(a_in[i]), "argmin_in": int(q[i]),
            "alpha_out": float(a_out[o]), "argmin_out": int(q[o]),
            "n_checked": int(len(q))}


def write_field_csv(path, fld: CurvatureField, radii: RadiusField):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["vertex", "H", "lambda1", "lambda2", "mu", "rho_out"])
        for i in range(len(fld.H)):
            w.writerow([i, repr(float(fld.H[i])), repr(float(fld.lambda1[i])),
                        repr(float(fld.lambda2[i])), repr(float(radii.mu[i])),
                        repr(float(radii.rho_out[i]))])
