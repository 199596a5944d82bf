"""The explicit axially symmetric cap

    Sigma = {(sqrt(s/(1+s)) cos 2 pi t, sqrt(s/(1+s)) sin 2 pi t, s) : s >= 0}

with closed-form principal curvatures and inscribed radius, plus a mesh
generator used as ground truth for the discrete kernels.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geometry import compute_curvature, inscribed_mu
from .mesh import SurfaceMesh
from .shapes import resample_curve, revolve


def cap_radius(s):
    s = np.asarray(s, float)
    return np.sqrt(s / (1.0 + s))


def model_point(s, t):
    """Point of the cap at axial parameter s >= 0 and angle fraction t."""
    s = np.asarray(s, float)
    if np.any(s < 0):
        raise ValueError("s must be nonnegative")
    r = cap_radius(s)
    ang = 2 * np.pi * np.asarray(t, float)
    return np.stack(np.broadcast_arrays(r * np.cos(ang), r * np.sin(ang), s), axis=-1)


def model_curvatures(s):
    """(lambda1, lambda2, mu) of the cap at parameter s."""
    s = np.asarray(s, float)
    q = 1.0 + 4.0 * s * (1.0 + s) ** 3
    lam1 = 2.0 * q**-1.5 * (1.0 + s) ** 2 * (1.0 + 4.0 * s)
    lam2 = 2.0 * q**-0.5 * (1.0 + s) ** 2
    r_in = 0.5 * q**0.5 * (1.0 + s) ** -2
    return lam1, lam2, 1.0 / r_in


def model_inscribed_radius(s):
    s = np.asarray(s, float)
    return 0.5 * np.sqrt(1.0 + 4.0 * s * (s + 1.0) ** 3) / (1.0 + s) ** 2


def ball_center(s):
    """Centre (0, 0, s + 1/(2(s+1)^2)) of the touching ball W_s."""
    s = np.asarray(s, float)
    z = s + 0.5 / (s + 1.0) ** 2
    return np.stack(np.broadcast_arrays(0.0 * z, 0.0 * z, z), axis=-1)


@dataclass
class ModelCap:
    """Cap on s in [0, S], closed into a capsule by its mirror image about s = S.

    The mirror has a tangent kink of angle ~2 r'(S) (about 2e-3 for S = 20),
    far from the comparison band.
    """
    S: float = 20.0
    n_theta: int = 128

    def profile(self):
        """Generating curve (z, r) and the cap parameter s of each node."""
        s_fine = np.concatenate([np.linspace(0.0, 1.0, 4000) ** 2 * 2.0,
                                 np.linspace(2.0, self.S, 4000)[1:]])
        pts = np.column_stack([s_fine, cap_radius(s_fine)])
        # node spacing ~ ring spacing 2 pi r / n so triangles stay isotropic
        arc = 2 * np.pi / self.n_theta
        total = np.sum(np.linalg.norm(np.diff(pts, axis=0), axis=1))
        n = int(np.ceil(total / arc / 0.25)) + 1
        w = lambda p: 1.0 / np.maximum(p[:, 1], 0.25)
        weighted = np.sum(w(pts[1:]) * np.linalg.norm(np.diff(pts, axis=0), axis=1))
        n = int(np.ceil(weighted / arc)) + 1
        half = resample_curve(pts, n, density=w)
        half[0] = (0.0, 0.0)
        half[-1] = (self.S, cap_radius(self.S))
        s_half = half[:, 0]
        z = np.concatenate([s_half, 2 * self.S - s_half[::-1][1:]])
        r = np.concatenate([half[:, 1], half[::-1, 1][1:]])
        s = np.concatenate([s_half, s_half[::-1][1:]])
        return z, r, s

    def mesh(self):
        """Closed capsule mesh and the parameter s at every vertex."""
        z, r, s = self.profile()
        m = revolve(z, r, self.n_theta)
        # revolve orders rings (interior nodes) then the two apexes
        s_v = np.concatenate([np.repeat(s[1:-1], self.n_theta), [0.0, 0.0]])
        return m, s_v


def validate_model(resolutions=(64, 128), band=(0.1, 10.0), S: float = 20.0) -> dict:
    """Compare discrete curvature and pair-scan mu with the closed forms.

    lambda2 and mu errors are plain relative errors. lambda1 decays like
    s^-3.5 (about 8e-4 at s = 10), so its error is measured relative to the
    local curvature scale |A| = sqrt(l1^2 + l2^2) instead. The tip
    neighbourhood s < band[0] is reported separately.
    """
    if len(resolutions) < 2:
        raise ValueError("need at least two resolutions")
    levels = []
    for n_theta in resolutions:
        mesh, s_v = ModelCap(S, n_theta).mesh()
        fld = compute_curvature(mesh)
        l1, l2, mu = model_curvatures(s_v)
        scale = np.hypot(l1, l2)
        sel = (s_v >= band[0]) & (s_v <= band[1])
        tip = (s_v > 0) & (s_v < band[0])
        q = np.flatnonzero(sel | tip)
        mu_d = np.full(mesh.n_vertices, np.nan)
        mu_d[q] = inscribed_mu(mesh, fld, q)

        def err(d, ref, m, den):
            return float(np.nanmax(np.abs(d[m] - ref[m]) / den[m]))

        levels.append({
            "n_theta": n_theta,
            "n_vertices": mesh.n_vertices,
            "err_lambda1": err(fld.lambda1, l1, sel, scale),
            "err_lambda2": err(fld.lambda2, l2, sel, l2),
            "err_mu": err(mu_d, mu, sel, mu),
            "tip_err_lambda2": err(fld.lambda2, l2, tip, l2),
            "tip_err_mu": err(mu_d, mu, tip, mu),
        })
    keys = ("err_lambda1", "err_lambda2", "err_mu")
    worst = [max(lv[k] for k in keys) for lv in levels]
    h = [1.0 / lv["n_theta"] for lv in levels]
    orders = [float(np.log(worst[i] / worst[i + 1]) / np.log(h[i] / h[i + 1]))
              for i in range(len(levels) - 1)]
    monotone = all(worst[i + 1] < worst[i] for i in range(len(worst) - 1))
    return {"band": list(band), "levels": levels, "worst": worst,
            "observed_order": orders, "monotone": monotone,
            "pass": monotone and worst[-1] <= 0.02}


def ball_containment(s_samples, mesh: SurfaceMesh | None = None, tol: float = 1e-6) -> dict:
    """Check that each touching ball W_s has no mesh vertex strictly inside it."""
    if mesh is None:
        mesh, _ = ModelCap().mesh()
    s_samples = np.atleast_1d(np.asarray(s_samples, float))
    c = ball_center(s_samples)
    rad = model_inscribed_radius(s_samples)
    worst = np.empty(len(s_samples))
    for i in range(len(s_samples)):
        d = np.linalg.norm(mesh.vertices - c[i], axis=1)
        worst[i] = np.min(d - rad[i])
    return {"min_clearance": float(worst.min()), "pass": bool(np.all(worst >= -tol)),
            "clearance": worst}


def write_model_csv(path, s):
    s = np.asarray(s, float)
    l1, l2, mu = model_curvatures(s)
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["s", "lambda1", "lambda2", "mu"])
        for row in zip(s, l1, l2, mu):
            w.writerow([repr(float(x)) for x in row])
