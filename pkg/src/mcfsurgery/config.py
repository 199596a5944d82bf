"""Run configuration (TOML) and shape generation."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import tomli
import tomli_w

from . import axisym, shapes
from .capmodel import ModelCap
from .flow import FlowSettings
from .mesh import SurfaceMesh, read_obj
from .surgery import SurgeryParams


class ConfigError(ValueError):
    pass


SHAPE_PARAMS = {
    "sphere": {"radius": 1.0},
    "cylinder": {"radius": 1.0, "length": 8.0, "periodic": True},
    "ellipsoid": {"a": 2.0, "b": 1.0, "c": 1.0},
    "dumbbell": {"bulb": 1.0, "waist": 0.3, "separation": 3.0, "dip": 0.1},
    "torus": {"R": 2.0, "r": 0.5},
    "model-cap": {"S": 20.0},
    "obj": {"path": ""},
}


@dataclass
class ShapeSpec:
    kind: str = "sphere"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in SHAPE_PARAMS:
            raise ConfigError(f"unknown shape {self.kind!r}; choose from {sorted(SHAPE_PARAMS)}")
        unknown = set(self.params) - set(SHAPE_PARAMS[self.kind])
        if unknown:
            raise ConfigError(f"unknown {self.kind} parameters {sorted(unknown)}")
        self.params = {**SHAPE_PARAMS[self.kind], **self.params}
        for k, v in self.params.items():
            if isinstance(v, (int, float)) and not isinstance(v, bool) and k != "dip" and v <= 0:
                raise ConfigError(f"{self.kind}.{k} must be positive")
        p = self.params
        if self.kind == "dumbbell" and not p["waist"] < p["bulb"]:
            raise ConfigError("dumbbell waist must be smaller than the bulb")
        if self.kind == "torus" and not p["r"] < p["R"]:
            raise ConfigError("torus needs r < R")
        if self.kind == "obj" and not p["path"]:
            raise ConfigError("obj shape needs a path")


def generate_shape(spec: ShapeSpec, resolution: int = 4, profile: bool = False):
    """SurfaceMesh, or AxiProfile with `resolution` nodes when profile=True.

    For meshes `resolution` is the icosphere subdivision level for spheres and
    ellipsoids and the number of angular samples / 16 for surfaces of revolution.
    """
    p = spec.params
    k = spec.kind
    if profile:
        n = max(int(resolution), 16)
        if k == "sphere":
            return axisym.sphere(p["radius"], n)
        if k == "cylinder":
            if not p["periodic"]:
                return axisym.from_profile(*shapes.capsule_profile(p["radius"], p["length"], n))
            return axisym.cylinder(p["radius"], p["length"], n)
        if k == "dumbbell":
            z, r = shapes.dumbbell_profile(p["bulb"], p["waist"], p["separation"], n=n, dip=p["dip"])
            return axisym.from_profile(z, r)
        if k == "torus":
            return axisym.torus(p["R"], p["r"], n)
        raise ConfigError(f"shape {k!r} has no axisymmetric profile")
    n_theta = 16 * max(int(resolution), 1)
    if k == "sphere":
        return shapes.icosphere(int(resolution), p["radius"])
    if k == "ellipsoid":
        return shapes.ellipsoid(p["a"], p["b"], p["c"], int(resolution))
    if k == "cylinder":
        if p["periodic"]:
            return shapes.cylinder_tube(p["radius"], p["length"], n_theta)
        return shapes.capsule(p["radius"], p["length"], n_theta)
    if k == "dumbbell":
        return shapes.dumbbell(p["bulb"], p["waist"], p["separation"], n_theta=n_theta, dip=p["dip"])
    if k == "torus":
        return shapes.torus(p["R"], p["r"], n_major=3 * n_theta // 2, n_minor=n_theta // 2)
    if k == "model-cap":
        return ModelCap(p["S"], n_theta).mesh()[0]
    return read_obj(p["path"])


@dataclass
class ThresholdInputs:
    alpha: float = 0.5
    C_sharp: float = 1.0
    gamma0: float = 2.0
    H1: float = 1.0
    H2: float | None = None
    H3: float | None = None
    theta0: float | None = None

    def overrides(self) -> dict:
        return {k: getattr(self, k) for k in ("H2", "H3", "theta0") if getattr(self, k) is not None}


@dataclass
class SolverSettings:
    grid: int = 512
    cfl: float = axisym.CFL
    dt: float | None = None
    redistribute_every: int = axisym.REDISTRIBUTE_EVERY
    resolve: float = 0.15
    max_steps: int = 2_000_000
    record_every: int = 200
    removal_tol: float = 1e-3
    warmup: float | None = None


@dataclass
class MonitorSettings:
    delta: float = 0.1
    sigma: float = 0.1
    C1: float = 0.0
    p: float = 10.0
    eta0: float = 0.1
    eta1: float = 0.25
    K0: float = 0.0
    neck_eps: float = 0.25
    neck_L: float = 1.0


@dataclass
class OutputSettings:
    directory: str = "run"


SECTIONS = {"thresholds": ThresholdInputs, "surgery": SurgeryParams, "solver": SolverSettings,
            "monitor": MonitorSettings, "output": OutputSettings}


@dataclass
class RunConfig:
    geometry: ShapeSpec = field(default_factory=ShapeSpec)
    thresholds: ThresholdInputs = field(default_factory=ThresholdInputs)
    surgery: SurgeryParams = field(default_factory=SurgeryParams)
    solver: SolverSettings = field(default_factory=SolverSettings)
    monitor: MonitorSettings = field(default_factory=MonitorSettings)
    output: OutputSettings = field(default_factory=OutputSettings)
    seed: int = 0

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d)
        unknown = set(d) - {"geometry", "seed", *SECTIONS}
        if unknown:
            raise ConfigError(f"unknown config sections {sorted(unknown)}")
        kw = {}
        geo = dict(d.get("geometry", {}))
        kind = geo.pop("shape", "sphere")
        kw["geometry"] = ShapeSpec(kind, geo)
        for name, typ in SECTIONS.items():
            sec = d.get(name, {})
            if not isinstance(sec, dict):
                raise ConfigError(f"[{name}] must be a table")
            names = {f.name for f in fields(typ)}
            bad = set(sec) - names
            if bad:
                raise ConfigError(f"unknown keys in [{name}]: {sorted(bad)}")
            try:
                kw[name] = typ(**sec)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"[{name}]: {exc}") from exc
        if "seed" in d:
            kw["seed"] = int(d["seed"])
        return cls(**kw)

    def to_dict(self) -> dict:
        out = {"seed": self.seed, "geometry": {"shape": self.geometry.kind, **self.geometry.params}}
        for name in SECTIONS:
            sec = asdict(getattr(self, name))
            out[name] = {k: v for k, v in sec.items() if v is not None}
        return out

    def flow_settings(self) -> FlowSettings:
        s, m = self.solver, self.monitor
        return FlowSettings(cfl=s.cfl, redistribute_every=s.redistribute_every, resolve=s.resolve,
                            max_steps=s.max_steps, warmup=s.warmup, eta0=m.eta0, eta1=m.eta1,
                            K0=m.K0, neck_eps=m.neck_eps, neck_L=m.neck_L,
                            removal_tol=s.removal_tol, record_every=s.record_every,
                            delta=m.delta, sigma=m.sigma, C1=m.C1, p=m.p)


def load_config(path) -> RunConfig:
    try:
        data = tomli.loads(Path(path).read_text())
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return RunConfig.from_dict(data)


def dump_config(cfg: RunConfig) -> str:
    return tomli_w.dumps(cfg.to_dict())


def save_config(cfg: RunConfig, path):
    Path(path).write_text(dump_config(cfg))


def is_mesh(x) -> bool:
    return isinstance(x, SurfaceMesh)


def mean_convex(mesh: SurfaceMesh) -> bool:
    from .geometry import compute_curvature
    H = compute_curvature(mesh).H
    return bool(np.all(H[np.isfinite(H)] > 0))
