"""Command line: analyze | csf | cap-model | neck | surgery | flow | density | report."""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

EXIT_OK, EXIT_REFUSED, EXIT_NUMERICAL = 0, 2, 3


class Refusal(Exception):
    pass


class NumericalFailure(Exception):
    def __init__(self, message, snapshot=None):
        super().__init__(message)
        self.snapshot = snapshot


def _emit(obj):
    print(json.dumps(obj, indent=2, default=float))


def _vec(text, n=3):
    try:
        v = [float(x) for x in text.split(",")]
    except ValueError:
        raise Refusal(f"cannot parse vector {text!r}")
    if len(v) != n:
        raise Refusal(f"expected {n} comma-separated numbers, got {text!r}")
    return np.array(v)


def _shape(args):
    from .config import ShapeSpec
    params = {}
    for item in args.param or []:
        if "=" not in item:
            raise Refusal(f"--param expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        try:
            params[k] = float(v)
        except ValueError:
            params[k] = {"true": True, "false": False}.get(v.lower(), v)
    if args.radius is not None:
        params["radius"] = args.radius
    if args.obj:
        return ShapeSpec("obj", {"path": args.obj})
    return ShapeSpec(args.shape, params)


def _add_shape(p, default="sphere"):
    p.add_argument("--shape", default=default)
    p.add_argument("--radius", type=float)
    p.add_argument("--param", action="append", help="shape parameter key=value (repeatable)")
    p.add_argument("--obj", help="read the surface from an OBJ file")
    p.add_argument("--resolution", type=int, default=4)


# -- subcommands ---------------------------------------------------------------------------------

def cmd_analyze(args):
    from .config import generate_shape
    from .geometry import compute_curvature, noncollapsing_report, radius_field, write_field_csv
    mesh = generate_shape(_shape(args), args.resolution)
    fld = compute_curvature(mesh)
    radii = radius_field(mesh, fld)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_field_csv(out, fld, radii)
    rep = noncollapsing_report(mesh, fld, radii=radii)
    _emit({"csv": str(out), "n_vertices": mesh.n_vertices, **rep})


def cmd_csf(args):
    from . import curves
    if args.curve == "circle":
        c = curves.circle(args.n, args.a)
    elif args.curve == "ellipse":
        c = curves.ellipse(args.a, args.b, args.n)
    else:
        c = curves.read_curve_csv(args.curve)
    run = curves.csf_evolve(c, args.T, save_every=args.save_every)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    curves.write_csf_csv(out, run)
    _emit({"csv": str(out), "status": run.status, "t_end": run.times[-1], "states": len(run.states)})


def cmd_cap_model(args):
    from .capmodel import validate_model
    res = tuple(int(x) for x in args.resolutions.split(","))
    rep = validate_model(res, (args.smin, args.smax), args.S)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps({"schema": 1, **rep}, indent=2, default=float))
    _emit({"report": str(out), "pass": rep["pass"], "worst": rep["worst"]})
    if not rep["pass"]:
        raise NumericalFailure("cap model validation failed", str(out))


def _neck_certificates(mesh, args):
    from .geometry import compute_curvature
    from .neck import NeckError, check_neck, fit_axis_and_sections, scan_for_necks
    fld = compute_curvature(mesh)
    if args.seed_point:
        x = _vec(args.seed_point)
        seeds = [int(np.argmin(np.linalg.norm(mesh.vertices - x, axis=1)))]
    else:
        clusters = scan_for_necks(mesh, fld, args.H1, args.Theta, args.eta0)
        seeds = [int(c["seed"]) for c in clusters]
    out = []
    for s in seeds:
        H = fld.H[s]
        r_guess = 1.0 / H if np.isfinite(H) and H > 0 else 1.0
        try:
            region = fit_axis_and_sections(mesh, s, args.L, r_guess, fld=fld, n_t=args.n_t)
            cert = check_neck(region, args.alpha_hat, args.delta_hat, args.eps, L=args.L_check)
        except NeckError as exc:
            if args.seed_point:
                raise
            print(json.dumps({"skipped_seed": s, "reason": str(exc)}), file=sys.stderr)
            continue
        out.append((s, region, cert))
    # certified necks first
    out.sort(key=lambda x: not x[2].passed)
    return out


def cmd_neck(args):
    from .config import generate_shape
    mesh = generate_shape(_shape(args), args.resolution)
    found = _neck_certificates(mesh, args)
    payload = {"schema": 1, "certificates": [{"seed": s, **c.to_dict()} for s, _, c in found]}
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(payload, indent=2, default=float))
    _emit({"certificates": str(out), "found": len(found),
           "passed": [c.passed for _, _, c in found]})


def cmd_surgery(args):
    from .config import generate_shape
    from .mesh import write_obj
    from .surgery import (SurgeryError, SurgeryParams, build_cap, verify_surgery, write_labels_csv,
                          perform_surgery)
    mesh = generate_shape(_shape(args), args.resolution)
    found = _neck_certificates(mesh, args)
    if not found:
        raise Refusal("no neck found")
    seed, region, cert = found[0]
    params = SurgeryParams(Lam=args.Lambda, gap=args.gap, alpha_hat=args.alpha_hat,
                           delta_hat=args.delta_hat, eps=args.eps)
    try:
        res = perform_surgery(mesh, region, cert, params, H1=args.H1 if args.check_scale else None)
    except SurgeryError as exc:
        raise Refusal(str(exc))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_obj(res.mesh, out / "capped.obj", comment="neck replaced by two caps")
    write_labels_csv(out / "labels.csv", res.labels)
    fine = region.section_family(2 * region.n_t)
    D = params.gap / 2 + params.s_tip
    capL2 = build_cap(fine.shifted(-D), params, s_start=-0.5)
    report = verify_surgery([res.caps[0], capL2], params)
    report["event"] = res.event
    report["certificate"] = cert.to_dict()
    (out / "verification.json").write_text(json.dumps(report, indent=2, default=float))
    _emit({"obj": str(out / "capped.obj"), "components": res.event["components"],
           "verification_pass": report["pass"], "failed": report["failed"],
           "parameter_violations": report["parameter_violations"]})


def _write_history(path, snaps):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["snapshot", "t", "component", "z", "r"])
        for k, (t, comps) in enumerate(snaps):
            for cid, z, r in comps:
                for zi, ri in zip(z, r):
                    w.writerow([k, repr(t), cid, repr(float(zi)), repr(float(ri))])


def _read_history(path):
    from .monitor import History
    rows = {}
    with Path(path).open() as fh:
        for row in csv.DictReader(fh):
            key = int(row["snapshot"])
            t = float(row["t"])
            rows.setdefault(key, (t, {}))[1].setdefault(int(row["component"]), []).append(
                (float(row["z"]), float(row["r"])))
    hist = History()
    for t, comps in rows.values():
        hist.add(t, [np.array(v).T for v in comps.values()])
    return hist


def cmd_flow(args):
    from .config import ConfigError, generate_shape, load_config, save_config
    from .flow import FlowAbort, derive_parameters, run_with_surgery, write_events
    try:
        cfg = load_config(args.config)
    except (ConfigError, FileNotFoundError) as exc:
        raise Refusal(str(exc))
    out = Path(args.out or cfg.output.directory)
    out.mkdir(parents=True, exist_ok=True)
    save_config(cfg, out / "config.toml")
    ti = cfg.thresholds
    th = derive_parameters(ti.alpha, ti.C_sharp, ti.gamma0, ti.H1, ti.overrides())
    prof = generate_shape(cfg.geometry, cfg.solver.grid, profile=True)
    settings = cfg.flow_settings()
    snaps = []
    last = [-np.inf]

    def snapshot(state):
        if state.time - last[0] >= args.snapshot_dt:
            last[0] = state.time
            snaps.append((state.time, [(c.id, c.profile.z.copy(), c.profile.r.copy())
                                       for c in state.components]))

    try:
        res = run_with_surgery(prof, th, cfg.surgery, settings, cfg.solver.grid, snapshot)
    except FlowAbort as exc:
        diag = out / "diagnostic.json"
        diag.write_text(json.dumps({"message": str(exc), **exc.diagnostic}, default=float))
        raise NumericalFailure(str(exc), str(diag))
    res.write(out)
    _write_history(out / "history.csv", snaps)
    ev = res.state.events
    _emit({"events": str(out / "events.jsonl"), "status": res.status, "steps": res.steps,
           "surgeries": sum(e["kind"] == "surgery" for e in ev),
           "removals": sum(e["kind"] == "removal" for e in ev),
           "passes": [{"time": p["time"], "max_H_after": p["max_H_after"]} for p in res.passes]})


def cmd_density(args):
    from .monitor import profile_density, write_density_csv
    hist_path = Path(args.history)
    if hist_path.is_dir():
        hist_path = hist_path / "history.csv"
    if not hist_path.exists():
        raise Refusal(f"no history at {hist_path}")
    hist = _read_history(hist_path)
    x0 = _vec(args.center)
    if np.hypot(x0[0], x0[1]) > 1e-12:
        raise Refusal("axisymmetric histories support centres on the axis only")
    radii = np.linspace(args.rmax / args.n, args.rmax, args.n)
    theta = []
    for r in radii:
        t = args.t0 - r * r
        try:
            _, comps = hist.at(t, max(r * r / 8, 1e-12))
        except ValueError as exc:
            raise Refusal(str(exc))
        theta.append(sum(profile_density(z, rr, x0[2], r) for z, rr in comps))
    theta = np.array(theta)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_density_csv(out, radii, theta)
    mono = bool(np.all(np.diff(theta) >= -0.02 * theta[1:]))
    _emit({"csv": str(out), "theta": theta.tolist(), "monotone_within_2pct": mono})


def cmd_report(args):
    from .flow import genealogy, read_events
    run = Path(args.run)
    if not (run / "events.jsonl").exists():
        raise Refusal(f"{run} has no events.jsonl")
    ev = read_events(run / "events.jsonl")
    times = [e["time"] for e in ev]
    passes = [e for e in ev if e["kind"] == "pass-complete"]
    H2 = passes[0]["data"]["H2"] if passes else None
    rep = {
        "schema": 1,
        "events": len(ev),
        "ordered": all(a <= b for a, b in zip(times, times[1:])),
        "surgeries": sum(e["kind"] == "surgery" for e in ev),
        "removals": {e["component"]: e["data"]["reason"] for e in ev if e["kind"] == "removal"},
        "genealogy": genealogy(ev),
        "passes": [{"time": e["time"], "max_H": e["data"]["max_H"],
                    "f_before": e["data"]["f_before"], "f_after": e["data"]["f_after"]}
                   for e in passes],
        "post_pass_below_H2": all(e["data"]["max_H"] <= H2 for e in passes) if passes else None,
        "f_nonincreasing": all(e["data"]["f_after"] <= e["data"]["f_before"] * (1 + 1e-6) + 1e-300
                               for e in passes),
        "status": ev[-1]["data"].get("status") if ev and ev[-1]["kind"] == "end" else None,
    }
    out = Path(args.out or run / "report.json")
    out.write_text(json.dumps(rep, indent=2, default=float))
    with (run / "surgeries.csv").open("w") as fh:
        fh.write("t,component,z0,r,max_H_modified\n")
        for e in ev:
            if e["kind"] == "surgery":
                d = e["data"]
                fh.write(f"{e['time']!r},{e['component']},{d['z0']!r},{d['r']!r},{d['max_H_modified']!r}\n")
    _emit(rep)


# -- parser ---------------------------------------------------------------------------------

def build_parser():
    ap = argparse.ArgumentParser(prog="mcfsurgery", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="curvature and touching-ball radii of a surface")
    _add_shape(p)
    p.add_argument("--out", default="analyze.csv")
    p.set_defaults(fn=cmd_analyze)

    p = sub.add_parser("csf", help="curve shortening flow of a plane curve")
    p.add_argument("--curve", default="circle", help="circle, ellipse or a CSV path")
    p.add_argument("--a", type=float, default=1.0)
    p.add_argument("--b", type=float, default=1.0)
    p.add_argument("--n", type=int, default=256)
    p.add_argument("--T", type=float, default=0.1)
    p.add_argument("--save-every", type=int, default=10)
    p.add_argument("--out", default="csf.csv")
    p.set_defaults(fn=cmd_csf)

    p = sub.add_parser("cap-model", help="validate the bowl-soliton cap model")
    p.add_argument("--resolutions", default="64,128")
    p.add_argument("--smin", type=float, default=0.1)
    p.add_argument("--smax", type=float, default=10.0)
    p.add_argument("--S", type=float, default=20.0)
    p.add_argument("--out", default="cap_model.json")
    p.set_defaults(fn=cmd_cap_model)

    for name, fn, help_ in (("neck", cmd_neck, "find and certify necks"),
                            ("surgery", cmd_surgery, "replace a certified neck by two caps")):
        p = sub.add_parser(name, help=help_)
        _add_shape(p, "cylinder" if name == "surgery" else "sphere")
        p.add_argument("--seed-point", help="x,y,z near the neck (default: scan)")
        p.add_argument("--H1", type=float, default=1.0)
        p.add_argument("--Theta", type=float, default=800.0)
        p.add_argument("--eta0", type=float, default=0.1)
        p.add_argument("--L", type=float, default=8.0, help="half-length of the sliced region")
        p.add_argument("--L-check", type=float, default=5.0, help="half-length certified")
        p.add_argument("--n-t", type=int, default=64)
        p.add_argument("--alpha-hat", type=float, default=0.55)
        p.add_argument("--delta-hat", type=float, default=0.05)
        p.add_argument("--eps", type=float, default=0.01)
        if name == "surgery":
            p.add_argument("--Lambda", type=float, default=3.0)
            p.add_argument("--gap", type=float, default=0.25)
            p.add_argument("--check-scale", action="store_true",
                           help="refuse necks of size outside [1/(2 H1), 2/H1]")
            p.add_argument("--out", default="surgery")
        else:
            p.add_argument("--out", default="necks.json")
        p.set_defaults(fn=fn)

    p = sub.add_parser("flow", help="axisymmetric flow with surgery from a TOML config")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.add_argument("--snapshot-dt", type=float, default=1e-3)
    p.set_defaults(fn=cmd_flow)

    p = sub.add_parser("density", help="Gaussian density r-scan over a flow history")
    p.add_argument("--history", required=True)
    p.add_argument("--center", default="0,0,0")
    p.add_argument("--t0", type=float, required=True)
    p.add_argument("--rmax", type=float, required=True)
    p.add_argument("--n", type=int, default=8)
    p.add_argument("--out", default="density.csv")
    p.set_defaults(fn=cmd_density)

    p = sub.add_parser("report", help="aggregate a flow run")
    p.add_argument("--run", required=True)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_report)
    return ap


REFUSALS = ("ConfigError", "SurgeryError", "NeckError", "CurveError", "MeshError",
            "RemovalRefused", "ValueError", "FileNotFoundError")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.fn(args)
        return EXIT_OK
    except Refusal as exc:
        err = {"error": "refused", "message": str(exc), "exit_code": EXIT_REFUSED}
        code = EXIT_REFUSED
    except NumericalFailure as exc:
        err = {"error": "numerical-failure", "message": str(exc), "exit_code": EXIT_NUMERICAL,
               "snapshot": exc.snapshot}
        code = EXIT_NUMERICAL
    except Exception as exc:
        name = type(exc).__name__
        numeric = name in ("FlowAbort", "StepRejected", "FloatingPointError", "LinAlgError")
        code = EXIT_NUMERICAL if numeric or name not in REFUSALS else EXIT_REFUSED
        err = {"error": name, "message": str(exc), "exit_code": code}
    print(json.dumps(err), file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
