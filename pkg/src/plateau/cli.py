"""Command-line interface: ``plateau {gen,simulate,perturb,measure,reproduce}``.

Exit codes: 0 success, 2 bad input, 3 no equilibrium reached,
4 blow-up detected.  Every command that writes a file also writes a JSON
sidecar (``<file>.json``) echoing the flags it ran with.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .curvature import AveragedArea, ConstantEdge, NaivePerRegion, all_junction_angles, parse_strategy, pointwise_curvature
from .errors import BlowupDetected, NotConverged, PlateauError
from .flow import FlowConfig, run_to_equilibrium
from .metrics import (
    cluster_centroid,
    convergence_study,
    rms_angular_deviation,
    sphere_curvature_error,
    wedge_angle_means,
    write_convergence_csv,
)
from .mmesh import dumps_mmm, enclosed_volume, extract_junctions, read_mmm, write_mmm
from .scenes import (
    DoubleBubbleSpec,
    make_double_bubble,
    make_labeled_icosphere,
    make_y_junction_strip,
    stretch_sheet,
    tangential_jitter,
)

log = logging.getLogger("plateau")

EXIT_OK = 0
EXIT_BAD_INPUT = 2
EXIT_NOT_CONVERGED = 3
EXIT_BLOWUP = 4

DRIFT_LIMIT = 0.1


class InputError(Exception):
    pass


def _float_list(text):
    try:
        return [float(x) for x in str(text).split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _int_list(text):
    try:
        return [int(x) for x in str(text).split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def _pair(text):
    vals = _int_list(text)
    if len(vals) != 2:
        raise argparse.ArgumentTypeError(f"expected a region pair like 1,0, got {text!r}")
    return tuple(vals)


def _strategy(text):
    try:
        return parse_strategy(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def threads() -> int:
    raw = os.environ.get("PLATEAU_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _jsonable(value):
    if isinstance(value, (NaivePerRegion, ConstantEdge, AveragedArea)):
        return str(value)
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, tuple):
        return list(value)
    if isinstance(value, np.generic):
        return value.item()
    return value


def _flags(args) -> dict:
    skip = {"func", "config", "verbose"}
    return {k: _jsonable(v) for k, v in sorted(vars(args).items()) if k not in skip}


def _write_json(path, payload) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=_jsonable)
        fh.write("\n")


def _sidecar(path, args, **extra) -> None:
    payload = {"command": args.command, "flags": _flags(args), "version": __version__}
    payload.update(extra)
    _write_json(f"{path}.json", payload)


# -- gen ----------------------------------------------------------------------------


def cmd_gen(args) -> int:
    if args.scene == "double-bubble":
        spec = DoubleBubbleSpec(args.subdiv if args.subdiv is not None else 16, args.radius, args.distance, args.fill)
        mesh = make_double_bubble(spec)
    elif args.scene == "icosphere":
        mesh = make_labeled_icosphere(args.radius, args.subdiv if args.subdiv is not None else 3)
    else:
        mesh = make_y_junction_strip(tuple(args.angles), args.length, args.resolution)
    write_mmm(mesh, args.output)
    stats = {"vertices": mesh.n_vertices, "faces": mesh.n_faces, "junction_edges": len(extract_junctions(mesh))}
    _sidecar(args.output, args, stats=stats)
    print(json.dumps(stats))
    return EXIT_OK


# -- simulate -----------------------------------------------------------------------


def _flow_config(args) -> FlowConfig:
    return FlowConfig(
        sigma=args.sigma,
        cfl=args.cfl,
        max_steps=args.max_steps,
        disp_tol=args.disp_tol,
        strategy=args.strategy,
        volume_tol=args.volume_tol,
        metric=args.metric,
    )


def _bubble_radius(mesh) -> float:
    regions = mesh.enclosed_regions()
    if not regions:
        return 1.0
    vol = np.mean([enclosed_volume(mesh, r) for r in regions])
    return float((3.0 * vol / (4.0 * np.pi)) ** (1.0 / 3.0))


def _run_report(mesh, result, config) -> dict:
    final = result.mesh
    junctions = extract_junctions(final)
    report = {
        "strategy": str(config.strategy),
        "converged": result.converged,
        "steps": result.steps,
        "blowup": None if result.blowup is None else {"step": result.blowup.step, "message": str(result.blowup)},
        "centroid_drift": result.centroid_drift,
        "bubble_radius": _bubble_radius(mesh),
        "max_volume_error": result.max_volume_error(),
        "volumes": {str(r): v for r, v in result.final.volumes.items()},
        "measured_at": "equilibrium" if result.converged else "last step",
    }
    report["relative_drift"] = report["centroid_drift"] / report["bubble_radius"]
    if len(junctions):
        try:
            report["rms_deviation_deg"] = rms_angular_deviation(final, junctions)
            report["wedge_angle_means_deg"] = {str(k): v for k, v in wedge_angle_means(final, junctions).items()}
        except PlateauError as exc:
            report["rms_deviation_deg"] = None
            report["measure_error"] = str(exc)
    return report


def _exit_for(result) -> int:
    if result.blowup is not None:
        return EXIT_BLOWUP
    if not result.converged:
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def cmd_simulate(args) -> int:
    mesh = read_mmm(args.mesh)
    config = _flow_config(args)
    prefix = Path(args.output) if args.output else Path(args.mesh).with_suffix("")
    prefix.parent.mkdir(parents=True, exist_ok=True)
    log_path = f"{prefix}.log.csv"
    snap_dir = f"{prefix}.snapshots" if args.snapshot_every else None
    t0 = time.time()
    result = run_to_equilibrium(mesh, config, log_every=args.log_every, log_path=log_path,
                                snapshot_every=args.snapshot_every, snapshot_dir=snap_dir)
    write_mmm(result.mesh, f"{prefix}.final.mmm")
    report = _run_report(mesh, result, config)
    report["seconds"] = time.time() - t0
    report["config"] = config.as_dict()
    report["flags"] = _flags(args)
    report["drift_flagged"] = report["relative_drift"] > DRIFT_LIMIT
    _write_json(f"{prefix}.report.json", report)
    print(json.dumps({k: report.get(k) for k in ("strategy", "converged", "steps", "rms_deviation_deg", "centroid_drift")}))
    return _exit_for(result)


# -- perturb ------------------------------------------------------------------------


def cmd_perturb(args) -> int:
    mesh = read_mmm(args.mesh)
    extra = {}
    if args.kind == "stretch":
        out = stretch_sheet(mesh, args.sheet, args.factor)
        junctions = extract_junctions(mesh)
        if len(junctions):
            before, _ = all_junction_angles(mesh, junctions)
            after, _ = all_junction_angles(out, extract_junctions(out))
            change = float(np.max(np.abs(after - before)))
            extra["max_angle_change_deg"] = change
            print(f"junction angles preserved: max change {change:.3e} deg")
    else:
        out = tangential_jitter(mesh, args.amp, args.seed)
    write_mmm(out, args.output)
    digest = hashlib.sha256(dumps_mmm(out).encode()).hexdigest()
    extra["sha256"] = digest
    _sidecar(args.output, args, **extra)
    print(digest)
    return EXIT_OK


# -- measure ------------------------------------------------------------------------


def measure_mesh(mesh) -> dict:
    junctions = extract_junctions(mesh)
    out = {
        "vertices": mesh.n_vertices,
        "faces": mesh.n_faces,
        "volumes": {str(r): enclosed_volume(mesh, r) for r in mesh.enclosed_regions()},
        "junction_edges": len(junctions),
        "junction_vertices": len(junctions.vertices),
        "centroid": cluster_centroid(mesh).tolist(),
    }
    if len(junctions):
        out["rms_deviation_deg"] = rms_angular_deviation(mesh, junctions)
        out["wedge_angle_means_deg"] = {str(k): v for k, v in wedge_angle_means(mesh, junctions).items()}
        table = []
        for strategy in (NaivePerRegion(), ConstantEdge(0.5), AveragedArea()):
            for v in junctions.vertices:
                for r in sorted(junctions.incident_regions(v)):
                    c = pointwise_curvature(mesh, junctions, int(v), r, strategy)
                    table.append({"vertex": int(v), "region": int(r), "strategy": str(strategy), "A": c.A, "H": c.H})
        out["junction_curvature"] = table
    else:
        out["rms_deviation_deg"] = None
    return out


def cmd_measure(args) -> int:
    mesh = read_mmm(args.mesh)
    out = measure_mesh(mesh)
    if not args.full:
        out.pop("junction_curvature", None)
    text = json.dumps(out, indent=2, sort_keys=True)
    if args.output:
        Path(args.output).write_text(text + "\n")
    print(text)
    return EXIT_OK


# -- reproduce ----------------------------------------------------------------------


def _reproduce_table1(args, out_dir: Path) -> int:
    config = FlowConfig(cfl=args.cfl, disp_tol=args.disp_tol, max_steps=args.max_steps, strategy=AveragedArea())
    rows = convergence_study(args.subdivisions, config, {"fill": args.fill}, workers=threads())
    csv_path = out_dir / "table1.csv"
    write_convergence_csv(rows, csv_path)
    devs = [r.angular_deviation_deg for r in rows]
    meta = {
        "rows": [vars(r) for r in rows],
        "strictly_decreasing": all(b < a for a, b in zip(devs, devs[1:])),
        "config": config.as_dict(),
        "measured_at": "equilibrium",
    }
    _sidecar(csv_path, args, **meta)
    for r in rows:
        flag = "" if r.converged else " (not converged)"
        print(f"{r.subdivision:4d} {r.faces_initial:7d} {r.angular_deviation_deg:8.3f}{flag}")
    return EXIT_OK if all(r.converged for r in rows) else EXIT_NOT_CONVERGED


def fig1_runs(subdivision, sheet, factor, config_kwargs, log_every=100) -> dict:
    """Run the three strategies on the same stretched double bubble."""
    base = make_double_bubble(DoubleBubbleSpec(subdivision))
    mesh = stretch_sheet(base, sheet, factor) if factor != 1.0 else base
    radius = _bubble_radius(mesh)
    out = {}
    for strategy in (NaivePerRegion(), ConstantEdge(0.5), AveragedArea()):
        config = FlowConfig(strategy=strategy, **config_kwargs)
        result = run_to_equilibrium(mesh, config, log_every=log_every)
        out[str(strategy)] = _run_report(mesh, result, config)
        out[str(strategy)]["relative_drift"] = result.centroid_drift / radius
    return out


def fig1_verdicts(runs) -> dict:
    naive, const, avg = runs["naive"], runs["constant:0.5"], runs["averaged"]
    ext = const.get("wedge_angle_means_deg", {}).get("0", float("nan"))
    return {
        "naive": "unstable" if naive["blowup"] else ("drifting" if naive["relative_drift"] > DRIFT_LIMIT else "stable"),
        "constant": "biased >125" if ext > 125.0 else "not biased",
        "averaged": "deviation < constant's" if (avg.get("rms_deviation_deg") or np.inf) < (const.get("rms_deviation_deg") or 0.0)
        else "deviation >= constant's",
    }


def _reproduce_fig1(args, out_dir: Path) -> int:
    runs = fig1_runs(args.subdiv, args.sheet, args.factor,
                     {"cfl": args.cfl, "disp_tol": args.disp_tol, "max_steps": args.max_steps})
    verdicts = fig1_verdicts(runs)
    path = out_dir / "fig1.json"
    _write_json(path, {"runs": runs, "verdicts": verdicts, "flags": _flags(args)})
    print(json.dumps(verdicts))
    return EXIT_OK


def _reproduce_sphere(args, out_dir: Path) -> int:
    rows = sphere_curvature_error(args.levels, args.radius)
    path = out_dir / "sphere_oracle.csv"
    with open(path, "w") as fh:
        fh.write("subdivision,mean_abs_error\n")
        for s, e in rows:
            fh.write(f"{s},{e:.12e}\n")
    errs = [e for _, e in rows]
    _sidecar(path, args, strictly_decreasing=all(b < a for a, b in zip(errs, errs[1:])))
    for s, e in rows:
        print(f"{s} {e:.6e}")
    return EXIT_OK


def cmd_reproduce(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    return {"table1": _reproduce_table1, "fig1": _reproduce_fig1, "sphere-oracle": _reproduce_sphere}[args.experiment](args, out_dir)


# -- parser -------------------------------------------------------------------------


def _add_flow_flags(p, cfl=0.1, max_steps=20000):
    p.add_argument("--strategy", type=_strategy, default=AveragedArea(), help="naive | constant[:c] | averaged")
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--cfl", type=float, default=cfl)
    p.add_argument("--max-steps", type=int, default=max_steps)
    p.add_argument("--disp-tol", type=float, default=1e-5)
    p.add_argument("--volume-tol", type=float, default=1e-9)
    p.add_argument("--metric", choices=["mass", "euclidean"], default="mass")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="plateau", description="Soap-film junction simulator.")
    parser.add_argument("--config", help="JSON file with default flag values")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a scene")
    g.add_argument("scene", choices=["double-bubble", "icosphere", "y-junction"])
    g.add_argument("-o", "--output", default="scene.mmm")
    g.add_argument("--subdiv", type=int, default=None)
    g.add_argument("--radius", type=float, default=1.0)
    g.add_argument("--distance", type=float, default=None, help="centre distance (double bubble)")
    g.add_argument("--fill", type=float, default=1.0, help="interior refinement relative to the junction ring")
    g.add_argument("--angles", type=_float_list, default=[120.0, 120.0, 120.0])
    g.add_argument("--length", type=float, default=1.0)
    g.add_argument("--resolution", type=int, default=8)
    g.set_defaults(func=cmd_gen)

    s = sub.add_parser("simulate", help="flow a mesh to equilibrium")
    s.add_argument("mesh")
    s.add_argument("-o", "--output", default=None, help="output prefix")
    _add_flow_flags(s)
    s.add_argument("--log-every", type=int, default=10)
    s.add_argument("--snapshot-every", type=int, default=0)
    s.set_defaults(func=cmd_simulate)

    p = sub.add_parser("perturb", help="perturb a mesh")
    p.add_argument("mesh")
    p.add_argument("kind", choices=["stretch", "jitter"])
    p.add_argument("-o", "--output", default="perturbed.mmm")
    p.add_argument("--sheet", type=_pair, default=(1, 0))
    p.add_argument("--factor", type=float, default=2.0)
    p.add_argument("--amp", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_perturb)

    m = sub.add_parser("measure", help="report angles, volumes and junction curvature")
    m.add_argument("mesh")
    m.add_argument("-o", "--output", default=None)
    m.add_argument("--full", action="store_true", help="include the per-strategy junction H table")
    m.set_defaults(func=cmd_measure)

    r = sub.add_parser("reproduce", help="run a reference experiment")
    r.add_argument("experiment", choices=["table1", "fig1", "sphere-oracle"])
    r.add_argument("--out-dir", default="results")
    r.add_argument("--subdivisions", type=_int_list, default=[16, 24, 48, 96])
    r.add_argument("--fill", type=float, default=1.0)
    r.add_argument("--subdiv", type=int, default=24)
    r.add_argument("--sheet", type=_pair, default=(1, 0))
    r.add_argument("--factor", type=float, default=2.0)
    r.add_argument("--levels", type=_int_list, default=[2, 3, 4, 5])
    r.add_argument("--radius", type=float, default=1.0)
    r.add_argument("--cfl", type=float, default=0.5)
    r.add_argument("--disp-tol", type=float, default=1e-4)
    r.add_argument("--max-steps", type=int, default=100000)
    r.set_defaults(func=cmd_reproduce)
    return parser


def _apply_config(parser, argv):
    """Re-parse with defaults from ``--config``; explicit flags still win."""
    pre, _ = parser.parse_known_args(argv)
    if not getattr(pre, "config", None):
        return parser.parse_args(argv)
    try:
        data = json.loads(Path(pre.config).read_text())
    except (OSError, ValueError) as exc:
        raise InputError(f"cannot read config {pre.config}: {exc}") from exc
    if not isinstance(data, dict):
        raise InputError("config file must hold a JSON object")
    subparsers = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    target = subparsers.choices[pre.command]
    known = {a.dest: a for a in target._actions}
    defaults = {}
    for key, value in data.items():
        dest = key.replace("-", "_")
        if dest not in known:
            raise InputError(f"unknown config key {key!r} for {pre.command}")
        action = known[dest]
        if action.type is not None and isinstance(value, (str, int, float)):
            value = action.type(str(value)) if action.type in (_strategy, _pair, _int_list, _float_list) else action.type(value)
        elif action.type in (_pair, _int_list, _float_list) and isinstance(value, list):
            value = action.type(",".join(str(v) for v in value))
        defaults[dest] = value
    target.set_defaults(**defaults)
    return parser.parse_args(argv)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
    except (InputError, argparse.ArgumentTypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except BlowupDetected as exc:
        print(f"blow-up: {exc}", file=sys.stderr)
        return EXIT_BLOWUP
    except NotConverged as exc:
        print(f"not converged: {exc}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    except (PlateauError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT


if __name__ == "__main__":
    sys.exit(main())
