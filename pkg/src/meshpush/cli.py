"""``meshpush`` command line: sphere, push, check, fit and gradcheck.

Exit codes: 0 on success, 1 on runtime errors, 2 on usage errors. Every
command writes a JSON run manifest next to its main output.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .errors import MeshPushError, PushInfeasible, StepError
from .fit import GRADCHECK_SELECTORS, PARAMETRIZATIONS, SCHEMA_VERSION, FitConfig, fit, gradcheck
from .geometry import find_intersecting_faces
from .mesh import MAX_SUBDIVISIONS, make_icosphere, read_obj, write_obj
from .pushing import DeformStep, PushConfig, push_step

log = logging.getLogger("meshpush")


class UsageError(Exception):
    """Bad flag values that argparse cannot catch on its own."""


def _dump_json(path, payload) -> None:
    payload = {"schema_version": SCHEMA_VERSION, **payload}
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _manifest_path(args) -> Path:
    if args.manifest:
        return Path(args.manifest)
    anchor = getattr(args, "report", None) or getattr(args, "out", None)
    return Path(str(anchor) + ".manifest.json") if anchor else Path(f"meshpush-{args.command}.manifest.json")


def _write_manifest(args, wall_time, error=None) -> None:
    path = _manifest_path(args)
    config = {k: v for k, v in vars(args).items() if k not in ("func", "manifest")}
    _dump_json(path, {
        "command": args.command,
        "config": config,
        "seed": getattr(args, "seed", None),
        "version": __version__,
        "inputs": [p for p in (getattr(args, "mesh", None), getattr(args, "target", None)) if p],
        "outputs": [p for p in (getattr(args, "out", None), getattr(args, "report", None)) if p],
        "wall_time": wall_time,
        "error": error,
    })


def _parse_direction(text: str) -> np.ndarray:
    try:
        u = np.array([float(t) for t in text.replace(",", " ").split()])
    except ValueError:
        raise UsageError(f"direction {text!r} is not three numbers") from None
    if u.shape != (3,):
        raise UsageError(f"direction {text!r} is not three numbers")
    return u


def _load_dmin(value: str, n_vertices: int) -> np.ndarray:
    """A scalar broadcast to every vertex, or a JSON / whitespace-separated file."""
    try:
        return np.full(n_vertices, float(value))
    except ValueError:
        pass
    path = Path(value)
    if not path.exists():
        raise UsageError(f"--dmin {value!r} is neither a number nor an existing file")
    text = path.read_text(encoding="utf-8")
    values = np.asarray(json.loads(text) if path.suffix == ".json" else text.split(), dtype=np.float64).ravel()
    if len(values) != n_vertices:
        raise UsageError(f"--dmin has {len(values)} values for {n_vertices} vertices")
    return values


# --- commands ---------------------------------------------------------------------------

def cmd_sphere(args) -> int:
    if not 0 <= args.subdiv <= MAX_SUBDIVISIONS:
        raise UsageError(f"--subdiv must be between 0 and {MAX_SUBDIVISIONS}, got {args.subdiv}")
    write_obj(args.out, make_icosphere(args.subdiv))
    return 0


def cmd_push(args) -> int:
    mesh = read_obj(args.mesh)
    direction = _parse_direction(args.direction)
    dmin = _load_dmin(args.dmin, mesh.n_vertices)
    report = {"pair_count": None, "constraint_count": None, "objective": None, "lp_status": None,
              "intersecting_fraction_after": None, "lp_iterations": None, "error": None}
    try:
        res = push_step(mesh, DeformStep(direction, dmin), PushConfig(epsilon=args.epsilon))
    except StepError as exc:
        report["error"] = f"{type(exc).__name__}: {exc}"
        if isinstance(exc, PushInfeasible):
            report["lp_status"] = exc.status.value
        if args.report:
            _dump_json(args.report, report)
        raise
    write_obj(args.out, res.mesh_out)
    flags, _ = find_intersecting_faces(res.mesh_out)
    report.update(
        pair_count=res.constraints.pair_count,
        constraint_count=len(res.constraints),
        objective=res.lp_solution.objective_value,
        lp_status=res.lp_solution.status.value,
        intersecting_fraction_after=float(flags.mean()) if len(flags) else 0.0,
        lp_iterations=res.lp_solution.iterations,
    )
    if args.report:
        _dump_json(args.report, report)
    return 0


def cmd_check(args) -> int:
    mesh = read_obj(args.mesh)
    t0 = time.perf_counter()
    flags, tested = find_intersecting_faces(mesh, exhaustive=args.exhaustive)
    count = int(flags.sum())
    report = {
        "n_faces": mesh.n_faces,
        "intersecting_count": count,
        "fraction": count / mesh.n_faces if mesh.n_faces else 0.0,
        "pairs_tested": int(tested),
        "wall_time": time.perf_counter() - t0,
    }
    if args.report:
        _dump_json(args.report, report)
    else:
        print(json.dumps(report, sort_keys=True))
    return 1 if args.fail_on_intersect and count else 0


def cmd_fit(args) -> int:
    target = read_obj(args.target)
    try:
        cfg = FitConfig(
            iterations=args.iterations,
            step_size=args.step_size,
            lambda_laplacian=args.lambda_laplacian,
            lambda_crease=args.lambda_crease,
            surface_samples=args.surface_samples,
            seed=args.seed,
            parametrization=args.parametrization,
            n_steps=args.n_steps,
            subdivisions=args.subdivisions,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    mesh, report = fit(target if target.n_faces else target.vertices, cfg)
    write_obj(args.out, mesh)
    if args.report:
        Path(args.report).write_text(report.to_json() + "\n", encoding="utf-8")
    return 0


def cmd_gradcheck(args) -> int:
    selectors = GRADCHECK_SELECTORS if args.op == "all" else (args.op,)
    results = []
    for sel in selectors:
        r = gradcheck(sel, seed=args.seed, probe=args.probe, instances=args.instances)
        results.append(r.to_dict())
        print(f"{sel:<11} max_rel_err={r.max_relative_error:.3e} threshold={r.threshold:.0e} "
              f"coords={r.coordinates} excluded={r.excluded} {'pass' if r.passed else 'FAIL'}")
    if args.report:
        _dump_json(args.report, {"results": results})
    return 0 if all(r["passed"] for r in results) else 1


# --- parser ---------------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="meshpush", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_)
        p.set_defaults(func=func)
        p.add_argument("--manifest", help="run manifest path (default: <report or out>.manifest.json, else ./meshpush-<command>.manifest.json)")
        return p

    p = add("sphere", cmd_sphere, "write an icosphere OBJ")
    p.add_argument("--subdiv", type=int, default=2)
    p.add_argument("-o", "--out", required=True)

    p = add("push", cmd_push, "apply one pushing step to a mesh")
    p.add_argument("--mesh", required=True)
    p.add_argument("--direction", required=True, help='three numbers, e.g. "0 0 1"')
    p.add_argument("--dmin", default="0", help="scalar, or a file with one value per vertex")
    p.add_argument("--epsilon", type=float, default=None, help="buffer distance (default 1e-3 x bbox diagonal)")
    p.add_argument("-o", "--out", required=True)
    p.add_argument("--report")

    p = add("check", cmd_check, "count intersecting faces")
    p.add_argument("--mesh", required=True)
    p.add_argument("--report")
    p.add_argument("--exhaustive", action="store_true", help="test every non-adjacent face pair")
    p.add_argument("--fail-on-intersect", action="store_true")

    p = add("fit", cmd_fit, "fit an icosphere to a target mesh or point set")
    p.add_argument("--target", required=True)
    p.add_argument("--parametrization", choices=PARAMETRIZATIONS, default="pushing")
    p.add_argument("--n-steps", type=int, default=6)
    p.add_argument("--iterations", type=int, default=500)
    p.add_argument("--step-size", type=float, default=1e-2)
    p.add_argument("--lambda-laplacian", type=float, default=0.0)
    p.add_argument("--lambda-crease", type=float, default=0.0)
    p.add_argument("--surface-samples", type=int, default=1000)
    p.add_argument("--subdivisions", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--out", required=True)
    p.add_argument("--report")

    p = add("gradcheck", cmd_gradcheck, "compare analytic gradients with finite differences")
    p.add_argument("--op", choices=GRADCHECK_SELECTORS + ("all",), default="all")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--probe", type=float, default=1e-6, help="finite-difference step")
    p.add_argument("--instances", type=int, default=1)
    p.add_argument("--report")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse reports usage errors with code 2
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    t0 = time.perf_counter()
    error = None
    try:
        code = args.func(args)
    except UsageError as exc:
        print(f"meshpush {args.command}: error: {exc}", file=sys.stderr)
        error, code = str(exc), 2
    except (MeshPushError, OSError, ValueError) as exc:
        print(f"meshpush {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        error, code = f"{type(exc).__name__}: {exc}", 1
    _write_manifest(args, time.perf_counter() - t0, error)
    return code


if __name__ == "__main__":
    sys.exit(main())
