"""Command-line front end: solve / verify instances and small transport utilities.

Exit codes: 0 success, 2 input could not be parsed or validated, 3 a certificate
or convexity check failed.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_CERTIFICATE = 3

log = logging.getLogger("eulermix")


class InputError(Exception):
    """Invalid input; ``details`` is merged into the JSON diagnostic."""

    def __init__(self, message: str, **details):
        super().__init__(message)
        self.details = details


def _configure_logging() -> None:
    level = os.environ.get("EULERMIX_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def _read_json(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}", file=str(path)) from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"malformed JSON in {path}: {exc.msg}", file=str(path),
                         line=exc.lineno, column=exc.colno) from exc


def _parse_inline(text: str, what: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"malformed JSON in {what}: {exc.msg}", line=exc.lineno,
                         column=exc.colno) from exc


def _validated(fn, data, path):
    try:
        return fn(data)
    except jsonschema.ValidationError as exc:
        raise InputError(f"{path}: {exc.message}", file=str(path),
                         path="/".join(str(p) for p in exc.absolute_path)) from exc
    except (ValueError, TypeError, KeyError) as exc:
        raise InputError(f"{path}: {exc}", file=str(path)) from exc


def _load_instance(path):
    from .instances import Instance
    return _validated(Instance.from_dict, _read_json(path), path)


def _load_measure(path):
    from .grid import GridMeasure
    from .instances import MEASURE_SCHEMA

    def build(data):
        jsonschema.validate(data, MEASURE_SCHEMA)
        return GridMeasure.from_dict(data)

    return _validated(build, _read_json(path), path)


def _write_json(path: Path, data) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def _emit(data) -> None:
    print(json.dumps(data, sort_keys=True))


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


# --- solve / verify -------------------------------------------------------------------


def _solver_config(args):
    from .solver import SolverConfig

    data = _read_json(args.config) if args.config else {}
    if not isinstance(data, dict):
        raise InputError("solver config must be a JSON object", file=str(args.config))
    data = dict(data)
    if args.schedule is not None:
        schedule = _parse_inline(args.schedule, "--schedule")
        if not isinstance(schedule, list):
            raise InputError("--schedule must be a JSON list of parameter objects")
        data["schedule"] = schedule
    for key, value in (("seed", args.seed), ("tol_convexity", args.tol_convexity),
                       ("threads", args.threads)):
        if value is not None:
            data[key] = value
    return _validated(SolverConfig.from_dict, data, args.config or "config")


def cmd_solve(args) -> int:
    from .solver import solve_dp

    out = Path(args.out).resolve()
    instance_path = Path(args.instance).resolve()
    config_path = Path(args.config).resolve() if args.config else None
    instance = _load_instance(instance_path)
    config = _solver_config(args)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {
        "instance": str(instance_path),
        "config": None if config_path is None else str(config_path),
        "seed": config.seed,
        "threads": config.threads,
        "version": __version__,
        "started": _now(),
        "out": str(out),
    }
    _write_json(out / "manifest.json", manifest)
    try:
        instance.boundary.check_incompressible(1e-6)
    except ValueError as exc:
        raise InputError(str(exc), file=str(instance_path)) from exc

    report = solve_dp(instance, config)
    data = report.to_dict()
    data["instance"] = instance.name
    _write_json(out / "report.json", data)
    with open(out / "entropy_profile.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k", "t", "H_Q"])
        for k, (t, h) in enumerate(zip(report.times, report.entropy_profile)):
            writer.writerow([k, repr(float(t)), repr(h)])
    with open(out / "residuals.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k", "t", "convexity_residual"])
        for k, r in enumerate(report.convexity_residuals, start=1):
            writer.writerow([k, repr(float(report.times[k])), repr(r)])
    manifest["finished"] = _now()
    _write_json(out / "manifest.json", manifest)
    cert = report.certificate
    _emit({"objective": report.objective, "certificate_passed": cert.passed,
           "converged": report.converged, "out": str(out)})
    return EXIT_OK if cert.passed else EXIT_CERTIFICATE


def _profile_from_csv(path: Path) -> list[float]:
    try:
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        return [float(r["H_Q"]) for r in sorted(rows, key=lambda r: int(r["k"]))]
    except (KeyError, ValueError, TypeError) as exc:
        raise InputError(f"cannot parse {path}: {exc}", file=str(path)) from exc


def cmd_verify(args) -> int:
    report_path = Path(args.report)
    report = _read_json(report_path)
    try:
        tol = float(report["tol_convexity"])
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError("report has no usable tol_convexity", file=str(report_path)) from exc
    csv_path = Path(args.profile) if args.profile else report_path.with_name("entropy_profile.csv")
    if csv_path.exists():
        profile = _profile_from_csv(csv_path)
        source = str(csv_path)
    else:
        try:
            profile = [float(e["H"]) for e in report["entropy_profile"]]
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError("report has no entropy profile", file=str(report_path)) from exc
        source = str(report_path)
    h = np.asarray(profile, dtype=float)
    residuals = h[:-2] + h[2:] - 2 * h[1:-1]
    worst = float(residuals.min()) if len(residuals) else 0.0
    ok = bool(np.all(residuals >= -tol))
    _emit({"ok": ok, "min_residual": worst, "tol_convexity": tol, "profile": source,
           "residuals": [float(r) for r in residuals]})
    return EXIT_OK if ok else EXIT_CERTIFICATE


# --- utilities ------------------------------------------------------------------------


def cmd_w2(args) -> int:
    from .transport import TransportError, w2_entropic, w2_exact

    mu, nu = _load_measure(args.source), _load_measure(args.target)
    if mu.grid != nu.grid:
        raise InputError("source and target live on different grids")
    try:
        if args.epsilon is not None:
            res = w2_entropic(mu, nu, args.epsilon)
            value = max(res.value, 0.0)
            out = {"w2_squared": value, "w2": float(np.sqrt(value)), "epsilon": args.epsilon,
                   "debiased": True}
        else:
            dist, plan = w2_exact(mu, nu, cap=args.cap)
            out = {"w2_squared": plan.cost, "w2": dist}
    except TransportError as exc:
        raise InputError(str(exc)) from exc
    _emit(out)
    return EXIT_OK


def cmd_heat(args) -> int:
    from .grid import entropy
    from .heat import HeatOperator, heat_step

    mu = _load_measure(args.measure)
    if args.time < 0:
        raise InputError("--time must be nonnegative")
    op = HeatOperator(mu.grid, args.substep)
    result = heat_step(op, mu, args.time)
    data = result.to_dict()
    if args.out:
        _write_json(Path(args.out), data)
        _emit({"out": str(Path(args.out).resolve()), "entropy_before": entropy(mu),
               "entropy_after": entropy(result)})
    else:
        _emit(data)
    return EXIT_OK


def cmd_interp(args) -> int:
    from .transport import TransportError, displacement_interpolate, optimal_plan

    mu, nu = _load_measure(args.source), _load_measure(args.target)
    if mu.grid != nu.grid:
        raise InputError("source and target live on different grids")
    if not 0 <= args.t <= 1:
        raise InputError("t must lie in [0, 1]")
    try:
        result = displacement_interpolate(optimal_plan(mu, nu, cap=args.cap), args.t)
    except TransportError as exc:
        raise InputError(str(exc)) from exc
    _emit(result.to_dict())
    return EXIT_OK


# --- entry point ------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    from .transport import LP_CAP

    parser = argparse.ArgumentParser(prog="eulermix", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve an instance and certify the result")
    p.add_argument("instance")
    p.add_argument("config", nargs="?", help="solver config JSON (optional)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--tol-convexity", type=float, default=None)
    p.add_argument("--schedule", default=None,
                   help='inline JSON list, e.g. \'[{"N": 4, "q": 2}, {"N": 4, "q": 8}]\'')
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("verify", help="re-check entropy convexity of a stored report")
    p.add_argument("report")
    p.add_argument("--profile", help="entropy profile CSV (default: next to the report)")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("w2", help="Wasserstein distance between two measure files")
    p.add_argument("source")
    p.add_argument("target")
    p.add_argument("--epsilon", type=float, default=None, help="use the entropic surrogate")
    p.add_argument("--cap", type=int, default=LP_CAP)
    p.set_defaults(func=cmd_w2)

    p = sub.add_parser("heat", help="run the heat flow on a measure file")
    p.add_argument("measure")
    p.add_argument("--time", type=float, required=True)
    p.add_argument("--substep", type=float, default=1e-3)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_heat)

    p = sub.add_parser("interp", help="displacement interpolation between two measure files")
    p.add_argument("source")
    p.add_argument("target")
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--cap", type=int, default=LP_CAP)
    p.set_defaults(func=cmd_interp)
    return parser


def main(argv=None) -> int:
    _configure_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(json.dumps({"error": str(exc), **exc.details}, sort_keys=True), file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
