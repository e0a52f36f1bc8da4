"""Command-line entry point: ``diqkd <command> [options]``.

Exit codes: 0 success, 1 invalid input, 2 numerical failure (a bound whose
SDP certificate misses the duality-gap tolerance).
"""
from __future__ import annotations

import argparse
import json
import sys
from contextlib import contextmanager
from dataclasses import asdict
from typing import List, Optional

import numpy as np

from . import bounds, keyrate, protocol
from .io import dump_json, format_float, load_experiments_with_errors, provenance_lines, tool_version, write_csv
from .quantum import TSIRELSON, ChannelPoint, MeasurementFrame, depolarizing_qber, werner_state

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 1, 2


class ValidationError(Exception):
    pass


class NumericalFailure(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ValidationError(message)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--output", "-o", help="output path (default: stdout)")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--config", help="JSON file whose keys set option defaults")
    p.add_argument("--workers", type=int, default=None, help="parallel workers (default: $DIQKD_WORKERS or 1)")
    p.add_argument("--library", help="bound-curve CSV to use instead of the shipped one")


def _add_net(p: argparse.ArgumentParser) -> None:
    d = bounds.NetConfig()
    p.add_argument("--b-vertices", type=int, default=d.b_vertices)
    p.add_argument("--phi-points", type=int, default=d.phi_points)
    p.add_argument("--s-grid", type=int, default=d.s_grid)
    p.add_argument("--lipschitz-mode", choices=bounds.LIPSCHITZ_MODES, default=d.lipschitz_mode)
    p.add_argument("--gap-tol", type=float, default=d.gap_tol, help="target bound gap in bits")
    p.add_argument("--max-solves", type=int, default=d.max_solves)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="diqkd", description="Device-independent entropy bounds and DIQKD key rates.")
    ap.add_argument("--version", action="version", version=tool_version())
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("bound", help="certified bound curve C*(S) for one lambda")
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--s", type=float, nargs="+", help="CHSH values (default: the S grid)")
    p.add_argument("--recompute", action="store_true", help="ignore the shipped curves")
    _add_net(p)
    _add_common(p)

    p = sub.add_parser("keyrate", help="asymptotic key rate at one channel point")
    p.add_argument("--s", type=float, required=True)
    p.add_argument("--qber", type=float, help="QBER of both key bases (default: depolarising)")
    p.add_argument("--q00", type=float)
    p.add_argument("--q11", type=float)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--p", type=float, help="Alice's bias P(X=0)")
    g.add_argument("--lambda", dest="lam", type=float)
    _add_common(p)

    p = sub.add_parser("critical", help="critical CHSH value and QBER under depolarising noise")
    p.add_argument("--lambda", dest="lam", type=float, nargs="+", default=[0.5, 1.0])
    _add_common(p)

    p = sub.add_parser("feasibility", help="lambda-optimised key-rate grid over (S, QBER)")
    p.add_argument("--s-range", type=float, nargs=2, default=(2.0, TSIRELSON))
    p.add_argument("--q-range", type=float, nargs=2, default=(0.0, 0.15))
    p.add_argument("--resolution", type=int, nargs=2, default=(41, 31), metavar=("NS", "NQ"))
    p.add_argument("--contour", help="also write the zero-rate contour CSV here")
    _add_common(p)

    p = sub.add_parser("region", help="uncertainty set of (H(A0|E), H(A1|E)) at one S")
    p.add_argument("--s", type=float, required=True)
    p.add_argument("--lambdas", type=float, nargs="+", default=list(keyrate.DEFAULT_LAMBDA_GRID))
    _add_common(p)

    p = sub.add_parser("experiments", help="key rates for a table of (S, QBER) measurements")
    p.add_argument("--file", required=True)
    _add_common(p)

    p = sub.add_parser("simulate", help="Monte-Carlo run of the protocol")
    p.add_argument("--n", type=int, default=100_000)
    p.add_argument("--p", type=float, default=0.5)
    p.add_argument("--q", type=float, default=0.95)
    p.add_argument("--s-tol", type=float, default=2.7)
    p.add_argument("--visibility", type=float, default=1.0, help="Werner visibility of the shared state")
    p.add_argument("--phi", type=float, default=np.pi / 2)
    p.add_argument("--omega", type=float, default=np.pi / 4)
    p.add_argument("--ec-efficiency", type=float, default=1.1)
    p.add_argument("--verify-bits", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--transcript", help="write the round transcript CSV here")
    _add_common(p)
    return ap


def _apply_config(ap: argparse.ArgumentParser, argv: List[str], args: argparse.Namespace) -> argparse.Namespace:
    if not getattr(args, "config", None):
        return args
    try:
        with open(args.config) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read config: {exc}")
    if not isinstance(cfg, dict):
        raise ValidationError("config must be a JSON object")
    known = set(vars(args)) - {"command", "config"}
    unknown = sorted(k for k in cfg if k.replace("-", "_") not in known and k != "lambda")
    if unknown:
        raise ValidationError(f"unknown config keys: {', '.join(unknown)}")
    # command-line flags override the file; re-parse with file values as defaults
    sub = ap._subparsers._group_actions[0].choices[args.command]
    defaults = {("lam" if k == "lambda" else k.replace("-", "_")): v for k, v in cfg.items()}
    sub.set_defaults(**defaults)
    return ap.parse_args(argv)


@contextmanager
def _sink(path: Optional[str]):
    if path is None:
        yield sys.stdout
    else:
        with open(path, "w", newline="") as fh:
            yield fh


def _emit(args, command: str, config: dict, columns, rows, extra_json=None) -> None:
    header = provenance_lines(command, config)
    with _sink(args.output) as fh:
        if args.format == "csv":
            write_csv(fh, columns, rows, header)
        else:
            payload = {"provenance": {"tool_version": tool_version(), "command": command, "config": config},
                       "rows": [{c: r[c] for c in columns} for r in rows]}
            payload.update(extra_json or {})
            dump_json(payload, fh)


def _library(args) -> bounds.CurveLibrary:
    try:
        return bounds.CurveLibrary.load(args.library) if args.library else bounds.default_library()
    except OSError as exc:
        raise ValidationError(f"cannot read bound library: {exc}")


def _net(args) -> bounds.NetConfig:
    try:
        return bounds.NetConfig(
            b_vertices=args.b_vertices, phi_points=args.phi_points, s_grid=args.s_grid,
            lipschitz_mode=args.lipschitz_mode, gap_tol=args.gap_tol, max_solves=args.max_solves,
        )
    except ValueError as exc:
        raise ValidationError(str(exc))


def _check_lambda(lam: float) -> None:
    if not 0.0 <= lam <= 1.0:
        raise ValidationError("lambda must lie in [0, 1]")


def cmd_bound(args) -> None:
    _check_lambda(args.lam)
    cfg = _net(args)
    config = {"lambda": args.lam, **asdict(cfg)}
    lib = _library(args)
    stored = args.lam in lib and not args.recompute and cfg == bounds.NetConfig()
    if args.s:
        for s in args.s:
            if not 2.0 <= s <= TSIRELSON + 1e-6:
                raise ValidationError(f"S={s} outside [2, 2*sqrt(2)]")
        s_values = sorted(min(s, TSIRELSON) for s in args.s)
        points = [bounds.qubit_bound_at(s, args.lam, cfg) for s in s_values]
        hull = lib.curve(args.lam) if stored else bounds.convexify_curve(points, args.lam)
    elif stored:
        hull = lib.curve(args.lam)
        points = hull.points
    else:
        hull = bounds.compute_bound_curve(args.lam, cfg, workers=args.workers)
        points = hull.points
    rows = [{"s": p.s, "t_star": p.t_star, "c_qubit": p.c_qubit, "c_hull": float(hull(p.s)),
             "slack": p.slack_used, "gap": p.gap, "status": p.status} for p in points]
    _emit(args, "bound", config, ("s", "t_star", "c_qubit", "c_hull", "slack", "gap", "status"), rows)
    if any(p.status != "optimal" for p in points):
        raise NumericalFailure("some bound points are not certified to the gap tolerance")


def cmd_keyrate(args) -> None:
    lib = _library(args)
    s = min(args.s, TSIRELSON) if args.s <= TSIRELSON + 1e-6 else args.s
    try:
        q_dep = depolarizing_qber(s)
        q00 = args.q00 if args.q00 is not None else (args.qber if args.qber is not None else q_dep)
        q11 = args.q11 if args.q11 is not None else (args.qber if args.qber is not None else q_dep)
        channel = ChannelPoint(s, q00, q11)
        if args.p is not None:
            inputs = keyrate.KeyRateInputs.from_p(args.p, channel)
        elif args.lam is not None:
            inputs = keyrate.KeyRateInputs.from_lambda(args.lam, channel)
        else:
            best = keyrate.optimize_basis_bias(channel, library=lib)
            inputs = keyrate.KeyRateInputs.from_lambda(best.best_lambda, channel)
        c = lib.bound(inputs.lam, s)
    except (ValueError, KeyError) as exc:
        raise ValidationError(str(exc))
    row = {"S": s, "q00": q00, "q11": q11, "lambda": inputs.lam, "p": inputs.p, "p_s": inputs.p_s,
           "c_star": c, "secret_fraction": keyrate.secret_fraction(inputs, c),
           "key_rate": keyrate.key_rate(inputs, c)}
    _emit(args, "keyrate", {"S": s, "q00": q00, "q11": q11}, tuple(row), [row])


def cmd_critical(args) -> None:
    lib = _library(args)
    rows = []
    for lam in args.lam:
        _check_lambda(lam)
        try:
            s = keyrate.critical_chsh(lam, lib)
        except (ValueError, KeyError) as exc:
            raise ValidationError(str(exc))
        rows.append({"lambda": lam, "S_crit": s, "qber_crit": depolarizing_qber(s)})
    _emit(args, "critical", {"lambdas": " ".join(format_float(l) for l in args.lam)},
          ("lambda", "S_crit", "qber_crit"), rows)
    if args.output:
        for r in rows:
            print(f"lambda={format_float(r['lambda'])}: S*={r['S_crit']:.4f} Q*={r['qber_crit']:.4f}")


def cmd_feasibility(args) -> None:
    lib = _library(args)
    try:
        grid = keyrate.feasibility_grid(tuple(args.s_range), tuple(args.q_range), tuple(args.resolution), library=lib)
    except (ValueError, KeyError) as exc:
        raise ValidationError(str(exc))
    config = {"s_range": " ".join(map(format_float, args.s_range)),
              "q_range": " ".join(map(format_float, args.q_range)),
              "resolution": " ".join(map(str, args.resolution))}
    contour = [{"S": s, "qber": q} for s, q in grid.contour]
    _emit(args, "feasibility", config, ("S", "qber", "best_lambda", "key_rate"), grid.rows(),
          {"contour": contour})
    if args.contour:
        with open(args.contour, "w", newline="") as fh:
            write_csv(fh, ("S", "qber"), contour, provenance_lines("feasibility-contour", config))


def cmd_region(args) -> None:
    lib = _library(args)
    if not 2.0 <= args.s <= TSIRELSON + 1e-6:
        raise ValidationError(f"S={args.s} outside [2, 2*sqrt(2)]")
    for lam in args.lambdas:
        _check_lambda(lam)
    try:
        reg = bounds.uncertainty_region(min(args.s, TSIRELSON), args.lambdas, lib)
    except KeyError as exc:
        raise ValidationError(str(exc))
    rows = [{"h_a0": x, "h_a1": y} for x, y in reg.boundary]
    planes = [{"lambda": h.lam, "bound": h.bound} for h in reg.half_planes]
    _emit(args, "region", {"S": args.s}, ("h_a0", "h_a1"), rows, {"half_planes": planes})


def cmd_experiments(args) -> None:
    lib = _library(args)
    try:
        records, errors = load_experiments_with_errors(args.file)
    except (OSError, ValueError) as exc:
        raise ValidationError(str(exc))
    rates = keyrate.evaluate_experiments(records, library=lib)
    rows = [{"label": r.label, "year": rec.year, "S": rec.s, "qber": rec.qber, "best_lambda": r.best_lambda,
             "key_rate": r.rate, "status": r.error or "ok"} for rec, r in zip(records, rates)]
    for e in errors:
        rows.append({"label": f"line {e.line}", "year": "", "S": "", "qber": "", "best_lambda": "",
                     "key_rate": "", "status": e.message})
    _emit(args, "experiments", {"file": args.file}, ("label", "year", "S", "qber", "best_lambda", "key_rate", "status"), rows)


def cmd_simulate(args) -> None:
    lib = _library(args)
    try:
        cfg = protocol.ProtocolConfig(
            n=args.n, p=args.p, q=args.q, state=werner_state(args.visibility),
            frame=MeasurementFrame(phi=args.phi, omega=args.omega), s_tol=args.s_tol,
            ec_efficiency=args.ec_efficiency, verify_bits=args.verify_bits, seed=args.seed,
        )
        transcript = protocol.sample_rounds(cfg)
        result = protocol.run_protocol(cfg, lib, transcript)
    except (ValueError, KeyError) as exc:
        raise ValidationError(str(exc))
    if args.transcript:
        with open(args.transcript, "w", newline="") as fh:
            transcript.write_csv(fh)
    config = {k: getattr(args, k) for k in ("n", "p", "q", "s_tol", "visibility", "phi", "omega",
                                            "ec_efficiency", "verify_bits", "seed")}
    summary = result.summary()
    summary["predicted_rate"] = protocol.asymptotic_prediction(cfg, lib)
    if args.format == "json":
        with _sink(args.output) as fh:
            dump_json({"provenance": {"tool_version": tool_version(), "command": "simulate", "config": config},
                       "result": summary}, fh)
    else:
        _emit(args, "simulate", config, tuple(summary), [summary])


COMMANDS = {
    "bound": cmd_bound, "keyrate": cmd_keyrate, "critical": cmd_critical, "feasibility": cmd_feasibility,
    "region": cmd_region, "experiments": cmd_experiments, "simulate": cmd_simulate,
}


def run_command(argv: Optional[List[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
        args = _apply_config(ap, argv, args)
        if getattr(args, "workers", None) is not None and args.workers < 1:
            raise ValidationError("workers must be positive")
        COMMANDS[args.command](args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def main() -> None:
    sys.exit(run_command())
