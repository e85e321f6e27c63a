"""Command-line front end.

Exit codes: 0 converged / success, 1 input error, 2 oscillating,
3 max iterations (also: no convergent shift, failed sweep point),
4 well-posedness failure, 5 insufficient data for a fit.
"""
from __future__ import annotations

import argparse
import csv
import io
import logging
import math
import sys
from pathlib import Path

from . import analysis, formats
from . import hamiltonian as ham
from .errors import HFError, InsufficientDataError, NotConvergedError, ParseError, WellPosednessError
from .manifold import gap
from .solvers import (
    AlphaFormula,
    Backtracking,
    FixedStep,
    GradientDescent,
    LevelShifting,
    Roothaan,
    ShiftSearchError,
    SolverConfig,
    Status,
    auto_shift,
    initial_guess,
    is_aufbau_solution,
    run,
)

log = logging.getLogger("hfconv")

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_INSUFFICIENT = 5
STATUS_EXIT = {
    Status.CONVERGED: 0,
    Status.OSCILLATING: 2,
    Status.MAX_ITERATIONS: 3,
    Status.WELL_POSEDNESS_FAILURE: 4,
}
EXIT_BY_VALUE = {s.value: code for s, code in STATUS_EXIT.items()}


class InputError(Exception):
    pass


# --- system sources --------------------------------------------------------

PRESETS = {
    "hubbard-ring": (
        ham.hubbard_ring,
        {"L": ("L", int), "t": ("t_h", float), "U": ("U", float), "N": ("n_electrons", int)},
        "rhf",
    ),
    "random": (
        ham.random_system,
        {
            "seed": ("seed", int),
            "n": ("n_basis", int),
            "N": ("n_electrons", int),
            "scale": ("interaction_scale", float),
        },
        "spinless",
    ),
}


def parse_preset(text: str, convention=None):
    """``name:key=value,...``, e.g. ``hubbard-ring:L=6,t=1,U=4,N=6``."""
    name, _, params = text.partition(":")
    name = name.strip()
    if name not in PRESETS:
        raise InputError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    builder, keys, default_conv = PRESETS[name]
    kwargs = {}
    for item in filter(None, (p.strip() for p in params.split(","))):
        key, eq, value = item.partition("=")
        if not eq or key.strip() not in keys:
            raise InputError(f"bad preset parameter {item!r}; expected one of {sorted(keys)}")
        arg, cast = keys[key.strip()]
        try:
            kwargs[arg] = cast(value)
        except ValueError:
            raise InputError(f"preset parameter {key}={value!r} is not a valid {cast.__name__}") from None
    missing = [k for k, (arg, _) in keys.items() if arg not in kwargs and not (name == "random" and k == "scale")]
    if missing:
        raise InputError(f"preset {name} is missing parameters {missing}")
    kwargs["convention"] = convention or default_conv
    try:
        return builder(**kwargs)
    except ValueError as exc:
        raise InputError(str(exc)) from None


def load_system(args):
    if args.system is not None:
        path = Path(args.system)
        if not path.is_file():
            raise InputError(f"cannot read system file {str(path)!r}")
        try:
            return formats.read_system(path, convention=args.convention)
        except OSError as exc:
            raise InputError(f"cannot read system file {str(path)!r}: {exc.strerror}") from None
    return parse_preset(args.preset, args.convention)


def source_label(args) -> str:
    return f"file:{args.system}" if args.system is not None else f"preset:{args.preset}"


# --- solver options --------------------------------------------------------


def step_policy(args):
    if args.step == "fixed":
        if args.t is None:
            raise InputError("--step fixed needs --t")
        return FixedStep(args.t)
    if args.step == "alpha":
        return AlphaFormula()
    return Backtracking(t_init=args.t)


def solver_config(args, algorithm, record=False):
    return SolverConfig(
        algorithm=algorithm,
        tol_grad=args.tol,
        max_iter=args.max_iter,
        record_matrices=record,
    )


def algorithm_for(name, args):
    if name == "gradient":
        return GradientDescent(step_policy(args))
    if name == "roothaan":
        return Roothaan()
    if name == "level-shifting":
        if args.b is None:
            raise InputError("level-shifting needs --b")
        return LevelShifting(args.b)
    raise InputError(f"unknown algorithm {name!r}")


def _num(x):
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else None


def _write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def _csv_text(header, rows):
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow(["" if v is None else formats.fmt(v) if isinstance(v, float) else v for v in row])
    return out.getvalue()


# --- commands --------------------------------------------------------------


def cmd_run(args) -> int:
    system = load_system(args)
    D0 = initial_guess(system, seed=args.seed)
    out = Path(args.out)
    if args.algorithm == "auto-shift":
        config = solver_config(args, Roothaan(), args.store_iterates)
        try:
            _, result = auto_shift(system, D0, config)
        except ShiftSearchError as exc:
            _write(out / "summary.json", formats.dumps({"command": "run", "status": "no_shift_found", "message": str(exc)}))
            print(str(exc), file=sys.stderr)
            return STATUS_EXIT[Status.MAX_ITERATIONS]
    else:
        config = solver_config(args, algorithm_for(args.algorithm, args), args.store_iterates)
        result = run(system, D0, config)

    out.mkdir(parents=True, exist_ok=True)
    formats.write_trace_csv(result.trace, out / "trace.csv")

    report = analysis.convergence_report(result, system)
    b = result.b or 0.0
    summary = {
        "command": "run",
        "source": source_label(args),
        "convention": system.convention.value,
        "n_basis": system.n_basis,
        "n_electrons": system.n_electrons,
        "n_occ": system.n_occ,
        "seed": args.seed,
        "algorithm": result.algorithm,
        "step": args.step if result.algorithm == "gradient" else None,
        "b": _num(result.b),
        "alpha": _num(result.alpha),
        "tol_grad": args.tol,
        "status": result.status.value,
        "exit_code": STATUS_EXIT[result.status],
        "iterations": result.iterations,
        "energy": _num(result.energy),
        "grad_norm": _num(result.trace[-1].grad_norm),
        "final_gap": _num(gap(ham.shifted_fock(system, result.final, b), system.n_occ)),
        "aufbau": is_aufbau_solution(system, result),
        "nu": _num(report.nu),
        "nu_r2": _num(report.nu_r2),
        "power_exponent": _num(report.power_exponent),
        "degenerate_flag": report.degenerate_flag,
        "theta": _num(report.theta),
        "kappa": _num(report.kappa),
        "message": result.message,
    }
    if args.store_iterates:
        summary["tail_errors"] = [float(e) for e in report.tail]
    _write(out / "summary.json", formats.dumps(summary))
    print(f"{result.status.value}: E = {formats.fmt(result.energy)} after {result.iterations} iterations")
    return STATUS_EXIT[result.status]


def _parse_grid(text):
    try:
        grid = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise InputError(f"bad --b-grid {text!r}") from None
    if not grid or any(not b > 0 for b in grid):
        raise InputError("--b-grid needs positive shifts")
    return sorted(grid)


def cmd_sweep_shift(args) -> int:
    system = load_system(args)
    grid = _parse_grid(args.b_grid)
    D0 = initial_guess(system, seed=args.seed)
    config = solver_config(args, Roothaan())
    rows = analysis.shift_sweep(system, D0, grid, config, jobs=args.jobs)
    out = Path(args.out)
    _write(
        out / "sweep.csv",
        _csv_text(
            ["b", "status", "iterations", "energy", "nu", "nu_r2"],
            [(r.b, r.status, r.iterations, r.energy, r.nu, r.nu_r2) for r in rows],
        ),
    )
    summary = {"command": "sweep-shift", "source": source_label(args), "b_grid": grid, "seed": args.seed}
    failed = [r for r in rows if r.status != Status.CONVERGED.value]
    code = EXIT_OK
    if failed:
        summary.update(status="failed", failed_b=[r.b for r in failed])
        code = EXIT_BY_VALUE[failed[0].status]
    else:
        try:
            study = analysis.fit_shift_scaling(rows)
            summary.update(status="ok", slope=study.slope, slope_r2=study.slope_r2, last_ratio=study.last_ratio)
            print(f"log-log slope of nu vs b: {study.slope:.4f} (r2 {study.slope_r2:.4f})")
        except InsufficientDataError as exc:
            summary.update(status="insufficient_data", message=str(exc))
            code = EXIT_INSUFFICIENT
    _write(out / "sweep_summary.json", formats.dumps(summary))
    if failed:
        print(f"level-shifting failed for b = {[r.b for r in failed]}", file=sys.stderr)
    return code


COMPARE_NAMES = ("roothaan", "gradient-alpha", "gradient-backtracking", "gradient-fixed", "level-shifting")


def compare_algorithm(name, args):
    if name == "roothaan":
        return Roothaan()
    if name == "gradient-alpha":
        return GradientDescent(AlphaFormula())
    if name == "gradient-backtracking":
        return GradientDescent(Backtracking())
    if name == "gradient-fixed":
        if args.t is None:
            raise InputError("gradient-fixed needs --t")
        return GradientDescent(FixedStep(args.t))
    if name == "level-shifting":
        return algorithm_for(name, args)
    raise InputError(f"unknown algorithm {name!r}; choose from {COMPARE_NAMES}")


def cmd_compare(args) -> int:
    system = load_system(args)
    names = [n.strip() for n in args.algorithms.split(",") if n.strip()]
    configs = [(n, solver_config(args, compare_algorithm(n, args))) for n in names]
    D0 = initial_guess(system, seed=args.seed)
    rows = analysis.compare_algorithms(system, D0, configs, tol=args.tol)
    header = ["name", "status", "iterations", "iterations_to_tol", "energy", "nu", "nu_r2"]
    _write(
        Path(args.out) / "compare.csv",
        _csv_text(header, [(r.name, r.status, r.iterations, r.iterations_to_tol, r.energy, r.nu, r.nu_r2) for r in rows]),
    )
    for r in rows:
        print(f"{r.name}: {r.status}, {r.iterations_to_tol} iterations to tol")
    return EXIT_OK


def cmd_probe_loja(args) -> int:
    doc = {"command": "probe-loja"}
    code = EXIT_OK
    if args.trace is not None:
        path = Path(args.trace)
        if not path.is_file():
            raise InputError(f"cannot read trace file {str(path)!r}")
        trace = formats.read_trace_csv(path)
        iterates = system = None
        doc["source"] = f"trace:{args.trace}"
    else:
        system = load_system(args)
        name = "gradient" if args.algorithm == "auto-shift" else args.algorithm
        config = solver_config(args, algorithm_for(name, args), record=True)
        result = run(system, initial_guess(system, seed=args.seed), config)
        trace, iterates = result.trace, result.stored_iterates
        doc.update(source=source_label(args), algorithm=result.algorithm, status=result.status.value, iterations=result.iterations)
        code = STATUS_EXIT[result.status]
    try:
        fit = analysis.lojasiewicz_probe(trace, iterates, E_inf=args.e_inf, system=system)
    except InsufficientDataError as exc:
        doc["message"] = str(exc)
        _write(Path(args.out) / "loja.json", formats.dumps(doc))
        print(str(exc), file=sys.stderr)
        return code or EXIT_INSUFFICIENT
    doc.update(
        theta=fit.theta, kappa=fit.kappa, slope=fit.slope, r2=fit.r2, n_points=fit.n_points, in_range=fit.in_range
    )
    _write(Path(args.out) / "loja.json", formats.dumps(doc))
    print(f"theta = {fit.theta:.6f}, kappa = {fit.kappa:.6g} ({fit.n_points} points)")
    return code


def cmd_convert(args) -> int:
    path = Path(args.fcidump)
    if not path.is_file():
        raise InputError(f"cannot read FCIDUMP {str(path)!r}")
    system = formats.read_fcidump(path, convention=args.convention or "rhf")
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    formats.write_native(system, out)
    return EXIT_OK


# --- parser ----------------------------------------------------------------


def _add_source(p):
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--system", help="native .json system or FCIDUMP file")
    src.add_argument("--preset", help="e.g. hubbard-ring:L=6,t=1,U=4,N=6 or random:seed=1,n=6,N=3,scale=1.0")
    p.add_argument("--convention", choices=["spinless", "rhf"], help="override the occupation convention")


def _add_solver(p, tol=1e-8, algorithm="roothaan"):
    p.add_argument("--algorithm", default=algorithm, choices=["gradient", "roothaan", "level-shifting", "auto-shift"])
    p.add_argument("--step", default="backtracking", choices=["backtracking", "fixed", "alpha"])
    p.add_argument("--t", type=float, help="gradient step (fixed) or initial trial step (backtracking)")
    p.add_argument("--b", type=float, help="level shift")
    p.add_argument("--tol", type=float, default=tol, help="stop when ||[D, F]|| <= tol")
    p.add_argument("--max-iter", type=int, default=100_000)
    p.add_argument("--seed", type=int, help="random kick applied to the core guess")
    p.add_argument("--out", default=".", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hfconv", description="Hartree-Fock SCF convergence experiments.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="solve one system; writes trace.csv and summary.json")
    _add_source(p)
    _add_solver(p)
    p.add_argument("--store-iterates", action="store_true", help="keep iterates and report tail errors e_k")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep-shift", help="level-shifting rate vs shift b; writes sweep.csv")
    _add_source(p)
    _add_solver(p)
    p.add_argument("--b-grid", default="8,16,32,64,128,256")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_sweep_shift)

    p = sub.add_parser("compare", help="run several algorithms from one start; writes compare.csv")
    _add_source(p)
    _add_solver(p)
    p.add_argument("--algorithms", default="roothaan,gradient-alpha", help=f"comma list of {', '.join(COMPARE_NAMES)}")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("probe-loja", help="fit the Lojasiewicz exponent; writes loja.json")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--system")
    src.add_argument("--preset")
    src.add_argument("--trace", help="trace CSV to analyse instead of running a solver")
    p.add_argument("--convention", choices=["spinless", "rhf"])
    _add_solver(p, tol=1e-12, algorithm="gradient")
    p.add_argument("--e-inf", type=float, help="limit energy (default: last recorded energy)")
    p.set_defaults(func=cmd_probe_loja)

    p = sub.add_parser("convert", help="FCIDUMP to native JSON")
    p.add_argument("fcidump")
    p.add_argument("output")
    p.add_argument("--convention", choices=["spinless", "rhf"])
    p.set_defaults(func=cmd_convert)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    if getattr(args, "jobs", 1) < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_INPUT
    if getattr(args, "max_iter", 0) < 0:
        print("error: --max-iter must be >= 0", file=sys.stderr)
        return EXIT_INPUT
    try:
        return args.func(args)
    except (InputError, ParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except WellPosednessError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return STATUS_EXIT[Status.WELL_POSEDNESS_FAILURE]
    except NotConvergedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return STATUS_EXIT[Status.MAX_ITERATIONS]
    except (HFError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
