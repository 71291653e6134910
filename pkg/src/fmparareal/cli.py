"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import io
import logging
import os
import sys

import numpy as np

from fmparareal.convfactor import (
    REFERENCE_GAMMA_LIN_SQ,
    REFERENCE_TABLE1,
    TABLE1_CPS,
    TABLE1_J,
    UpdateType,
    decay_curve,
    gamma_dagger,
)
from fmparareal.experiments import CaseId, FineScheme, make_case, run_experiment
from fmparareal.propagate import NewtonError
from fmparareal.spatial import SingularShiftError
from fmparareal.stability import CPKind, eval_R, gamma_lin, make_stability

__all__ = ["main", "build_parser", "UsageError"]

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _cp(value: str) -> CPKind:
    try:
        return CPKind.parse(value)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _ut(value: str) -> UpdateType:
    try:
        return UpdateType.parse(value)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _fp(value: str) -> FineScheme:
    try:
        return FineScheme.parse(value)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _problem(value: str) -> CaseId:
    try:
        return CaseId.parse(value)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    p = _Parser(prog="fmparareal", description="F-multistep parareal: convergence factors and experiments.")
    p.add_argument("--config", help="plain-text key=value file; command-line flags override it")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--out", default="-", help="output CSV path ('-' for standard output)")
        sp.add_argument("--points", type=int, default=2000, help="log-spaced z grid size")

    s = sub.add_parser("convfactor", help="gamma_dagger(J) for one configuration", formatter_class=fmt)
    s.add_argument("--cp", type=_cp, default=CPKind.LIIIC2, help="coarse propagator")
    s.add_argument("--type", type=_ut, default=UpdateType.TypeII, help="update type (1 or 2)")
    s.add_argument("--J", type=int, default=10, help="coarsening factor")
    common(s)

    s = sub.add_parser("table1", help="gamma_dagger grid over CP x type x J", formatter_class=fmt)
    common(s)

    s = sub.add_parser("decay", help="|gamma_dagger(J) - gamma_lin^2| against J", formatter_class=fmt)
    s.add_argument("--cp", type=_cp, default=CPKind.BE, help="coarse propagator")
    s.add_argument("--type", type=_ut, default=UpdateType.TypeI, help="update type (1 or 2)")
    s.add_argument("--j-min", type=int, default=10, help="smallest J")
    s.add_argument("--j-max", type=int, default=1000, help="largest J")
    s.add_argument("--j-count", type=int, default=12, help="number of log-spaced J values")
    common(s)

    s = sub.add_parser("run", help="parareal error history for one experiment", formatter_class=fmt)
    s.add_argument("--problem", type=_problem, default=CaseId.HeatA, help="heat-a, heat-b, fkpp1 or fkpp4")
    s.add_argument("--cp", type=_cp, default=CPKind.LIIIC2, help="coarse propagator (Exact is not runnable)")
    s.add_argument("--type", type=_ut, default=UpdateType.TypeII, help="update type (1 or 2)")
    s.add_argument("--fp", type=_fp, default=FineScheme.BDF2, help="bdf2, bdf4, mixed2 or mixed4")
    s.add_argument("--J", type=int, default=10, help="coarsening factor")
    s.add_argument("--K", type=int, default=16, help="number of iterations")
    s.add_argument("--q", type=int, default=None, help="BDF order (must match --fp when given)")
    s.add_argument("--m", type=int, default=None, help="interior nodes (default from the mesh width)")
    s.add_argument("--tau", type=float, default=None, help="fine step (default 1/500, or 1/1000 with --paper-scale)")
    s.add_argument("--paper-scale", action="store_true", help="use h = tau = 1/1000")
    s.add_argument("--workers", type=int, default=os.cpu_count() or 1, help="threads for the fine sweeps")
    s.add_argument("--out", default="-", help="output CSV path ('-' for standard output)")

    s = sub.add_parser("catalog", help="list coarse propagators", formatter_class=fmt)
    s.add_argument("--out", default="-", help="output CSV path ('-' for standard output)")
    return p


def _read_config(path: str) -> dict[str, str]:
    out = {}
    try:
        with open(path) as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise UsageError(f"{path}:{lineno}: expected key=value")
                k, v = (s.strip() for s in line.split("=", 1))
                out[k.replace("-", "_")] = v
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    return out


def _parse(argv: list[str]) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        values = _read_config(args.config)
        sub = parser._subparsers._group_actions[0].choices[args.command]  # noqa: SLF001
        known = {a.dest: a for a in sub._actions}  # noqa: SLF001
        defaults = {}
        for key, raw in values.items():
            if key not in known:
                raise UsageError(f"config key {key!r} is not a flag of '{args.command}'")
            action = known[key]
            if isinstance(action, argparse._StoreTrueAction):  # noqa: SLF001
                defaults[key] = raw.lower() in ("1", "true", "yes", "on")
            else:
                conv = action.type or str
                try:
                    defaults[key] = conv(raw)
                except (ValueError, argparse.ArgumentTypeError) as exc:
                    raise UsageError(f"config key {key!r}: {exc}") from None
        sub.set_defaults(**defaults)
        args = parser.parse_args(argv)
    return args


def _write(text: str, out: str):
    if out == "-":
        sys.stdout.write(text)
        return
    try:
        with open(out, "w") as fh:
            fh.write(text)
    except OSError as exc:
        raise UsageError(f"cannot write --out {out}: {exc}") from None


def _cmd_convfactor(a) -> str:
    if a.J < 2:
        raise UsageError("--J must be >= 2")
    res = gamma_dagger(make_stability(a.cp), a.type, a.J, a.points)
    return (
        "cp,type,J,gamma_dagger,z_star,partial_domain\n"
        f"{a.cp.value},{int(a.type)},{a.J},{res.value:.10g},{res.z_star:.10g},{int(res.partial_domain)}\n"
    )


def _cmd_table1(a) -> str:
    buf = io.StringIO()
    buf.write("cp,type,J,gamma_dagger,paper_value,rel_err,z_star\n")
    for cp in TABLE1_CPS:
        R = make_stability(cp)
        for ut in UpdateType:
            for J, ref in zip(TABLE1_J, REFERENCE_TABLE1[cp][ut]):
                res = gamma_dagger(R, ut, J, a.points)
                buf.write(f"{cp.value},{int(ut)},{J},{res.value:.6g},{ref:.6g},{abs(res.value / ref - 1):.4g},{res.z_star:.6g}\n")
    return buf.getvalue()


def _cmd_decay(a) -> str:
    if not 2 <= a.j_min < a.j_max:
        raise UsageError("--j-min must be >= 2 and below --j-max")
    if a.j_count < 2:
        raise UsageError("--j-count must be >= 2")
    Js = np.unique(np.round(np.geomspace(a.j_min, a.j_max, a.j_count)).astype(int))
    rows = decay_curve(make_stability(a.cp), a.type, Js, a.points)
    J = np.array([r[0] for r in rows], float)
    gap = np.array([r[1] for r in rows])
    slope = np.polyfit(np.log(J), np.log(gap), 1)[0]
    local = np.concatenate([[np.nan], np.diff(np.log(gap)) / np.diff(np.log(J))])
    buf = io.StringIO()
    buf.write(f"# cp={a.cp.value} type={int(a.type)}; slope is the least-squares log-log fit over all rows\n")
    buf.write("J,gap,slope,local_slope\n")
    for j, g, ls in zip(J, gap, local):
        buf.write(f"{int(j)},{g:.10g},{slope:.6g},{'' if np.isnan(ls) else f'{ls:.6g}'}\n")
    return buf.getvalue()


def _cmd_run(a) -> str:
    if a.cp is CPKind.EXACT:
        raise UsageError("--cp Exact is analysis-only and cannot be used with 'run'")
    if a.q is not None and a.q != a.fp.q:
        raise UsageError(f"--q {a.q} does not match --fp {a.fp.value[0]}")
    if a.J < a.fp.q:
        raise UsageError(f"--J must be at least the BDF order {a.fp.q}")
    if a.K < 0:
        raise UsageError("--K must be >= 0")
    if a.workers < 1:
        raise UsageError("--workers must be >= 1")
    if a.tau is not None and a.tau <= 0:
        raise UsageError("--tau must be positive")
    if a.m is not None and a.m < 2:
        raise UsageError("--m must be >= 2")
    case = make_case(a.problem, a.m, a.tau, paper_scale=a.paper_scale)
    N = case.problem.T / case.tau
    if abs(N - round(N)) > 1e-9 * N or round(N) % a.J:
        raise UsageError(f"--J {a.J} does not divide the {N:g} fine steps")
    return run_experiment(case, a.cp, a.type, a.fp, a.J, a.K, a.workers).to_csv()


def _cmd_catalog(a) -> str:
    buf = io.StringIO()
    buf.write("cp,R_at_1,gamma_lin,gamma_lin_sq,s0,reference_gamma_lin_sq\n")
    for cp in CPKind:
        R = make_stability(cp)
        pl = gamma_lin(R)
        ref = REFERENCE_GAMMA_LIN_SQ.get(cp)
        buf.write(f"{cp.value},{eval_R(R, 1.0):.10g},{pl.gamma_lin:.6g},{pl.gamma_lin**2:.6g},{pl.s0:.6g},"
                  f"{'' if ref is None else f'{ref:g}'}\n")
    return buf.getvalue()


_COMMANDS = {
    "convfactor": _cmd_convfactor,
    "table1": _cmd_table1,
    "decay": _cmd_decay,
    "run": _cmd_run,
    "catalog": _cmd_catalog,
}


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = _parse(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                            format="%(levelname)s %(name)s: %(message)s")
        text = _COMMANDS[args.command](args)
        _write(text, args.out)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NewtonError, SingularShiftError, ArithmeticError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK
