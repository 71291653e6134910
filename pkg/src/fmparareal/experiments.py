"""Problem instances and error-history drivers producing CSV tables."""

from __future__ import annotations

import enum
import io
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import sympy as sp

from fmparareal.convfactor import UpdateType, gamma_dagger
from fmparareal.parareal import FPMode, InitMode, PararealConfig, PararealRun, run
from fmparareal.propagate import ProblemKind, ProblemSpec
from fmparareal.spatial import Indicator, build_mesh, project_initial
from fmparareal.stability import CPKind, make_stability

__all__ = [
    "CaseId",
    "FineScheme",
    "ExperimentCase",
    "ExperimentResult",
    "make_case",
    "run_experiment",
    "manufactured_forcing",
]

T_FINAL = 2.0
PAPER_H = 1e-3
DESK_H = 2e-3


class CaseId(enum.Enum):
    HeatA = "HeatA"
    HeatB = "HeatB"
    FKPP1 = "FKPP1"
    FKPP4 = "FKPP4"

    @classmethod
    def parse(cls, value) -> "CaseId":
        if isinstance(value, CaseId):
            return value
        key = str(value).lower().replace("-", "").replace("_", "")
        for c in cls:
            if c.value.lower() == key:
                return c
        raise ValueError(f"unknown problem {value!r}")


class FineScheme(enum.Enum):
    BDF2 = ("BDF2", 2, FPMode.PureBDF)
    BDF4 = ("BDF4", 4, FPMode.PureBDF)
    Mixed2 = ("Mixed2", 2, FPMode.MixedRK)
    Mixed4 = ("Mixed4", 4, FPMode.MixedRK)

    @property
    def q(self) -> int:
        return self.value[1]

    @property
    def mode(self) -> FPMode:
        return self.value[2]

    @classmethod
    def parse(cls, value) -> "FineScheme":
        if isinstance(value, FineScheme):
            return value
        key = str(value).lower()
        for s in cls:
            if s.value[0].lower() == key:
                return s
        raise ValueError(f"unknown fine scheme {value!r}")


_x, _t = sp.symbols("x t", real=True)


def manufactured_forcing(u_exact: sp.Expr, c_L: float = 0.0) -> sp.Expr:
    """Source ``u_t - u_xx - c_L u (1 - u)`` for a symbolic exact solution."""
    return sp.simplify(sp.diff(u_exact, _t) - sp.diff(u_exact, _x, 2) - c_L * u_exact * (1 - u_exact))


def _lambdify(expr: sp.Expr) -> Callable:
    f = sp.lambdify((_x, _t), expr, modules="numpy")
    return lambda x, t: np.asarray(f(x, t), dtype=float) + np.zeros(np.broadcast(x, t).shape)


_EXACT = {
    CaseId.HeatB: sp.sin(sp.pi * _x) * (sp.cos(_t) + sp.cos(4 * _t)),
    CaseId.FKPP1: sp.cos(sp.pi * _x / 2) * sp.cos(_t),
    CaseId.FKPP4: sp.cos(sp.pi * _x / 2) * sp.cos(_t),
}
_C_L = {CaseId.HeatA: 0.0, CaseId.HeatB: 0.0, CaseId.FKPP1: 1.0, CaseId.FKPP4: 4.0}
_DOMAIN = {CaseId.HeatA: (0.0, 1.0), CaseId.HeatB: (0.0, 1.0), CaseId.FKPP1: (-1.0, 1.0), CaseId.FKPP4: (-1.0, 1.0)}


@dataclass
class ExperimentCase:
    id: CaseId
    problem: ProblemSpec
    tau: float
    exact: Callable | None = None
    exact_expr: sp.Expr | None = field(default=None, repr=False)
    forcing_expr: sp.Expr | None = field(default=None, repr=False)


def make_case(case_id, m: int | None = None, tau: float | None = None, paper_scale: bool = True) -> ExperimentCase:
    """Build a case; mesh width and fine step default to 1/1000 (``paper_scale``) or 1/500."""
    cid = CaseId.parse(case_id)
    h_default = PAPER_H if paper_scale else DESK_H
    a, b = _DOMAIN[cid]
    if m is None:
        m = int(round((b - a) / h_default)) - 1
    tau = h_default if tau is None else float(tau)
    mesh = build_mesh(m, a, b)
    c_L = _C_L[cid]
    kind = ProblemKind.FisherKPP if c_L else ProblemKind.LinearHeat
    if cid is CaseId.HeatA:
        u0 = project_initial(mesh, Indicator(0.0, 0.5))
        return ExperimentCase(cid, ProblemSpec(mesh, kind, u0, T_FINAL), tau)
    expr = _EXACT[cid]
    f_expr = manufactured_forcing(expr, c_L)
    exact = _lambdify(expr)
    u0 = project_initial(mesh, lambda x: exact(x, 0.0))
    problem = ProblemSpec(mesh, kind, u0, T_FINAL, c_L, _lambdify(f_expr))
    return ExperimentCase(cid, problem, tau, exact, expr, f_expr)


@dataclass
class ExperimentResult:
    case: ExperimentCase
    config: PararealConfig
    run: PararealRun
    gamma_dagger: float | None
    ref_line: np.ndarray

    @property
    def errors(self) -> np.ndarray:
        return self.run.errors

    def header(self) -> list[str]:
        c = self.config
        lines = [
            f"problem={self.case.id.value}",
            f"m={self.case.problem.mesh.m}",
            f"h={self.case.problem.mesh.h:.6g}",
            f"tau={self.case.tau:.6g}",
            f"T={self.case.problem.T:g}",
            f"c_L={self.case.problem.c_L:g}",
            f"cp={c.cp_kind.value}",
            f"type={c.update_type.name}",
            f"q={c.q}",
            f"fp_mode={c.fp_mode.value}",
            f"J={c.J}",
            f"N_c={c.N_c}",
            f"K={c.K}",
            f"init={c.init_mode.value}",
            "errors[0] is the initialization error (before any correction)",
        ]
        if self.gamma_dagger is None:
            lines.append("ref_slope_line empty: no linear convergence factor for this configuration")
        else:
            lines.append(f"gamma_dagger={self.gamma_dagger:.6g}; ref_slope_line = errors[2]*sqrt(gamma_dagger)^(k-2)")
            if self.case.problem.nonlinear:
                lines.append("ref_slope_line is heuristic for the semilinear problem (linear factor reused)")
        return lines

    def to_csv(self) -> str:
        buf = io.StringIO()
        for line in self.header():
            buf.write(f"# {line}\n")
        buf.write("k,error,ref_slope_line\n")
        for k, (e, r) in enumerate(zip(self.errors, self.ref_line)):
            buf.write(f"{k},{e:.17g},{'' if np.isnan(r) else f'{r:.17g}'}\n")
        return buf.getvalue()


def run_experiment(case: ExperimentCase, cp_kind, update_type, fp, J: int, K: int, workers: int = 1) -> ExperimentResult:
    """Run parareal on ``case`` and attach the linear-analysis reference slope."""
    cp = CPKind.parse(cp_kind)
    ut = UpdateType.parse(update_type)
    fp = FineScheme.parse(fp)
    if cp is CPKind.EXACT:
        raise ValueError("the exact coarse propagator is not available for runs")
    N = case.problem.T / case.tau
    if abs(N - round(N)) > 1e-9 * N or round(N) % J:
        raise ValueError(f"T/tau = {N:g} is not a multiple of J = {J}")
    N_c = int(round(N)) // J
    init = InitMode.ConstantU0 if case.problem.nonlinear else InitMode.CoarseSweep
    config = PararealConfig(N_c, J, K, fp.q, fp.mode, ut, cp, init, workers)
    result = run(case.problem, config, store_iterates=False)
    gd = None
    ref = np.full(K + 1, np.nan)
    if fp.q == 2 and K >= 2:
        gd = gamma_dagger(make_stability(cp), ut, J).value
        ref = result.errors[2] * np.sqrt(gd) ** (np.arange(K + 1) - 2.0)
    return ExperimentResult(case, config, result, gd, ref)
