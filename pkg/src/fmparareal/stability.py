"""Stability functions of single-step coarse propagators.

Each catalog member approximates ``exp(-s)`` and is stored in factored form

    R(s) = prod_k (1 - s / sigma_k) / prod_k (1 - s / rho_k)

so that ``R(0) == 1`` holds exactly and the vector filters in
:mod:`fmparareal.propagate` can reuse the same roots for shifted solves.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

__all__ = [
    "CPKind",
    "StabilityFunction",
    "PlainParareal",
    "make_stability",
    "eval_R",
    "plain_gamma",
    "gamma_lin",
]

# Coefficients of the optimized coarse propagator (numerator, then denominator,
# both in increasing powers of s).
OCP_NUMERATOR = (1.0, -0.17922)
OCP_DENOMINATOR = (1.0, 0.82078, 0.42444)

SCAN_RANGE = (1e-4, 1e4)
SCAN_POINTS = 4000
REFINE_TOL = 1e-10


class CPKind(str, enum.Enum):
    BE = "BE"
    LIIIC2 = "LIIIC2"
    LIIIC2x2 = "LIIIC2x2"
    EXACT = "Exact"
    OCP = "OCP"

    @classmethod
    def parse(cls, value: "str | CPKind") -> "CPKind":
        if isinstance(value, CPKind):
            return value
        key = str(value).strip().lower().replace("(", "x").replace(")", "")
        for kind in cls:
            if kind.value.lower() == key:
                return kind
        aliases = {"liiic2(2)": cls.LIIIC2x2, "liiic2x2": cls.LIIIC2x2, "liiic22": cls.LIIIC2x2}
        if key in aliases:
            return aliases[key]
        raise ValueError(f"unknown coarse propagator {value!r}")


@dataclass(frozen=True)
class StabilityFunction:
    """Factored stability function ``R(s)``.

    ``repeat > 1`` means the inner factored function is applied ``repeat``
    times with step ``s / repeat``.  ``leading_ratio`` is the ratio of the
    leading polynomial coefficients, kept for reference only; evaluation
    uses the normalized factors.
    """

    kind: CPKind
    numerator_roots: tuple[complex, ...]
    denominator_roots: tuple[complex, ...]
    leading_ratio: float
    repeat: int = 1

    @property
    def is_rational(self) -> bool:
        return self.kind is not CPKind.EXACT

    def __call__(self, s):
        return eval_R(self, s)


@dataclass(frozen=True)
class PlainParareal:
    gamma_lin: float
    s0: float


def _from_polynomials(kind: CPKind, num: tuple[float, ...], den: tuple[float, ...], repeat: int = 1):
    # np.roots wants decreasing powers
    num_roots = tuple(complex(r) for r in np.roots(num[::-1])) if len(num) > 1 else ()
    den_roots = tuple(complex(r) for r in np.roots(den[::-1]))
    return StabilityFunction(kind, num_roots, den_roots, num[-1] / den[-1], repeat)


def make_stability(kind: "CPKind | str") -> StabilityFunction:
    """Return the catalog stability function for ``kind``."""
    kind = CPKind.parse(kind)
    if kind is CPKind.BE:
        return StabilityFunction(kind, (), (-1.0 + 0j,), 1.0)
    if kind in (CPKind.LIIIC2, CPKind.LIIIC2x2):
        # 2 / (s^2 + 2 s + 2) has roots -1 +- i
        repeat = 2 if kind is CPKind.LIIIC2x2 else 1
        return StabilityFunction(kind, (), (-1.0 + 1.0j, -1.0 - 1.0j), 2.0, repeat)
    if kind is CPKind.OCP:
        return _from_polynomials(kind, OCP_NUMERATOR, OCP_DENOMINATOR)
    return StabilityFunction(kind, (), (), 0.0)


def eval_R(R: StabilityFunction, s):
    """Evaluate ``R`` at real ``s >= 0`` (scalar or array)."""
    s = np.asarray(s, dtype=float)
    if R.kind is CPKind.EXACT:
        out = np.exp(-s)
    else:
        x = s / R.repeat
        val = np.ones_like(x, dtype=complex)
        for sigma in R.numerator_roots:
            val = val * (1.0 - x / sigma)
        for rho in R.denominator_roots:
            val = val / (1.0 - x / rho)
        out = val.real ** R.repeat
    return out if out.ndim else float(out)


def plain_gamma(R: StabilityFunction, s):
    """Convergence function ``(exp(-s) - R(s)) / (1 - |R(s)|)`` of plain parareal."""
    r = np.asarray(eval_R(R, s))
    if np.any(np.abs(r) >= 1.0):
        raise ValueError("|R(s)| >= 1: coarse propagator is not contractive at this s")
    out = (np.exp(-np.asarray(s, dtype=float)) - r) / (1.0 - np.abs(r))
    return out if out.ndim else float(out)


def _refine_max(f, grid: np.ndarray, values: np.ndarray) -> tuple[float, float]:
    """Golden-section refinement (in log coordinates) of a grid maximum of ``f``."""
    i = int(np.argmax(values))
    best_x, best_v = float(grid[i]), float(values[i])
    if 0 < i < len(grid) - 1:
        lo, mid, hi = np.log(grid[i - 1]), np.log(grid[i]), np.log(grid[i + 1])
        res = minimize_scalar(
            lambda t: -f(np.exp(t)), bracket=(lo, mid, hi), method="golden", tol=REFINE_TOL
        )
        if -res.fun > best_v and lo <= res.x <= hi:
            best_x, best_v = float(np.exp(res.x)), float(-res.fun)
    return best_x, best_v


def gamma_lin(R: StabilityFunction, points: int = SCAN_POINTS) -> PlainParareal:
    """Supremum of ``|plain_gamma|`` over ``s > 0`` and its location ``s0``."""
    grid = np.logspace(np.log10(SCAN_RANGE[0]), np.log10(SCAN_RANGE[1]), points)
    if np.any(np.abs(eval_R(R, grid)) >= 1.0):
        raise ValueError(f"{R.kind.value}: |R(s)| >= 1 on the scan grid")
    values = np.abs(plain_gamma(R, grid))
    if not np.any(values > 0):
        return PlainParareal(0.0, float(grid[0]))
    s0, g = _refine_max(lambda s: abs(plain_gamma(R, s)), grid, values)
    return PlainParareal(g, s0)
