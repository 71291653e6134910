"""Convergence-factor analysis of F-multistep parareal with a BDF2 fine propagator.

At a spectral point ``z = tau * lambda`` the error recursion over two
iterations is governed by a 3x3 nonnegative system matrix built from five
components ``gamma_a .. gamma_e``.  Its spectral radius is ``gamma(z, J)``
and the supremum over ``z`` is the convergence factor ``gamma_dagger(J)``.
All routines accept scalar or array ``z``.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from fmparareal.bdf import transfer_pair
from fmparareal.stability import CPKind, StabilityFunction, eval_R, gamma_lin, make_stability

__all__ = [
    "UpdateType",
    "EtaValues",
    "ConvergenceComponents",
    "ConvergenceFactor",
    "compute_etas",
    "gamma_components",
    "gamma_of_zJ",
    "gamma_dagger",
    "decay_curve",
    "table1",
    "TABLE1_CPS",
    "TABLE1_J",
    "REFERENCE_TABLE1",
    "REFERENCE_GAMMA_LIN_SQ",
]

log = logging.getLogger(__name__)

N0 = 50
Z_RANGE = (1e-6, 1e4)
Z_POINTS = 2000
# exp(-s) has G2/G1 = e^z, which is unbounded; past this the large-z branch
# dominates and has no counterpart for rational members.
EXACT_Z_MAX = 5.0
REFINE_TOL = 1e-10

TABLE1_CPS = (CPKind.BE, CPKind.LIIIC2, CPKind.LIIIC2x2, CPKind.EXACT)
TABLE1_J = (10, 20, 40, 60, 120)


class UpdateType(enum.IntEnum):
    TypeI = 1
    TypeII = 2

    @classmethod
    def parse(cls, value) -> "UpdateType":
        if isinstance(value, UpdateType):
            return value
        key = str(value).strip().lower().replace("type", "").replace("_", "").strip()
        table = {"1": cls.TypeI, "i": cls.TypeI, "2": cls.TypeII, "ii": cls.TypeII}
        if key not in table:
            raise ValueError(f"unknown update type {value!r}")
        return table[key]


# Published gamma_dagger values, indexed [cp][type] -> row over TABLE1_J.
REFERENCE_TABLE1 = {
    CPKind.BE: {
        UpdateType.TypeI: (0.0764, 0.0824, 0.0857, 0.0868, 0.0879),
        UpdateType.TypeII: (0.0812, 0.0849, 0.0869, 0.0876, 0.0883),
    },
    CPKind.LIIIC2: {
        UpdateType.TypeI: (0.0625, 0.0293, 0.0140, 0.00913, 0.00649),
        UpdateType.TypeII: (0.00644, 0.00634, 0.00646, 0.00652, 0.00660),
    },
    CPKind.LIIIC2x2: {
        UpdateType.TypeI: (0.0625, 0.0293, 0.0140, 0.00913, 0.00444),
        UpdateType.TypeII: (0.00152, 0.000926, 0.000885, 0.000886, 0.000893),
    },
    CPKind.EXACT: {
        UpdateType.TypeI: (0.0625, 0.0293, 0.0140, 0.00913, 0.00444),
        UpdateType.TypeII: (7.77e-5, 7.22e-6, 7.77e-7, 2.15e-7, 2.50e-8),
    },
}
REFERENCE_GAMMA_LIN_SQ = {
    CPKind.BE: 0.0891,
    CPKind.LIIIC2: 0.00668,
    CPKind.LIIIC2x2: 0.000906,
    CPKind.EXACT: 0.0,
}


@dataclass(frozen=True)
class EtaValues:
    z: float | np.ndarray
    J: int
    update_type: UpdateType
    eta1: float | np.ndarray
    eta2: float | np.ndarray
    eta3: float | np.ndarray
    eta4: float | np.ndarray
    G1: float | np.ndarray
    G2: float | np.ndarray


@dataclass(frozen=True)
class ConvergenceComponents:
    gamma_a: float | np.ndarray
    gamma_b: float | np.ndarray
    gamma_c: float | np.ndarray
    gamma_d: float | np.ndarray
    gamma_e: float | np.ndarray
    n0: int = N0

    @property
    def gamma_zJ(self):
        return gamma_of_zJ(self)

    def system_matrix(self) -> np.ndarray:
        """The 3x3 matrix bounding two iterations; arrays stack along the leading axes."""
        a, b, c, d, e = np.broadcast_arrays(
            *(np.asarray(x, dtype=float) for x in
              (self.gamma_a, self.gamma_b, self.gamma_c, self.gamma_d, self.gamma_e))
        )
        A = np.zeros(a.shape + (3, 3))
        A[..., 0, 0], A[..., 0, 1], A[..., 0, 2] = a, b, c
        A[..., 1, 0] = 1.0
        A[..., 2, 1], A[..., 2, 2] = d, e
        return A


@dataclass(frozen=True)
class ConvergenceFactor:
    J: int
    update_type: UpdateType
    cp_kind: CPKind
    q: int
    value: float
    z_star: float
    partial_domain: bool = False


def _coarse_values(R: StabilityFunction, update_type: UpdateType, z: np.ndarray, J: int):
    """``G1 = R(Jz)``, ``G2`` and the ratio ``G2 / G1``."""
    G1 = np.asarray(eval_R(R, J * z))
    if update_type is UpdateType.TypeI:
        return G1, G1, np.ones_like(G1)
    G2 = np.asarray(eval_R(R, (J - 1) * z))
    if R.kind is CPKind.EXACT:
        ratio = np.exp(z)
    else:
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = G2 / G1
    return G1, G2, ratio


def _valid(G1, G2, ratio) -> np.ndarray:
    with np.errstate(invalid="ignore"):
        return (G1 > 0) & (G1 < 1) & (G2 > 0) & np.isfinite(ratio)


def _etas(R: StabilityFunction, update_type: UpdateType, z, J: int) -> tuple[EtaValues, np.ndarray]:
    z = np.asarray(z, dtype=float)
    G1, G2, ratio = _coarse_values(R, update_type, z, J)
    valid = _valid(G1, G2, ratio)
    (F1m, F2m), (F1, F2) = transfer_pair(2, z, J)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        eta3 = F1 * ratio
        eta1 = F1m - eta3
        eta2 = F1m + F2m / ratio - eta3 - F2
        eta4 = eta3 + F2 - G1
    return EtaValues(z, J, update_type, eta1, eta2, eta3, eta4, G1, G2), valid


def compute_etas(R: StabilityFunction, update_type, z, J: int) -> EtaValues:
    """Recursion coefficients ``eta1..eta4`` and coarse factors at ``(z, J)``."""
    update_type = UpdateType.parse(update_type)
    if J < 2:
        raise ValueError("J must be >= 2")
    if np.any(np.asarray(z) <= 0):
        raise ValueError("z must be positive")
    etas, valid = _etas(R, update_type, z, J)
    if not np.all(valid):
        raise ValueError("coarse factor not in (0, 1) at this z: positivity/invertibility violated")
    return etas


def gamma_components(etas: EtaValues, n0: int = N0) -> ConvergenceComponents:
    """The five convergence components; ``gamma_a`` carries an analytic tail bound."""
    e1, e2, e3, e4 = (np.asarray(x, dtype=float) for x in (etas.eta1, etas.eta2, etas.eta3, etas.eta4))
    G1 = np.asarray(etas.G1, dtype=float)
    g = np.abs(G1)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        w = 1.0 - g
        m = np.arange(n0 + 1).reshape((-1,) + (1,) * g.ndim)
        head = np.sum(g**m * np.abs((m + 1) * e4**2 + e2 * e3), axis=0)
        tail = (
            g ** (n0 + 1) * np.abs(e3 * e2) / w
            + e4**2 * ((n0 + 2) * g ** (n0 + 1) - (n0 + 1) * g ** (n0 + 2)) / w**2
        )
        ga = head + tail
        gb = np.abs(e2 * e3) / w * (np.abs(e1) + np.abs(e4) / w) ** 2
        gc = (
            np.abs(e2 * e3**2 * e4) / w**3
            + np.abs(e1 * e2 * e3**2) / w**2
            + np.abs(e1**2 * e3 * e4) / w**2
            + np.abs(e1**3 * e3) / w
        )
        gd = np.abs(G1 * e2 * e4) / w + np.abs(e2 * (e4 + e1))
        ge = np.abs(G1 * e2 * e3) / w + np.abs(e2 * e3 + e1**2)
    out = [x if x.ndim else float(x) for x in (ga, gb, gc, gd, ge)]
    return ConvergenceComponents(*out, n0=n0)


def cubic_coefficients(c: ConvergenceComponents):
    """Coefficients ``(c2, c1, c0)`` of the monic cubic ``xi^3 + c2 xi^2 + c1 xi + c0``."""
    a, b, cc, d, e = (np.asarray(x, dtype=float) for x in
                      (c.gamma_a, c.gamma_b, c.gamma_c, c.gamma_d, c.gamma_e))
    return -(a + e), a * e - b, b * e - cc * d


def gamma_of_zJ(components: ConvergenceComponents):
    """Largest root modulus of the characteristic cubic (companion-matrix eigenvalues)."""
    c2, c1, c0 = np.broadcast_arrays(*cubic_coefficients(components))
    C = np.zeros(c2.shape + (3, 3))
    C[..., 0, 0], C[..., 0, 1], C[..., 0, 2] = -c2, -c1, -c0
    C[..., 1, 0] = 1.0
    C[..., 2, 1] = 1.0
    finite = np.isfinite(C).all(axis=(-2, -1))
    out = np.full(c2.shape, np.nan)
    if np.any(finite):
        out[finite] = np.abs(np.linalg.eigvals(C[finite])).max(axis=-1)
    return out if out.ndim else float(out)


def gamma_zJ(R: StabilityFunction, update_type, z, J: int, n0: int = N0):
    """``gamma(z, J)`` on an array of ``z``; NaN where the analysis does not apply."""
    update_type = UpdateType.parse(update_type)
    etas, valid = _etas(R, update_type, z, J)
    vals = np.asarray(gamma_of_zJ(gamma_components(etas, n0)), dtype=float)
    vals = np.where(valid & np.isfinite(vals), vals, np.nan)
    return vals if vals.ndim else float(vals)


def gamma_dagger(
    R: StabilityFunction,
    update_type,
    J: int,
    points: int = Z_POINTS,
    z_range: tuple[float, float] | None = None,
    n0: int = N0,
) -> ConvergenceFactor:
    """Supremum of ``gamma(z, J)`` over a log grid in ``z`` with golden-section refinement."""
    update_type = UpdateType.parse(update_type)
    if J < 2:
        raise ValueError("J must be >= 2")
    lo, hi = z_range or (Z_RANGE[0], EXACT_Z_MAX if R.kind is CPKind.EXACT else Z_RANGE[1])
    grid = np.logspace(np.log10(lo), np.log10(hi), points)
    vals = np.asarray(gamma_zJ(R, update_type, grid, J, n0))
    ok = np.isfinite(vals)
    if not ok.any():
        raise ValueError(f"no admissible z for {R.kind.value}, {update_type.name}, J={J}")
    partial = not ok.all()
    if partial:
        log.warning("%s %s J=%d: %d of %d z points skipped (R not positive)",
                    R.kind.value, update_type.name, J, int((~ok).sum()), points)
    filled = np.where(ok, vals, -np.inf)
    i = int(np.argmax(filled))
    z_star, best = float(grid[i]), float(filled[i])
    # refine between the neighbours of the grid maximum
    left, right = max(i - 1, 0), min(i + 1, points - 1)
    if ok[left] and ok[right] and left < i < right:
        f = lambda t: -np.nan_to_num(gamma_zJ(R, update_type, np.exp(t), J, n0), nan=-np.inf)
        res = minimize_scalar(
            f, bracket=(np.log(grid[left]), np.log(grid[i]), np.log(grid[right])),
            method="golden", tol=REFINE_TOL,
        )
        if -res.fun > best and np.log(grid[left]) <= res.x <= np.log(grid[right]):
            z_star, best = float(np.exp(res.x)), float(-res.fun)
    return ConvergenceFactor(J, update_type, R.kind, 2, best, z_star, partial)


def decay_curve(R: StabilityFunction, update_type, J_list, points: int = Z_POINTS):
    """Gap ``|gamma_dagger(J) - gamma_lin^2|`` for each ``J`` in ``J_list``."""
    glin = gamma_lin(R).gamma_lin if R.kind is not CPKind.EXACT else 0.0
    target = glin**2
    return [(int(J), abs(gamma_dagger(R, update_type, int(J), points).value - target)) for J in J_list]


def table1(points: int = Z_POINTS) -> dict[CPKind, dict[UpdateType, list[ConvergenceFactor]]]:
    """``gamma_dagger`` for every catalog CP x update type x J of the reference table."""
    out: dict[CPKind, dict[UpdateType, list[ConvergenceFactor]]] = {}
    for kind in TABLE1_CPS:
        R = make_stability(kind)
        out[kind] = {
            ut: [gamma_dagger(R, ut, J, points) for J in TABLE1_J] for ut in UpdateType
        }
    return out
