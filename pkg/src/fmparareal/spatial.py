"""Piecewise-linear finite elements for ``-u''`` on an interval with zero Dirichlet data.

Nodal vectors hold the ``m`` interior coefficients.  Batched data use shape
``(W, m)``: one row per time window or time level, each row independent.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numba import njit

__all__ = [
    "Mesh1D",
    "Indicator",
    "SingularShiftError",
    "build_mesh",
    "solve_shifted",
    "solve_tridiagonal",
    "l2_norm",
    "project_initial",
    "load_vector",
    "discrete_eigenvalue",
    "eigenvector",
]

PIVOT_TOL = 1e-14

# 3-point Gauss-Legendre on [0, 1]
_GAUSS_X = 0.5 + 0.5 * np.array([-np.sqrt(0.6), 0.0, np.sqrt(0.6)])
_GAUSS_W = np.array([5.0, 8.0, 5.0]) / 18.0


class SingularShiftError(ArithmeticError):
    """Raised when tridiagonal elimination meets a vanishing pivot."""


@njit(cache=True, nogil=True)
def _thomas(sub, diag, sup, rhs, out):
    # rows are independent systems; sub[:, 0] and sup[:, -1] are ignored
    W, m = rhs.shape
    cp = np.empty(m, dtype=out.dtype)
    smallest = np.inf
    for w in range(W):
        piv = diag[w, 0]
        if abs(piv) < smallest:
            smallest = abs(piv)
        if piv == 0:
            return 0.0
        cp[0] = sup[w, 0] / piv
        out[w, 0] = rhs[w, 0] / piv
        for j in range(1, m):
            piv = diag[w, j] - sub[w, j] * cp[j - 1]
            if abs(piv) < smallest:
                smallest = abs(piv)
            if piv == 0:
                return 0.0
            cp[j] = sup[w, j] / piv
            out[w, j] = (rhs[w, j] - sub[w, j] * out[w, j - 1]) / piv
        for j in range(m - 2, -1, -1):
            out[w, j] -= cp[j] * out[w, j + 1]
    return smallest


@dataclass(frozen=True)
class Mesh1D:
    """Uniform mesh of ``(a, b)`` with ``m`` interior nodes."""

    m: int
    a: float = 0.0
    b: float = 1.0
    h: float = field(init=False)

    def __post_init__(self):
        if self.m < 2:
            raise ValueError(f"need at least 2 interior nodes, got m={self.m}")
        if not self.b > self.a:
            raise ValueError("interval must satisfy a < b")
        object.__setattr__(self, "h", (self.b - self.a) / (self.m + 1))

    @property
    def nodes(self) -> np.ndarray:
        return self.a + self.h * np.arange(1, self.m + 1)

    @property
    def mass_diag(self) -> float:
        return 2.0 * self.h / 3.0

    @property
    def mass_off(self) -> float:
        return self.h / 6.0

    @property
    def stiff_diag(self) -> float:
        return 2.0 / self.h

    @property
    def stiff_off(self) -> float:
        return -1.0 / self.h

    def mass_apply(self, v: np.ndarray) -> np.ndarray:
        return _tri_apply(self.mass_diag, self.mass_off, v)

    def stiff_apply(self, v: np.ndarray) -> np.ndarray:
        return _tri_apply(self.stiff_diag, self.stiff_off, v)

    def dense_mass(self) -> np.ndarray:
        return _dense(self.m, self.mass_diag, self.mass_off)

    def dense_stiffness(self) -> np.ndarray:
        return _dense(self.m, self.stiff_diag, self.stiff_off)


def _tri_apply(d, e, v: np.ndarray) -> np.ndarray:
    """Multiply the symmetric Toeplitz tridiagonal ``(e, d, e)`` along the last axis."""
    out = d * v
    out[..., 1:] += e * v[..., :-1]
    out[..., :-1] += e * v[..., 1:]
    return out


def _dense(m: int, d: float, e: float) -> np.ndarray:
    return d * np.eye(m) + e * (np.eye(m, k=1) + np.eye(m, k=-1))


def build_mesh(m: int, a: float = 0.0, b: float = 1.0) -> Mesh1D:
    return Mesh1D(int(m), float(a), float(b))


def solve_tridiagonal(sub, diag, sup, rhs) -> np.ndarray:
    """Solve tridiagonal systems row by row (no pivoting).

    ``rhs`` has shape ``(m,)`` or ``(W, m)``; the coefficient bands broadcast
    against it.  ``sub[..., j]`` multiplies unknown ``j-1`` in row ``j`` and
    ``sup[..., j]`` multiplies unknown ``j+1``.
    """
    rhs = np.asarray(rhs)
    single = rhs.ndim == 1
    R = np.atleast_2d(rhs)
    dtype = np.result_type(R, np.asarray(sub), np.asarray(diag), np.asarray(sup), np.float64)
    R = np.ascontiguousarray(R, dtype=dtype)
    bands = [np.ascontiguousarray(np.broadcast_to(np.asarray(x, dtype=dtype), R.shape)) for x in (sub, diag, sup)]
    out = np.empty_like(R)
    smallest = _thomas(bands[0], bands[1], bands[2], R, out)
    if smallest < PIVOT_TOL:
        raise SingularShiftError(f"pivot magnitude {smallest:.3e} below {PIVOT_TOL:g}")
    return out[0] if single else out


def solve_shifted(mesh: Mesh1D, alpha, rhs) -> np.ndarray:
    """Solve ``(M + alpha K) x = rhs``; ``alpha`` may be complex or one value per row."""
    rhs = np.asarray(rhs)
    alpha = np.asarray(alpha)
    if alpha.ndim == 1 and rhs.ndim == 2:
        alpha = alpha[:, None]
    d = mesh.mass_diag + alpha * mesh.stiff_diag
    e = mesh.mass_off + alpha * mesh.stiff_off
    return solve_tridiagonal(e, d, e, rhs)


def l2_norm(mesh: Mesh1D, v) -> float | np.ndarray:
    """``sqrt(v^T M v)`` along the last axis."""
    v = np.asarray(v, dtype=float)
    val = np.sum(v * mesh.mass_apply(v), axis=-1)
    return np.sqrt(np.maximum(val, 0.0))


@dataclass(frozen=True)
class Indicator:
    """Characteristic function of ``(lo, hi)``; integrated exactly."""

    lo: float
    hi: float

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return ((x > self.lo) & (x < self.hi)).astype(float)


def _hat_integrals_indicator(mesh: Mesh1D, ind: Indicator) -> np.ndarray:
    # on element [x_k, x_k + h] the two local shape functions are 1 - s and s
    # with s = (x - x_k)/h; integrate them over the clipped interval
    h = mesh.h
    left = mesh.a + h * np.arange(mesh.m + 1)
    s0 = np.clip((ind.lo - left) / h, 0.0, 1.0)
    s1 = np.clip((ind.hi - left) / h, 0.0, 1.0)
    right_int = h * 0.5 * (s1**2 - s0**2)       # int s
    left_int = h * (s1 - s0) - right_int        # int (1 - s)
    b = np.zeros(mesh.m)
    b += right_int[:-1]   # node j+1 is the right end of element j
    b += left_int[1:]     # and the left end of element j+1
    return b


def _hat_integrals_gauss(mesh: Mesh1D, f: Callable, *args) -> np.ndarray:
    h = mesh.h
    left = mesh.a + h * np.arange(mesh.m + 1)
    x = left[:, None] + h * _GAUSS_X[None, :]             # (m+1, 3)
    fx = np.asarray(f(x, *args), dtype=float)
    fx = np.broadcast_to(fx, fx.shape[:-2] + x.shape)
    wl = h * _GAUSS_W * (1.0 - _GAUSS_X)
    wr = h * _GAUSS_W * _GAUSS_X
    # explicit sums keep each row bitwise independent of the batch shape
    li = fx[..., 0] * wl[0] + fx[..., 1] * wl[1] + fx[..., 2] * wl[2]
    ri = fx[..., 0] * wr[0] + fx[..., 1] * wr[1] + fx[..., 2] * wr[2]
    return ri[..., :-1] + li[..., 1:]


def project_initial(mesh: Mesh1D, f: Callable | Indicator) -> np.ndarray:
    """L2 projection onto the finite element space."""
    if isinstance(f, Indicator):
        b = _hat_integrals_indicator(mesh, f)
    else:
        b = _hat_integrals_gauss(mesh, f)
    return solve_shifted(mesh, 0.0, b)


def load_vector(mesh: Mesh1D, f: Callable, t) -> np.ndarray:
    """Load ``b_j(t) = int f(x, t) phi_j dx``; ``t`` scalar gives ``(m,)``, an array gives ``t.shape + (m,)``."""
    t = np.asarray(t, dtype=float)
    tt = t[..., None, None]
    return _hat_integrals_gauss(mesh, lambda x, s: f(x, s), tt)


def discrete_eigenvalue(mesh: Mesh1D, p) -> float | np.ndarray:
    """Generalized eigenvalue ``lambda_p^h`` of ``K phi = lambda M phi``."""
    c = np.cos(np.asarray(p) * np.pi * mesh.h / (mesh.b - mesh.a))
    return 6.0 / mesh.h**2 * (1.0 - c) / (2.0 + c)


def eigenvector(mesh: Mesh1D, p: int) -> np.ndarray:
    return np.sin(p * np.pi * (mesh.nodes - mesh.a) / (mesh.b - mesh.a))
