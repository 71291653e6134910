"""Scalar BDF machinery: method coefficients and window transfer coefficients.

For the test equation ``u' = -lambda u`` and ``z = tau * lambda``, a BDF-q
window maps q starting values ``u_0 .. u_{q-1}`` (oldest first) to the value
``n`` steps after the newest one:

    U^(n) = sum_s F_{s+1}^(n)(z) u_s
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import comb

import numpy as np

__all__ = [
    "BdfCoefficients",
    "TransferCoefficients",
    "bdf_alpha",
    "transfer_coeffs",
    "transfer_history",
    "transfer_pair",
    "bdf2_roots",
    "bdf2_transfer_closed",
]

MAX_ORDER = 6


@dataclass(frozen=True)
class BdfCoefficients:
    q: int
    alpha: tuple[float, ...]


@dataclass(frozen=True)
class TransferCoefficients:
    q: int
    z: float | np.ndarray
    n: int
    F: np.ndarray  # shape (q,) + shape(z)


def _alpha_exact(q: int) -> list[Fraction]:
    coef = [Fraction(0)] * (q + 1)
    for j in range(1, q + 1):
        # (1 - zeta)^j / j
        for k in range(j + 1):
            coef[k] += Fraction((-1) ** k * comb(j, k), j)
    return coef


def bdf_alpha(q: int) -> BdfCoefficients:
    """Coefficients ``alpha_0..alpha_q`` of ``sum_{j=1}^q (1/j)(1 - zeta)^j``."""
    if not 1 <= q <= MAX_ORDER:
        raise ValueError(f"BDF order must lie in 1..{MAX_ORDER}, got {q}")
    return BdfCoefficients(q, tuple(float(a) for a in _alpha_exact(q)))


def _run_recursion(q: int, z, n: int, keep: int) -> np.ndarray:
    """Run ``n`` homogeneous BDF-q steps from each unit start vector.

    Returns the last ``keep`` transfer-coefficient rows, shape
    ``(keep, q) + shape(z)``, ordered from ``F^(n-keep+1)`` to ``F^(n)``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    z = np.asarray(z, dtype=float)
    if np.any(z < 0):
        raise ValueError("z must be nonnegative")
    alpha = bdf_alpha(q).alpha
    inv = 1.0 / (alpha[0] + z)
    # window[j] is the value j steps back from the newest; unit start data e_s
    window = np.zeros((q, q) + z.shape)
    for s in range(q):
        window[q - 1 - s, s] = 1.0
    keep = min(keep, n)
    out = np.empty((keep, q) + z.shape)
    for k in range(n):
        acc = alpha[1] * window[0]
        for j in range(2, q + 1):
            acc = acc + alpha[j] * window[j - 1]
        new = -acc * inv
        window = np.concatenate([new[None], window[:-1]], axis=0)
        slot = k - (n - keep)
        if slot >= 0:
            out[slot] = new
    return out


def transfer_history(q: int, z, n: int) -> np.ndarray:
    """All transfer coefficients ``F^(1) .. F^(n)``.

    Returns an array of shape ``(n, q) + shape(z)``; row ``k`` holds
    ``F_{s+1}^(k+1)(z)`` for ``s = 0..q-1``.
    """
    return _run_recursion(q, z, n, n)


def transfer_pair(q: int, z, n: int) -> tuple[np.ndarray, np.ndarray]:
    """``(F^(n-1), F^(n))`` for ``n >= 2`` without storing the full history."""
    if n < 2:
        raise ValueError("transfer_pair needs n >= 2")
    both = _run_recursion(q, z, n, 2)
    return both[0], both[1]


def transfer_coeffs(q: int, z, n: int) -> TransferCoefficients:
    """Transfer coefficients ``F_{s+1}^(n)(z)`` by running the homogeneous recursion."""
    F = _run_recursion(q, z, n, 1)[0]
    return TransferCoefficients(q, z, n, F)


def bdf2_roots(z):
    """Characteristic roots ``(r1, r2)`` of BDF2 at ``z``; complex for ``z > 1/2``."""
    z = np.asarray(z, dtype=float)
    disc = np.sqrt((1.0 - 2.0 * z).astype(complex))
    r1 = (2.0 + disc) / (3.0 + 2.0 * z)
    r2 = (2.0 - disc) / (3.0 + 2.0 * z)
    if r1.ndim == 0:
        return complex(r1), complex(r2)
    return r1, r2


def bdf2_transfer_closed(z, J: int):
    """Closed-form ``(F_1^(J), F_2^(J))`` for BDF2 from the characteristic roots."""
    if J < 1:
        raise ValueError("J must be >= 1")
    z = np.asarray(z, dtype=float)
    if np.any(np.abs(z - 0.5) < 1e-8):
        raise ValueError("double root at z = 1/2; use transfer_coeffs")
    r1, r2 = bdf2_roots(z)
    r1, r2 = np.asarray(r1), np.asarray(r2)
    d = r1 - r2
    F1 = r1 * r2 * (r2**J - r1**J) / d
    F2 = (r1 ** (J + 1) - r2 ** (J + 1)) / d
    scale = np.maximum(np.abs(F1) + np.abs(F2), np.finfo(float).tiny)
    if np.any(np.abs(F1.imag) + np.abs(F2.imag) > 1e-10 * scale):
        raise ArithmeticError("closed form left a non-negligible imaginary part")
    F1, F2 = F1.real, F2.real
    if F1.ndim == 0:
        return float(F1), float(F2)
    return F1, F2
