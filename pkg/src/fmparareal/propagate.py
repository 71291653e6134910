"""Vector propagators on the finite element space.

The semidiscrete problem is ``M u' + K u = M r(u) + b(t)`` with the reaction
``r(u) = c_L u (1 - u)`` taken nodally and ``b`` the Galerkin load.  Batched
state has shape ``(W, m)``; histories have shape ``(q, W, m)``, oldest first.
"""

from __future__ import annotations

import enum
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from fmparareal.bdf import bdf_alpha
from fmparareal.spatial import Mesh1D, load_vector, solve_shifted, solve_tridiagonal
from fmparareal.stability import CPKind, StabilityFunction, make_stability

__all__ = [
    "ProblemKind",
    "ProblemSpec",
    "CoarseFamily",
    "WindowResult",
    "NewtonError",
    "apply_filter",
    "fine_window",
    "coarse_thetas",
    "coarse_step",
    "coarse_step_linear",
    "coarse_step_nonlinear",
    "lobatto_step",
    "mixed_start",
    "mixed_window",
    "LOBATTO",
]

NEWTON_TOL = 1e-12
NEWTON_MAXIT = 50
IMAG_TOL = 1e-10


class ProblemKind(enum.Enum):
    LinearHeat = "LinearHeat"
    FisherKPP = "FisherKPP"


class NewtonError(RuntimeError):
    def __init__(self, iterations: int, residual: float):
        super().__init__(f"Newton failed to converge after {iterations} iterations (residual {residual:.3e})")
        self.iterations = iterations
        self.residual = residual


@dataclass
class ProblemSpec:
    """Semidiscrete problem data.  ``forcing(x, t)`` is a pointwise source or ``None``."""

    mesh: Mesh1D
    kind: ProblemKind
    u0: np.ndarray
    T: float
    c_L: float = 0.0
    forcing: Callable | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    def __post_init__(self):
        self.u0 = np.asarray(self.u0, dtype=float)
        if self.u0.shape != (self.mesh.m,):
            raise ValueError("u0 length must equal the number of interior nodes")
        # a semilinear problem with c_L = 0 is allowed so both code paths can be compared
        if self.kind is ProblemKind.LinearHeat and self.c_L != 0.0:
            raise ValueError("c_L must vanish for the linear heat problem")

    @property
    def nonlinear(self) -> bool:
        return self.kind is ProblemKind.FisherKPP

    def load(self, t) -> np.ndarray:
        """Load vector ``b(t)``; cached per time so repeated calls agree bitwise."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        m = self.mesh.m
        if self.forcing is None:
            return np.zeros(t.shape + (m,))
        missing = sorted({float(s) for s in t.ravel()} - self._cache.keys())
        if missing:
            vals = load_vector(self.mesh, self.forcing, np.array(missing))
            with self._lock:
                for s, v in zip(missing, vals):
                    self._cache.setdefault(s, v)
        return np.stack([self._cache[float(s)] for s in t.ravel()]).reshape(t.shape + (m,))

    def reaction(self, u):
        return self.c_L * u * (1.0 - u)

    def reaction_prime(self, u):
        return self.c_L * (1.0 - 2.0 * u)


@dataclass(frozen=True)
class CoarseFamily:
    R: StabilityFunction
    update_type: int  # 1 or 2
    coarse_step: float
    fine_step: float
    q: int

    def __post_init__(self):
        J = self.coarse_step / self.fine_step
        if abs(J - round(J)) > 1e-9 * J or round(J) < self.q:
            raise ValueError("coarse step must be J * fine step with integer J >= q")

    @property
    def J(self) -> int:
        return int(round(self.coarse_step / self.fine_step))


@dataclass(frozen=True)
class WindowResult:
    """Last ``q`` fine values of a window (oldest first), shape ``(q, W, m)``."""

    endpoint_values: np.ndarray


# ---------------------------------------------------------------- helpers

def _mass_solve(mesh: Mesh1D, v):
    return solve_shifted(mesh, 0.0, v)


def _dual_norm(mesh: Mesh1D, F: np.ndarray) -> np.ndarray:
    """``sqrt(F^T M^{-1} F)`` per row: the M-norm of the nodal residual."""
    y = _mass_solve(mesh, F)
    return np.sqrt(np.maximum(np.sum(F * y, axis=-1), 0.0))


def _term_size(mesh: Mesh1D, a0, theta, U, r):
    # componentwise size of a0 M U + theta (K U - M r), the roundoff scale of the residual
    aU, ar = np.abs(U), np.abs(r)
    absK = _abs_tri(mesh.stiff_diag, mesh.stiff_off, aU)
    return a0 * mesh.mass_apply(aU) + np.abs(theta) * (absK + mesh.mass_apply(ar))


def _abs_tri(d, e, v):
    out = abs(d) * v
    out[..., 1:] += abs(e) * v[..., :-1]
    out[..., :-1] += abs(e) * v[..., 1:]
    return out


def _implicit_solve(problem: ProblemSpec, a0: float, theta, rhs: np.ndarray, guess: np.ndarray) -> np.ndarray:
    """Solve ``a0 M U + theta (K U - M r(U)) = rhs`` row-wise; ``theta`` scalar or per row."""
    mesh = problem.mesh
    theta = np.asarray(theta, dtype=float)
    th = theta[:, None] if theta.ndim == 1 else theta
    alpha = th / a0
    if not problem.nonlinear:
        return solve_shifted(mesh, alpha, rhs / a0)
    Md, Mo = mesh.mass_diag, mesh.mass_off
    Kd, Ko = mesh.stiff_diag, mesh.stiff_off
    U = np.array(guess, dtype=float, copy=True)
    active = np.ones(U.shape[0], dtype=bool)
    th_rows = np.broadcast_to(th, (U.shape[0], 1))
    res = np.full(U.shape[0], np.inf)
    for it in range(NEWTON_MAXIT + 1):
        Ua, tha = U[active], th_rows[active]
        F = a0 * mesh.mass_apply(Ua) + tha * (mesh.stiff_apply(Ua) - mesh.mass_apply(problem.reaction(Ua))) - rhs[active]
        res_a = _dual_norm(mesh, F)
        res[active] = res_a
        scale = 1.0 + _dual_norm(mesh, np.abs(rhs[active]) + _term_size(mesh, a0, tha, Ua, problem.reaction(Ua)))
        done = res_a <= NEWTON_TOL * scale
        idx = np.flatnonzero(active)
        active[idx[done]] = False
        if not active.any():
            return U
        if it == NEWTON_MAXIT:
            break
        keep = ~done
        Ua, tha, F = Ua[keep], tha[keep], F[keep]
        w = problem.reaction_prime(Ua)
        # Jacobian a0 M + theta K - theta M diag(w): column j carries w_j
        diag = a0 * Md + tha * (Kd - Md * w)
        sub = np.empty_like(diag)
        sup = np.empty_like(diag)
        sub[:, 1:] = a0 * Mo + tha * (Ko - Mo * w[:, :-1])
        sup[:, :-1] = a0 * Mo + tha * (Ko - Mo * w[:, 1:])
        sub[:, 0] = 0.0
        sup[:, -1] = 0.0
        U[idx[keep]] = Ua - solve_tridiagonal(sub, diag, sup, F)
    worst = int(np.argmax(np.where(active, res, -np.inf)))
    raise NewtonError(NEWTON_MAXIT, float(res[worst]))


# ---------------------------------------------------------------- fine propagator

def _bdf_steps(problem: ProblemSpec, q: int, tau: float, history: np.ndarray, t_start: np.ndarray,
               first: int, last: int) -> np.ndarray:
    """BDF-q steps ``first..last`` (step ``j`` lands at ``t_start + j tau``); returns the final window."""
    alpha = bdf_alpha(q).alpha
    mesh = problem.mesh
    window = [history[s] for s in range(q)]  # oldest first
    for j in range(first, last + 1):
        t_new = t_start + j * tau
        acc = alpha[1] * window[-1]
        for k in range(2, q + 1):
            acc = acc + alpha[k] * window[-k]
        rhs = -mesh.mass_apply(acc)
        if problem.forcing is not None:
            rhs = rhs + tau * problem.load(t_new)
        new = _implicit_solve(problem, alpha[0], tau, rhs, window[-1])
        window = window[1:] + [new]
    return np.stack(window)


def _batched(history, t_start):
    history = np.asarray(history, dtype=float)
    single = history.ndim == 2
    if single:
        history = history[:, None, :]
    t_start = np.broadcast_to(np.asarray(t_start, dtype=float), (history.shape[1],)).copy()
    return history, t_start, single


def _run_chunks(fn, W: int, workers: int):
    """Evaluate ``fn(slice)`` over row chunks, optionally on a thread pool."""
    workers = max(1, min(int(workers), W))
    if workers == 1:
        return fn(slice(0, W))
    bounds = np.linspace(0, W, workers + 1).astype(int)
    parts = [slice(a, b) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
    with ThreadPoolExecutor(max_workers=len(parts)) as pool:
        outs = list(pool.map(fn, parts))
    return np.concatenate(outs, axis=1)


def fine_window(problem: ProblemSpec, q: int, tau: float, J: int, history, t_start, workers: int = 1) -> WindowResult:
    """``J`` BDF-q steps from ``q`` history values ending at ``t_start``."""
    if J < 1:
        raise ValueError("J must be >= 1")
    history, t_start, single = _batched(history, t_start)
    if history.shape[0] != q:
        raise ValueError(f"expected {q} history values, got {history.shape[0]}")
    out = _run_chunks(lambda s: _bdf_steps(problem, q, tau, history[:, s], t_start[s], 1, J),
                      history.shape[1], workers)
    return WindowResult(out[:, 0] if single else out)


# ---------------------------------------------------------------- Lobatto IIIC

@dataclass(frozen=True)
class _Tableau:
    A: np.ndarray
    c: np.ndarray


LOBATTO = {
    2: _Tableau(np.array([[0.5, -0.5], [0.5, 0.5]]), np.array([0.0, 1.0])),
    3: _Tableau(
        np.array([[1 / 6, -1 / 3, 1 / 6], [1 / 6, 5 / 12, -1 / 12], [1 / 6, 2 / 3, 1 / 6]]),
        np.array([0.0, 0.5, 1.0]),
    ),
}


def _sparse_ops(mesh: Mesh1D):
    m = mesh.m
    ones = np.ones(m - 1)
    M = sp.diags([mesh.mass_off * ones, mesh.mass_diag * np.ones(m), mesh.mass_off * ones], [-1, 0, 1], format="csc")
    K = sp.diags([mesh.stiff_off * ones, mesh.stiff_diag * np.ones(m), mesh.stiff_off * ones], [-1, 0, 1], format="csc")
    return M, K


def _stacked_dual_norm(mesh: Mesh1D, F: np.ndarray, s: int) -> float:
    return float(np.sqrt(np.sum(_dual_norm(mesh, F.reshape(s, mesh.m)) ** 2)))


def lobatto_step(problem: ProblemSpec, stages: int, theta: float, u: np.ndarray, t: float) -> np.ndarray:
    """One Lobatto IIIC step of size ``theta`` for a single state vector (stiffly accurate)."""
    tab = LOBATTO[stages]
    mesh = problem.mesh
    s, m = stages, mesh.m
    M, K = _sparse_ops(mesh)
    Mu = mesh.mass_apply(u)
    loads = problem.load(t + tab.c * theta) if problem.forcing is not None else np.zeros((s, m))
    # stage equations: M Y_i - M u - theta sum_j a_ij (M r(Y_j) - K Y_j + b_j) = 0
    base = np.concatenate([Mu + theta * (tab.A @ loads)[i] for i in range(s)])
    Y = np.tile(u, s)
    res = np.inf
    for it in range(NEWTON_MAXIT + 1):
        Ys = Y.reshape(s, m)
        fstage = np.stack([mesh.mass_apply(problem.reaction(Ys[j])) - mesh.stiff_apply(Ys[j]) for j in range(s)])
        F = np.concatenate([mesh.mass_apply(Ys[i]) - theta * (tab.A[i] @ fstage) for i in range(s)]) - base
        res = _stacked_dual_norm(mesh, F, s)
        size = np.concatenate([
            np.abs(base[i * m:(i + 1) * m])
            + sum(_term_size(mesh, float(i == j), theta * abs(tab.A[i, j]), Ys[j], problem.reaction(Ys[j]))
                  for j in range(s))
            for i in range(s)
        ])
        scale = 1.0 + _stacked_dual_norm(mesh, size, s)
        if res <= NEWTON_TOL * scale:
            return Ys[-1].copy()
        if it == NEWTON_MAXIT:
            break
        blocks = []
        for i in range(s):
            row = []
            for j in range(s):
                Jj = K - M @ sp.diags(problem.reaction_prime(Ys[j])) if problem.nonlinear else K
                blk = theta * tab.A[i, j] * Jj
                row.append(M + blk if i == j else blk)
            blocks.append(row)
        Jac = sp.bmat(blocks, format="csc")
        Y = Y - splu(Jac).solve(F)
    raise NewtonError(NEWTON_MAXIT, res)


def mixed_start(problem: ProblemSpec, q: int, tau: float, u0: np.ndarray, t0: float) -> np.ndarray:
    """``q - 1`` starting values at ``t0 + tau, ..., t0 + (q-1) tau`` by Lobatto IIIC steps."""
    stages = {2: 2, 4: 3}.get(q)
    if stages is None:
        raise ValueError("mixed start is defined for q in {2, 4}")
    vals = []
    u = np.asarray(u0, dtype=float)
    for j in range(q - 1):
        u = lobatto_step(problem, stages, tau, u, t0 + j * tau)
        vals.append(u)
    return np.stack(vals)


def mixed_window(problem: ProblemSpec, q: int, tau: float, J: int, u_start, t_start, workers: int = 1) -> WindowResult:
    """Single-step mixed fine propagator: Lobatto start-up then BDF-q to the window end."""
    if J < q:
        raise ValueError("mixed window needs J >= q")
    u_start = np.asarray(u_start, dtype=float)
    single = u_start.ndim == 1
    U = u_start[None] if single else u_start
    ts = np.broadcast_to(np.asarray(t_start, dtype=float), (U.shape[0],))

    def work(sl):
        hist = np.stack([np.concatenate([U[w][None], mixed_start(problem, q, tau, U[w], ts[w])]) for w in range(sl.start, sl.stop)], axis=1)
        return _bdf_steps(problem, q, tau, hist, ts[sl], q, J)

    out = _run_chunks(work, U.shape[0], workers)
    return WindowResult(out[:, 0] if single else out)


# ---------------------------------------------------------------- rational filters and coarse steps

def apply_filter(mesh: Mesh1D, R: StabilityFunction, theta, v: np.ndarray) -> np.ndarray:
    """``R(theta A) v`` with ``A = M^{-1} K`` via shifted solves; ``theta`` scalar or per row."""
    if not R.is_rational:
        raise ValueError("the exact propagator has no rational filter")
    theta = np.asarray(theta, dtype=float)
    th = theta / R.repeat
    v = np.asarray(v, dtype=float)
    y = v.astype(complex)
    nums = list(R.numerator_roots)
    for _ in range(R.repeat):
        for k, rho in enumerate(R.denominator_roots):
            z = solve_shifted(mesh, -th / rho, mesh.mass_apply(y))
            if k < len(nums):
                ratio = rho / nums[k]
                z = z + ratio * (y - z)
            y = z
    scale = max(float(np.abs(y.real).max(initial=0.0)), np.finfo(float).tiny)
    if np.abs(y.imag).max(initial=0.0) > IMAG_TOL * scale:
        raise ArithmeticError("rational filter left a non-negligible imaginary part")
    return y.real


def coarse_thetas(family: CoarseFamily) -> np.ndarray:
    """Step lengths of ``G_1 .. G_q``."""
    i = np.arange(family.q)
    if int(family.update_type) == 1:
        return np.full(family.q, family.coarse_step)
    return family.coarse_step - i * family.fine_step


def _liiic2_linear(problem: ProblemSpec, R: StabilityFunction, theta: np.ndarray, u: np.ndarray, t: float) -> np.ndarray:
    # stiffly accurate two-stage step: R(Z)[u + th/2 g(t) + th/2 (I + Z) g(t + th)], g = M^{-1} b
    mesh = problem.mesh
    one = make_stability(CPKind.LIIIC2)
    th = theta[:, None]
    if problem.forcing is None:
        return apply_filter(mesh, one, theta, u)
    g0 = _mass_solve(mesh, problem.load(np.full(len(theta), t)))
    g1 = _mass_solve(mesh, problem.load(t + theta))
    Zg1 = th * _mass_solve(mesh, mesh.stiff_apply(g1))
    return apply_filter(mesh, one, theta, u + 0.5 * th * g0 + 0.5 * th * (g1 + Zg1))


def _check_cp(R: StabilityFunction):
    if not R.is_rational:
        raise ValueError("the exact coarse propagator is analysis-only and cannot be run")


def coarse_step(problem: ProblemSpec, family: CoarseFamily, u: np.ndarray, t: float) -> np.ndarray:
    """``G_1(u) .. G_q(u)`` from time ``t``, shape ``(q, m)``."""
    R = family.R
    _check_cp(R)
    theta = coarse_thetas(family)
    u = np.asarray(u, dtype=float)
    U = np.broadcast_to(u, (family.q, u.size)).copy()
    mesh = problem.mesh
    kind = R.kind
    if problem.nonlinear:
        if kind is CPKind.BE:
            rhs = mesh.mass_apply(U) + theta[:, None] * problem.load(t + theta)
            return _implicit_solve(problem, 1.0, theta, rhs, U)
        if kind in (CPKind.LIIIC2, CPKind.LIIIC2x2):
            reps = 2 if kind is CPKind.LIIIC2x2 else 1
            out = []
            for row, th in zip(U, theta):
                h = th / reps
                for r in range(reps):
                    row = lobatto_step(problem, 2, h, row, t + r * h)
                out.append(row)
            return np.stack(out)
        # OCP: reaction and load frozen at the step start, filtered through R
        g = _mass_solve(mesh, problem.load(np.full(family.q, t)))
        return apply_filter(mesh, R, theta, U + theta[:, None] * (problem.reaction(U) + g))
    if kind is CPKind.BE:
        rhs = mesh.mass_apply(U) + theta[:, None] * problem.load(t + theta)
        return solve_shifted(mesh, theta, rhs)
    if kind is CPKind.LIIIC2:
        return _liiic2_linear(problem, R, theta, U, t)
    if kind is CPKind.LIIIC2x2:
        half = theta / 2
        V = _liiic2_linear(problem, R, half, U, t)
        return np.stack([_liiic2_linear(problem, R, half[i:i + 1], V[i:i + 1], t + half[i])[0]
                         for i in range(family.q)])
    g = _mass_solve(mesh, problem.load(np.full(family.q, t)))
    return apply_filter(mesh, R, theta, U + theta[:, None] * g)


def _single_slot(family: CoarseFamily, i: int) -> CoarseFamily:
    if not 1 <= i <= family.q:
        raise ValueError(f"slot index must lie in 1..{family.q}")
    return family


def coarse_step_linear(problem: ProblemSpec, family: CoarseFamily, i: int, u, t: float) -> np.ndarray:
    """``G_i(u)`` for the linear problem."""
    if problem.nonlinear:
        raise ValueError("coarse_step_linear needs a linear problem")
    _single_slot(family, i)
    return coarse_step(problem, family, u, t)[i - 1]


def coarse_step_nonlinear(problem: ProblemSpec, family: CoarseFamily, i: int, u, t: float) -> np.ndarray:
    """``G_i(u)`` for the semilinear problem."""
    if not problem.nonlinear:
        raise ValueError("coarse_step_nonlinear needs the semilinear problem")
    _single_slot(family, i)
    return coarse_step(problem, family, u, t)[i - 1]
