"""F-multistep parareal: fine windows in parallel, sequential coarse corrections.

Window states are stored as ``(q, m)`` arrays, oldest first, so that entry
``q - 1 - i`` holds ``U_{n,-i}``.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass

import numpy as np

from fmparareal.convfactor import UpdateType
from fmparareal.propagate import CoarseFamily, ProblemSpec, coarse_step, fine_window, mixed_window
from fmparareal.spatial import l2_norm
from fmparareal.stability import CPKind, make_stability

__all__ = ["FPMode", "InitMode", "PararealConfig", "PararealRun", "initialize", "iterate", "run", "reference"]

log = logging.getLogger(__name__)


class FPMode(enum.Enum):
    PureBDF = "PureBDF"
    MixedRK = "MixedRK"


class InitMode(enum.Enum):
    CoarseSweep = "CoarseSweep"
    ConstantU0 = "ConstantU0"


@dataclass(frozen=True)
class PararealConfig:
    N_c: int
    J: int
    K: int
    q: int = 2
    fp_mode: FPMode = FPMode.PureBDF
    update_type: UpdateType = UpdateType.TypeII
    cp_kind: CPKind = CPKind.LIIIC2
    init_mode: InitMode = InitMode.CoarseSweep
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "update_type", UpdateType.parse(self.update_type))
        object.__setattr__(self, "cp_kind", CPKind.parse(self.cp_kind))
        if self.N_c < 1 or self.K < 0:
            raise ValueError("need N_c >= 1 and K >= 0")
        if self.J < self.q:
            raise ValueError(f"J={self.J} must be at least q={self.q}")
        if self.cp_kind is CPKind.EXACT:
            raise ValueError("the exact coarse propagator cannot be run")
        if self.fp_mode is FPMode.MixedRK and self.q not in (2, 4):
            raise ValueError("the mixed fine propagator supports q in {2, 4}")

    @property
    def N(self) -> int:
        return self.N_c * self.J

    def fine_step(self, T: float) -> float:
        return T / self.N

    def family(self, T: float) -> CoarseFamily:
        tau = self.fine_step(T)
        return CoarseFamily(make_stability(self.cp_kind), int(self.update_type), self.J * tau, tau, self.q)


@dataclass
class PararealRun:
    config: PararealConfig
    iterates: np.ndarray | None   # (K+1, N_c+1, q, m), or None when not stored
    reference: np.ndarray         # (N_c+1, q, m)
    errors: np.ndarray            # (K+1,)
    stagnated: bool = False


@dataclass
class _State:
    U: np.ndarray                  # (N_c+1, q, m)
    G: np.ndarray | None = None    # coarse values at U[n, -1], (N_c, q, m)


def _history(problem: ProblemSpec, q: int) -> np.ndarray:
    # constant history u_{-i} = u0
    return np.broadcast_to(problem.u0, (q, problem.mesh.m)).copy()


def _fine(problem: ProblemSpec, config: PararealConfig, states: np.ndarray, n0: int) -> np.ndarray:
    """Fine propagation of windows ``n0, n0+1, ...`` from ``states`` ``(W, q, m)``; returns ``(W, q, m)``."""
    tau = config.fine_step(problem.T)
    W = states.shape[0]
    t0 = (n0 + np.arange(W)) * config.J * tau
    if config.fp_mode is FPMode.MixedRK:
        out = mixed_window(problem, config.q, tau, config.J, states[:, -1], t0, config.workers)
    else:
        out = fine_window(problem, config.q, tau, config.J, np.swapaxes(states, 0, 1), t0, config.workers)
    return np.swapaxes(out.endpoint_values, 0, 1)


def reference(problem: ProblemSpec, config: PararealConfig) -> np.ndarray:
    """Sequential fine solution at every window boundary, shape ``(N_c+1, q, m)``."""
    ref = np.empty((config.N_c + 1, config.q, problem.mesh.m))
    ref[0] = _history(problem, config.q)
    for n in range(config.N_c):
        ref[n + 1] = _fine(problem, config, ref[n:n + 1], n)[0]
    return ref


def _coarse(problem: ProblemSpec, config: PararealConfig, fam: CoarseFamily, u: np.ndarray, n: int) -> np.ndarray:
    # G_1..G_q from window start n; stored oldest first to line up with the state layout
    return coarse_step(problem, fam, u, n * fam.coarse_step)[::-1]


def initialize(problem: ProblemSpec, config: PararealConfig) -> _State:
    """Iteration-0 state."""
    q, m = config.q, problem.mesh.m
    U = np.empty((config.N_c + 1, q, m))
    U[0] = _history(problem, q)
    if config.init_mode is InitMode.ConstantU0:
        U[1:] = problem.u0
        return _State(U)
    fam = config.family(problem.T)
    for n in range(config.N_c):
        U[n + 1] = _coarse(problem, config, fam, U[n, -1], n)[-1]
    return _State(U)


def iterate(state: _State, problem: ProblemSpec, config: PararealConfig) -> _State:
    """One parareal iteration."""
    fam = config.family(problem.T)
    Uk = state.U
    Nc = config.N_c
    V = _fine(problem, config, Uk[:Nc], 0)
    G_old = state.G
    if G_old is None:
        G_old = np.stack([_coarse(problem, config, fam, Uk[n, -1], n) for n in range(Nc)])
    U = np.empty_like(Uk)
    U[0] = Uk[0]
    G_new = np.empty_like(G_old)
    for n in range(Nc):
        G_new[n] = _coarse(problem, config, fam, U[n, -1], n)
        U[n + 1] = G_new[n] + V[n] - G_old[n]
    return _State(U, G_new)


def run(problem: ProblemSpec, config: PararealConfig, store_iterates: bool = True) -> PararealRun:
    """Reference solve, ``K`` iterations and the error history."""
    ref = reference(problem, config)
    state = initialize(problem, config)
    mesh = problem.mesh
    iterates = np.empty((config.K + 1,) + state.U.shape) if store_iterates else None
    errors = np.empty(config.K + 1)
    for k in range(config.K + 1):
        if k > 0:
            state = iterate(state, problem, config)
        if iterates is not None:
            iterates[k] = state.U
        errors[k] = float(np.max(l2_norm(mesh, state.U[1:, -1] - ref[1:, -1])))
    stagnated = False
    if not problem.nonlinear and config.K >= config.N_c:
        scale = float(np.max(l2_norm(mesh, ref[:, -1])))
        if errors[config.N_c] > 10 * np.finfo(float).eps * max(scale, 1.0) * config.N_c * config.J:
            stagnated = True
            log.warning("errors did not vanish after N_c iterations: %.3e", errors[config.N_c])
    return PararealRun(config, iterates, ref, errors, stagnated)
