import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import fmparareal.propagate as prop
from fmparareal.bdf import transfer_coeffs, transfer_pair
from fmparareal.experiments import CaseId, make_case
from fmparareal.propagate import (
    CoarseFamily,
    NewtonError,
    ProblemKind,
    ProblemSpec,
    apply_filter,
    coarse_step,
    coarse_step_linear,
    coarse_step_nonlinear,
    fine_window,
    lobatto_step,
    mixed_start,
    mixed_window,
)
from fmparareal.spatial import build_mesh, discrete_eigenvalue, eigenvector, solve_shifted
from fmparareal.stability import CPKind, eval_R, make_stability

from oracles import semidiscrete_solution


def heat(m=31, u0=None, forcing=None):
    mesh = build_mesh(m)
    u0 = np.zeros(m) if u0 is None else u0
    return ProblemSpec(mesh, ProblemKind.LinearHeat, u0, 1.0, 0.0, forcing)


def family(cp, ut=2, J=10, tau=0.01, q=2):
    return CoarseFamily(make_stability(cp), ut, J * tau, tau, q)


# ---------------------------------------------------------------- fine propagator

@pytest.mark.parametrize("q", [1, 2, 3, 4])
def test_constant_preserved_without_diffusion(q, monkeypatch):
    # zero-eigenvalue surrogate: stiffness switched off
    mesh = build_mesh(7)
    monkeypatch.setattr(type(mesh), "stiff_diag", property(lambda self: 0.0))
    monkeypatch.setattr(type(mesh), "stiff_off", property(lambda self: 0.0))
    problem = ProblemSpec(mesh, ProblemKind.LinearHeat, np.full(7, 0.3), 1.0)
    out = fine_window(problem, q, 0.1, 13, np.full((q, 7), 0.3), 0.0).endpoint_values
    assert np.allclose(out, 0.3, rtol=0, atol=1e-14)


@pytest.mark.parametrize("p", [1, 4, 17])
@pytest.mark.parametrize("J", [1, 5, 40])
def test_spectral_transfer_oracle(p, J):
    problem = heat(63)
    tau = 0.01
    v = eigenvector(problem.mesh, p)
    c_old, c_new = 0.7, -1.3
    out = fine_window(problem, 2, tau, J, np.stack([c_old * v, c_new * v]), 0.0).endpoint_values
    z = tau * discrete_eigenvalue(problem.mesh, p)
    if J > 1:
        prev, last = transfer_pair(2, z, J)
    else:
        prev, last = np.array([0.0, 1.0]), transfer_coeffs(2, z, 1).F
    want_last = (last[0] * c_old + last[1] * c_new) * v
    want_prev = (prev[0] * c_old + prev[1] * c_new) * v
    assert np.max(np.abs(out[1] - want_last)) < 1e-10
    assert np.max(np.abs(out[0] - want_prev)) < 1e-10


@pytest.mark.parametrize("q,expected", [(2, 4.0), (4, 16.0)])
def test_bdf_order_against_semidiscrete_ode(q, expected):
    case = make_case(CaseId.HeatB, m=31)
    problem = case.problem
    T = 1.0
    sol = semidiscrete_solution(problem, np.array([0.0, T]))
    errs = []
    for n in (160, 320):
        tau = T / n
        hist = np.stack([sol(i * tau) for i in range(q)])
        out = fine_window(problem, q, tau, n - (q - 1), hist, (q - 1) * tau).endpoint_values
        errs.append(np.max(np.abs(out[-1] - sol(T))))
    assert errs[0] / errs[1] == pytest.approx(expected, rel=0.15)


def test_fine_window_validates():
    problem = heat(7)
    with pytest.raises(ValueError):
        fine_window(problem, 2, 0.1, 0, np.zeros((2, 7)), 0.0)
    with pytest.raises(ValueError):
        fine_window(problem, 2, 0.1, 3, np.zeros((3, 7)), 0.0)


def test_fine_window_batched_bitwise():
    case = make_case(CaseId.FKPP1, m=49)
    problem = case.problem
    rng = np.random.default_rng(0)
    hist = 0.5 + 0.1 * rng.standard_normal((2, 4, 49))
    t0 = np.array([0.0, 0.2, 0.4, 0.6])
    full = fine_window(problem, 2, 0.01, 20, hist, t0, workers=3).endpoint_values
    for w in range(4):
        one = fine_window(problem, 2, 0.01, 20, hist[:, w], t0[w]).endpoint_values
        assert np.array_equal(full[:, w], one)


# ---------------------------------------------------------------- linear coarse steps

def test_be_coarse_definition():
    problem = heat(40)
    u = np.random.default_rng(1).standard_normal(40)
    fam = family("BE", ut=2, J=10, tau=0.01)
    for i, theta in ((1, 0.1), (2, 0.09)):
        x = coarse_step_linear(problem, fam, i, u, 0.0)
        A = problem.mesh.dense_mass() + theta * problem.mesh.dense_stiffness()
        assert np.allclose(A @ x, problem.mesh.mass_apply(u), atol=1e-12)


@pytest.mark.parametrize("cp", ["BE", "LIIIC2", "LIIIC2x2", "OCP"])
def test_type_one_slot_independent(cp):
    case = make_case(CaseId.HeatB, m=31)
    fam = family(cp, ut=1, J=8, tau=0.01, q=4)
    G = coarse_step(case.problem, fam, case.problem.u0, 0.3)
    for i in range(1, 4):
        assert np.array_equal(G[i], G[0])


@pytest.mark.parametrize("cp", ["BE", "LIIIC2", "LIIIC2x2", "OCP"])
@pytest.mark.parametrize("ut", [1, 2])
def test_spectral_filter(cp, ut):
    problem = heat(63)
    fam = family(cp, ut=ut, J=10, tau=0.01)
    for p in (1, 6, 30):
        v = eigenvector(problem.mesh, p)
        lam = discrete_eigenvalue(problem.mesh, p)
        for i in (1, 2):
            theta = 0.1 if ut == 1 else 0.1 - (i - 1) * 0.01
            got = coarse_step_linear(problem, fam, i, v, 0.0)
            want = eval_R(make_stability(cp), theta * lam) * v
            assert np.max(np.abs(got - want)) < 1e-10


def test_squared_member_is_two_half_steps():
    mesh = build_mesh(50)
    v = np.random.default_rng(2).standard_normal(50)
    theta = 0.3
    once = apply_filter(mesh, make_stability("LIIIC2x2"), theta, v)
    half = make_stability("LIIIC2")
    twice = apply_filter(mesh, half, theta / 2, apply_filter(mesh, half, theta / 2, v))
    assert np.max(np.abs(once - twice)) < 1e-12 * np.max(np.abs(v))


def test_squared_member_with_forcing_is_two_half_steps():
    case = make_case(CaseId.HeatB, m=31)
    problem = case.problem
    u = problem.u0
    G2 = coarse_step(problem, family("LIIIC2x2", ut=1, J=10, tau=0.01), u, 0.2)[0]
    half = family("LIIIC2", ut=1, J=5, tau=0.01)
    mid = coarse_step(problem, half, u, 0.2)[0]
    assert np.max(np.abs(G2 - coarse_step(problem, half, mid, 0.25)[0])) < 1e-12


def test_liiic2_linear_matches_stage_solver():
    # closed-form linear step against the generic Newton-based Lobatto solver
    case = make_case(CaseId.HeatB, m=31)
    problem = case.problem
    got = coarse_step(problem, family("LIIIC2", ut=1, J=10, tau=0.01), problem.u0, 0.4)[0]
    want = lobatto_step(problem, 2, 0.1, problem.u0, 0.4)
    assert np.max(np.abs(got - want)) < 1e-11


def test_exact_cp_not_runnable():
    problem = heat(7)
    fam = family("Exact")
    with pytest.raises(ValueError):
        coarse_step(problem, fam, np.zeros(7), 0.0)


def test_slot_range_checked():
    problem = heat(7)
    with pytest.raises(ValueError):
        coarse_step_linear(problem, family("BE"), 3, np.zeros(7), 0.0)


def test_family_requires_integer_ratio():
    with pytest.raises(ValueError):
        CoarseFamily(make_stability("BE"), 1, 0.105, 0.01, 2)
    with pytest.raises(ValueError):
        CoarseFamily(make_stability("BE"), 1, 0.01, 0.01, 2)


# ---------------------------------------------------------------- semilinear coarse steps

def semilinear_copy(problem):
    return ProblemSpec(problem.mesh, ProblemKind.FisherKPP, problem.u0, problem.T, 0.0, problem.forcing)


@pytest.mark.parametrize("cp", ["BE", "LIIIC2", "LIIIC2x2", "OCP"])
def test_semilinear_without_reaction_matches_linear(cp):
    case = make_case(CaseId.HeatB, m=31)
    lin = case.problem
    non = semilinear_copy(lin)
    fam = family(cp, ut=2, J=10, tau=0.01)
    for i in (1, 2):
        a = coarse_step_linear(lin, fam, i, lin.u0, 0.5)
        b = coarse_step_nonlinear(non, fam, i, lin.u0, 0.5)
        assert np.max(np.abs(a - b)) < 1e-11


def test_be_scalar_quadratic_oracle():
    # huge elements make K negligible next to M, so each node solves x - u = theta x (1 - x)
    mesh = build_mesh(3, 0.0, 4e6)
    problem = ProblemSpec(mesh, ProblemKind.FisherKPP, np.full(3, 0.5), 1.0, 1.0)
    fam = CoarseFamily(make_stability("BE"), 1, 0.1, 0.05, 2)
    x = coarse_step_nonlinear(problem, fam, 1, problem.u0, 0.0)
    root = (-0.9 + np.sqrt(0.81 + 0.2)) / 0.2
    assert np.allclose(x, root, atol=1e-10)
    assert root == pytest.approx(0.524938, abs=1e-6)


@pytest.mark.parametrize("cp", ["BE", "LIIIC2", "LIIIC2x2", "OCP"])
def test_zero_equilibrium_preserved(cp):
    mesh = build_mesh(21, -1.0, 1.0)
    problem = ProblemSpec(mesh, ProblemKind.FisherKPP, np.zeros(21), 1.0, 4.0)
    G = coarse_step(problem, family(cp, ut=2, J=10, tau=0.01), np.zeros(21), 0.0)
    assert np.all(G == 0.0)


def test_semilinear_validation():
    case = make_case(CaseId.HeatB, m=15)
    with pytest.raises(ValueError):
        coarse_step_nonlinear(case.problem, family("BE"), 1, case.problem.u0, 0.0)
    with pytest.raises(ValueError):
        ProblemSpec(case.problem.mesh, ProblemKind.LinearHeat, case.problem.u0, 1.0, 1.0)
    with pytest.raises(ValueError):
        ProblemSpec(case.problem.mesh, ProblemKind.LinearHeat, np.zeros(3), 1.0)


def test_be_member_satisfies_discrete_equation():
    case = make_case(CaseId.FKPP4, m=99)
    problem = case.problem
    mesh = problem.mesh
    u = case.exact(mesh.nodes, 0.7)
    theta = 0.04
    fam = CoarseFamily(make_stability("BE"), 1, theta, 0.01, 2)
    x = coarse_step_nonlinear(problem, fam, 1, u, 0.7)
    F = mesh.mass_apply(x - u) + theta * (mesh.stiff_apply(x) - mesh.mass_apply(problem.reaction(x))) \
        - theta * problem.load(0.7 + theta)[0]
    assert np.linalg.norm(F) < 1e-11


def test_newton_quadratic_convergence(monkeypatch):
    case = make_case(CaseId.FKPP4, paper_scale=False)
    problem = case.problem
    mesh = problem.mesh
    residuals = []
    real_solve = prop.solve_tridiagonal

    def spy(sub, diag, sup, rhs):
        residuals.append(float(np.sqrt(np.sum(rhs * solve_shifted(mesh, 0.0, rhs)))))
        return real_solve(sub, diag, sup, rhs)

    monkeypatch.setattr(prop, "solve_tridiagonal", spy)
    u = case.exact(mesh.nodes, 1.0)
    fam = CoarseFamily(make_stability("BE"), 1, 0.08, 0.002, 2)
    coarse_step_nonlinear(problem, fam, 1, u, 1.0)
    # residuals entering each Newton solve; the converged one never needs a solve
    r = np.array(residuals)
    assert len(r) >= 3
    assert np.all(r[1:] / r[:-1] ** 2 < 1.0)
    assert r[-1] < 1e-5 * r[0]


def test_newton_failure_reports_iterations():
    # a step this large has no real BE solution for data this negative
    mesh = build_mesh(21, -1.0, 1.0)
    problem = ProblemSpec(mesh, ProblemKind.FisherKPP, np.zeros(21), 1.0, 4.0)
    fam = CoarseFamily(make_stability("BE"), 1, 1.0, 0.5, 2)
    with pytest.raises(NewtonError) as info:
        coarse_step_nonlinear(problem, fam, 1, np.full(21, -3.0), 0.0)
    assert info.value.iterations == prop.NEWTON_MAXIT


# ---------------------------------------------------------------- mixed start

def test_mixed_start_count_and_spectral_value():
    problem = heat(31)
    v = eigenvector(problem.mesh, 2)
    tau = 0.02
    out = mixed_start(problem, 2, tau, v, 0.0)
    assert out.shape == (1, 31)
    want = eval_R(make_stability("LIIIC2"), tau * discrete_eigenvalue(problem.mesh, 2)) * v
    assert np.max(np.abs(out[0] - want)) < 1e-12


def test_mixed_start_q4_order():
    case = make_case(CaseId.HeatB, m=31)
    problem = case.problem
    sol = semidiscrete_solution(problem, np.array([0.0, 0.3]))
    errs = []
    for tau in (0.04, 0.02):
        out = mixed_start(problem, 4, tau, problem.u0, 0.0)
        assert out.shape == (3, 31)
        errs.append(max(np.max(np.abs(out[j] - sol((j + 1) * tau))) for j in range(3)))
    assert errs[0] / errs[1] >= 2**4


def test_mixed_start_rejects_other_orders():
    with pytest.raises(ValueError):
        mixed_start(heat(7), 3, 0.1, np.zeros(7), 0.0)


def test_mixed_window_equals_start_then_bdf():
    case = make_case(CaseId.HeatB, m=31)
    problem = case.problem
    tau, J = 0.01, 12
    got = mixed_window(problem, 2, tau, J, problem.u0, 0.1).endpoint_values
    start = mixed_start(problem, 2, tau, problem.u0, 0.1)
    hist = np.stack([problem.u0, start[0]])
    want = fine_window(problem, 2, tau, J - 1, hist, 0.1 + tau).endpoint_values
    assert np.max(np.abs(got - want)) < 1e-13


@settings(max_examples=25, deadline=None)
@given(st.floats(min_value=1e-3, max_value=0.5), st.integers(min_value=1, max_value=31))
def test_filter_spectral_property(theta, p):
    mesh = build_mesh(31)
    v = eigenvector(mesh, p)
    R = make_stability(CPKind.OCP)
    got = apply_filter(mesh, R, theta, v)
    want = eval_R(R, theta * discrete_eigenvalue(mesh, p)) * v
    assert np.max(np.abs(got - want)) < 1e-10
