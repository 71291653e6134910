import numpy as np
import pytest
import scipy.integrate
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

from fmparareal.spatial import (
    Indicator,
    SingularShiftError,
    build_mesh,
    discrete_eigenvalue,
    eigenvector,
    l2_norm,
    load_vector,
    project_initial,
    solve_shifted,
    solve_tridiagonal,
)


def test_mesh_width():
    assert build_mesh(999).h == pytest.approx(1e-3, rel=1e-14)


def test_small_mesh_entries():
    mesh = build_mesh(3)
    assert mesh.mass_diag == pytest.approx(2 * 0.25 / 3, rel=1e-15)
    assert mesh.mass_off == pytest.approx(0.25 / 6, rel=1e-15)
    assert mesh.stiff_diag == pytest.approx(8.0)
    assert mesh.stiff_off == pytest.approx(-4.0)


@pytest.mark.parametrize("m", [0, 1])
def test_mesh_too_small(m):
    with pytest.raises(ValueError):
        build_mesh(m)


@pytest.mark.parametrize("m", [5, 9, 17])
def test_eigenvalues_match_dense_solver(m):
    mesh = build_mesh(m)
    want = scipy.linalg.eigh(mesh.dense_stiffness(), mesh.dense_mass(), eigvals_only=True)
    got = discrete_eigenvalue(mesh, np.arange(1, m + 1))
    assert np.allclose(np.sort(got), want, rtol=1e-10, atol=0)


@pytest.mark.parametrize("m", [5, 9])
def test_eigenvectors(m):
    mesh = build_mesh(m)
    K, M = mesh.dense_stiffness(), mesh.dense_mass()
    for p in range(1, m + 1):
        v = eigenvector(mesh, p)
        assert np.allclose(K @ v, discrete_eigenvalue(mesh, p) * (M @ v), atol=1e-10)


def test_operators_positive_definite():
    mesh = build_mesh(40)
    assert np.linalg.eigvalsh(mesh.dense_mass()).min() > 0
    assert np.linalg.eigvalsh(mesh.dense_stiffness()).min() > 0


def test_apply_matches_dense():
    mesh = build_mesh(12, -1.0, 1.0)
    v = np.random.default_rng(0).standard_normal(12)
    assert np.allclose(mesh.mass_apply(v), mesh.dense_mass() @ v, atol=1e-15)
    assert np.allclose(mesh.stiff_apply(v), mesh.dense_stiffness() @ v, atol=1e-13)


def test_shifted_zero_inverts_mass():
    mesh = build_mesh(50)
    y = np.random.default_rng(1).standard_normal(50)
    assert np.allclose(solve_shifted(mesh, 0.0, mesh.mass_apply(y)), y, rtol=0, atol=1e-12)


@pytest.mark.parametrize("p", [1, 3, 20])
def test_shifted_eigenvector(p):
    mesh = build_mesh(63)
    alpha = 0.01
    v = eigenvector(mesh, p)
    x = solve_shifted(mesh, alpha, mesh.mass_apply(v))
    assert np.allclose(x, v / (1 + alpha * discrete_eigenvalue(mesh, p)), atol=1e-12)


def test_conjugate_pair_gives_real_output():
    mesh = build_mesh(80)
    v = np.random.default_rng(2).standard_normal(80)
    a = 0.03 + 0.05j
    y = solve_shifted(mesh, a, mesh.mass_apply(v))
    y = solve_shifted(mesh, np.conj(a), mesh.mass_apply(y))
    assert np.max(np.abs(y.imag)) < 1e-10 * np.max(np.abs(y.real))


def test_shifted_residual():
    mesh = build_mesh(200)
    rhs = np.random.default_rng(3).standard_normal(200)
    alpha = 0.002 - 0.001j
    x = solve_shifted(mesh, alpha, rhs)
    A = mesh.dense_mass() + alpha * mesh.dense_stiffness()
    assert np.linalg.norm(A @ x - rhs) <= 1e-12 * np.linalg.norm(rhs)


@pytest.mark.parametrize("alpha", [0.0, 0.01, 0.01 + 0.02j])
def test_shifted_left_inverse_random(alpha):
    rng = np.random.default_rng(4)
    for _ in range(100):
        m = int(rng.integers(2, 200))
        mesh = build_mesh(m)
        v = rng.standard_normal(m)
        b = mesh.mass_apply(v) + alpha * mesh.stiff_apply(v)
        x = solve_shifted(mesh, alpha, b)
        assert np.linalg.norm(x - v) <= 1e-11 * np.linalg.norm(v)


def test_per_row_shift_matches_single():
    mesh = build_mesh(30)
    rng = np.random.default_rng(5)
    rhs = rng.standard_normal((3, 30))
    alpha = np.array([0.0, 0.1, 2.0])
    X = solve_shifted(mesh, alpha, rhs)
    for i in range(3):
        assert np.array_equal(X[i], solve_shifted(mesh, alpha[i], rhs[i]))


def test_singular_pivot_raises():
    with pytest.raises(SingularShiftError):
        solve_tridiagonal(np.ones(3), np.zeros(3), np.ones(3), np.ones(3))


def test_l2_zero():
    assert l2_norm(build_mesh(10), np.zeros(10)) == 0.0


def test_l2_sine():
    mesh = build_mesh(999)
    assert l2_norm(mesh, np.sin(np.pi * mesh.nodes)) == pytest.approx(np.sqrt(0.5), abs=1e-5)


def test_l2_parabola():
    mesh = build_mesh(999)
    x = mesh.nodes
    assert l2_norm(mesh, x * (1 - x)) == pytest.approx(np.sqrt(1 / 30), abs=1e-5)


@settings(max_examples=100, deadline=None)
@given(st.integers(min_value=2, max_value=60), st.integers(min_value=0, max_value=2**32 - 1))
def test_parallelogram_law(m, seed):
    mesh = build_mesh(m)
    rng = np.random.default_rng(seed)
    u, v = rng.standard_normal((2, m))
    lhs = l2_norm(mesh, u + v) ** 2 + l2_norm(mesh, u - v) ** 2
    rhs = 2 * l2_norm(mesh, u) ** 2 + 2 * l2_norm(mesh, v) ** 2
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_projection_identity_on_space():
    mesh = build_mesh(20)
    vals = np.random.default_rng(6).standard_normal(20)
    full = np.concatenate([[0.0], vals, [0.0]])
    grid = np.concatenate([[mesh.a], mesh.nodes, [mesh.b]])
    f = lambda x: np.interp(x, grid, full)  # noqa: E731
    assert np.allclose(project_initial(mesh, f), vals, atol=1e-12)


@pytest.mark.parametrize("m", [9, 10, 37])
def test_indicator_projection_galerkin(m):
    # odd m puts a node at x = 1/2
    mesh = build_mesh(m)
    ind = Indicator(0.0, 0.5)
    c = project_initial(mesh, ind)
    b = np.empty(m)
    for j, xj in enumerate(mesh.nodes):
        hat = lambda x: np.maximum(0.0, 1 - abs(x - xj) / mesh.h)  # noqa: E731,B023
        b[j] = scipy.integrate.quad(hat, max(xj - mesh.h, 0.0), min(xj + mesh.h, 0.5), epsabs=1e-14)[0] \
            if xj - mesh.h < 0.5 else 0.0
    assert np.max(np.abs(mesh.mass_apply(c) - b)) < 1e-12


def test_projection_of_sine():
    mesh = build_mesh(199)
    c = project_initial(mesh, lambda x: 2 * np.sin(np.pi * x))
    assert np.max(np.abs(c - 2 * np.sin(np.pi * mesh.nodes))) < 10 * mesh.h**2


def test_load_vector_batch_bitwise():
    mesh = build_mesh(25)
    f = lambda x, t: np.sin(3 * x) * np.exp(-t)  # noqa: E731
    t = np.array([0.0, 0.3, 1.7])
    B = load_vector(mesh, f, t)
    for i, ti in enumerate(t):
        assert np.array_equal(B[i], load_vector(mesh, f, ti))
