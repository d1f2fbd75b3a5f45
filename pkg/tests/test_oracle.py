import numpy as np
import pytest
import scipy.sparse as sp
import sympy

from thermistor.elliptic import LinearSystem, assemble, solve_spd
from thermistor.grid import FaceCoeffs, Field, GridSpec, sigma_faces
from thermistor.oracle import (
    CASES, SingularSystemError, convergence_study, dense_elliptic_solve, explicit_reference,
    gauss_solve, observed_order,
)


def test_gauss_solve_against_numpy():
    rng = np.random.default_rng(0)
    for n in (1, 5, 40):
        A = rng.normal(size=(n, n)) + n * np.eye(n)
        b = rng.normal(size=n)
        np.testing.assert_allclose(gauss_solve(A, b), np.linalg.solve(A, b), rtol=1e-10)
    # needs pivoting: zero in the leading position
    A = np.array([[0.0, 1.0], [1.0, 1.0]])
    np.testing.assert_allclose(gauss_solve(A, [1.0, 3.0]), [2.0, 1.0])


def test_dense_linear_exactness():
    g = GridSpec(1, 5)
    x, _ = g.coords()
    phi = dense_elliptic_solve(assemble(FaceCoeffs.constant(g), x))
    np.testing.assert_allclose(phi.values[1:-1], [0.25, 0.5, 0.75], atol=1e-15)


def test_dense_degenerate_returns_regularization():
    g = GridSpec(1, 6)
    reg = np.array([0, 0.1, 0.2, 0.3, 0.4, 0])
    s = assemble(FaceCoeffs.constant(g, 0.0), np.zeros(6), regularization=reg)
    np.testing.assert_array_equal(dense_elliptic_solve(s).values[1:-1], reg[1:-1])


def test_dense_matches_cg():
    rng = np.random.default_rng(1)
    g = GridSpec(2, 22, 1.0, 22, 1.0)
    s = assemble(sigma_faces(Field(g, np.exp(rng.uniform(-3, 3, g.n_nodes)))),
                 rng.uniform(size=g.n_nodes))
    assert s.n == 400
    a = dense_elliptic_solve(s).values
    b = solve_spd(s, tol=1e-13, dense_fallback=False).values
    assert np.linalg.norm(a - b) <= 1e-10 * np.linalg.norm(a)


def test_dense_errors():
    g = GridSpec(1, 403)
    with pytest.raises(ValueError):
        dense_elliptic_solve(assemble(FaceCoeffs.constant(g), np.zeros(g.n_nodes)))
    g = GridSpec(1, 5)
    sing = LinearSystem(g, sp.csr_matrix(np.zeros((3, 3))), np.ones(3), np.arange(1, 4),
                        np.zeros(5))
    with pytest.raises(SingularSystemError):
        dense_elliptic_solve(sing)


def test_explicit_zero_and_steady():
    g = GridSpec(1, 21)
    z = explicit_reference(Field.constant(g, 0.0), lambda t, u: np.zeros(g.n_nodes),
                           g.h**2 / 4, 0.5)
    assert np.all(z.values == 0)
    u = explicit_reference(Field.constant(g, 0.0), lambda t, u: np.ones(g.n_nodes),
                           g.h**2 / 4, 3.0)
    x, _ = g.coords()
    assert u.values.max() == pytest.approx(0.125, abs=1e-3)
    np.testing.assert_allclose(u.values, x * (1 - x) / 2, atol=1e-3)


def test_explicit_cfl():
    g = GridSpec(1, 21)
    with pytest.raises(ValueError, match="h\\^2/4"):
        explicit_reference(Field.constant(g, 0.0), lambda t, u: 0.0, g.h**2 / 3, 0.1)


def _symbolic_forcing(u_expr, phi_expr, dim):
    x, y, t = sympy.symbols("x y t")
    lap = sympy.diff(u_expr, x, 2) + (sympy.diff(u_expr, y, 2) if dim == 2 else 0)
    grad2 = sympy.diff(phi_expr, x) ** 2 + (sympy.diff(phi_expr, y) ** 2 if dim == 2 else 0)
    f = sympy.diff(u_expr, t) - lap - grad2  # sigma == 1 in every shipped case
    return sympy.lambdify((x, y, t), f, "numpy")


@pytest.mark.parametrize("name", sorted(CASES))
def test_manufactured_forcing(name):
    case = CASES[name]
    x, y, t = sympy.symbols("x y t")
    exprs = {
        "quadratic_exact": ((1 + t) * x * (1 - x), x),
        "sine_decay": (sympy.exp(-t) * sympy.sin(sympy.pi * x), x),
        "sine_decay_2d": (sympy.exp(-t) * sympy.sin(sympy.pi * x) * sympy.sin(sympy.pi * y),
                          x + 2 * y),
    }[name]
    f_sym = _symbolic_forcing(*exprs, case.dim)
    rng = np.random.default_rng(4)
    X, Y, T = rng.uniform(0, 1, (3, 100))
    if case.dim == 1:
        Y = np.zeros(100)
    np.testing.assert_allclose(case.forcing(X, Y, T), f_sym(X, Y, T) + 0 * X, atol=1e-12)
    assert np.max(np.abs(case.residual(X, Y, T))) <= 1e-8


def test_convergence_study_exact_case():
    st = convergence_study(CASES["quadratic_exact"], [6, 11, 21], [0.1, 0.05, 0.025])
    assert st.exact and st.order_h is None and st.order_dt is None
    assert max(st.err_h + st.err_dt) < 1e-11


def test_convergence_study_needs_levels():
    with pytest.raises(ValueError):
        convergence_study(CASES["sine_decay"], [11, 21], [0.1, 0.05, 0.025])


def test_observed_order():
    h = np.array([0.1, 0.05, 0.025])
    assert observed_order(h, 3 * h**2) == pytest.approx(2.0)
