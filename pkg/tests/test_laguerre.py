import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from laguerre_sdde import DomainError, astar_on_basis, basis_eval, basis_matrix, laguerre_poly, make_weight
from laguerre_sdde.laguerre import laguerre_drift, laguerre_table
from laguerre_sdde.weighted_space import inner_product_w, make_quadrature

from oracles import basis_by_binomial, laguerre_binomial


def test_poly_examples():
    assert laguerre_poly(0, 3.7) == 1.0
    assert laguerre_poly(2, 1.0) == pytest.approx(-0.5, abs=1e-15)
    for k in range(21):
        assert laguerre_poly(k, 0.0) == 1.0


def test_poly_rejects_negative_argument():
    with pytest.raises(DomainError):
        laguerre_poly(3, -0.1)
    with pytest.raises(DomainError):
        laguerre_poly(-1, 1.0)


def test_recurrence_matches_exact_binomial_sum():
    xs = np.linspace(0, 40, 81)
    table = laguerre_table(10, xs)
    for k in range(11):
        ref = np.array([laguerre_binomial(k, x) for x in xs])
        scale = np.maximum(np.abs(ref), 1.0)
        assert np.max(np.abs(table[k] - ref) / scale) < 1e-9


def test_basis_examples():
    assert basis_eval(1, make_weight(0, 0.5), 0.0) == pytest.approx(1.0, abs=1e-15)
    assert basis_eval(1, make_weight(0, 1), 0.0) == pytest.approx(math.sqrt(2), abs=1e-15)
    assert basis_eval(3, make_weight(0, 1), -1.0) == pytest.approx(-math.sqrt(2) / math.e, abs=1e-12)
    assert basis_eval(3, make_weight(0, 1), -1.0) == pytest.approx(-0.52026, abs=1e-5)


def test_basis_against_binomial_oracle():
    for p, lam in [(0, 1), (1, 2), (-0.5, 0.5)]:
        s = make_weight(p, lam)
        xi = np.linspace(-6, 0, 13)
        B = basis_matrix(8, s, xi)
        for j in range(8):
            ref = np.array([basis_by_binomial(j, p, lam, x) for x in xi])
            assert np.allclose(B[j], ref, rtol=1e-10, atol=1e-12)


def test_basis_domain_checks():
    s = make_weight(0, 1)
    with pytest.raises(DomainError):
        basis_eval(0, s, -1.0)
    with pytest.raises(DomainError):
        basis_eval(1, s, 0.5)


def test_basis_value_at_zero():
    s = make_weight(0.7, 2.2)
    assert np.allclose(basis_matrix(12, s, 0.0), math.sqrt(2 * s.p0))


def test_derivative_identity_finite_differences():
    # P_k(xi) = P~_k(-xi) satisfies P_k' = sum_{i<k} P_i
    xi = np.linspace(-10, -1e-3, 1000)
    h = 1e-5
    P = lambda x: laguerre_table(8, -x)
    d = (P(xi + h) - P(xi - h)) / (2 * h)
    vals = P(xi)
    for k in range(1, 9):
        rhs = vals[:k].sum(axis=0)
        assert np.max(np.abs(d[k] - rhs) / np.maximum(np.abs(rhs), 1.0)) < 1e-5


def _numeric_astar(k, spec, n):
    """<A*(0, L_{k-1}), e^j>_w for j = 0..n with a finite-difference derivative."""
    rule = make_quadrature(spec, 4000, 1e-14, max_degree=n)
    f = lambda x: basis_eval(k, spec, x)
    h = 1e-6
    df = lambda x: (basis_eval(k, spec, np.minimum(x + h, 0)) - basis_eval(k, spec, x - h)) / (
        np.minimum(x + h, 0) - (x - h))
    g = lambda x: -df(x) - spec.p * f(x)
    out = [f(0.0)]
    for j in range(1, n + 1):
        out.append(inner_product_w(g, lambda x, j=j: basis_eval(j, spec, x), spec, rule))
    return np.array(out)


@pytest.mark.parametrize("p, lam", [(0, 1), (1, 2), (-0.5, 0.5), (2, 3)])
def test_astar_matches_numerical_adjoint(p, lam):
    s = make_weight(p, lam)
    for k in range(1, 9):
        num = _numeric_astar(k, s, 9)
        assert np.max(np.abs(num - astar_on_basis(k, s).row(9))) < 1e-6


def test_astar_diagonal_value():
    c = astar_on_basis(2, make_weight(2, 3))
    assert (c.to_e0, c.to_lower, c.to_self) == (math.sqrt(2), -2.0, -2.0)
    c = astar_on_basis(1, make_weight(0, 1))
    assert c.to_e0 == pytest.approx(math.sqrt(2)) and c.to_self == -1.0


def test_astar_row_is_lower_triangular():
    s = make_weight(0.5, 1.5)
    row = astar_on_basis(3, s).row(6)
    assert np.all(row[4:] == 0) and row[3] == -(s.p0 + s.p / 2)
    with pytest.raises(DomainError):
        astar_on_basis(0, s)


def test_drift_matrix_structure():
    s = make_weight(2, 3)
    q, Q = laguerre_drift(3, s)
    assert np.allclose(q, math.sqrt(2))
    assert np.allclose(Q[2], [-2, -2, -2])
    assert np.all(np.triu(Q, 1) == 0)


@settings(max_examples=25, deadline=None)
@given(st.floats(-1.0, 2.0), st.floats(0.2, 5.0))
def test_gram_matrix_identity(p, extra):
    lam = max(p, p / 2) + extra
    s = make_weight(p, lam)
    rule = make_quadrature(s, 2000, 1e-12, max_degree=8)
    B = basis_matrix(9, s, rule.nodes)
    G = (B * (rule.weights * s.weight(rule.nodes))) @ B.T
    assert np.max(np.abs(G - np.eye(9))) < 1e-8
