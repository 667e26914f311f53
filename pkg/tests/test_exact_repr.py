import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from laguerre_sdde import (DegenerateError, DomainError, ExpPolyFunction, ExpPolyKernel, InitialDatum,
                           SDDEModel, brownian_increments, build_stable_subspace, coupled_run, exact_system,
                           exppoly_integral_Rminus, exppoly_mul, laguerre_system, linear_dynamics, make_weight)
from laguerre_sdde.exact_repr import gram_schmidt_w

E = ExpPolyFunction.monomial


def test_mul_examples():
    assert exppoly_mul(E(0, 1), E(0, 1)) == E(0, 2)
    assert exppoly_mul(E(1, 1), E(0, 2)) == E(1, 3)
    f = ExpPolyFunction(((0, 1, 1), (1, 1, 1)))
    assert exppoly_mul(f, f) == ExpPolyFunction(((0, 2, 1), (1, 2, 2), (2, 2, 1)))


def test_canonical_form_merges_and_sorts():
    f = ExpPolyFunction(((1, 2, 1), (0, 1, 2), (1, 2, -1), (0, 1, 1)))
    assert f.terms == ((0, 1, 3),)


def test_integral_examples():
    assert exppoly_integral_Rminus(E(0, 1)) == pytest.approx(1.0, abs=1e-15)
    assert exppoly_integral_Rminus(E(1, 2)) == pytest.approx(-0.25, abs=1e-15)
    assert exppoly_integral_Rminus(E(2, 1)) == pytest.approx(2.0, abs=1e-15)
    q, _ = integrate.quad(lambda x: x * np.exp(2 * x), -np.inf, 0)
    assert exppoly_integral_Rminus(E(1, 2)) == pytest.approx(q, abs=1e-12)


def test_integral_rejects_nonintegrable():
    with pytest.raises(DomainError):
        exppoly_integral_Rminus(E(0, 0.0))
    with pytest.raises(DomainError):
        exppoly_integral_Rminus(E(0, -1.0))


def test_complex_pair_is_real():
    f = ExpPolyFunction(((0, 1 + 2j, 0.5 - 0.1j), (0, 1 - 2j, 0.5 + 0.1j)))
    xi = np.linspace(-3, 0, 7)
    assert f.imag_residual(xi) < 1e-12
    ref = np.exp(xi) * (np.cos(2 * xi) + 0.2 * np.sin(2 * xi))
    assert np.allclose(f(xi), ref, atol=1e-14)
    val = exppoly_integral_Rminus(f)
    q, _ = integrate.quad(lambda x: np.exp(x) * (np.cos(2 * x) + 0.2 * np.sin(2 * x)), -60, 0)
    assert val == pytest.approx(q, abs=1e-12)


def test_single_exponential_subspace():
    lam = 1.7
    sub = build_stable_subspace([E(0, lam)], make_weight(0, lam))
    assert sub.dimension == 1
    assert np.allclose(sub.M, [[lam]])
    assert sub.q == pytest.approx([math.sqrt(2 * lam)])
    assert sub.Q[0, 0] == pytest.approx(-lam)
    e = sub.ortho_basis[0]
    assert e(-0.3) == pytest.approx(math.sqrt(2 * lam) * math.exp(-0.3 * lam))


def test_closure_adds_lower_powers():
    sub = build_stable_subspace([E(1, 2.0)], make_weight(0, 2.0))
    assert sub.dimension == 2
    assert np.allclose(sub.M, [[2, 0], [1, 2]])


def test_boundary_exponent_rejected():
    with pytest.raises(DomainError):
        build_stable_subspace([E(0, 0.0)], make_weight(0, 1))
    # with p = 2, exponents of f must exceed -p/2 = -1
    with pytest.raises(DomainError):
        build_stable_subspace([E(0, -1.0)], make_weight(2, 3))
    build_stable_subspace([E(0, -0.9)], make_weight(2, 3))


def test_dependent_generators_detected():
    with pytest.raises(DegenerateError):
        build_stable_subspace([E(0, 1), 2.0 * E(0, 1)], make_weight(0, 1))


def test_orthonormality_and_generator_identity():
    s = make_weight(0.5, 2.0)
    g = ExpPolyFunction(((0, 1 + 2j, 1), (0, 1 - 2j, 1), (2, 0.7, 0.3)))
    sub = build_stable_subspace([g], s)
    n = sub.dimension
    G = np.array([[a.inner_w(b, s.p) for b in sub.ortho_basis] for a in sub.ortho_basis])
    assert np.max(np.abs(G - np.eye(n))) < 1e-10
    assert np.all(sub.eigenvalues().real > s.lambda_star)
    # A* e^k reconstructed from (q, Q) equals -(e^k)' - p e^k on the function part
    for k, e in enumerate(sub.ortho_basis):
        target = -(e.derivative() + s.p * e)
        approx = ExpPolyFunction()
        for h, eh in enumerate(sub.ortho_basis):
            approx = approx + sub.Q[k, h] * eh
        r = target - approx
        assert r.inner_w(r, s.p) < 1e-20
        assert sub.q[k] == pytest.approx(e.at_zero(), abs=1e-12)


def test_gram_schmidt_idempotent():
    s = make_weight(0, 1)
    basis = build_stable_subspace([E(2, 1.0)], s).ortho_basis
    again = gram_schmidt_w(basis, s.p)
    xi = np.linspace(-5, 0, 11)
    for a, b in zip(basis, again):
        assert np.max(np.abs(a(xi) - b(xi))) < 1e-12


def test_exact_system_matches_laguerre_n1():
    lam = 1.0
    s = make_weight(0, lam)
    g = ExpPolyKernel(E(0, lam))
    dyn = linear_dynamics((0, 0.05, 0, 1), (0, 0.2, 0, 0))
    ex = exact_system(None, None, g, dyn, s)
    lg = laguerre_system(SDDEModel(s, dyn, InitialDatum(1.0), gamma=g), 1)
    assert ex.n == 1
    assert np.max(np.abs(ex.q - lg.q)) < 1e-12 and np.max(np.abs(ex.Q - lg.Q)) < 1e-12
    assert np.max(np.abs(ex.gamma - lg.gamma)) < 1e-12
    assert ex.gamma[1] == pytest.approx(1 / math.sqrt(2 * lam), abs=1e-14)


def test_exact_system_two_dimensional():
    s = make_weight(0, 1)
    f = ExpPolyFunction(((0, 1, 1), (1, 1, 1)))
    sys = exact_system(None, None, f, linear_dynamics(), s)
    assert sys.n == 2 and sys.variant == "exact"
    recon = ExpPolyFunction()
    for c, e in zip(sys.gamma[1:], sys.basis):
        recon = recon + c * e
    r = f - recon
    assert r.inner_w(r, 0.0) < 1e-10


def test_exact_system_zero_kernels():
    sys = exact_system(None, None, None, linear_dynamics(), make_weight(0, 1), gamma0=1.0)
    assert sys.n == 0 and sys.gamma0 == 1.0


def test_exact_system_rejects_non_exppoly():
    from laguerre_sdde import UniformWindow
    with pytest.raises(DomainError):
        exact_system(None, None, UniformWindow(1.0), linear_dynamics(), make_weight(0, 1))


def test_union_of_subspaces():
    s = make_weight(0, 1)
    sys = exact_system(E(0, 2.0), None, E(1, 1.0), linear_dynamics(), s)
    assert sys.n == 3
    assert np.count_nonzero(np.abs(sys.alpha[1:]) > 1e-12) >= 1


def test_deterministic_delay_ode_matches_oracle():
    # sigma = 0, b = -y_alpha, alpha = exp(lam xi): chain and oracle share the Euler scheme
    lam = 2.0
    s = make_weight(0, lam)
    dyn = linear_dynamics((0, 0, -1, 0), (0, 0, 0, 0))
    a = ExpPolyKernel(E(0, lam), role="alpha")
    model = SDDEModel(s, dyn, InitialDatum(1.0, 1.0), alpha=a)
    sys = exact_system(a, None, None, dyn, s)
    dt = 2.0**-8
    noise = brownian_increments(0, 256, dt)
    o, c = coupled_run(model, sys, noise, 1.0)
    assert np.max(np.abs(o.S - c.S)) < 5 * dt


def test_exact_y_ode():
    # Y_t = int exp(lam xi) S_{t+xi} dxi solves dY = (S - lam Y) dt, and X1 = sqrt(2 lam) Y
    lam = 1.5
    s = make_weight(0, lam)
    sys = exact_system(None, None, E(0, lam), linear_dynamics(), s)
    assert sys.q[0] / math.sqrt(2 * lam) == pytest.approx(1.0)
    assert sys.Q[0, 0] == pytest.approx(-lam)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.2, 3.0), st.floats(0.2, 3.0), st.floats(-2, 2), st.floats(-2, 2))
def test_inner_product_closed_form_vs_quadrature(m1, m2, c1, c2):
    f = ExpPolyFunction(((0, m1, c1), (1, m2, c2)))
    exact = f.inner_w(f, 0.3)
    q, _ = integrate.quad(lambda x: f(x) ** 2 * np.exp(0.3 * x), -np.inf, 0, epsabs=1e-13)
    assert exact == pytest.approx(q, rel=1e-8, abs=1e-12)
