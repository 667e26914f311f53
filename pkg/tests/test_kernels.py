import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from laguerre_sdde import (Combination, DomainError, ExpPolyFunction, ExpPolyKernel, FunctionKernel,
                           IntegrabilityError, SpecMismatch, Tabulated, UniformWindow, Unweighted, basis_eval,
                           build_laguerre_system, kernel_eval, make_weight, project_kernel, tail_norm_sq)
from laguerre_sdde.analysis import fit_rate
from laguerre_sdde.kernels import rule_for_kernels

from oracles import quad_inner

WINDOW = UniformWindow(1.0)


def test_window_values():
    assert WINDOW(-0.5) == 1.0
    assert WINDOW(-2.0) == 0.0
    assert WINDOW(-1.0) == 1.0  # left-closed
    assert UniformWindow(0.25)(-0.1) == 4.0
    with pytest.raises(DomainError):
        WINDOW(0.1)
    with pytest.raises(DomainError):
        UniformWindow(0.0)


def test_exppoly_kernel_value():
    k = ExpPolyKernel.from_terms([(0, 1.0, 1.0)])
    assert kernel_eval(k, -1.0) == pytest.approx(math.exp(-1))


def test_tabulated_range_and_csv(tmp_path):
    path = tmp_path / "k.csv"
    path.write_text("xi,value\n-1.0,2.0\n-0.5,1.0\n0.0,0.0\n")
    k = Tabulated.from_csv(path)
    assert k(-0.75) == pytest.approx(1.5)
    with pytest.raises(DomainError):
        k(-1.5)
    assert k._values(np.array([-1.5]))[0] == 0.0


def test_projection_of_first_basis_vector():
    s = make_weight(0, 1)
    k = Tabulated.from_function(lambda x: basis_eval(1, s, x), -40.0, 200001)
    pk = project_kernel(k, 6, s)
    assert pk.coeffs[0] == 0.0
    assert pk.coeffs[1] == pytest.approx(1.0, abs=1e-8)
    assert np.max(np.abs(pk.coeffs[2:])) < 1e-8
    assert tail_norm_sq(pk) < 1e-8


def test_projection_of_matched_exponential():
    lam = 2.0
    s = make_weight(0, lam)
    pk = project_kernel(ExpPolyKernel.from_terms([(0, lam, 1.0)]), 8, s)
    assert pk.coeffs[1] == pytest.approx(1 / math.sqrt(2 * lam), abs=1e-12)
    assert np.max(np.abs(pk.coeffs[2:])) < 1e-12
    assert abs(pk.tail_sq) < 1e-10


def test_window_coefficients_against_adaptive_quadrature():
    s = make_weight(0, 1)
    pk = project_kernel(WINDOW, 8, s)
    for k in range(1, 9):
        ref = quad_inner(lambda x: 1.0, lambda x, k=k: basis_eval(k, s, x), 0.0, -1.0)
        assert pk.coeffs[k] == pytest.approx(ref, abs=1e-8)
    assert pk.coeffs[1] == pytest.approx(math.sqrt(2) * (1 - math.exp(-1)), abs=1e-13)


def test_window_coefficients_node_doubling():
    s = make_weight(0, 1)
    rule = rule_for_kernels(s, 8, [WINDOW])
    a = project_kernel(WINDOW, 8, s, rule).coeffs
    b = project_kernel(WINDOW, 8, s, rule.refined()).coeffs
    assert np.max(np.abs(a - b)) < 1e-8


def test_extension_preserves_prefix_bitwise():
    s = make_weight(0.5, 2.0)
    rule = rule_for_kernels(s, 32, [WINDOW])
    short = project_kernel(WINDOW, 8, s, rule).coeffs
    long = project_kernel(WINDOW, 32, s, rule).coeffs
    assert np.array_equal(short, long[:9])


def test_tails_monotone_and_bessel():
    s = make_weight(0, 1)
    pk = project_kernel(WINDOW, 64, s)
    assert np.all(np.diff(pk.tails) <= 1e-15)
    assert pk.tails[-1] >= -1e-10
    assert pk.norm_sq_w == pytest.approx(1.0, abs=1e-12)


def test_window_squared_coefficients_decay_like_three_halves():
    # block-averaged c_k^2 over [k, 2k) approaches the n^(-3/2) envelope
    s = make_weight(0, 1)
    c2 = project_kernel(WINDOW, 256, s).coeffs[1:] ** 2
    ks = [8, 16, 32, 64, 128]
    blocks = [c2[k - 1:2 * k - 1].mean() for k in ks]
    slope, _, r2 = fit_rate(ks, blocks)
    assert -1.8 < slope < -1.4 and r2 > 0.99


def test_window_tail_decays_like_inverse_square_root():
    s = make_weight(0, 1)
    pk = project_kernel(WINDOW, 256, s)
    ns = [8, 16, 32, 64, 128, 256]
    slope, _, _ = fit_rate(ns, [pk.tail_at(n) for n in ns])
    assert -0.6 < slope < -0.45
    # Parseval: residual 2.8% at N=64, under 2% only by N=256
    assert pk.tail_at(64) / pk.norm_sq_w == pytest.approx(0.028, abs=0.001)
    assert pk.tail_at(256) / pk.norm_sq_w < 0.02


def test_smooth_kernel_tail_is_steeper():
    s = make_weight(0, 1)
    bump = FunctionKernel(lambda x: np.exp(-0.5 * ((x + 1) / 0.5) ** 2), support=-7.0)
    ns = [8, 16, 32, 64]
    smooth = fit_rate(ns, [project_kernel(bump, 64, s).tail_at(n) for n in ns])[0]
    rough = fit_rate(ns, [project_kernel(WINDOW, 64, s).tail_at(n) for n in ns])[0]
    assert smooth < -3 and smooth < rough


def test_nonintegrable_kernel_rejected():
    s = make_weight(0, 1)
    slow = FunctionKernel(lambda x: 1.0 / (1.0 + x * x) ** 0.2, rate=0.0)
    with pytest.raises(IntegrabilityError):
        project_kernel(slow, 4, s, rule_for_kernels(s, 4, [UniformWindow(1.0)]))


def test_missing_panel_edge_rejected():
    s = make_weight(0, 1)
    rule = rule_for_kernels(s, 4, [])
    with pytest.raises(DomainError):
        project_kernel(UniformWindow(0.3), 4, s, rule)


def test_spec_mismatch_detected():
    pk = project_kernel(WINDOW, 4, make_weight(0, 1))
    with pytest.raises(SpecMismatch):
        build_laguerre_system(4, make_weight(0, 2), None, None, pk, 0.0, None)


def test_unweighted_kernel_gives_plain_average():
    # with p != 0, the plain moving average corresponds to k(xi) exp(-p xi)
    p = 1.0
    s = make_weight(p, 4.0)
    k = Unweighted(UniformWindow(0.25), p)
    assert k(-0.1) == pytest.approx(4.0 * math.exp(0.1))
    pk = project_kernel(k, 0, s)
    assert pk.norm_sq_w == pytest.approx(quad_inner(lambda x: 4 * math.exp(-x), lambda x: 4 * math.exp(-x), p, -0.25))


@settings(max_examples=15, deadline=None)
@given(st.floats(-2, 2), st.floats(-2, 2))
def test_projection_linearity(a, b):
    s = make_weight(0, 1)
    f = UniformWindow(0.5)
    g = ExpPolyKernel(ExpPolyFunction.monomial(1, 1.5))
    rule = rule_for_kernels(s, 12, [f, g])
    combo = Combination(((a, f), (b, g)))
    lhs = project_kernel(combo, 12, s, rule).coeffs
    rhs = a * project_kernel(f, 12, s, rule).coeffs + b * project_kernel(g, 12, s, rule).coeffs
    assert np.max(np.abs(lhs - rhs)) < 1e-10
