import numpy as np
import pytest

from laguerre_sdde import (ControlProblem, DomainError, InitialDatum, OutputFunctional, SDDEModel, SpecMismatch,
                           StoppingProblem, UniformWindow, brownian_increments, call_payoff, discounted, gbm,
                           laguerre_system, linear_dynamics, lsmc_value, make_weight, oracle_lsmc_value,
                           policy_cost, put_payoff, simulate_chain, value_gap_report)

DT = 0.01


@pytest.fixture(scope="module")
def model():
    return SDDEModel(make_weight(0, 2), gbm(0.0, 0.3), InitialDatum(1.0), alpha=UniformWindow(0.25),
                     gamma0=1.0)


@pytest.fixture(scope="module")
def system(model):
    return laguerre_system(model, 4)


def test_payoffs():
    assert put_payoff(1.0)(0, np.array([0.5, 1.5])).tolist() == [0.5, 0.0]
    assert call_payoff(1.0)(0, np.array([0.5, 1.5])).tolist() == [0.0, 0.5]
    assert discounted(put_payoff(1.0), 0.1)(1.0, 0.0) == pytest.approx(np.exp(-0.1))


def test_problem_validation():
    with pytest.raises(DomainError):
        StoppingProblem(1.0, (0.5, 0.8), put_payoff(1))
    with pytest.raises(DomainError):
        StoppingProblem(1.0, (0.5, 0.4, 1.0), put_payoff(1))
    with pytest.raises(DomainError):
        StoppingProblem(1.0, (1.0,), put_payoff(1), direction="max")
    prob = StoppingProblem.bermudan(0.5, 5, put_payoff(1))
    assert prob.indices(0.01).tolist() == [10, 20, 30, 40, 50]
    with pytest.raises(SpecMismatch):
        prob.indices(0.03)


def test_european_equals_plain_monte_carlo(system, model):
    M, seed = 1000, 4
    prob = StoppingProblem.european(0.5, put_payoff(1.0))
    res = lsmc_value(system, system.initial_state(model.init), prob, M, 2, seed, dt=DT)
    noise = brownian_increments(seed, 50, DT, M, first_path=M)
    cp = simulate_chain(system, system.initial_state(model.init), noise)
    assert res.value == pytest.approx(np.maximum(1.0 - cp.Z[:, -1], 0).mean(), abs=1e-12)


def test_martingale_sanity(system, model):
    # driftless price: E[Z_T] = s0, and the payoff z (no exercise premium) prices at s0
    prob = StoppingProblem.european(0.5, lambda t, z: z)
    res = lsmc_value(system, system.initial_state(model.init), prob, 4000, 2, 1, dt=DT)
    assert abs(res.value - 1.0) < 3 * res.stderr


def test_bermudan_bounds(system, model):
    x0 = system.initial_state(model.init)
    eur = lsmc_value(system, x0, StoppingProblem.european(0.5, put_payoff(1.1)), 4000, 2, 2, dt=DT)
    ber = lsmc_value(system, x0, StoppingProblem.bermudan(0.5, 10, put_payoff(1.1)), 4000, 2, 2, dt=DT)
    assert ber.value >= eur.value - 2 * ber.stderr
    assert ber.value <= ber.in_sample + 2 * ber.stderr + 2 * ber.in_sample_stderr
    assert ber.value >= 0.1 - 2 * ber.stderr  # intrinsic value at t = 0


def test_oracle_reference_close_to_chain(model):
    prob = StoppingProblem.bermudan(0.5, 5, put_payoff(1.0))
    ref = oracle_lsmc_value(model, prob, 2000, 2, 3, dt=DT)
    sys = laguerre_system(model, 8)
    res = lsmc_value(sys, sys.initial_state(model.init), prob, 2000, 2, 3, dt=DT)
    assert abs(res.value - ref.value) < 4 * ref.stderr


def test_lsmc_argument_checks(system, model):
    prob = StoppingProblem.european(0.5, put_payoff(1.0))
    with pytest.raises(DomainError):
        lsmc_value(system, system.initial_state(model.init), prob, 500, 2, 0, dt=DT)
    with pytest.raises(DomainError):
        lsmc_value(system, system.initial_state(model.init), prob, 1000, 0, 0, dt=DT)


def test_unit_running_cost_gives_horizon(system, model):
    prob = ControlProblem(0.7, lambda t, z, u: 1.0, lambda z: 0.0)
    res = policy_cost(system, prob, None, 50, 0, dt=DT, init=model.init)
    assert np.all(res.samples == pytest.approx(0.7, abs=1e-12))
    assert res.stderr == pytest.approx(0.0, abs=1e-12)


def test_terminal_output_mean(model):
    prob = ControlProblem(0.5, lambda t, z, u: 0.0, lambda z: z)
    res = policy_cost(model, prob, None, 2000, 0, dt=DT)
    assert abs(res.value - 1.0) < 3 * res.stderr


def test_cost_linear_in_cost_functions(system, model):
    f1 = ControlProblem(0.5, lambda t, z, u: z * z, lambda z: 0.0)
    f2 = ControlProblem(0.5, lambda t, z, u: u * u, lambda z: np.abs(z))
    both = ControlProblem(0.5, lambda t, z, u: 2 * z * z + u * u, lambda z: np.abs(z))
    pol = lambda t, s, y, z: 0.1 * (1.0 - z)
    args = dict(dt=DT, init=model.init)
    a = policy_cost(system, f1, pol, 100, 3, **args).samples
    b = policy_cost(system, f2, pol, 100, 3, **args).samples
    c = policy_cost(system, both, pol, 100, 3, **args).samples
    assert np.allclose(c, 2 * a + b, atol=1e-12)


def test_policy_cost_target_checks(system):
    prob = ControlProblem(0.5, lambda t, z, u: 1.0, lambda z: 0.0)
    with pytest.raises(DomainError):
        policy_cost(system, prob, None, 10, 0, dt=DT)
    with pytest.raises(DomainError):
        policy_cost("model", prob, None, 10, 0, dt=DT)


def test_output_functional(model):
    s = model.spec
    out = OutputFunctional(0.5, UniformWindow(0.25))
    assert out.norm_sq_w(s) == pytest.approx(0.25 + 4.0, rel=1e-10)
    attached = out.attach(model)
    assert attached.gamma0 == 0.5 and attached.gamma is out.gamma_kernel


def test_control_gap_report_shrinks():
    model = SDDEModel(make_weight(0, 2), gbm(0.05, 0.2), InitialDatum(1.0), alpha=UniformWindow(0.25),
                      gamma=UniformWindow(0.25))
    pol = lambda t, s, y, z: -0.5 * np.tanh(2 * (z - 1))
    prob = ControlProblem(0.5, lambda t, z, u: np.abs(z) + u * u, lambda z: np.abs(z), (pol,))
    rep = value_gap_report(model, [2, 8], prob, 200, 11, dt=2.0**-7)
    assert rep.kind == "control" and rep.gaps[1] < rep.gaps[0]
    assert rep.K() > 0 and len(rep.rows()) == 2
    with pytest.raises(DomainError):
        value_gap_report(model, [2], ControlProblem(0.5, prob.running_cost, prob.terminal_cost), 200, 0,
                         dt=2.0**-7)


def test_deterministic_control_matches_closed_form():
    # dS = u dt with u = 1: S_t = t, running cost z^2 integrates to T^3/3 up to trapezoid error
    model = SDDEModel(make_weight(0, 1), linear_dynamics(drift=(0, 0, 0, 1)), InitialDatum(0.0), gamma0=1.0)
    prob = ControlProblem(1.0, lambda t, z, u: z * z, lambda z: 0.0)
    res = policy_cost(model, prob, lambda t, s, y, z: np.ones_like(s), 4, 0, dt=DT)
    assert res.value == pytest.approx(1 / 3 + DT**2 / 6, abs=1e-12)
