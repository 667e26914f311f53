"""Markovian reductions of stochastic delay equations in a weighted Laguerre basis."""
from .analysis import ErrorReport, error_scan, fit_rate
from .applications import (ControlProblem, MCResult, OutputFunctional, StoppingProblem, call_payoff, discounted,
                           lsmc_value,
                           oracle_lsmc_value, policy_cost, put_payoff, value_gap_report)
from .chain import (ChainPath, MarkovSystem, build_laguerre_system, coupled_run, laguerre_system,
                    project_initial_state, simulate_chain)
from .errors import (ConfigError, DegenerateError, DomainError, IntegrabilityError, NumericalBlowup,
                     RegressionError, SDDEError, SpecMismatch)
from .exact_repr import StableSubspace, build_stable_subspace, exact_system
from .exppoly import ExpPolyFunction, exppoly_integral_Rminus, exppoly_mul
from .kernels import (Combination, ExpPolyKernel, FunctionKernel, Kernel, ProjectedKernel, Tabulated,
                      UniformWindow, Unweighted, kernel_eval, project_kernel, tail_norm_sq)
from .laguerre import AStarCoefficients, astar_on_basis, basis_eval, basis_matrix, laguerre_poly
from .noise import NoisePath, brownian_increments
from .oracle import (DynamicsSpec, InitialDatum, OraclePath, SDDEModel, gbm, linear_dynamics,
                     mean_revert_delay, moving_average_path, simulate_sdde)
from .weighted_space import QuadratureRule, WeightSpec, inner_product_w, make_quadrature, make_weight

__version__ = "0.1.0"
