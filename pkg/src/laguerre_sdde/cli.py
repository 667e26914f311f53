"""Command-line front end: one YAML config per experiment, CSV/JSON artifacts out."""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .analysis import error_scan, kernel_tails
from .applications import (ControlProblem, StoppingProblem, call_payoff, discounted, lsmc_value,
                           oracle_lsmc_value, put_payoff, value_gap_report)
from .chain import build_laguerre_system, coupled_run
from .config import TASKS, ExperimentConfig, build_model, config_digest, load_config
from .errors import (ConfigError, DegenerateError, DomainError, IntegrabilityError, NumericalBlowup,
                     RegressionError, SpecMismatch)
from .io import write_csv, write_json, write_metadata
from .kernels import rule_for_kernels
from .laguerre import basis_matrix
from .noise import brownian_increments

log = logging.getLogger("laguerre_sdde")

OUTPUT_ENV = "LAGUERRE_SDDE_OUTPUT"
EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


class _Sink:
    """Collects written artifact paths, honouring the configured formats."""

    def __init__(self, directory: Path, formats, digest: str):
        self.directory = directory
        self.formats = set(formats)
        self.digest = digest
        self.paths = []

    def csv(self, name, header, rows):
        if "csv" in self.formats:
            self.paths.append(write_csv(self.directory / name, header, rows))

    def json(self, name, obj):
        if "json" in self.formats:
            self.paths.append(write_json(self.directory / name, {**obj, "config_digest": self.digest}))


def _rule(cfg: ExperimentConfig, model, n: int):
    kernels = [k for k in model.kernels().values() if k is not None]
    return rule_for_kernels(model.spec, n, kernels, cfg.quadrature.tail_tol, cfg.quadrature.nodes)


def _task_project(cfg, model, out: _Sink):
    n = cfg.task.n
    pks, total = kernel_tails(model, n, _rule(cfg, model, n))
    summary = {"n": n, "tail_sum": float(total[n])}
    for role, pk in pks.items():
        if pk is None:
            continue
        rows = [(k, pk.coeffs[k], pk.tail_at(k)) for k in range(n + 1)]
        out.csv(f"project_{role}.csv", ["k", "coeff", "tail_sq"], rows)
        summary[role] = {"norm_sq_w": pk.norm_sq_w, "tail_sq": pk.tail_at(n)}
    out.json("project.json", summary)


def _system(cfg, model, n):
    pks, _ = kernel_tails(model, n, _rule(cfg, model, n))
    return build_laguerre_system(n, model.spec, pks["alpha"], pks["beta"], pks["gamma"], model.gamma0, model.dyn)


def _task_simulate(cfg, model, out: _Sink):
    sim, n = cfg.simulation, cfg.task.n
    steps = int(round(sim.T / sim.dt))
    noise = brownian_increments(sim.seed, steps, sim.dt, cfg.task.paths)
    sys_ = _system(cfg, model, n)
    oracle, chain = coupled_run(model, sys_, noise, sim.T, scheme=sim.scheme)
    header = ["t", "S", *[f"X{k}" for k in range(1, n + 1)], "Z", "S_oracle", "Z_oracle"]
    rows = np.column_stack([chain.times, chain.S[0], chain.X[0].T, chain.Z[0], oracle.S[0], oracle.Z[0]])
    out.csv("simulate.csv", header, rows)
    sup_sq = np.max((oracle.Z - chain.Z) ** 2, axis=-1)
    out.json("simulate.json", {"n": n, "paths": cfg.task.paths, "seed": sim.seed,
                               "mean_sup_sq_diff": float(sup_sq.mean())})


def _task_error_scan(cfg, model, out: _Sink):
    sim, task = cfg.simulation, cfg.task
    rep = error_scan(model, task.n_list, sim.paths, sim.dt, sim.T, sim.seed, scheme=sim.scheme,
                     batches=task.batches, rule=_rule(cfg, model, task.n_list[-1]))
    out.csv("error_scan.csv", ["n", "tail_sq", "error", "stderr", "ratio"], rep.rows())
    out.json("error_scan.json", rep.summary())
    if rep.failed_n is not None:
        raise NumericalBlowup(f"n={rep.failed_n}: {rep.failure}")


def _stopping_problem(cfg) -> StoppingProblem:
    task, T = cfg.task, cfg.simulation.T
    payoff = (put_payoff if task.payoff == "put" else call_payoff)(task.strike)
    if task.discount_rate:
        payoff = discounted(payoff, task.discount_rate)
    if isinstance(task.exercise_dates, int):
        return StoppingProblem.bermudan(T, task.exercise_dates, payoff, task.direction)
    return StoppingProblem(T, tuple(task.exercise_dates), payoff, task.direction)


def _task_price(cfg, model, out: _Sink):
    sim, task = cfg.simulation, cfg.task
    try:
        prob = _stopping_problem(cfg)
        prob.indices(sim.dt)
    except (DomainError, SpecMismatch) as exc:
        raise ConfigError("task.exercise_dates", str(exc)) from None
    sys_ = _system(cfg, model, task.n)
    res = lsmc_value(sys_, sys_.initial_state(model.init), prob, sim.paths, task.degree, sim.seed,
                     dt=sim.dt, scheme=sim.scheme)
    result = {"value": res.value, "stderr": res.stderr, "n": task.n, "M": sim.paths, "seed": sim.seed,
              "in_sample": res.in_sample, "in_sample_stderr": res.in_sample_stderr}
    if task.reference:
        ref = oracle_lsmc_value(model, prob, sim.paths, task.degree, sim.seed, dt=sim.dt)
        result["reference"] = {"value": ref.value, "stderr": ref.stderr}
    out.json("price.json", result)


def _cost(spec):
    def f(*args):
        z, u = args[-2], args[-1]
        return spec.z_abs * np.abs(z) + spec.z_sq * z * z + spec.z_lin * z + spec.u_sq * u * u
    return f


def _policy(spec):
    if spec.type == "constant":
        return lambda t, s, y, z: np.full(np.shape(s), spec.value)
    return lambda t, s, y, z: spec.bound * np.tanh(spec.gain * (spec.level - z))


def _task_control(cfg, model, out: _Sink):
    sim, task = cfg.simulation, cfg.task
    run, term = _cost(task.running), _cost(task.terminal)
    prob = ControlProblem(sim.T, lambda t, z, u: run(z, u), lambda z: term(z, 0.0),
                          tuple(_policy(p) for p in task.policies))
    rep = value_gap_report(model, task.n_list, prob, sim.paths, sim.seed, dt=sim.dt, scheme=sim.scheme,
                           rule=_rule(cfg, model, max(task.n_list)))
    out.csv("control_eval.csv", ["n", "tail_sq", "value", "stderr", "gap", "gap_stderr"], rep.rows())
    out.json("control_eval.json", rep.summary())


def _task_basis(cfg, model, out: _Sink):
    task = cfg.task
    xi = np.linspace(task.xi_min, 0.0, task.points)
    B = basis_matrix(task.k_max + 1, model.spec, xi)
    out.csv("basis.csv", ["xi", *[f"L{k}" for k in range(task.k_max + 1)]], np.column_stack([xi, B.T]))
    out.json("basis.json", {"k_max": task.k_max, "L_at_zero": B[:, -1].tolist(), "p0": model.spec.p0})


HANDLERS = {
    "project": _task_project,
    "simulate": _task_simulate,
    "error-scan": _task_error_scan,
    "price": _task_price,
    "control-eval": _task_control,
    "basis": _task_basis,
}


def output_directory(cli_value, cfg: ExperimentConfig) -> Path:
    if cli_value:
        return Path(cli_value)
    if cfg.output.directory:
        return Path(cfg.output.directory)
    return Path(os.environ.get(OUTPUT_ENV, "output"))


def execute(cfg: ExperimentConfig, directory: Path, base_dir=".") -> list:
    """Run the configured task and write its artifacts; returns written paths."""
    model = build_model(cfg, base_dir)
    out = _Sink(directory, cfg.output.formats, config_digest(cfg))
    HANDLERS[cfg.task.kind](cfg, model, out)
    write_metadata(directory, out.digest, out.paths, {"task": cfg.task.kind})
    return out.paths


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="laguerre-sdde",
                                     description="Markovian Laguerre reductions of stochastic delay equations")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("run", *TASKS):
        helptext = "run the task named in the config" if name == "run" else f"run the {name} task"
        p = sub.add_parser(name, help=helptext)
        p.add_argument("config", help="YAML experiment file")
        p.add_argument("-o", "--out", help=f"output directory (default: config, then ${OUTPUT_ENV}, then ./output)")
        p.add_argument("--seed", type=int, help="override simulation.seed")
        p.add_argument("-v", "--verbose", action="count", default=0)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s: %(message)s")
    task = None
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = cfg.model_copy(update={"simulation": cfg.simulation.model_copy(update={"seed": args.seed})})
        if args.command != "run" and cfg.task.kind != args.command:
            # subcommand wins; task parameters fall back to defaults
            cfg = ExperimentConfig.model_validate({**cfg.model_dump(by_alias=True), "task": {"kind": args.command}})
        task = cfg.task.kind
        directory = output_directory(args.out, cfg)
        log.info("task %s -> %s (digest %s)", task, directory, config_digest(cfg)[:12])
        paths = execute(cfg, directory, Path(args.config).parent)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalBlowup, RegressionError, DegenerateError, FloatingPointError) as exc:
        print(f"numerical failure in task {task}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DomainError, SpecMismatch, IntegrabilityError) as exc:
        print(f"config error in task {task}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for p in paths:
        log.info("wrote %s", p)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
