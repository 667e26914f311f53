"""Experiment configuration: YAML file, validated by pydantic, all defaults explicit."""
from __future__ import annotations

import math
from pathlib import Path
from typing import Annotated, Literal, Optional, Union

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .errors import ConfigError, DomainError
from .exppoly import ExpPolyFunction
from .io import digest
from .kernels import ExpPolyKernel, FunctionKernel, Tabulated, UniformWindow, Unweighted
from .oracle import InitialDatum, SDDEModel, gbm, linear_dynamics, mean_revert_delay
from .weighted_space import make_weight

__all__ = ["ExperimentConfig", "load_config", "parse_config", "build_model", "config_digest", "TASKS"]

TASKS = ("project", "simulate", "error-scan", "price", "control-eval", "basis")


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)


class WeightBlock(_Strict):
    p: float = 0.0
    lam: float = Field(1.0, alias="lambda")

    @model_validator(mode="after")
    def _constraint(self):
        if not (math.isfinite(self.p) and math.isfinite(self.lam)):
            raise ValueError("p and lambda must be finite")
        bound = max(self.p, self.p / 2)
        if self.lam <= bound:
            raise ValueError(f"lambda = {self.lam:g} must satisfy lambda > max{{p, p/2}} = {bound:g}")
        return self


class QuadratureBlock(_Strict):
    nodes: Optional[int] = Field(None, ge=16)
    tail_tol: float = Field(1e-12, gt=0, lt=1)


class UniformSpec(_Strict):
    variant: Literal["uniform"]
    delta: float = Field(gt=0)
    height: Optional[float] = None
    weighted: bool = True


class ExpPolySpec(_Strict):
    variant: Literal["exppoly"]
    # rows (j, Re mu, Im mu, Re c, Im c)
    terms: list[tuple[int, float, float, float, float]]
    weighted: bool = True

    @field_validator("terms")
    @classmethod
    def _nonempty(cls, v):
        if not v:
            raise ValueError("need at least one term")
        if any(j < 0 for j, *_ in v):
            raise ValueError("powers j must be non-negative")
        return v


class TabulatedSpec(_Strict):
    variant: Literal["tabulated"]
    csv: Optional[str] = None
    xi: Optional[list[float]] = None
    values: Optional[list[float]] = None
    weighted: bool = True

    @model_validator(mode="after")
    def _source(self):
        if (self.csv is None) == (self.xi is None):
            raise ValueError("give either csv or xi/values")
        if self.xi is not None and (self.values is None or len(self.values) != len(self.xi)):
            raise ValueError("xi and values must have equal length")
        return self


class GaussianSpec(_Strict):
    variant: Literal["gaussian"]
    center: float = Field(le=0)
    width: float = Field(gt=0)
    height: float = 1.0
    weighted: bool = True


KernelSpec = Annotated[Union[UniformSpec, ExpPolySpec, TabulatedSpec, GaussianSpec],
                       Field(discriminator="variant")]


class KernelsBlock(_Strict):
    alpha: Optional[KernelSpec] = None
    beta: Optional[KernelSpec] = None
    gamma: Optional[KernelSpec] = None
    gamma0: float = 0.0


class GBMSpec(_Strict):
    name: Literal["gbm"]
    mu: float = 0.0
    sigma: float = 0.2


class MeanRevertSpec(_Strict):
    name: Literal["mean_revert_delay"]
    kappa: float = 1.0
    sigma: float = 0.2


class CustomSpec(_Strict):
    name: Literal["custom"]
    # affine coefficients (const, x, y, u)
    drift: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)
    diffusion: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)


DynamicsBlock = Annotated[Union[GBMSpec, MeanRevertSpec, CustomSpec], Field(discriminator="name")]


class InitialBlock(_Strict):
    s0: float = 1.0
    # None: zero history; number: constant; {"csv": path}: tabulated
    s1: Union[None, float, dict] = None

    @field_validator("s1")
    @classmethod
    def _s1(cls, v):
        if isinstance(v, dict) and set(v) != {"csv"}:
            raise ValueError("tabulated history is given as {csv: path}")
        return v


class SimulationBlock(_Strict):
    dt: float = Field(2.0**-8, gt=0)
    T: float = Field(1.0, gt=0)
    paths: int = Field(1000, ge=1)
    seed: int = Field(0, ge=0)
    scheme: Literal["euler", "exponential"] = "euler"

    @model_validator(mode="after")
    def _grid(self):
        steps = self.T / self.dt
        if abs(steps - round(steps)) > 1e-9 * max(steps, 1.0):
            raise ValueError("T must be an integer multiple of dt")
        return self


class ProjectTask(_Strict):
    kind: Literal["project"]
    n: int = Field(16, ge=0)


class SimulateTask(_Strict):
    kind: Literal["simulate"]
    n: int = Field(8, ge=0)
    paths: int = Field(1, ge=1)


class ErrorScanTask(_Strict):
    kind: Literal["error-scan"]
    n_list: list[int] = [2, 4, 8, 16]
    batches: int = Field(10, ge=10)

    @field_validator("n_list")
    @classmethod
    def _increasing(cls, v):
        if not v or v[0] < 0 or any(b <= a for a, b in zip(v, v[1:])):
            raise ValueError("n_list must be non-negative and strictly increasing")
        return v


class PriceTask(_Strict):
    kind: Literal["price"]
    n: int = Field(8, ge=0)
    payoff: Literal["put", "call"] = "put"
    strike: float = 1.0
    discount_rate: float = 0.0
    exercise_dates: Union[int, list[float]] = 10
    degree: int = Field(2, ge=1)
    direction: Literal["sup", "inf"] = "sup"
    reference: bool = True


class CostSpec(_Strict):
    # c_abs |z| + c_sq z^2 + c_lin z + c_u u^2
    z_abs: float = 0.0
    z_sq: float = 0.0
    z_lin: float = 0.0
    u_sq: float = 0.0


class PolicySpec(_Strict):
    # u = bound * tanh(gain * (level - z)) or a constant
    type: Literal["tanh", "constant"] = "tanh"
    bound: float = 0.5
    gain: float = 1.0
    level: float = 1.0
    value: float = 0.0


class ControlTask(_Strict):
    kind: Literal["control-eval"]
    n_list: list[int] = [2, 4, 8, 16]
    running: CostSpec = CostSpec(z_abs=1.0, u_sq=1.0)
    terminal: CostSpec = CostSpec(z_abs=1.0)
    policies: list[PolicySpec] = [PolicySpec()]

    @field_validator("policies")
    @classmethod
    def _some(cls, v):
        if not v:
            raise ValueError("need at least one policy")
        return v


class BasisTask(_Strict):
    kind: Literal["basis"]
    k_max: int = Field(4, ge=0)
    points: int = Field(201, ge=2)
    xi_min: float = Field(-5.0, lt=0)


TaskBlock = Annotated[Union[ProjectTask, SimulateTask, ErrorScanTask, PriceTask, ControlTask, BasisTask],
                      Field(discriminator="kind")]


class OutputBlock(_Strict):
    directory: Optional[str] = None
    formats: list[Literal["csv", "json"]] = ["csv", "json"]


class ExperimentConfig(_Strict):
    weight: WeightBlock = WeightBlock()
    quadrature: QuadratureBlock = QuadratureBlock()
    kernels: KernelsBlock = KernelsBlock()
    dynamics: DynamicsBlock = GBMSpec(name="gbm")
    initial: InitialBlock = InitialBlock()
    simulation: SimulationBlock = SimulationBlock()
    task: TaskBlock = ProjectTask(kind="project")
    output: OutputBlock = OutputBlock()

    def canonical(self) -> dict:
        """Fully expanded config; the output directory is excluded from the digest."""
        d = self.model_dump(mode="json", by_alias=True)
        d["output"] = {"formats": d["output"]["formats"]}
        return d


def config_digest(cfg: ExperimentConfig) -> str:
    return digest(cfg.canonical())


def _line_of(text: str, loc) -> Optional[int]:
    """1-based line of the YAML node at ``loc`` (or its nearest existing parent)."""
    try:
        node = yaml.compose(text)
    except yaml.YAMLError:
        return None
    line = None
    for key in loc:
        if isinstance(node, yaml.MappingNode):
            nxt = next((v for k, v in node.value if k.value == key), None)
            if nxt is None:
                break
            line, node = next(k for k, v in node.value if v is nxt).start_mark.line + 1, nxt
        elif isinstance(node, yaml.SequenceNode) and isinstance(key, int) and key < len(node.value):
            node = node.value[key]
            line = node.start_mark.line + 1
        else:
            break
    return line


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"{source}:{mark.line + 1}" if mark is not None else source
        raise ConfigError(where, f"YAML syntax error: {getattr(exc, 'problem', exc)}") from None
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(source, "top level must be a mapping")
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        err = exc.errors()[0]
        loc = tuple(x for x in err["loc"] if not (isinstance(x, str) and x in _VARIANT_TAGS))
        line = _line_of(text, loc)
        field = ".".join(str(x) for x in loc) or "<root>"
        where = f"{source}:{line} ({field})" if line else f"{source} ({field})"
        msg = err["msg"].removeprefix("Value error, ")
        raise ConfigError(where, msg) from None


# pydantic inserts the union member tag into error locations
_VARIANT_TAGS = {"uniform", "exppoly", "tabulated", "gaussian", "gbm", "mean_revert_delay", "custom",
                 *TASKS, "control-eval"}


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(str(path), f"cannot read config: {exc.strerror}") from None
    return parse_config(text, str(path))


# --- object construction ------------------------------------------------------

def _kernel(spec, p: float, role: str, base_dir: Path):
    if spec is None:
        return None
    if isinstance(spec, UniformSpec):
        k = UniformWindow(spec.delta, spec.height, role=role)
    elif isinstance(spec, ExpPolySpec):
        terms = tuple((j, complex(mr, mi), complex(cr, ci)) for j, mr, mi, cr, ci in spec.terms)
        k = ExpPolyKernel(ExpPolyFunction(terms), role=role)
    elif isinstance(spec, TabulatedSpec):
        if spec.csv is not None:
            k = Tabulated.from_csv(base_dir / spec.csv, role=role)
        else:
            k = Tabulated(np.array(spec.xi), np.array(spec.values), role=role)
    else:
        c, s, h = spec.center, spec.width, spec.height
        k = FunctionKernel(lambda xi: h * np.exp(-0.5 * ((xi - c) / s) ** 2), support=c - 12 * s, role=role)
    if not spec.weighted and p != 0:
        k = Unweighted(k, p, role=role)
    return k


def build_model(cfg: ExperimentConfig, base_dir=".") -> SDDEModel:
    base_dir = Path(base_dir)
    try:
        spec = make_weight(cfg.weight.p, cfg.weight.lam)
    except DomainError as exc:
        raise ConfigError("weight.lambda", str(exc)) from None
    d = cfg.dynamics
    if isinstance(d, GBMSpec):
        dyn = gbm(d.mu, d.sigma)
    elif isinstance(d, MeanRevertSpec):
        dyn = mean_revert_delay(d.kappa, d.sigma)
    else:
        dyn = linear_dynamics(d.drift, d.diffusion)
    s1 = cfg.initial.s1
    if isinstance(s1, dict):
        s1 = Tabulated.from_csv(base_dir / s1["csv"])
    kernels = {}
    for role in ("alpha", "beta", "gamma"):
        try:
            kernels[role] = _kernel(getattr(cfg.kernels, role), spec.p, role, base_dir)
        except (DomainError, OSError, IndexError) as exc:
            raise ConfigError(f"kernels.{role}", str(exc)) from None
    return SDDEModel(spec, dyn, InitialDatum(cfg.initial.s0, s1), gamma0=cfg.kernels.gamma0, **kernels)
