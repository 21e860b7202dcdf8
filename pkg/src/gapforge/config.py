"""Run configuration: JSON in, validated and fully resolved model out."""
import json
from typing import Annotated, Literal, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .errors import ConfigError
from .gluon_models import GluonKernel
from .quadrature import AngularRule, radial_grid
from .solver import SolveConfig


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ModelBlock(_Strict):
    variant: Literal["simplest", "perturbative", "range"] = "simplest"
    gamma_m: float = Field(12 / 25, gt=0)
    mu: float = Field(1.0, gt=0)
    D_over_omega2: float = Field(0.72, ge=0)
    omega: float = Field(0.6, gt=0)
    lambda_qcd: float = Field(0.234, gt=0)
    tau: float = Field(float(np.e ** 2 - 1), gt=0)
    m_t: float = Field(0.5, gt=0)
    scale: float = Field(1.0, ge=0)

    def kernel(self):
        return GluonKernel(self.variant, self.gamma_m, self.mu,
                           self.D_over_omega2 * self.omega ** 2, self.omega,
                           self.lambda_qcd, self.tau, self.m_t, self.scale)


class GridBlock(_Strict):
    p_min: float = Field(1e-4, gt=0)
    p_max: float = Field(1e3, gt=0)
    n_nodes: int = Field(400, ge=8)
    order: int = Field(8, ge=2, le=64)
    angular_nodes: int = Field(64, ge=4)

    @model_validator(mode="after")
    def _order(self):
        if not self.p_max > self.p_min:
            raise ValueError("p_max must exceed p_min")
        if self.angular_nodes % 2:
            raise ValueError("angular_nodes must be even")
        return self

    def radial(self):
        return radial_grid(self.p_min, self.p_max, self.n_nodes, self.order)

    def angular(self):
        return AngularRule(self.angular_nodes)


class SolveBlock(_Strict):
    mode: Literal["asymptotic", "finite_renorm"] = "asymptotic"
    m_param: float | None = None
    eta: float = Field(0.3, gt=0, le=1)
    tol: float = Field(1e-10, gt=0)
    max_iters: int = Field(50_000, ge=1)
    seed_profile: dict = Field(default_factory=lambda: {"kind": "chiral_gaussian",
                                                        "amplitude": 0.5, "scale": 1.0})
    fix_a: bool = False
    anderson: int = Field(0, ge=0)
    tail_window: tuple[float, float] | None = None

    def solve_config(self):
        try:
            return SolveConfig(self.mode, self.m_param, self.eta, self.tol, self.max_iters,
                               dict(self.seed_profile), self.fix_a, self.anderson,
                               self.tail_window)
        except ConfigError as exc:
            raise ValueError(str(exc)) from exc

    @model_validator(mode="after")
    def _check(self):
        self.solve_config()
        return self


class SolveOptions(SolveBlock):
    kind: Literal["solve"]
    certify: bool = False
    branch_check: bool = True


class CriticalOptions(_Strict):
    kind: Literal["critical"]
    control: Literal["gamma_m", "D_over_omega2", "scale"] = "gamma_m"
    bracket: tuple[float, float] = (0.5, 1.0)
    rtol: float = Field(1e-4, gt=0)


class BoundsOptions(_Strict):
    kind: Literal["bounds"]
    window: tuple[float, float] = (0.0, 4.0)
    minimize: bool = True
    starts: int = Field(8, ge=1)
    weight: dict | None = None
    sandwich_trials: int = Field(5, ge=0)


class CertifyOptions(_Strict):
    kind: Literal["certify"]
    invariance_trials: int = Field(100, ge=0)


class ScanOptions(_Strict):
    kind: Literal["scan"]
    control: Literal["gamma_m", "D_over_omega2", "scale"] = "D_over_omega2"
    start: float = 1.5
    stop: float = 4.0
    step: float = Field(0.25, gt=0)
    measure: Literal["certify", "lambda", "transition"] = "certify"
    solve: SolveBlock = SolveBlock(fix_a=True)

    @model_validator(mode="after")
    def _range(self):
        if self.stop < self.start:
            raise ValueError("stop must not be below start")
        return self

    def values(self):
        n = int(np.floor((self.stop - self.start) / self.step + 1e-9)) + 1
        return [round(self.start + i * self.step, 12) for i in range(n)]


class TailsOptions(_Strict):
    kind: Literal["verify-tails"]
    contraction_orders: tuple[float, ...] = (1.0, 2.0)
    chiral_order: float = 0.5
    chi_points: tuple[float, ...] = (4.0, 8.0, 16.0, 100.0)
    c2_lambda: float | None = Field(None, gt=0)
    c2_gamma_m: float = Field(1.1, gt=0)
    solve: SolveBlock = SolveBlock()


class NormOptions(_Strict):
    kind: Literal["verify-norm"]
    gamma_m: float = Field(12 / 25, gt=0)
    delta_ratios: tuple[float, ...] = (0.25, 0.5, 0.75)
    log_norms: tuple[float, ...] = (1e4, 1e8, 1e16, 1e30)
    two_step_trials: int = Field(200, ge=0)

    @model_validator(mode="after")
    def _ratios(self):
        if any(not 0 < q < 1 for q in self.delta_ratios):
            raise ValueError("delta_ratios must lie in (0, 1)")
        return self


Analysis = Annotated[Union[SolveOptions, CriticalOptions, BoundsOptions, CertifyOptions,
                           ScanOptions, TailsOptions, NormOptions],
                     Field(discriminator="kind")]


class RunConfig(_Strict):
    model: ModelBlock = ModelBlock()
    grid: GridBlock = GridBlock()
    analysis: Analysis
    output_dir: str = "gapforge_out"
    seed: int = 0
    threads: int = Field(1, ge=1)


def load_config(path, overrides=None):
    """Read, merge CLI overrides and validate; raises ConfigError."""
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    raw.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return parse_config(raw)


def parse_config(raw):
    try:
        return RunConfig.model_validate(raw)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc
