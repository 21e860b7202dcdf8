"""Effective interaction kernels G(q^2).

Three variants share one immutable record:

* ``perturbative``: 4 pi^2 g / (q^2 log(q^2/mu^2)), valid only above the Landau pole
* ``simplest``: 4 pi^2 g / (max(q^2, mu^2) log(e + q^2/mu^2))
* ``range``: Gaussian infrared term plus a running-coupling UV term
  (Qin-Chang form), whose UV limit is the perturbative kernel with mu -> lambda_qcd.
"""
import dataclasses
from dataclasses import dataclass

import numpy as np

from .errors import DomainError

VARIANTS = ("perturbative", "simplest", "range")
FOUR_PI2 = 4.0 * np.pi ** 2
EIGHT_PI2 = 8.0 * np.pi ** 2


@dataclass(frozen=True)
class GluonKernel:
    variant: str = "simplest"
    gamma_m: float = 12 / 25
    mu: float = 1.0
    # range model parameters (GeV units)
    D: float = 0.72 * 0.36
    omega: float = 0.6
    lambda_qcd: float = 0.234
    tau: float = float(np.e ** 2 - 1)
    m_t: float = 0.5
    # overall multiplier; 1 for the physical kernels
    scale: float = 1.0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown kernel variant {self.variant!r}")
        if not self.gamma_m > 0:
            raise ValueError("gamma_m must be positive")
        for name in ("mu", "omega", "lambda_qcd", "m_t"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.D < 0 or self.scale < 0 or self.tau <= 0:
            raise ValueError("D, scale must be >= 0 and tau > 0")

    # -- convenience -------------------------------------------------
    @property
    def uv_scale(self):
        """Reference scale of the perturbative tail (mu, or lambda_qcd for the range model)."""
        return self.lambda_qcd if self.variant == "range" else self.mu

    @property
    def kinks(self):
        """q^2 values where G has a kink (used to split angular panels)."""
        return (self.mu ** 2,) if self.variant == "simplest" else ()

    @property
    def q2_min(self):
        """Lower end of the admissible q^2 range (exclusive)."""
        return np.e * self.mu ** 2 if self.variant == "perturbative" else 0.0

    @property
    def D_over_omega2(self):
        return self.D / self.omega ** 2

    def replace(self, **changes):
        if "D_over_omega2" in changes:
            changes["D"] = changes.pop("D_over_omega2") * changes.get("omega", self.omega) ** 2
        return dataclasses.replace(self, **changes)

    def to_dict(self):
        d = {"variant": self.variant, "gamma_m": self.gamma_m, "scale": self.scale}
        if self.variant == "range":
            d.update(D=self.D, omega=self.omega, D_over_omega2=self.D_over_omega2,
                     lambda_qcd=self.lambda_qcd, tau=self.tau, m_t=self.m_t)
        else:
            d["mu"] = self.mu
        return d

    def __call__(self, q2):
        return evaluate(self, q2)


def _f_range(q2, m_t):
    a = 4.0 * m_t ** 2
    small = q2 < 1e-6 * m_t ** 2
    safe = np.where(small, 1.0, q2)
    # series: (1 - e^{-s/a})/s = 1/a - s/(2a^2) + ...
    return np.where(small, 1.0 / a - q2 / (2 * a * a), -np.expm1(-safe / a) / safe)


def evaluate(kernel, q2):
    """G(q^2) for an array or scalar q^2 >= 0."""
    q2 = np.asarray(q2, dtype=float)
    if np.any(q2 < 0):
        raise DomainError("q^2 must be non-negative")
    g = kernel.gamma_m
    if kernel.variant == "perturbative":
        mu2 = kernel.mu ** 2
        if np.any(q2 <= np.e * mu2):
            raise DomainError("perturbative kernel evaluated at q^2 <= e mu^2 (Landau-pole region)")
        out = FOUR_PI2 * g / (q2 * np.log(q2 / mu2))
    elif kernel.variant == "simplest":
        mu2 = kernel.mu ** 2
        out = FOUR_PI2 * g / (np.maximum(q2, mu2) * np.log(np.e + q2 / mu2))
    else:
        w2 = kernel.omega ** 2
        ir = EIGHT_PI2 * kernel.D / w2 ** 2 * np.exp(-q2 / w2)
        uv = EIGHT_PI2 * g * _f_range(q2, kernel.m_t) / np.log(
            kernel.tau + (1.0 + q2 / kernel.lambda_qcd ** 2) ** 2)
        out = ir + uv
    out = kernel.scale * out
    return float(out) if out.ndim == 0 else out


def perturbative_equivalent(kernel):
    """Perturbative kernel sharing the UV tail of `kernel`."""
    if kernel.variant == "perturbative":
        return kernel
    return GluonKernel("perturbative", gamma_m=kernel.gamma_m, mu=kernel.uv_scale,
                       scale=kernel.scale)


def perturbative(gamma_m=12 / 25, mu=1.0):
    return GluonKernel("perturbative", gamma_m=gamma_m, mu=mu)


def simplest(gamma_m=0.74, mu=1.0):
    return GluonKernel("simplest", gamma_m=gamma_m, mu=mu)


def range_model(D_over_omega2=0.72, omega=0.6, **kw):
    return GluonKernel("range", D=D_over_omega2 * omega ** 2, omega=omega, **kw)
