"""Perron root of the linearized scalar operator and critical couplings."""
from dataclasses import dataclass, field

import numpy as np

from .errors import BracketError, ConvergenceError
from .gap_operators import assemble, assemble_Tc, symmetrizer
from .quark_state import WeightFunction


@dataclass(frozen=True)
class SpectralResult:
    lambda_max: float
    eigenvector: np.ndarray = field(repr=False)
    iterations: int
    residual: float
    nodes: np.ndarray = field(default=None, repr=False)

    def to_dict(self):
        return {"lambda_max": self.lambda_max, "iterations": self.iterations,
                "residual": self.residual}


def _check_irreducible(m):
    off = m.copy()
    np.fill_diagonal(off, 0.0)
    if np.any(m < 0):
        raise ValueError("matrix has negative entries")
    if m.shape[0] > 1 and np.any(off.max(axis=1) <= 0):
        raise ValueError("matrix is reducible: a row has no positive off-diagonal entry")


def spectral_radius(m, tol=1e-12, max_iter=100_000, seed_vector=None, sym=None, nodes=None):
    """Power iteration with a Rayleigh readout.

    `sym` (optional) holds d such that diag(sqrt d) M diag(1/sqrt d) is
    symmetric; the Rayleigh quotient is then taken in that inner product.
    """
    m = np.asarray(m, dtype=float)
    _check_irreducible(m)
    t = np.ones(m.shape[0]) if seed_vector is None else np.abs(np.asarray(seed_vector, float))
    t = t / np.max(t)
    d = np.ones_like(t) if sym is None else np.asarray(sym, dtype=float)
    lam, res = 0.0, np.inf
    for it in range(1, max_iter + 1):
        mt = m @ t
        lam = float(np.dot(d * t, mt) / np.dot(d * t, t))
        res = float(np.max(np.abs(mt - lam * t)) / np.max(np.abs(t)))
        t = mt / np.max(mt)
        if res < tol * max(lam, 1e-300):
            break
    else:
        raise ConvergenceError(f"power iteration stalled, residual {res:.3e}", res, max_iter)
    if np.any(t <= 0):
        raise ConvergenceError("Perron vector not strictly positive", res, it)
    return SpectralResult(lam, t, it, res, nodes)


def tc_spectrum(asm, **kw):
    return spectral_radius(assemble_Tc(asm), sym=symmetrizer(asm), nodes=asm.k, **kw)


def lambda_for(kernel, grid, z_profile=None, **kw):
    asm = assemble(kernel, grid, weight=None, z_profile=z_profile, tail_correction=False, **kw)
    return tc_spectrum(asm)


def critical_coupling(family, bracket, rtol=1e-3, max_steps=200):
    """Bisection on lambda_max(c) = 1 for `family(c)` -> SpectralResult.

    Returns (c_crit, info) where info records the endpoint and midpoint
    eigenvalues used for the monotonicity check.
    """
    lo, hi = map(float, bracket)
    l_lo, l_hi = family(lo).lambda_max, family(hi).lambda_max
    mid = 0.5 * (lo + hi)
    l_mid = family(mid).lambda_max
    info = {"bracket": [lo, hi], "lambda_lo": l_lo, "lambda_hi": l_hi, "lambda_mid": l_mid}
    if not l_lo < 1.0 < l_hi:
        raise BracketError(f"lambda(lo)={l_lo:.6g}, lambda(hi)={l_hi:.6g} do not bracket 1")
    info["monotone"] = bool(l_lo <= l_mid <= l_hi)
    for _ in range(max_steps):
        if hi - lo <= rtol * abs(mid) * 0.5:
            break
        lm = family(mid).lambda_max
        if lm < 1.0:
            lo = mid
        else:
            hi = mid
        mid = 0.5 * (lo + hi)
    info["c_crit"] = mid
    return mid, info


def kernel_family(kernel, grid, control, z_profile=None, **kw):
    """c -> SpectralResult for the kernel with `control` (gamma_m or D_over_omega2) set to c."""
    if control not in ("gamma_m", "D_over_omega2", "scale"):
        raise ValueError(f"unknown control {control!r}")
    if control == "gamma_m" and kernel.variant == "range":
        raise ValueError("gamma_m is not a coupling control for the range model")
    if control == "D_over_omega2" and kernel.variant != "range":
        raise ValueError("D_over_omega2 applies to the range model only")
    if control == "gamma_m":
        # the simplest/perturbative kernels are linear in gamma_m
        base = lambda_for(kernel.replace(gamma_m=1.0), grid, z_profile, **kw)
        return lambda c: SpectralResult(c * base.lambda_max, base.eigenvector,
                                        base.iterations, c * base.residual, base.nodes)
    return lambda c: lambda_for(kernel.replace(**{control: c}), grid, z_profile, **kw)


def optimal_weight(result, k_r_target=None):
    """r(p) = lambda / t(p) tabulated from the Perron vector."""
    lam = result.lambda_max if k_r_target is None else k_r_target
    r = lam / result.eigenvector
    return WeightFunction("eigenvector", table_p=tuple(result.nodes), table_r=tuple(r))


def log_exponent(p, values, window, mu=1.0):
    """Slope of log(values) against log log(p/mu) over x in window."""
    x = np.log(np.asarray(p) / mu)
    sel = (x >= window[0]) & (x <= window[1])
    return float(np.polyfit(np.log(x[sel]), np.log(np.asarray(values)[sel]), 1)[0])
