"""Damped fixed-point solution of B = T(A,B), A = T_Z(A,B).

Asymptotic mode solves the unsubtracted equations (infinite renormalization
scale). FiniteRenorm mode subtracts at mu_ren = p_max:

    B(p) = m + T(B)(p) - T(B)(mu_ren),   A(p) = 1 + T_Z(p) - T_Z(mu_ren).
"""
from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import ConfigError, ConvergenceError
from .gap_operators import apply_both, assemble
from .quadrature import DEFAULT_ANGULAR
from .quark_state import (QuarkState, TailSpec, WeightFunction, constant_state,
                          default_x_onset, from_csv, measure_tail, evaluate)

COLLAPSE_AMPLITUDE = 1e-12
COLLAPSE_STREAK = 50


@dataclass(frozen=True)
class SolveConfig:
    mode: str = "asymptotic"          # asymptotic | finite_renorm
    m_param: float | None = None      # finite_renorm: m(mu_ren); asymptotic: target c1 or None
    eta: float = 0.3
    tol: float = 1e-10
    max_iters: int = 50_000
    seed: dict = field(default_factory=lambda: {"kind": "chiral_gaussian",
                                                "amplitude": 0.5, "scale": 1.0})
    fix_a: bool = False
    anderson: int = 0
    tail_window: tuple | None = None

    def __post_init__(self):
        if self.mode not in ("asymptotic", "finite_renorm"):
            raise ConfigError(f"unknown solve mode {self.mode!r}")
        if not 0 < self.eta <= 1:
            raise ConfigError("eta must lie in (0, 1]")
        if not self.tol > 0:
            raise ConfigError("tol must be positive")
        if self.mode == "finite_renorm" and (self.m_param is None or self.m_param < 0):
            raise ConfigError("finite_renorm needs m_param >= 0")
        if self.anderson < 0:
            raise ConfigError("anderson depth must be >= 0")

    @property
    def chiral(self):
        return not self.m_param

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True, eq=False)
class SolveReport:
    state: QuarkState
    iterations: int
    residual_history: np.ndarray = field(repr=False)
    tail: TailSpec | None
    flags: dict
    converged: bool
    trivial: bool
    residual: float
    m_ren: float | None = None

    def to_dict(self):
        return {"iterations": self.iterations, "converged": self.converged,
                "trivial": self.trivial, "residual": self.residual,
                "flags": self.flags, "m_ren": self.m_ren,
                "tail": None if self.tail is None else self.tail.to_dict(),
                "B0": float(self.state.b_values[0]), "M0": float(self.state.m[0]),
                "A0": float(self.state.a_values[0])}


def seed_state(spec, grid, mu=1.0):
    """Initial state: chiral_gaussian(amplitude, scale), constant(value) or file(path)."""
    if isinstance(spec, (tuple, list)):
        kind, *args = spec
        keys = {"chiral_gaussian": ("amplitude", "scale"), "constant": ("value",),
                "file": ("path",)}.get(kind, ())
        spec = {"kind": kind, **dict(zip(keys, args))}
    kind = spec.get("kind")
    p = grid.nodes
    if kind == "chiral_gaussian":
        amp = float(spec.get("amplitude", 0.5)) * mu
        scale = float(spec.get("scale", 1.0)) * mu
        return QuarkState(grid, np.ones_like(p), amp * np.exp(-(p / scale) ** 2), None, mu)
    if kind == "constant":
        return constant_state(grid, 1.0, float(spec.get("value", 0.0)), mu)
    if kind == "file":
        st = from_csv(spec["path"])
        if st.grid.size != grid.size or not np.allclose(st.grid.nodes, grid.nodes):
            a, b = evaluate(st, p)
            return QuarkState(grid, a, b, st.tail, st.mu)
        return st
    raise ConfigError(f"unknown seed kind {kind!r}")


class _Anderson:
    """Type-II Anderson mixing on the stacked (A, B) vector."""

    def __init__(self, depth, beta):
        self.depth, self.beta = depth, beta
        self.xs, self.fs = [], []

    def step(self, x, gx):
        f = gx - x
        self.xs.append(x.copy())
        self.fs.append(f.copy())
        if len(self.xs) > self.depth + 1:
            self.xs.pop(0)
            self.fs.pop(0)
        if len(self.xs) < 2:
            return x + self.beta * f
        dx = np.diff(np.array(self.xs), axis=0).T
        df = np.diff(np.array(self.fs), axis=0).T
        gam, *_ = np.linalg.lstsq(df, f, rcond=None)
        return x - dx @ gam + self.beta * (f - df @ gam)


def solver_assembly(config, kernel, grid, angular=DEFAULT_ANGULAR):
    extra = (grid.p_max,) if config.mode == "finite_renorm" else ()
    return assemble(kernel, grid, angular, tail_correction=True, extra_points=extra)


def _running_tail(asm, b, gamma_m):
    """B_+ continuation matched to the last grid sample."""
    mu = asm.kernel.uv_scale
    x_last = np.log(asm.k[-1] / mu)
    c1 = max(float(b[-1]), 0.0) * x_last ** gamma_m
    return TailSpec(c1, 0.0, gamma_m, x_last, mu)


def fixed_point_map(asm, config, a, b):
    """One application of the gap map; returns (A', B')."""
    mode = config.mode
    tail = None
    if not config.chiral:
        tail = _running_tail(asm, b, asm.kernel.gamma_m)
    st = QuarkState(asm.grid, a, b, tail, asm.kernel.uv_scale)
    if mode == "finite_renorm":
        tb, tz = apply_both(asm, st, include_extra=True)
        n = asm.n
        b_new = config.m_param + tb[:n] - tb[n]
        a_new = 1.0 + tz[:n] - tz[n]
    else:
        b_new, a_new = apply_both(asm, st)
    if config.fix_a:
        a_new = np.array(a, dtype=float)
    return a_new, b_new


def _relres(new, old):
    den = np.max(np.abs(old))
    return float(np.max(np.abs(new - old)) / den) if den > 0 else float(np.max(np.abs(new)))


def _monotone_dec(v, rtol=1e-9):
    scale = np.max(np.abs(v))
    return bool(np.all(np.diff(v) <= rtol * scale))


def solve(config, kernel, grid, asm=None, seed=None, weight=None):
    """Damped Picard (or Anderson) iteration to a fixed point."""
    if config.mode == "asymptotic" and config.m_param:
        return _shoot(config, kernel, grid, asm)
    asm = solver_assembly(config, kernel, grid) if asm is None else asm
    if config.mode == "finite_renorm" and (asm.points.size <= asm.n
                                            or asm.points[asm.n] != grid.p_max):
        raise ConfigError("finite_renorm needs an assembly with p_max as extra point")
    mu = kernel.uv_scale
    st0 = seed_state(config.seed, grid, mu) if seed is None else seed
    a = np.array(st0.a_values, dtype=float)
    b = np.array(st0.b_values, dtype=float)
    n = a.size
    acc = _Anderson(config.anderson, config.eta) if config.anderson else None
    hist = []
    streak = 0
    trivial = False
    converged = False
    it = 0
    for it in range(1, config.max_iters + 1):
        a_new, b_new = fixed_point_map(asm, config, a, b)
        if not (np.all(np.isfinite(a_new)) and np.all(np.isfinite(b_new))):
            raise ConvergenceError("iteration produced non-finite values", np.inf, it)
        res = max(_relres(b_new, b), _relres(a_new, a))
        hist.append(res)
        if res < config.tol:
            a, b = a_new, b_new
            converged = True
            break
        if acc is None:
            a = a + config.eta * (a_new - a)
            b = b + config.eta * (b_new - b)
        else:
            x = acc.step(np.concatenate([a, b]), np.concatenate([a_new, b_new]))
            a, b = x[:n], x[n:]
            if np.any(a <= 0):
                a = np.maximum(a, 1e-6)
        if config.chiral and np.max(np.abs(b)) < COLLAPSE_AMPLITUDE * mu:
            streak += 1
            if streak >= COLLAPSE_STREAK:
                b = np.zeros(n)
                a = a if config.fix_a else fixed_point_map(asm, config, a, b)[0]
                trivial = converged = True
                break
        else:
            streak = 0
    hist = np.array(hist)
    if trivial and acc is not None:
        # Anderson is quasi-Newton and can lock onto the unstable B = 0 point
        plain = SolveConfig(**{**config.to_dict(), "anderson": 0})
        rep = solve(plain, kernel, grid, asm, seed, weight)
        rep.flags["anderson_fallback"] = True
        return rep
    if not converged:
        raise ConvergenceError(f"no convergence after {config.max_iters} iterations "
                               f"(residual {hist[-1]:.3e})", float(hist[-1]), it)
    state = QuarkState(grid, a, b, None, mu)
    tail = None
    if not trivial:
        tail = _measure(state, config, grid, mu)
        if not config.chiral:
            state = state.with_values(tail=_running_tail(asm, b, kernel.gamma_m))
    a_chk, b_chk = fixed_point_map(asm, config, a, b)
    final_res = 0.0 if trivial else max(_relres(b_chk, b), _relres(a_chk, a))
    flags = _flags(state, weight, trivial)
    if trivial:
        flags["diagnostic"] = "collapsed to the trivial solution (below critical coupling)"
    m_ren = config.m_param if config.mode == "finite_renorm" else None
    return SolveReport(state, it, hist, tail, flags, True, trivial, final_res, m_ren)


def _measure(state, config, grid, mu):
    x_max = np.log(grid.p_max / mu)
    if config.tail_window is not None:
        win = config.tail_window
    elif config.chiral:
        # the 1/x term needs a window out to x ~ 12 for a clean exponent
        win = (6.0, min(12.0, x_max - 2.0)) if x_max >= 10.0 else (4.0, min(x_max - 1.0, 9.0))
    else:
        win = (4.0, x_max - 1.0)
    try:
        return measure_tail(state, win, chiral=config.chiral, subleading=True, mu=mu)
    except ValueError:
        return None


def _flags(state, weight, trivial):
    m = state.m
    b = state.b_values
    flags = {"b_positive": bool(np.all(b > 0)) if not trivial else False,
             "m_decreasing": _monotone_dec(m) if not trivial else True,
             "b_decreasing": _monotone_dec(b) if not trivial else True}
    if weight is not None and not trivial:
        flags["u_decreasing"] = _monotone_dec(weight(state.p) * b)
    return flags


def _shoot(config, kernel, grid, asm=None, max_steps=30):
    """Asymptotic mode with a target c1: secant on m(mu_ren) in FiniteRenorm mode."""
    target = float(config.m_param)
    fr = SolveConfig("finite_renorm", 0.0, config.eta, config.tol, config.max_iters,
                     {"kind": "constant", "value": 0.0}, config.fix_a, config.anderson,
                     config.tail_window)
    asm = solver_assembly(fr, kernel, grid, DEFAULT_ANGULAR if asm is None else asm.angular)
    x_max = np.log(grid.p_max / kernel.uv_scale)

    def run(m):
        cfg = SolveConfig(**{**fr.to_dict(), "m_param": m, "seed": {"kind": "constant",
                                                                     "value": m}})
        rep = solve(cfg, kernel, grid, asm)
        if rep.tail is None:
            raise ConvergenceError("tail fit failed during shooting")
        return rep

    m0 = target * x_max ** -kernel.gamma_m
    r0 = run(m0)
    m1 = m0 * target / r0.tail.c1
    r1 = run(m1)
    for _ in range(max_steps):
        if abs(r1.tail.c1 / target - 1) < 0.02:
            return r1
        slope = (r1.tail.c1 - r0.tail.c1) / (m1 - m0)
        m0, r0 = m1, r1
        m1 = max(m1 + (target - r1.tail.c1) / slope, 1e-12)
        r1 = run(m1)
    raise ConvergenceError("shooting on m(mu_ren) did not reach the target c1")


def residual(asm, config, state):
    a_new, b_new = fixed_point_map(asm, config, state.a_values, state.b_values)
    return max(_relres(b_new, state.b_values), _relres(a_new, state.a_values))


@dataclass(frozen=True, eq=False)
class BranchPair:
    positive: SolveReport
    negated: QuarkState
    residual: float
    symmetric: bool


def branch_pair(config, kernel, grid, asm=None, report=None):
    """Check that -B solves the equation whenever B does (broken only by m)."""
    asm = solver_assembly(config, kernel, grid) if asm is None else asm
    rep = solve(config, kernel, grid, asm) if report is None else report
    neg = rep.state.negated()
    if rep.trivial:
        return BranchPair(rep, neg, 0.0, True)
    cfg = config
    a_new, b_new = fixed_point_map(asm, cfg, neg.a_values, neg.b_values)
    res = max(_relres(b_new, neg.b_values), _relres(a_new, neg.a_values))
    return BranchPair(rep, neg, res, bool(res < 10 * config.tol))


def refined_residual(report, config, kernel):
    """Residual of the solution interpolated onto a grid with twice the nodes."""
    grid2 = report.state.grid.refined()
    a, b = evaluate(QuarkState(report.state.grid, report.state.a_values,
                               report.state.b_values, None, report.state.mu), grid2.nodes)
    asm2 = solver_assembly(config, kernel, grid2)
    return residual(asm2, config, QuarkState(grid2, a, b, None, report.state.mu))
