"""Sampled quark dressing functions, UV tails and weight functions.

A(p) = 1/Z(p), B(p) and M(p) = B/A live on a RadialGrid. Beyond the grid
(or beyond x_onset) B continues with the analytic tail

    B(x) = c1 x^-g + c2 x^(g-1) exp(-2x),   x = log(p/mu).
"""
import csv
import json
from dataclasses import dataclass, field, asdict

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.optimize import least_squares

from .quadrature import RadialGrid, radial_grid


@dataclass(frozen=True)
class TailSpec:
    c1: float = 0.0
    c2: float = 0.0
    gamma_m: float = 12 / 25
    x_onset: float = 5.0
    mu: float = 1.0
    include_c2: bool = False
    subleading: float = 0.0   # a in exp(a/x) multiplying the leading term
    fit_rms: float = 0.0

    def __post_init__(self):
        if self.c1 < 0:
            raise ValueError("c1 must be >= 0")

    def b(self, p, include_c2=None):
        x = np.log(np.asarray(p, dtype=float) / self.mu)
        use_c2 = self.include_c2 if include_c2 is None else include_c2
        xs = np.maximum(x, 1e-12)
        out = self.c1 * xs ** -self.gamma_m * np.exp(self.subleading / xs)
        if use_c2 or self.c1 == 0:
            out = out + self.c2 * xs ** (self.gamma_m - 1) * np.exp(-2 * xs)
        return out

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class QuarkState:
    grid: RadialGrid
    a_values: np.ndarray
    b_values: np.ndarray
    tail: TailSpec | None = None
    mu: float = 1.0

    def __post_init__(self):
        a = np.array(self.a_values, dtype=float)
        b = np.array(self.b_values, dtype=float)
        if a.shape != self.grid.nodes.shape or b.shape != a.shape:
            raise ValueError("samples must match the grid")
        if np.any(a <= 0) or not np.all(np.isfinite(a)) or not np.all(np.isfinite(b)):
            raise ValueError("A must be positive and samples finite")
        a.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "a_values", a)
        object.__setattr__(self, "b_values", b)

    @property
    def p(self):
        return self.grid.nodes

    @property
    def z(self):
        return 1.0 / self.a_values

    @property
    def m(self):
        return self.b_values / self.a_values

    def with_values(self, a=None, b=None, tail=None):
        return QuarkState(self.grid, self.a_values if a is None else a,
                          self.b_values if b is None else b,
                          self.tail if tail is None else tail, self.mu)

    def negated(self):
        t = self.tail
        if t is not None and (t.c1 or t.c2):
            t = TailSpec(**{**t.to_dict(), "c1": 0.0, "c2": -t.c2}) if t.c1 == 0 else None
        return QuarkState(self.grid, self.a_values, -self.b_values, t, self.mu)


def default_x_onset(p_max, mu=1.0):
    return float(min(5.0, 0.8 * np.log(p_max / mu)))


def constant_state(grid, a=1.0, b=0.0, mu=1.0):
    n = grid.size
    return QuarkState(grid, np.full(n, float(a)), np.full(n, float(b)), None, mu)


def state_from_tail(grid, tail, a=1.0):
    """State whose samples are the tail formula itself."""
    b = tail.b(grid.nodes, include_c2=True)
    return QuarkState(grid, np.full(grid.size, float(a)), b, tail, tail.mu)


def evaluate(state, p):
    """(A, B) at momenta p: interpolation on-grid, tail beyond x_onset, flat below p_min."""
    p = np.asarray(p, dtype=float)
    nodes = state.grid.nodes
    lp = np.log(np.clip(p, nodes[0], nodes[-1]))
    ln = np.log(nodes)
    a = np.interp(lp, ln, state.a_values)
    b_s = state.b_values
    if np.all(b_s > 0):
        b = np.exp(PchipInterpolator(ln, np.log(b_s))(lp))
    else:
        b = PchipInterpolator(ln, b_s)(lp)
    exact = np.isin(p, nodes)
    if np.any(exact):
        idx = np.searchsorted(nodes, p[exact])
        a[exact] = state.a_values[idx]
        b[exact] = b_s[idx]
    # flat between the last node and p_max; A = 1 beyond the grid domain
    beyond = p > state.grid.p_max
    a = np.where(beyond, 1.0, a)
    t = state.tail
    if t is not None:
        use = np.log(np.maximum(p, 1e-300) / t.mu) > t.x_onset
        if np.any(use):
            b = np.where(use, t.b(np.where(use, p, t.mu * np.exp(t.x_onset + 1.0))), b)
            a = np.where(use, 1.0, a)
    if a.ndim == 0:
        return float(a), float(b)
    return a, b


def measure_tail(state, window, chiral=False, subleading=False, mu=None):
    """Least-squares fit of the UV tail over x in `window`.

    Massive states fit (c1, c2, gamma_m) to log B. Chiral states (c1 = 0)
    fit log B + 2x = log c2 + (gamma_m - 1) log x. With `subleading` an
    a/x correction is fitted alongside and stored in the result.
    """
    if isinstance(state, QuarkState):
        p, b = state.p, state.b_values
        mu = state.mu if mu is None else mu
    else:
        p, b = (np.asarray(v, dtype=float) for v in state)
        mu = 1.0 if mu is None else mu
    x_lo, x_hi = window
    x = np.log(p / mu)
    sel = (x >= x_lo) & (x <= x_hi)
    if sel.sum() < 4:
        raise ValueError("tail window holds fewer than 4 nodes")
    xs, bs = x[sel], b[sel]
    if np.any(bs <= 0):
        raise ValueError("B non-positive inside the tail window")
    cols = [np.ones_like(xs), np.log(xs)]
    if subleading:
        cols.append(1.0 / xs)
    X = np.column_stack(cols)
    y = np.log(bs) + (2 * xs if chiral else 0.0)
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    a_sub = coef[2] if subleading else 0.0
    if chiral:
        g = coef[1] + 1.0
        rms = float(np.sqrt(np.mean((X @ coef - y) ** 2)))
        return TailSpec(0.0, float(np.exp(coef[0])), float(g), float(x_lo), mu,
                        True, 0.0, rms)
    # massive: refine with the exponentially small B- admixture
    def resid(q):
        c1, c2, g = np.exp(q[0]), q[1], q[2]
        a = q[3] if subleading else 0.0
        model = c1 * xs ** -g * np.exp(a / xs) + c2 * xs ** (g - 1) * np.exp(-2 * xs)
        return np.log(np.maximum(model, 1e-300)) - np.log(bs)
    q0 = [coef[0], 0.0, -coef[1]] + ([a_sub] if subleading else [])
    sol = least_squares(resid, q0, method="lm", xtol=1e-14, ftol=1e-14)
    q = sol.x
    rms = float(np.sqrt(np.mean(sol.fun ** 2)))
    return TailSpec(float(np.exp(q[0])), float(q[1]), float(q[2]), float(x_lo), mu,
                    False, float(q[3]) if subleading else 0.0, rms)


# -- weight functions -------------------------------------------------------

@dataclass(frozen=True)
class WeightFunction:
    family: str = "unit"           # unit | three_param | eigenvector
    alpha: float = 0.9
    c0: float = 10.0
    s: float = 1e4                 # crossover scale, units of mu^2
    delta: float = 0.24
    mu: float = 1.0
    table_p: tuple = field(default=(), repr=False)
    table_r: tuple = field(default=(), repr=False)

    def __post_init__(self):
        if self.family not in ("unit", "three_param", "eigenvector"):
            raise ValueError(f"unknown weight family {self.family!r}")
        if self.family == "eigenvector" and (len(self.table_p) < 2 or
                                             np.any(np.asarray(self.table_r) <= 0)):
            raise ValueError("eigenvector weight needs a positive table")

    def __call__(self, p):
        p = np.asarray(p, dtype=float)
        if self.family == "unit":
            return np.ones_like(p)
        if self.family == "three_param":
            mu2 = self.mu ** 2
            lg = np.log(np.sqrt(np.e + p * p / mu2)) ** self.delta
            return (self.c0 + lg) * ((mu2 + p * p) / (self.s * mu2 + p * p)) ** self.alpha
        lp = np.log(np.asarray(self.table_p))
        lr = np.log(np.asarray(self.table_r))
        return np.exp(np.interp(np.log(p), lp, lr))

    def log_log_slope(self, p):
        """d log r / d log log(p/mu), by a symmetric difference."""
        x = np.log(p / self.mu)
        h = 1e-4
        hi, lo = self.mu * np.exp(x * np.exp(h)), self.mu * np.exp(x * np.exp(-h))
        return float((np.log(self(hi)) - np.log(self(lo))) / (2 * h))

    def to_dict(self):
        d = {"family": self.family}
        if self.family == "three_param":
            d.update(alpha=self.alpha, c0=self.c0, s=self.s, delta=self.delta, mu=self.mu)
        elif self.family == "eigenvector":
            d.update(n_table=len(self.table_p))
        return d


def three_param_weight(gamma_m, alpha=0.9, c0=10.0, s=1e4, delta=None, mu=1.0):
    return WeightFunction("three_param", alpha, c0, s,
                          gamma_m / 2 if delta is None else delta, mu)


# -- CSV ----------------------------------------------------------------------

def to_csv(state, path):
    with open(path, "w", newline="") as fh:
        fh.write("# grid: " + json.dumps(state.grid.to_dict(), sort_keys=True) + "\n")
        fh.write("# tail: " + json.dumps(None if state.tail is None else state.tail.to_dict(),
                                         sort_keys=True) + "\n")
        fh.write("# mu: " + repr(float(state.mu)) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["p", "A", "B", "M", "Z"])
        for row in zip(state.p, state.a_values, state.b_values, state.m, state.z):
            w.writerow([repr(float(v)) for v in row])


def from_csv(path):
    meta = {}
    rows = []
    with open(path, newline="") as fh:
        for line in fh:
            if line.startswith("#"):
                key, _, val = line[1:].partition(":")
                meta[key.strip()] = val.strip()
            else:
                rows.append(line)
    try:
        data = list(csv.reader(rows))
        if data[0] != ["p", "A", "B", "M", "Z"]:
            raise ValueError("unexpected header")
        arr = np.array([[float(v) for v in r] for r in data[1:]])
        g = json.loads(meta["grid"])
        tail = json.loads(meta.get("tail", "null"))
    except (KeyError, IndexError, json.JSONDecodeError) as exc:
        raise ValueError(f"malformed state file {path}: {exc}") from exc
    grid = radial_grid(g["p_min"], g["p_max"], g["n_nodes"], g["order"])
    if grid.size != arr.shape[0] or not np.allclose(grid.nodes, arr[:, 0], rtol=1e-13):
        raise ValueError("state file nodes do not match its grid block")
    return QuarkState(grid, arr[:, 1], arr[:, 2],
                      None if tail is None else TailSpec(**tail),
                      float(meta.get("mu", 1.0)))
