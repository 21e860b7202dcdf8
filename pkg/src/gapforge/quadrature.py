"""Radial and angular quadrature.

Radial integrals run over log p with composite Gauss-Legendre panels.
Angular integrals over the 3-sphere reduce to a single polar angle with
measure 4*pi*sin^2(theta), normalized so that the integral of 1 is 2*pi^2.
"""
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial.legendre import leggauss as _leggauss

from .errors import DomainError

TWO_PI2 = 2.0 * np.pi ** 2


@lru_cache(maxsize=32)
def leggauss(n):
    x, w = _leggauss(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


# geometric sub-panels between the peak width and the split angle
_GRADED_PANELS = 6
# bound on rows*cols*angles held in memory at once during matrix assembly
_CHUNK = 2_000_000


@dataclass(frozen=True)
class RadialGrid:
    nodes: np.ndarray
    weights: np.ndarray
    p_min: float
    p_max: float
    order: int = 8

    def __post_init__(self):
        p = np.asarray(self.nodes, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        if p.ndim != 1 or p.shape != w.shape or p.size == 0:
            raise ValueError("nodes and weights must be matching 1-d arrays")
        if np.any(p <= 0) or np.any(np.diff(p) <= 0):
            raise ValueError("nodes must be positive and strictly increasing")
        if np.any(w <= 0):
            raise ValueError("weights must be positive")
        p.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "nodes", p)
        object.__setattr__(self, "weights", w)

    @property
    def size(self):
        return self.nodes.size

    def integrate(self, values):
        return float(np.dot(self.weights, values))

    def refined(self):
        """Same domain with twice the panels."""
        return radial_grid(self.p_min, self.p_max, 2 * self.size, self.order)

    def to_dict(self):
        return {"p_min": self.p_min, "p_max": self.p_max,
                "n_nodes": int(self.size), "order": self.order}

    def panel_edges(self):
        """Log-momentum panel edges, or None if the nodes are not a composite GL rule."""
        if self.size % self.order:
            return None
        n_panels = self.size // self.order
        lo, hi = np.log(self.p_min), np.log(self.p_max)
        t, _ = _panels(lo, hi, n_panels, self.order)
        if not np.allclose(np.exp(t), self.nodes, rtol=1e-12, atol=0):
            return None
        return np.linspace(lo, hi, n_panels + 1)


def _panels(lo, hi, n_panels, order):
    x, w = leggauss(order)
    edges = np.linspace(lo, hi, n_panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    t = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    wt = (half[:, None] * w[None, :]).ravel()
    return t, wt


def radial_grid(p_min=1e-4, p_max=1e3, n_nodes=400, order=8):
    """Composite Gauss-Legendre rule in log p on [p_min, p_max].

    n_nodes is rounded up to a multiple of `order`.
    """
    if not 0 < p_min < p_max:
        raise ValueError("need 0 < p_min < p_max")
    n_panels = max(1, -(-int(n_nodes) // order))
    t, wt = _panels(np.log(p_min), np.log(p_max), n_panels, order)
    p = np.exp(t)
    return RadialGrid(p, wt * p, float(p_min), float(p_max), order)


def log_panel_nodes(lo, hi, n_panels, order=8):
    """Nodes/weights in log momentum on [exp(lo), exp(hi)] (used for tail extension)."""
    t, wt = _panels(lo, hi, n_panels, order)
    p = np.exp(t)
    return p, wt * p


@dataclass(frozen=True)
class AngularRule:
    """Gauss-Legendre rule in theta, two panels split at a kink angle.

    The default split is pi/2. Kernels with a kink at q^2 = b (for example
    max(q^2, mu^2)) get the split moved onto the kink for each (p, k) pair.
    """
    n_nodes: int = 64

    def __post_init__(self):
        if self.n_nodes < 4 or self.n_nodes % 2:
            raise ValueError("n_nodes must be an even number >= 4")

    @property
    def reference(self):
        return leggauss(self.n_nodes // 2)

    @property
    def angles(self):
        th, _ = self._panel_nodes(np.array(np.pi / 2))
        return th

    @property
    def weights(self):
        _, v = self._panel_nodes(np.array(np.pi / 2))
        return v

    def _panel_nodes(self, split, eps=None):
        """Angles and S^3 weights for split angle(s); trailing axis is the node axis.

        With `eps` (the angular width |p-k|/sqrt(pk) of a near-coincident
        1/q^2 peak) the first panel is graded geometrically towards theta = 0.
        """
        x, w = self.reference
        split = np.asarray(split, dtype=float)[..., None]
        b = 0.5 * (np.pi - split)
        upper_t = split + b * (x + 1.0)
        upper_w = b * w
        a = 0.5 * split
        lower_t, lower_w = a * (x + 1.0), a * w
        if eps is not None and self.n_nodes % 8 == 0:
            eps = np.asarray(eps, dtype=float)[..., None]
            graded = (eps > 0) & (eps < split / 10)
            e = np.where(graded, eps, split / 27)
            r = (split / e) ** (1.0 / _GRADED_PANELS)
            edges = [np.zeros_like(split)] + [e * r ** i for i in range(_GRADED_PANELS)] + [split]
            xq, wq = leggauss(self.n_nodes // 8)
            lt, lw = [], []
            for lo, hi in zip(edges[:-1], edges[1:]):
                h = 0.5 * (hi - lo)
                lt.append(lo + h * (xq + 1.0))
                lw.append(h * wq)
            lt, lw = np.concatenate(lt, axis=-1), np.concatenate(lw, axis=-1)
            # ungraded pairs keep the plain panel, padded with zero-weight nodes
            pad = lt.shape[-1] - lower_t.shape[-1]
            lower_t = np.concatenate([lower_t, np.broadcast_to(0.5 * split, lower_t.shape[:-1]
                                                               + (pad,))], axis=-1)
            lower_w = np.concatenate([lower_w, np.zeros(lower_w.shape[:-1] + (pad,))], axis=-1)
            lower_t = np.where(graded, lt, lower_t)
            lower_w = np.where(graded, lw, lower_w)
        th = np.concatenate([lower_t, upper_t], axis=-1)
        wt = np.concatenate([lower_w, upper_w], axis=-1)
        return th, 4.0 * np.pi * np.sin(th) ** 2 * wt

    def doubled(self):
        return AngularRule(2 * self.n_nodes)


DEFAULT_ANGULAR = AngularRule()


def _split_angle(p, k, breaks):
    split = np.full(np.broadcast(p, k).shape, np.pi / 2)
    pk2 = 2.0 * p * k
    with np.errstate(divide="ignore", invalid="ignore"):
        for b in breaks:
            c = (p * p + k * k - b) / pk2
            ok = (c > -1.0) & (c < 1.0) & (pk2 > 0)
            split = np.where(ok, np.arccos(np.clip(c, -1.0, 1.0)), split)
    return split


def _check(val):
    if not np.all(np.isfinite(val)):
        raise DomainError("non-finite angular integral: kernel singular in the reachable q^2 range")
    return val


def _eval(p, k, g, rule, breaks, zchannel):
    p = np.asarray(p, dtype=float)
    k = np.asarray(k, dtype=float)
    if np.any(p < 0) or np.any(k < 0):
        raise DomainError("momenta must be non-negative")
    p, k = np.broadcast_arrays(p, k)
    with np.errstate(divide="ignore", invalid="ignore"):
        eps = np.where(p * k > 0, np.abs(p - k) / np.sqrt(p * k), 0.0)
    th, v = rule._panel_nodes(_split_angle(p, k, breaks), eps)
    s = 2.0 * np.sin(0.5 * th) ** 2      # 1 - cos(theta) without cancellation
    P = p[..., None]
    K = k[..., None]
    q2 = (P - K) ** 2 + 2.0 * P * K * s
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        gv = g(q2)
        if zchannel:
            # q^2 (p.k) + 2 (p.q)(k.q) = pk [3(p-k)^2 - s(3p^2 + 3k^2 - 8pk) - 4pk s^2]
            pk = P * K
            num = pk * (3.0 * (P - K) ** 2 - s * (3.0 * (P * P + K * K) - 8.0 * pk)
                        - 4.0 * pk * s * s)
            gv = np.where(num == 0.0, 0.0, num / q2 * gv)
    return _check(np.sum(v * gv, axis=-1))


_RHO = (0.01, 0.02)


def _eval_z(p, k, g, rule, breaks):
    """Z-channel integral; widely separated scales use the small-ratio expansion.

    For p << k the integral is even in p with leading term ~p^2, and direct
    quadrature loses about log10(k/p) digits to cancellation. There the value
    is rebuilt as small^2 (F0 + F1 rho^2) from two reference ratios.
    """
    p, k = np.broadcast_arrays(np.asarray(p, dtype=float), np.asarray(k, dtype=float))
    shape = p.shape
    p, k = p.ravel(), k.ravel()
    lo, hi = np.minimum(p, k), np.maximum(p, k)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(hi > 0, lo / hi, 1.0)
    sep = (ratio < 0.9 * _RHO[0]) & (lo > 0)
    for b in breaks:
        sep &= np.abs(hi - np.sqrt(b)) > 0.05 * hi
    out = np.zeros(p.shape)
    if np.any(sep):
        h = hi[sep]
        try:
            fa = _eval(_RHO[0] * h, h, g, rule, breaks, True) / (_RHO[0] * h) ** 2
            fb = _eval(_RHO[1] * h, h, g, rule, breaks, True) / (_RHO[1] * h) ** 2
        except DomainError:
            sep[:] = False
        else:
            f1 = (fb - fa) / (_RHO[1] ** 2 - _RHO[0] ** 2)
            r = ratio[sep]
            out[sep] = lo[sep] ** 2 * (fa + f1 * (r * r - _RHO[0] ** 2))
    rest = ~sep
    if np.any(rest):
        out[rest] = _eval(p[rest], k[rest], g, rule, breaks, True)
    return out.reshape(shape)


def angular_integrate(p, k, g, rule=DEFAULT_ANGULAR, breaks=()):
    """S^3 integral of g(p^2 + k^2 - 2pk cos(theta)), normalized so g=1 gives 2*pi^2."""
    out = _eval(p, k, g, rule, breaks, False)
    return float(out) if out.ndim == 0 else out


def angular_integrate_z(p, k, g, rule=DEFAULT_ANGULAR, breaks=()):
    """S^3 integral of (p.k + 2(p.q)(k.q)/q^2) g(q^2)."""
    out = _eval_z(p, k, g, rule, breaks)
    return float(out) if out.ndim == 0 else out


_GRADE = np.array([0.0, 0.01, 0.1, 0.5, 0.9, 0.99, 1.0])


def product_weights(p, t_lo, t_hi, t_nodes, g, rule=DEFAULT_ANGULAR, breaks=(),
                    zchannel=False, k_breaks=()):
    """Integrals of S3[g](p, k) L_j(log k) k over one log panel.

    L_j are the Lagrange polynomials on the panel nodes t_nodes, so that
    sum_j F(k_j) * result_j integrates S3[g] F exactly for polynomial F in
    log k. The panel is split at k_breaks and graded towards each split, which
    resolves kernel features narrower than the node spacing.
    """
    cuts = np.unique(np.concatenate([[t_lo, t_hi], [np.log(b) for b in k_breaks
                                                    if b > 0 and t_lo < np.log(b) < t_hi]]))
    xq, wq = leggauss(8)
    ts, ws = [], []
    for a, b in zip(cuts[:-1], cuts[1:]):
        edges = a + (b - a) * _GRADE
        for e0, e1 in zip(edges[:-1], edges[1:]):
            h = 0.5 * (e1 - e0)
            ts.append(e0 + h * (xq + 1.0))
            ws.append(h * wq)
    t = np.concatenate(ts)
    w = np.concatenate(ws)
    k = np.exp(t)
    pa = np.full_like(k, p)
    vals = (_eval_z(pa, k, g, rule, breaks) if zchannel
            else _eval(pa, k, g, rule, breaks, False))
    tn = np.asarray(t_nodes, dtype=float)
    basis = np.ones((tn.size, t.size))
    for j in range(tn.size):
        for m in range(tn.size):
            if m != j:
                basis[j] *= (t - tn[m]) / (tn[j] - tn[m])
    return basis @ (w * k * vals)


def angular_matrix(p_rows, k_cols, g, rule=DEFAULT_ANGULAR, breaks=(), zchannel=False):
    """Matrix of angular integrals [i, j] -> (p_rows[i], k_cols[j]), assembled in row blocks."""
    p_rows = np.atleast_1d(np.asarray(p_rows, dtype=float))
    k_cols = np.atleast_1d(np.asarray(k_cols, dtype=float))
    out = np.empty((p_rows.size, k_cols.size))
    step = max(1, _CHUNK // max(1, k_cols.size * rule.n_nodes))
    for s in range(0, p_rows.size, step):
        rows = p_rows[s:s + step, None]
        if zchannel:
            out[s:s + step] = _eval_z(rows, k_cols[None, :], g, rule, breaks)
        else:
            out[s:s + step] = _eval(rows, k_cols[None, :], g, rule, breaks, False)
    return out
