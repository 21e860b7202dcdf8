"""Discretized gap-equation operators.

With W_ij = w_j * S3[G](k_j, p_i) / (4 pi^4):

    T(A,B)_i   = sum_j W_ij k_j^3 B_j / (A_j^2 k_j^2 + B_j^2)
    T_Z(A,B)_i = 1 + sum_j Wz_ij k_j^3 A_j / (A_j^2 k_j^2 + B_j^2)

where Wz carries the Z-channel angular weight and 1/(12 pi^4 p_i^2).
Integrals beyond p_max are optionally continued on extra log-spaced nodes
using the state's analytic tail, plus a closed-form remainder from the
perturbative limit of the kernel.
"""
from dataclasses import dataclass, field

import numpy as np

from .errors import BracketError, SplitViolation
from .gluon_models import GluonKernel
from .quadrature import (DEFAULT_ANGULAR, AngularRule, RadialGrid, angular_integrate,
                         angular_integrate_z, angular_matrix, log_panel_nodes,
                         product_weights)
from .quark_state import QuarkState, WeightFunction

PI4 = np.pi ** 4


@dataclass(frozen=True, eq=False)
class OperatorAssembly:
    kernel: GluonKernel
    grid: RadialGrid
    angular: AngularRule
    weight: WeightFunction
    z_profile: np.ndarray            # A(p) on the nodes used by T_c and weighted rows
    tail_correction: bool
    points: np.ndarray               # evaluation momenta: grid nodes then extras
    W: np.ndarray = field(repr=False)
    Wz: np.ndarray = field(repr=False)
    ext_k: np.ndarray = field(repr=False)
    W_ext: np.ndarray = field(repr=False)
    Wz_ext: np.ndarray = field(repr=False)
    x_cut: float = np.inf

    @property
    def n(self):
        return self.grid.size

    @property
    def k(self):
        return self.grid.nodes


def assemble(kernel, grid, angular=DEFAULT_ANGULAR, weight=None, z_profile=None,
             tail_correction=True, extra_points=(), ext_span=16.0, ext_panels=8):
    """Precompute angular-integral matrices for `kernel` on `grid`."""
    weight = WeightFunction() if weight is None else weight
    k = grid.nodes
    z_profile = np.ones(grid.size) if z_profile is None else np.asarray(z_profile, dtype=float)
    if z_profile.shape != k.shape or np.any(z_profile <= 0):
        raise ValueError("z_profile must be positive samples of A on the grid")
    pts = np.concatenate([k, np.asarray(extra_points, dtype=float)])
    br = kernel.kinks
    W = angular_matrix(pts, k, kernel, angular, br) * grid.weights[None, :]
    Wz = angular_matrix(pts, k, kernel, angular, br, zchannel=True) * grid.weights[None, :]
    if br:
        _kink_panels(W, Wz, pts, grid, kernel, angular)
    W /= 4 * PI4
    Wz /= 12 * PI4 * pts[:, None] ** 2
    if tail_correction:
        lo = np.log(grid.p_max)
        ext_k, ext_w = log_panel_nodes(lo, lo + ext_span, ext_panels)
        W_ext = angular_matrix(pts, ext_k, kernel, angular, br) * (ext_w / (4 * PI4))[None, :]
        Wz_ext = angular_matrix(pts, ext_k, kernel, angular, br, zchannel=True) * (
            ext_w[None, :] / (12 * PI4 * pts[:, None] ** 2))
        x_cut = lo + ext_span - np.log(kernel.uv_scale)
    else:
        ext_k = np.zeros(0)
        W_ext = np.zeros((pts.size, 0))
        Wz_ext = np.zeros((pts.size, 0))
        x_cut = np.inf
    for arr in (W, Wz, W_ext, Wz_ext, z_profile, pts):
        arr.setflags(write=False)
    return OperatorAssembly(kernel, grid, angular, weight, z_profile, tail_correction, pts,
                            W, Wz, ext_k, W_ext, Wz_ext, x_cut)


def _kink_panels(W, Wz, pts, grid, kernel, angular):
    """Product-integration weights on panels cut by a kernel kink.

    A kink of G at q = q_k makes the angular integrals non-smooth in k at
    |p - q_k| and p + q_k. For p << q_k the Z-channel has a spike of width
    ~2p there, which fixed nodes cannot sample; the affected panels get
    weights from product_weights instead. Modifies W and Wz in place.
    """
    edges = grid.panel_edges()
    if edges is None:
        return
    order = grid.order
    tk = np.log(grid.nodes)
    for i, p in enumerate(pts):
        cuts = sorted({abs(p - np.sqrt(b)) for b in kernel.kinks}
                      | {p + np.sqrt(b) for b in kernel.kinks})
        cuts = [c for c in cuts if c > 0]
        hit = set()
        for c in cuts:
            j = np.searchsorted(edges, np.log(c)) - 1
            if 0 <= j < edges.size - 1:
                hit.add(int(j))
        for j in sorted(hit):
            sl = slice(j * order, (j + 1) * order)
            kb = cuts + [p]
            W[i, sl] = product_weights(p, edges[j], edges[j + 1], tk[sl], kernel, angular,
                                       kernel.kinks, False, kb)
            Wz[i, sl] = product_weights(p, edges[j], edges[j + 1], tk[sl], kernel, angular,
                                        kernel.kinks, True, kb)


def with_z_profile(asm, z_profile):
    """Same matrices, different fixed A profile."""
    z = np.asarray(z_profile, dtype=float)
    if z.shape != asm.k.shape or np.any(z <= 0):
        raise ValueError("z_profile must be positive samples of A on the grid")
    return OperatorAssembly(asm.kernel, asm.grid, asm.angular, asm.weight, z,
                            asm.tail_correction, asm.points, asm.W, asm.Wz, asm.ext_k,
                            asm.W_ext, asm.Wz_ext, asm.x_cut)


def with_weight(asm, weight):
    return OperatorAssembly(asm.kernel, asm.grid, asm.angular, weight, asm.z_profile,
                            asm.tail_correction, asm.points, asm.W, asm.Wz, asm.ext_k,
                            asm.W_ext, asm.Wz_ext, asm.x_cut)


def _integrands(k, a, b):
    den = a * a * k * k + b * b
    return k ** 3 * b / den, k ** 3 * a / den


def _tail_b(asm, state):
    t = state.tail
    if t is None or not asm.tail_correction:
        return None
    return t.b(asm.ext_k)


def _remainders(asm, state):
    """Closed-form contributions from k beyond the extension nodes."""
    if not asm.tail_correction:
        return 0.0, 0.0
    g = asm.kernel.gamma_m * asm.kernel.scale
    rz = g / (4.0 * asm.x_cut)
    t = state.tail
    rt = 0.0
    if t is not None and t.c1 > 0:
        rt = asm.kernel.scale * t.c1 * asm.x_cut ** -asm.kernel.gamma_m
    return rt, rz


def _apply(asm, a, b, b_ext, remainders):
    fb, fa = _integrands(asm.k, a, b)
    tb = asm.W @ fb
    tz = asm.Wz @ fa
    if asm.tail_correction:
        be = np.zeros_like(asm.ext_k) if b_ext is None else b_ext
        fbe, fae = _integrands(asm.ext_k, np.ones_like(be), be)
        tb = tb + asm.W_ext @ fbe + remainders[0]
        tz = tz + asm.Wz_ext @ fae + remainders[1]
    return tb, 1.0 + tz


def apply_both(asm, state, include_extra=False):
    """(T(A,B), T_Z(A,B)) in one pass; extras appended when requested."""
    tb, tz = _apply(asm, state.a_values, state.b_values, _tail_b(asm, state),
                    _remainders(asm, state))
    if include_extra:
        return tb, tz
    return tb[:asm.n], tz[:asm.n]


def apply_T(asm, state, include_extra=False):
    return apply_both(asm, state, include_extra)[0]


def apply_TZ(asm, state, include_extra=False):
    return apply_both(asm, state, include_extra)[1]


def weighted_kernel_row(asm, p):
    """K(k_j, p) w_j = w_j k_j Z^2(k_j) r(p)/r(k_j) S3[G](k_j, p)/(4 pi^4)."""
    k = asm.k
    r = asm.weight
    ang = angular_integrate(np.full_like(k, float(p)), k, asm.kernel, asm.angular,
                            asm.kernel.kinks)
    z2 = 1.0 / asm.z_profile ** 2
    return asm.grid.weights * k * z2 * ang / (4 * PI4) * r(p) / r(k)


def assemble_Tc(asm):
    """Linearization at B -> 0: M_ij = w_j k_j Z^2(k_j) S3[G](k_j, p_i)/(4 pi^4)."""
    return asm.W[:asm.n] * (asm.k / asm.z_profile ** 2)[None, :]


def weighted_matrix(asm):
    """r(p_i)/r(k_j) * M_ij, the discretized K(k,p) dk."""
    r = asm.weight(asm.k)
    return assemble_Tc(asm) * (r[:, None] / r[None, :])


def symmetrizer(asm):
    """d with diag(sqrt d) M diag(1/sqrt d) symmetric."""
    return asm.grid.weights * asm.k / asm.z_profile ** 2


# -- Z-channel sign split ---------------------------------------------------

@dataclass(frozen=True, eq=False)
class SplitTZ:
    asm: OperatorAssembly
    k_plus: np.ndarray = field(repr=False)
    k_minus: np.ndarray = field(repr=False)
    ext_plus: np.ndarray = field(repr=False)
    ext_minus: np.ndarray = field(repr=False)
    kstar: np.ndarray
    sign_changes: np.ndarray

    def _parts(self, a, b=None):
        b = np.zeros_like(a) if b is None else b
        _, fa = _integrands(self.asm.k, a, b)
        pos = self.k_plus @ fa
        neg = self.k_minus @ fa
        if self.asm.tail_correction:
            fae = self.asm.ext_k
            pos = pos + self.ext_plus @ fae + self.asm.kernel.gamma_m * self.asm.kernel.scale / (
                4.0 * self.asm.x_cut)
            neg = neg + self.ext_minus @ fae
        return pos, neg

    def positive(self, a, b=None):
        """Integral over the positive part of K_Z (no inhomogeneous term)."""
        return self._parts(a, b)[0]

    def negative(self, a, b=None):
        return self._parts(a, b)[1]

    def t_plus(self, a, b=None):
        """T_Z^+ = 1 + positive part; carries the inhomogeneous term."""
        return 1.0 + self.positive(a, b)

    def t_minus(self, a, b=None):
        return self.negative(a, b)

    def double_map(self, a):
        """A -> T_Z^+(T_Z^+(A)) + T_Z^-(A) at M = 0."""
        return self.t_plus(self.t_plus(a)) + self.t_minus(a)

    @property
    def multiple_sign_rows(self):
        return int(np.sum(self.sign_changes > 1))


def _locate_kstar(asm, p, k_lo, k_hi, tol=1e-6):
    """Vectorized bisection (in log k) on the sign of the Z-channel angular integral."""
    kern = asm.kernel
    p, k_lo, k_hi = (np.array(v, dtype=float) for v in (p, k_lo, k_hi))

    def f(k):
        return angular_integrate_z(p, k, kern, asm.angular, kern.kinks)

    neg_lo = f(k_lo) <= 0
    while np.any(k_hi - k_lo > tol * k_hi):
        mid = np.sqrt(k_lo * k_hi)
        same = (f(mid) <= 0) == neg_lo
        k_lo = np.where(same, mid, k_lo)
        k_hi = np.where(same, k_hi, mid)
    return np.sqrt(k_lo * k_hi)


def split_TZ(asm, strict=False, locate=True):
    """Entrywise sign partition K_Z = K+ + K- with k*(p) tabulated.

    k*(p) is the last negative-to-positive crossing along each row, refined
    by bisection; 0 when the row is positive throughout. Rows with more than
    one sign change are counted; `strict` turns them into an error.
    """
    n = asm.n
    kz = np.asarray(asm.Wz[:n])
    sign = np.sign(kz)
    kstar = np.zeros(n)
    changes = np.zeros(n, dtype=int)
    rows, cols = [], []
    for i in range(n):
        s = sign[i][sign[i] != 0]
        changes[i] = int(np.sum(s[1:] != s[:-1]))
        up = np.nonzero((sign[i, :-1] < 0) & (sign[i, 1:] > 0))[0]
        if up.size:
            rows.append(i)
            cols.append(up[-1])
    if rows:
        rows, cols = np.array(rows), np.array(cols)
        k = asm.k
        kstar[rows] = (_locate_kstar(asm, k[rows], k[cols], k[cols + 1]) if locate
                       else np.sqrt(k[cols] * k[cols + 1]))
    if strict and np.any(changes > 1):
        bad = np.nonzero(changes > 1)[0]
        raise SplitViolation(f"{bad.size} rows change sign more than once "
                             f"(first at p={asm.k[bad[0]]:.4g})")
    ext = np.asarray(asm.Wz_ext[:n])
    return SplitTZ(asm, np.where(kz > 0, kz, 0.0), np.where(kz < 0, kz, 0.0),
                   np.where(ext > 0, ext, 0.0), np.where(ext < 0, ext, 0.0), kstar, changes)


# -- shifted operator -------------------------------------------------------

def apply_T_shifted(asm, u, u0, radius=None):
    """T_Delta(u) = T(u + u0) - u0 in u = r B coordinates, A fixed to z_profile."""
    u = np.asarray(u, dtype=float)
    u0 = np.asarray(u0, dtype=float)
    mu = asm.kernel.uv_scale
    if np.any(u0[asm.k < mu] != 0):
        raise BracketError("shift u0 must vanish below mu")
    if radius is not None and not 2 * np.max(np.abs(u0)) * radius < mu ** 2:
        raise BracketError("shift too large for the working radius")
    r = asm.weight(asm.k)
    a = asm.z_profile
    b = (u + u0) / r
    fb, _ = _integrands(asm.k, a, b)
    return r * (asm.W[:asm.n] @ fb) - u0
