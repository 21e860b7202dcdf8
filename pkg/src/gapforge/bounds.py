"""Row-integral bounds of the weighted scalar kernel.

K_r       = sup_p  int_0^inf K(k,p) dk   (K_r < 1: no non-trivial solution)
K_r(a,b)  = inf_{a<p<b} int_a^b K(k,p) dk (K_r(a,b) > 1: no small solution)
"""
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .errors import BracketError
from .gap_operators import weighted_matrix, with_weight
from .quark_state import WeightFunction


@dataclass(frozen=True)
class BoundReport:
    kind: str                      # "non_existence" | "small_solution"
    value: float
    arg_p: float
    weight: dict
    verdict: str
    window: tuple | None = None
    damped: float | None = None
    threshold: float | None = None
    row_sums: np.ndarray = field(default=None, repr=False)
    warning: str | None = None

    def to_dict(self):
        d = {"kind": self.kind, "value": self.value, "arg_p": self.arg_p,
             "weight": self.weight, "verdict": self.verdict}
        for key in ("window", "damped", "threshold", "warning"):
            if getattr(self, key) is not None:
                d[key] = getattr(self, key)
        return d


def kr_sup(asm):
    rows = weighted_matrix(asm).sum(axis=1)
    i = int(np.argmax(rows))
    val = float(rows[i])
    verdict = "no Nambu solution" if val < 1 else "inconclusive (K_r >= 1)"
    return BoundReport("non_existence", val, float(asm.k[i]), asm.weight.to_dict(),
                       verdict, row_sums=rows)


def kr_window(asm, a, b, rho=0.0):
    if not 0 <= a < b:
        raise BracketError("window needs 0 <= a < b")
    sel = (asm.k > a) & (asm.k < b)
    if not np.any(sel):
        raise BracketError(f"empty window ({a}, {b})")
    mu = asm.kernel.uv_scale
    if rho > 0 and not a * a > rho * mu:
        raise BracketError("rho-condition needs a^2 > rho mu")
    km = weighted_matrix(asm)[np.ix_(sel, sel)]
    rows = km.sum(axis=1)
    i = int(np.argmin(rows))
    val = float(rows[i])
    z2 = 1.0 / asm.z_profile[sel] ** 2
    r2 = asm.weight(asm.k[sel]) ** 2
    d = float(z2.max() / r2.min())
    damping = 1.0 if rho == 0 else 1.0 + z2.max() * rho ** 2 / (a * a * r2.min())
    verdict = "no small solution" if val > 1 else "inconclusive (K_r(a,b) <= 1)"
    return BoundReport("small_solution", val, float(asm.k[sel][i]), asm.weight.to_dict(),
                       verdict, (float(a), float(b)), val / damping, 1.0 + d * rho / mu,
                       row_sums=rows)


def three_param_family(gamma_m, delta=None, mu=1.0):
    """theta = (alpha, log10 c0, log10 s) -> WeightFunction, with its default box."""
    delta = gamma_m / 2 if delta is None else delta

    def family(theta):
        return WeightFunction("three_param", float(theta[0]), float(10 ** theta[1]),
                              float(10 ** theta[2]), delta, mu)

    box = [(0.0, 3.0), (-2.0, 3.0), (0.0, 8.0)]
    return family, box, [0.9, 1.0, 4.0]


def minimize_kr(asm, family=None, box=None, first=None, starts=8, seed=0, tol=1e-4):
    """Multistart bounded Nelder-Mead over a weight family; smallest K_r wins."""
    if family is None:
        family, box, first = three_param_family(asm.kernel.gamma_m, mu=asm.kernel.uv_scale)
    box = [] if box is None else list(box)
    if not box:
        rep = kr_sup(with_weight(asm, family(())))
        return rep
    lo = np.array([b[0] for b in box])
    hi = np.array([b[1] for b in box])

    def obj(theta):
        th = np.clip(theta, lo, hi)
        return kr_sup(with_weight(asm, family(th))).value

    rng = np.random.default_rng(seed)
    pts = [np.asarray(first, float)] if first is not None else []
    while len(pts) < starts:
        pts.append(lo + (hi - lo) * rng.random(lo.size))
    best = None
    improved = False
    for x0 in pts:
        f0 = obj(x0)
        res = minimize(obj, x0, method="Nelder-Mead", bounds=box,
                       options={"xatol": 1e-4, "fatol": tol, "maxiter": 2000})
        if res.fun < f0 - tol:
            improved = True
        if best is None or res.fun < best[1]:
            best = (np.clip(res.x, lo, hi), float(res.fun))
    rep = kr_sup(with_weight(asm, family(best[0])))
    d = rep.to_dict()
    d.pop("kind")
    return BoundReport("non_existence", rep.value, rep.arg_p, {**rep.weight,
                       "theta": [float(v) for v in best[0]]}, rep.verdict,
                       row_sums=rep.row_sums,
                       warning=None if improved else "no start improved on its initial value")


def transition_order_scan(kernel, grid, control, values, solve_config=None, threads=1):
    """Chiral-solution amplitude ||B||_inf for each control value (grid nodes only)."""
    from .solver import SolveConfig, solve
    from concurrent.futures import ThreadPoolExecutor

    cfg = SolveConfig(fix_a=True) if solve_config is None else solve_config

    def one(c):
        kern = kernel.replace(**{control: float(c)})
        try:
            rep = solve(cfg, kern, grid)
        except Exception as exc:  # non-convergence entries are recorded, not fatal
            return {"control": float(c), "norm_b": float("nan"), "converged": False,
                    "trivial": False, "iterations": getattr(exc, "iterations", None)}
        return {"control": float(c), "norm_b": float(np.max(np.abs(rep.state.b_values))),
                "converged": rep.converged, "trivial": rep.trivial,
                "iterations": rep.iterations}

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        return list(pool.map(one, values))


def fit_zero_crossing(controls, norms, betas=np.arange(1.0, 4.001, 0.01)):
    """Fit ||B||^beta linear in the control; returns (crossing, beta, rms)."""
    c = np.asarray(controls, float)
    n = np.asarray(norms, float)
    best = None
    for beta in betas:
        y = n ** beta
        coef = np.polyfit(c, y, 1)
        rel = np.sqrt(np.mean((np.polyval(coef, c) - y) ** 2)) / np.max(np.abs(y))
        if best is None or rel < best[2]:
            best = (-coef[1] / coef[0], float(beta), float(rel))
    return best
