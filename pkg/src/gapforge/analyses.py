"""One runner per analysis kind: (RunConfig) -> (results dict, tables).

Tables are {name: (header, rows)} and become CSV files.
"""
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import asymptotics as asy
from .bounds import fit_zero_crossing, kr_sup, kr_window, minimize_kr, three_param_family
from .certificates import certificate_assembly, coupled_existence, verify_bracket_invariance
from .errors import ConfigError
from .gap_operators import assemble, split_TZ, with_weight
from .quark_state import WeightFunction, three_param_weight
from .solver import branch_pair, solve, solver_assembly
from .spectral import critical_coupling, kernel_family, optimal_weight, tc_spectrum

SENSITIVITY_CUT = 12.0   # GeV; range-model lambda is re-evaluated with the grid cut here


def _state_table(state):
    rows = [(p, a, b, m, z) for p, a, b, m, z in
            zip(state.p, state.a_values, state.b_values, state.m, state.z)]
    return ("p", "A", "B", "M", "Z"), rows


def run_solve(cfg):
    opts = cfg.analysis
    kernel, grid = cfg.model.kernel(), cfg.grid.radial()
    scfg = opts.solve_config()
    asm = solver_assembly(scfg, kernel, grid, cfg.grid.angular())
    rep = solve(scfg, kernel, grid, asm)
    res = {"solve": rep.to_dict(), "solve_config": scfg.to_dict()}
    if scfg.chiral and opts.branch_check:
        pair = branch_pair(scfg, kernel, grid, asm, report=rep)
        res["sign_flip"] = {"residual": pair.residual, "symmetric": pair.symmetric}
    tables = {"solution": _state_table(rep.state)}
    if opts.certify:
        asm_c = certificate_assembly(kernel, grid, cfg.grid.angular())
        cert = coupled_existence(asm_c)
        res["certificate"] = cert.to_dict(tables=False)
        if cert.passed and not rep.trivial:
            # the bracket belongs to the truncated problem; re-solve it there
            rep_t = solve(scfg, kernel, grid, asm_c, seed=rep.state)
            phi0 = np.minimum(1.0, cert.a_minus)
            lo, hi = phi0, split_TZ(asm_c, locate=False).t_plus(phi0)
            a = rep_t.state.a_values
            res["a_in_bracket"] = bool(np.all(a >= lo * (1 - 1e-9))
                                       and np.all(a <= hi * (1 + 1e-9)))
    return res, tables


def run_critical(cfg):
    opts = cfg.analysis
    kernel, grid = cfg.model.kernel(), cfg.grid.radial()
    fam = kernel_family(kernel, grid, opts.control, angular=cfg.grid.angular())
    c, info = critical_coupling(fam, opts.bracket, rtol=opts.rtol)
    spec = fam(c)
    weight = optimal_weight(spec)
    res = {f"critical_{opts.control}": c, "lambda_at_critical": spec.lambda_max,
           "bisection": info, "spectral": spec.to_dict()}
    if kernel.variant == "range" and grid.p_max > SENSITIVITY_CUT:
        # how much the top of the momentum range contributes (reported, not gated)
        cut = cfg.grid.model_copy(update={"p_max": SENSITIVITY_CUT}).radial()
        lam_cut = kernel_family(kernel, cut, opts.control, angular=cfg.grid.angular())(c)
        res["sensitivity"] = {"p_max_cut": SENSITIVITY_CUT, "lambda_full": spec.lambda_max,
                              "lambda_cut": lam_cut.lambda_max,
                              "rel_shift": lam_cut.lambda_max / spec.lambda_max - 1}
    rows = [(p, t, r) for p, t, r in zip(spec.nodes, spec.eigenvector, weight.table_r)]
    return res, {"eigenvector": (("p", "t", "rbar"), rows)}


def _bounds_weight(opts, kernel):
    if opts.weight is None:
        return three_param_weight(kernel.gamma_m, mu=kernel.uv_scale)
    try:
        return WeightFunction(**opts.weight)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad weight: {exc}") from exc


def run_bounds(cfg):
    opts = cfg.analysis
    kernel, grid = cfg.model.kernel(), cfg.grid.radial()
    asm = assemble(kernel, grid, cfg.grid.angular(), tail_correction=False)
    weight = _bounds_weight(opts, kernel)
    wasm = with_weight(asm, weight)
    sup = kr_sup(wasm)
    win = kr_window(wasm, *opts.window)
    lam = tc_spectrum(asm).lambda_max
    res = {"kr_sup": sup.to_dict(), "kr_window": win.to_dict(), "lambda_max": lam}
    if opts.minimize:
        family, box, first = three_param_family(kernel.gamma_m, mu=kernel.uv_scale)
        best = minimize_kr(asm, family, box, first, starts=opts.starts, seed=cfg.seed)
        res["kr_min"] = best.to_dict()
    # sandwich K_r(a,b) <= lambda_max <= K_r for random admissible weights and windows
    rng = np.random.default_rng(cfg.seed)
    family, box, _ = three_param_family(kernel.gamma_m, mu=kernel.uv_scale)
    trials = []
    for _ in range(opts.sandwich_trials):
        theta = [rng.uniform(lo, hi) for lo, hi in box]
        w = with_weight(asm, family(theta))
        a = float(np.exp(rng.uniform(np.log(grid.p_min), 0.0)))
        b = float(a * np.exp(rng.uniform(1.0, 6.0)))
        lo_b, hi_b = kr_window(w, a, b).value, kr_sup(w).value
        trials.append({"theta": theta, "window": [a, b], "kr_window": lo_b, "kr_sup": hi_b,
                       "ordered": bool(lo_b <= lam <= hi_b)})
    res["sandwich"] = trials
    rows = [(p, s) for p, s in zip(asm.k, sup.row_sums)]
    return res, {"row_sums": (("p", "row_sum"), rows)}


def _certify_rows(cert):
    return [(p, lo, hi, cap) for p, lo, hi, cap in
            zip(cert.nodes, cert.a_minus, cert.a_plus, cert.a_plus_capped)]


def run_certify(cfg):
    opts = cfg.analysis
    kernel, grid = cfg.model.kernel(), cfg.grid.radial()
    asm = certificate_assembly(kernel, grid, cfg.grid.angular())
    cert = coupled_existence(asm)
    res = {"certificate": cert.to_dict(tables=False)}
    if cert.checks.get("double_map_grows") and opts.invariance_trials:
        res["invariance"] = verify_bracket_invariance(cert, asm, opts.invariance_trials,
                                                      cfg.seed)
    return res, {"bracket": (("p", "A_minus", "A_plus", "A_plus_capped"),
                             _certify_rows(cert))}


def run_scan(cfg):
    opts = cfg.analysis
    kernel, grid = cfg.model.kernel(), cfg.grid.radial()
    values = opts.values()
    angular = cfg.grid.angular()
    if opts.measure == "transition":
        scfg = opts.solve.solve_config()

        def one(c):
            k = kernel.replace(**{opts.control: c})
            rep = solve(scfg, k, grid, solver_assembly(scfg, k, grid, angular))
            return {"control": c, "norm_b": float(np.max(np.abs(rep.state.b_values))),
                    "trivial": rep.trivial, "iterations": rep.iterations}
    elif opts.measure == "lambda":
        fam = kernel_family(kernel, grid, opts.control, angular=angular)

        def one(c):
            return {"control": c, "lambda_max": fam(c).lambda_max}
    else:
        def one(c):
            k = kernel.replace(**{opts.control: c})
            cert = coupled_existence(certificate_assembly(k, grid, angular))
            return {"control": c, "verdict": cert.verdict,
                    "lambda_at_bound": cert.lambda_at_bound, "candidate": cert.candidate,
                    **{f"check_{n}": v for n, v in cert.checks.items()}}
    with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
        rows = list(pool.map(one, values))   # map keeps input order
    res = {"control": opts.control, "values": values, "rows": rows}
    if opts.measure == "transition":
        live = [r for r in rows if not r["trivial"]]
        if len(live) >= 3:
            cross, beta, rms = fit_zero_crossing([r["control"] for r in live],
                                                 [r["norm_b"] for r in live])
            res["fit"] = {"crossing": cross, "beta": beta, "rms": rms}
    if opts.measure == "certify":
        passing = [r["control"] for r in rows if r["verdict"] == "pass"]
        res["pass_interval"] = [min(passing), max(passing)] if passing else None
    header = tuple(rows[0].keys())
    return res, {"scan": (header, [tuple(r[h] for h in header) for r in rows])}


def run_tails(cfg):
    opts = cfg.analysis
    kernel, grid = cfg.model.kernel(), cfg.grid.radial()
    if kernel.variant == "range":
        raise ConfigError("verify-tails runs on the simplest or perturbative kernel")
    toy = kernel.replace(variant="simplest")
    jobs = [("massive", j) for j in opts.contraction_orders] + [("chiral", opts.chiral_order)]
    with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
        contraction = list(pool.map(
            lambda job: asy.contraction_ratio(toy, job[1], job[0]), jobs))
    for c in contraction:
        c.pop("x")
        c.pop("response")
    chi = {prof: asy.chi_suppression(opts.chi_points, kernel.gamma_m, prof, kernel.mu)
           for prof in ("plus", "minus")}
    res = {"contraction": contraction, "chi": chi}
    tables = {"contraction": (("branch", "j", "ratio", "expected"),
                              [(c["branch"], c["j"], c["ratio"], c["expected"])
                               for c in contraction]),
              "chi": (("profile", "p", "ratio", "ratio_times_log2"),
                      [(prof, r["p"], r["ratio"], r["ratio_times_log2"])
                       for prof in chi for r in chi[prof]])}
    # c2 relation on a chiral solution (needs a supercritical coupling)
    scfg = opts.solve.solve_config()
    if scfg.chiral:
        toy = toy.replace(gamma_m=opts.c2_gamma_m)
        rep = solve(scfg, toy, grid, solver_assembly(scfg, toy, grid, cfg.grid.angular()))
        if rep.trivial:
            res["c2"] = {"skipped": "chiral solution is trivial"}
        else:
            x_max = np.log(grid.p_max / toy.mu)
            lam = opts.c2_lambda or toy.mu * np.exp(min(6.0, x_max - 2.0))
            res["c2"] = asy.c2_relation(rep.state, toy.gamma_m, lam, mu=toy.mu)
            res["c2_doubled"] = asy.c2_relation(rep.state, toy.gamma_m, 2 * lam, mu=toy.mu)
            tables["chiral_solution"] = _state_table(rep.state)
    else:
        rep = solve(scfg, toy, grid, solver_assembly(scfg, toy, grid, cfg.grid.angular()))
        res["differential"] = asy.differential_residual(rep.state, toy.gamma_m, mu=toy.mu)
        res["differential_printed"] = asy.differential_residual(rep.state, toy.gamma_m,
                                                                mu=toy.mu, form="printed")
        for d in (res["differential"], res["differential_printed"]):
            d.pop("x")
            d.pop("rel")
        tables["massive_solution"] = _state_table(rep.state)
    return res, tables


def run_norm(cfg):
    opts = cfg.analysis

    def one(q):
        nf = asy.NormFunctional(opts.gamma_m, q * opts.gamma_m)
        out = asy.large_norm_ratio(nf, opts.log_norms, two_step_trials=opts.two_step_trials,
                                   seed=cfg.seed)
        return {"delta_ratio": q, **out}

    with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
        blocks = list(pool.map(one, opts.delta_ratios))
    rows = [(b["delta_ratio"], r["log_norm"], r["n"], r["ratio"], b["limit"],
             r.get("best_two_step", float("nan")), r.get("best_two_step_additive", float("nan")))
            for b in blocks for r in b["rows"]]
    return {"blocks": blocks}, {"norm_ratio": (("delta_ratio", "log_norm", "n", "ratio",
                                                "limit", "two_step", "two_step_additive"),
                                               rows)}


RUNNERS = {"solve": run_solve, "critical": run_critical, "bounds": run_bounds,
           "certify": run_certify, "scan": run_scan, "verify-tails": run_tails,
           "verify-norm": run_norm}
