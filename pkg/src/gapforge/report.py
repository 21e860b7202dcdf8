"""Report emission (JSON, CSV, summary) and report comparison."""
import csv
import json
import math
import os
import shutil
import tempfile

import numpy as np

from .errors import ConfigError

SCHEMA = 1


class SchemaMismatch(ConfigError):
    pass


def _plain(obj):
    """JSON-ready copy with numpy scalars/arrays and tuples converted."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if v is None:
        return ""
    return str(v)


def write_csv(path, header, rows, provenance):
    with open(path, "w", newline="") as fh:
        for key in sorted(provenance):
            fh.write(f"# {key}: {json.dumps(_plain(provenance[key]), sort_keys=True)}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(v) for v in row])


def read_csv(path):
    """(comments dict, header, rows as str lists)."""
    comments, lines = {}, []
    with open(path) as fh:
        for line in fh:
            if line.startswith("# "):
                key, _, val = line[2:].partition(": ")
                comments[key] = json.loads(val)
            else:
                lines.append(line)
    rows = list(csv.reader(lines))
    return comments, rows[0], rows[1:]


def _summary_lines(report):
    res = report["results"]
    kind = report["analysis"]
    out = [f"gapforge report (schema {report['schema']})",
           f"analysis: {kind}   status: {report['status']}",
           f"kernel: {json.dumps(report['provenance']['kernel'], sort_keys=True)}",
           f"grid: {json.dumps(report['provenance']['grid'], sort_keys=True)}", ""]
    if report["status"] != "completed":
        out.append(f"error: {report.get('error')}")
        return out
    if kind == "solve":
        s = res["solve"]
        out.append(f"iterations {s['iterations']}, residual {s['residual']:.3e}, "
                   f"trivial {s['trivial']}")
        out.append(f"B(p_min) = {s['B0']:.6g}, M(p_min) = {s['M0']:.6g}, A(p_min) = {s['A0']:.6g}")
        if s.get("tail"):
            t = s["tail"]
            out.append(f"tail: c1 = {t['c1']:.6g}, c2 = {t['c2']:.6g}, gamma_m = {t['gamma_m']:.5g}")
        out.append(f"flags: {s['flags']}")
    elif kind == "critical":
        key = next(k for k in res if k.startswith("critical_"))
        out.append(f"{key} = {res[key]:.6g} (lambda_max = {res['lambda_at_critical']:.6f})")
        out.append(f"monotone across bracket: {res['bisection']['monotone']}")
        if "sensitivity" in res:
            sn = res["sensitivity"]
            out.append(f"grid cut at {sn['p_max_cut']:g}: lambda shifts by {100 * sn['rel_shift']:+.3f}%")
    elif kind == "bounds":
        out.append(f"lambda_max = {res['lambda_max']:.6f}")
        out.append(f"K_r = {res['kr_sup']['value']:.6f} at p = {res['kr_sup']['arg_p']:.4g}")
        if "kr_min" in res:
            out.append(f"minimized K_r = {res['kr_min']['value']:.6f} "
                       f"at p = {res['kr_min']['arg_p']:.4g}")
        out.append(f"K_r(a,b) on {res['kr_window']['window']} = {res['kr_window']['value']:.6f}")
        ok = all(t["ordered"] for t in res["sandwich"])
        out.append(f"sandwich K_r(a,b) <= lambda <= K_r: {'holds' if ok else 'VIOLATED'}")
    elif kind == "certify":
        c = res["certificate"]
        lam = c["lambda_at_bound"]
        out.append(f"verdict: {c['verdict']} (candidate: {c['candidate']})")
        out.append(f"lambda at capped bound: {'n/a' if lam is None else f'{lam:.6f}'}")
        out.append(f"checks: {c['checks']}")
        if "invariance" in res:
            out.append(f"bracket invariance violations: {res['invariance']['total_violations']}"
                       f" of {res['invariance']['trials']}")
    elif kind == "scan":
        for row in res["rows"]:
            out.append("  " + ", ".join(f"{k}={v}" for k, v in row.items()))
        if res.get("pass_interval"):
            out.append(f"pass interval: {res['pass_interval']}")
        if res.get("fit"):
            out.append(f"zero crossing fit: {res['fit']}")
    elif kind == "verify-tails":
        for c in res["contraction"]:
            out.append(f"contraction {c['branch']} j={c['j']}: {c['ratio']:.5g} "
                       f"(leading order {c['expected']:.5g})")
        for prof, rows in res["chi"].items():
            for r in rows:
                out.append(f"chi {prof} p={r['p']:g}: ratio {r['ratio']:.4g}, "
                           f"ratio*log^2 {r['ratio_times_log2']:.4g}")
        if "c2" in res and "ratio" in res["c2"]:
            out.append(f"c2 fit/predicted: {res['c2']['ratio']:.4f} "
                       f"(doubled Lambda: {res['c2_doubled']['ratio']:.4f})")
    elif kind == "verify-norm":
        for b in res["blocks"]:
            last = b["rows"][-1]
            out.append(f"delta/gamma={b['delta_ratio']}: limit {b['limit']:.5f}, "
                       f"ratio at log R={last['log_norm']:g}: {last['ratio']:.5f}")
    return out


def build_report(cfg, kernel, grid, results, status="completed", error=None):
    prov = {"kernel": kernel.to_dict(), "grid": grid.to_dict(),
            "units": ({"momentum": "GeV", "reference_scale": "lambda_qcd",
                       "lambda_qcd": kernel.lambda_qcd} if kernel.variant == "range"
                      else {"momentum": "mu", "mu": kernel.mu})}
    rep = {"schema": SCHEMA, "analysis": cfg.analysis.kind, "status": status,
           "config": cfg.model_dump(mode="json"), "provenance": prov,
           "results": _plain(results)}
    if error is not None:
        rep["error"] = error
    return rep


def write_outputs(out_dir, report, tables):
    """Write everything into a scratch directory first, then move files into place."""
    os.makedirs(out_dir, exist_ok=True)
    prov = {"kernel": report["provenance"]["kernel"], "grid": report["provenance"]["grid"]}
    files = sorted(f"{name}.csv" for name in tables) + ["report.json", "summary.txt"]
    report = {**report, "files": files}
    with tempfile.TemporaryDirectory(dir=out_dir) as tmp:
        for name, (header, rows) in tables.items():
            write_csv(os.path.join(tmp, f"{name}.csv"), header, rows, prov)
        with open(os.path.join(tmp, "report.json"), "w") as fh:
            json.dump(report, fh, indent=2, sort_keys=True)
            fh.write("\n")
        with open(os.path.join(tmp, "summary.txt"), "w") as fh:
            fh.write("\n".join(_summary_lines(report)) + "\n")
        for f in files:
            shutil.move(os.path.join(tmp, f), os.path.join(out_dir, f))
    return [os.path.join(out_dir, f) for f in files]


# -- comparison -----------------------------------------------------------------

def _flatten(obj, prefix=""):
    if isinstance(obj, dict):
        for k, v in obj.items():
            yield from _flatten(v, f"{prefix}.{k}" if prefix else str(k))
    elif isinstance(obj, list):
        for i, v in enumerate(obj):
            yield from _flatten(v, f"{prefix}[{i}]")
    else:
        yield prefix, obj


def _tol_for(path, tolerances):
    leaf = path.rsplit(".", 1)[-1].split("[")[0]
    for key, tol in tolerances.items():
        if path == key or path.endswith("." + key) or leaf == key:
            return tol
    return tolerances.get("default")


def compare_reports(path_a, path_b, tolerances=None):
    """Per-quantity relative differences of two reports of the same analysis kind.

    Without `tolerances` every quantity is gated at 1e-9 relative. With a
    dict, only matching keys (exact path, path suffix or leaf name) and an
    optional "default" entry are gated; other differences are listed only.
    """
    with open(path_a) as fh:
        a = json.load(fh)
    with open(path_b) as fh:
        b = json.load(fh)
    if a.get("schema") != SCHEMA or b.get("schema") != SCHEMA:
        raise SchemaMismatch(f"schema {a.get('schema')} vs {b.get('schema')}, expected {SCHEMA}")
    if a.get("analysis") != b.get("analysis"):
        raise SchemaMismatch(f"analysis kinds differ: {a.get('analysis')} vs {b.get('analysis')}")
    tols = {"default": 1e-9} if tolerances is None else dict(tolerances)

    def block_diff(x, y):
        keys = sorted(set(x) | set(y))
        return {k: [x.get(k), y.get(k)] for k in keys if x.get(k) != y.get(k)}

    param = block_diff(a["config"]["model"], b["config"]["model"])
    grid = block_diff(a["config"]["grid"], b["config"]["grid"])
    fa, fb = dict(_flatten(a["results"])), dict(_flatten(b["results"]))
    diffs = []
    for path in sorted(set(fa) | set(fb)):
        va, vb = fa.get(path), fb.get(path)
        if va == vb:
            continue
        tol = _tol_for(path, tols)
        num = all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in (va, vb))
        if num:
            if math.isnan(va) and math.isnan(vb):
                continue
            rel = abs(va - vb) / max(abs(va), abs(vb), 1e-300)
            bad = tol is not None and not rel <= tol
        else:
            rel = None
            bad = tol is not None
        diffs.append({"path": path, "a": va, "b": vb, "rel": rel, "tol": tol, "violation": bad})
    violations = sum(d["violation"] for d in diffs)
    return {"analysis": a["analysis"], "parameter_diff": param, "grid_diff": grid,
            "diffs": diffs, "violations": violations,
            "ok": violations == 0 and not param}
