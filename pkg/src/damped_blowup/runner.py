"""Execute an ``ExperimentPlan``: one private output directory per run, a
top-level ``index.json``, and an exit status that reflects the audits.

Every CSV starts with a ``# config: {...}`` line holding the resolved run
configuration, followed by a one-line header. Floats are written with
``repr`` so files round-trip exactly and are byte-stable across reruns.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import shutil
import tempfile
import traceback
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import diagnostics as diag
from .config import ExperimentPlan, RunSpec
from .estimates import decay_exponent, fit_decay, log_refined_bound, sweep
from .ode import classify_grid, critical_threshold_scan, integrate, integrate_from_envelope, sideris_condition
from .radial import Dimension, RadialGrid
from .solver import run as simulate, simulation_grid
from .testfunctions import build_test_functions, growth_rate, residual_eigen, residual_harmonic

EXIT_OK, EXIT_AUDIT, EXIT_CONFIG = 0, 1, 2


def _num(x):
    if x is None:
        return ""
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def csv_text(config: dict, header, rows) -> str:
    buf = io.StringIO()
    buf.write("# config: " + json.dumps(config, sort_keys=True) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_num(v) for v in row])
    return buf.getvalue()


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if hasattr(obj, "value") and not isinstance(obj, (int, str)):
        return obj.value
    return obj


def json_text(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n"


def write_atomic(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# ---------------------------------------------------------------- run kinds

def _simulate(spec: RunSpec, profile: str):
    prm = spec.params
    problem = spec.problem()
    cfg = spec.solver_config()
    grid = simulation_grid(problem, cfg, prm["t_end"])
    tf = build_test_functions(problem.dim, grid)
    trace, report = simulate(problem, cfg, prm["t_end"], tf)
    config = spec.resolved
    files = {"trace.csv": csv_text(config, diag.COLUMNS, zip(*(getattr(trace, f) for f in (
        "times", "F0", "F1", "sup_norm", "l2_norm", "nonlin_weighted", "tail_ratio", "psi1_mass"))))}
    audits, summary = certify(spec, trace, report.as_dict(), tf)
    summary["config"] = config
    files["summary.json"] = json_text(summary)
    return files, audits


def certify(spec: RunSpec, trace: diag.FunctionalTrace, report: dict, tf=None):
    """Audit a simulation trace. Returns ``(audits, certificate)``."""
    prm = spec.params
    n, p, R, r0 = prm["n"], prm["p"], prm["R"], prm["r0"]
    problem = spec.problem()
    if tf is None:
        cfg = spec.solver_config()
        tf = build_test_functions(problem.dim, simulation_grid(problem, cfg, prm["t_end"]))
    audits = {"support": bool(report["support_tail_max"] <= 1e-10)}
    cert = {"report": report, "detection": report.get("detection", "sup-norm"),
            "windows": {"identity_window": prm["identity_window"], "growth_window": prm["growth_window"]}}
    if problem.eps == 0:
        audits["zero_solution"] = bool(np.all(trace.sup_norm == 0))
        cert["audits"] = audits
        return audits, cert

    f1 = diag.f1_certificate(problem, tf, trace)
    audits["f1_lower_bound"] = f1.passed
    cert["f1_certificate"] = {"c0": f1.c0, "int_phi1_u0": f1.int_phi1_u0, "int_phi1_u1": f1.int_phi1_u1,
                              "margin": f1.margin, "passed": f1.passed}
    T = trace.times[-1]
    smooth = trace.window(stop=prm["identity_window"] * T)
    if len(smooth) >= 5:
        ident = diag.check_f0_identity(smooth)
        audits["f0_identity"] = bool(ident.relative < 0.02)
        cert["f0_identity"] = {"relative_residual": ident.relative, "window_end": smooth.times[-1]}
    if np.all(trace.F0 > 0):
        ineq = diag.check_differential_inequality(trace, n, p, R, r0)
        audits["differential_inequality"] = ineq.violations == 0
        cert["differential_inequality"] = {"k_fit": ineq.k_fit, "k_theory": ineq.k_theory,
                                           "violations": ineq.violations}
        start = prm["growth_window"] * T
        lb = diag.check_f0_lower_bound(trace, n, p, R, start=start)
        audits["f0_growth_exponent"] = bool(abs(lb.exponent_fit - lb.target) <= 0.15)
        cert["f0_lower_bound"] = lb._asdict() | {"window_start": start}
        if report["blew_up"] and report["t_blowup_est"] is not None:
            spec_ode = diag.ode_minorant(trace, n, p, R, r0, start=start)
            ode = integrate_from_envelope(spec_ode, 1e6)
            ratio = ode.t_blowup_est / report["t_blowup_est"] if ode.blew_up else math.inf
            audits["ode_consistency"] = bool(ode.blew_up and 0.5 <= ratio <= 2.0)
            cert["ode_consistency"] = {"a": spec_ode.a, "q": spec_ode.q, "k": spec_ode.k, "delta": spec_ode.delta,
                                       "variant": spec_ode.variant.value, "ode": ode.as_dict(), "ratio": ratio}
    cert["audits"] = audits
    return audits, cert


def _ode(spec: RunSpec, profile: str):
    prm = spec.params
    ode = spec.ode_spec()
    if prm["f0"] is None:
        rep = integrate_from_envelope(ode, prm["horizon"], profile=profile)
    else:
        f0p = prm["f0prime"] if prm["f0prime"] is not None else ode.envelope(ode.start)[1]
        rep = integrate(ode, prm["f0"], f0p, prm["horizon"], profile=profile)
    d = rep.as_dict()
    config = spec.resolved
    files = {"result.csv": csv_text(config, list(d), [[d[k] for k in d]]),
             "summary.json": json_text({"config": config, "regime": sideris_condition(ode), "report": d})}
    return files, {}


def _ode_scan(spec: RunSpec, profile: str):
    prm = spec.params
    scan = classify_grid(prm["a_values"], prm["q_values"], prm["p_values"], k=prm["k"], delta=prm["delta"],
                         R=prm["R"], horizon=prm["horizon"], variant=prm["variant"], profile=profile)
    rows = list(scan.rows())
    config = spec.resolved
    header = list(rows[0]) if rows else []
    files = {"table.csv": csv_text(config, header, [[r[k] for k in header] for r in rows])}
    failures, inconclusive = len(scan.supercritical_failures), len(scan.inconclusive)
    audits = {"supercritical_blowup": failures == 0, "conclusive": inconclusive == 0}
    files["summary.json"] = json_text({"config": config, "cells": len(rows),
                                       "supercritical_failures": failures,
                                       "inconclusive": inconclusive, "audits": audits})
    return files, audits


def _ode_threshold(spec: RunSpec, profile: str):
    prm = spec.params
    ode = spec.ode_spec()
    grid = np.geomspace(prm["k0_min"], prm["k0_max"], prm["k0_count"])
    scan = critical_threshold_scan(ode, grid, prm["horizon"], profile=profile)
    config = spec.resolved
    rows = [[k0, r.outcome.value, "" if r.t_blowup_est is None else r.t_blowup_est, r.t_end]
            for k0, r in zip(scan.k0s, scan.reports)]
    audits = {"monotone_threshold": bool(scan.monotone and scan.threshold is not None)}
    files = {"threshold.csv": csv_text(config, ["K0", "outcome", "t_blowup_est", "t_end"], rows),
             "summary.json": json_text({"config": config, "threshold": scan.threshold,
                                        "monotone": scan.monotone, "audits": audits})}
    return files, audits


def _testfn(spec: RunSpec, profile: str):
    prm = spec.params
    dim = Dimension(prm["n"], prm["r0"])
    grid = RadialGrid.from_spacing(dim.r0, prm["rmax"], prm["h"])
    tf = build_test_functions(dim, grid)
    stats = {"residual_harmonic": residual_harmonic(tf), "residual_eigen": residual_eigen(tf),
             "growth_rate": growth_rate(tf)}
    audits = {"harmonic": stats["residual_harmonic"] < 1e-4, "eigen": stats["residual_eigen"] < 1e-4,
              "growth_rate": abs(stats["growth_rate"] * math.sqrt(2.0) - 1.0) <= 0.02}
    config = spec.resolved
    files = {"testfn.csv": csv_text(config, ["r", "phi0", "phi1", "log_phi1"],
                                    zip(grid.r, tf.phi0, tf.phi1, tf.log_phi1)),
             "summary.json": json_text({"config": config, **stats, "audits": audits})}
    return files, audits


def _estimates(spec: RunSpec, profile: str):
    prm = spec.params
    n, p, R = prm["n"], prm["p"], prm["R"]
    dim = Dimension(n, prm["r0"])
    ts = np.geomspace(prm["t_min"], prm["t_max"], prm["count"])
    grid = RadialGrid.from_spacing(dim.r0, prm["t_max"] + R + 1.0, prm["h"])
    tf = build_test_functions(dim, grid)
    plain, weighted = sweep(tf, p, R, ts)
    target = decay_exponent(n, p)
    fits = {"plain": fit_decay(np.column_stack([ts, plain]), R),
            "weighted": fit_decay(np.column_stack([ts, weighted]), R)}
    if n == 2:
        power, logp = log_refined_bound(p) if prm["log_correction"] is None else (log_refined_bound(p)[0],
                                                                                   prm["log_correction"])
        fits["weighted_log"] = fit_decay(np.column_stack([ts, weighted]), R, log_correction=logp,
                                         target_exponent=power)
    summary = {}
    audits = {}
    for key, f in fits.items():
        summary[key] = {"fitted_exponent": f.fitted_exponent, "max_ratio": f.max_ratio,
                        "ratio_nonincreasing": f.ratio_nonincreasing(), "bound_exponent": f.bound_exponent,
                        "log_correction": f.log_correction}
        if key == "weighted_log":
            audits["log_ratio_bounded"] = bool(math.isfinite(f.max_ratio) and f.ratio_nonincreasing())
        else:
            audits[f"{key}_exponent"] = bool(abs(f.fitted_exponent - target) <= 0.1)
    config = spec.resolved
    files = {"estimates.csv": csv_text(config, ["t", "psi_power", "weighted_psi_power"], zip(ts, plain, weighted)),
             "summary.json": json_text({"config": config, "target_exponent": target, "fits": summary,
                                        "audits": audits})}
    return files, audits


HANDLERS = {"simulate": _simulate, "ode": _ode, "ode-scan": _ode_scan, "ode-threshold": _ode_threshold,
            "testfn": _testfn, "estimates": _estimates}


def execute(spec: RunSpec, profile: str = "default"):
    """Run one spec; never raises. Returns ``(name, files, audits, error)``."""
    try:
        files, audits = HANDLERS[spec.kind](spec, profile)
        return spec.name, files, {k: bool(v) for k, v in audits.items()}, None
    except Exception as exc:  # per-run isolation
        return spec.name, {}, {}, "".join(traceback.format_exception_only(type(exc), exc)).strip()


def _execute_star(args):
    return execute(*args)


def run_plan(plan: ExperimentPlan, out_dir, *, force: bool = False, jobs: int = 1,
             profile: str = "default", log=None) -> int:
    """Run every spec and write ``<out>/<run>/...`` plus ``<out>/index.json``.

    Raises ``FileExistsError`` before any work if a run directory already
    exists and ``force`` is false.
    """
    out = Path(out_dir)
    targets = [out / r.name for r in plan.runs] + [out / "index.json"]
    if not force:
        clash = [str(t) for t in targets if t.exists()]
        if clash:
            raise FileExistsError(f"refusing to overwrite {', '.join(clash)} (use --force)")
    out.mkdir(parents=True, exist_ok=True)
    work = [(spec, profile) for spec in plan.runs]
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_execute_star, work))
    else:
        results = [_execute_star(w) for w in work]

    index = {"plan": plan.name, "seedless": plan.seedless, "runs": []}
    status = EXIT_OK
    for spec, (name, files, audits, error) in zip(plan.runs, results):
        final = out / name
        if files:
            staging = Path(tempfile.mkdtemp(dir=out, prefix=f".{name}."))
            for fname, text in files.items():
                write_atomic(staging / fname, text)
            if final.exists():
                shutil.rmtree(final)
            os.replace(staging, final)
        failed = sorted(k for k, ok in audits.items() if not ok)
        if error or failed:
            status = EXIT_AUDIT
        entry = {"name": name, "kind": spec.kind, "status": "error" if error else "ok",
                 "files": sorted(files), "audits": audits, "failed_audits": failed}
        if error:
            entry["error"] = error
        index["runs"].append(entry)
        if log:
            state = "ERROR " + error if error else ("audit failures: " + ", ".join(failed) if failed else "ok")
            log(f"{name}: {state}")
    write_atomic(out / "index.json", json_text(index))
    return status
