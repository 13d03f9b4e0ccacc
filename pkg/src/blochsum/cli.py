"""Command-line experiment runner.

    blochsum <experiment> --config <path> [--out <dir>] [--workers N] [--seed S]

Exit status is 0 when every check passes, 1 when any check fails or an
experiment raises, and 2 for usage or config errors.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import decay, delta, fiber, momentum, perturb, sumrule, trace
from .config import EXPERIMENTS, ConfigError, ExperimentConfig, load_config
from .model import build_basis, build_potential, sample_brillouin

log = logging.getLogger("blochsum")


class Checks:
    """Collects named pass/fail checks for the report."""

    def __init__(self):
        self.items = []

    def add(self, name, passed, value=None, tol=None, detail=None):
        self.items.append(
            {"name": name, "passed": bool(passed), "value": value, "tol": tol, "detail": detail}
        )
        if not passed:
            log.warning("check failed: %s (value=%s, tol=%s) %s", name, value, tol, detail or "")

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.items)


def _setup(cfg: ExperimentConfig):
    V = build_potential(cfg.potential)
    basis = build_basis(cfg.potential.dimension, cfg.m_cut)
    return V, basis


def _k(value, d):
    return np.full(d, float(value)) if np.isscalar(value) else np.asarray(value, dtype=float)


def run_spectrum(cfg, out, pool, checks):
    V, basis = _setup(cfg)
    grid = sample_brillouin(basis.dimension, cfg.grid_n, cfg.grid_offset)
    n = cfg.params["n_bands"] or basis.size // 2
    bs = fiber.band_structure(V, basis, grid, n, keep_vectors=True, executor=pool)
    bs.to_csv(out / "bands.csv")
    problems = [f"k={list(s.k)}: {p}" for s in bs.spectra for p in fiber.check_spectrum(s, floor=None)]
    checks.add("spectrum_sane", not problems, len(problems), 0, problems[:5] or None)
    if cfg.params["check_free"]:
        errs = []
        for s in bs.spectra:
            ref = fiber.free_levels(basis, s.k, cfg.potential.shift)[:n]
            errs.append(float(np.max(np.abs(s.eigenvalues - ref) / np.maximum(np.abs(ref), 1.0))))
        checks.add("free_levels", max(errs) <= cfg.tolerances["free"], max(errs), cfg.tolerances["free"])
    return {"n_k": len(grid.points), "n_bands": n, "lowest": float(bs.eigenvalues.min())}


def run_pimatrix(cfg, out, pool, checks):
    V, basis = _setup(cfg)
    grid = sample_brillouin(basis.dimension, cfg.grid_n, cfg.grid_offset)
    p = cfg.params
    n = p["n_bands"] or basis.size // 2
    alpha = p["alpha"]

    def one(k):
        spec = fiber.solve_fiber(fiber.assemble_fiber(V, basis, k), basis.size)
        return momentum.MomentumMatrix(alpha, k, momentum.momentum_matrix(spec, alpha).matrix[:n, :n])

    mats = list(pool.map(one, list(grid.points)))
    summaries = []
    for i, M in enumerate(mats):
        M.to_csv(out / f"pimatrix_k{i:03d}.csv")
        summaries.append(M.summary())
    herm = max(M.hermiticity_error() for M in mats)
    checks.add("hermiticity", herm <= cfg.tolerances["hermiticity"], herm, cfg.tolerances["hermiticity"])
    if p["check_free"]:
        off = max(s["max_abs_offdiagonal"] for s in summaries)
        checks.add("free_offdiagonal", off <= cfg.tolerances["offdiag"], off, cfg.tolerances["offdiag"])
    fh = []
    for k in grid.points:
        for band in p["fh_bands"]:
            try:
                r = momentum.feynman_hellmann_check(V, basis, k, band, alpha)
            except momentum.DegenerateBandError as exc:
                fh.append({"k": k.tolist(), "band": band, "skipped": str(exc)})
                continue
            fh.append({"k": k.tolist(), "band": band, "two_pi_jj": 2 * r.diagonal, "fd": r.fd_derivative, "residual": r.residual})
    res = [f["residual"] for f in fh if "residual" in f]
    if res:
        tol = cfg.tolerances["feynman_hellmann"]
        checks.add("feynman_hellmann", max(res) <= tol, max(res), tol, f"{len(res)} samples")
    return {"matrices": summaries, "feynman_hellmann": fh}


def run_decay(cfg, out, pool, checks):
    V, basis = _setup(cfg)
    p = cfg.params
    k = _k(p["k"], basis.dimension)
    spec = fiber.solve_fiber(fiber.assemble_fiber(V, basis, k), basis.size)
    pi = momentum.momentum_matrix(spec, 0)
    stab = []
    for N in p["powers"]:
        s = decay.ratio_stabilization(pi, spec, N, p["s_max"], tuple(p["t_values"]), cfg.tolerances["stability"])
        stab.append({"N": N, "t_values": list(s.t_values), "ratios": list(s.ratios), "relative_change": s.relative_change, "stabilized": s.stabilized})
    if p["expect_stable"] is not None:
        for s in stab:
            ok = s["stabilized"] if p["expect_stable"] else not s["stabilized"]
            checks.add(f"ratio_N{s['N']}_{'stable' if p['expect_stable'] else 'grows'}", ok, s["relative_change"], cfg.tolerances["stability"])
    lo, hi = p["fit_window"]
    lam = spec.eigenvalues
    fit = None
    try:
        f = decay.decay_exponent_fit(pi, spec, p["fit_band"], (lam[int(lo) - 1], lam[int(hi) - 1]))
        f.pairs_csv(out / "decay_pairs.csv")
        f.to_json(out / "decay_fit.json")
        fit = {"exponent": f.exponent, "amplitude": f.amplitude, "window": list(f.window)}
    except decay.DegenerateFitError as exc:
        fit = {"degenerate": str(exc)}
    cn = decay.commutator_norm(spec, pi, p["commutator_power"])
    cn.to_json(out / "commutator_norm.json")
    return {"stabilization": stab, "fit": fit, "commutator": {"cutoffs": cn.cutoffs, "norms": cn.norms, "stabilized": cn.stabilized}}


def run_sumrule(cfg, out, pool, checks):
    V, basis = _setup(cfg)
    p = cfg.params
    k = _k(p["k"], basis.dimension)
    spec = fiber.solve_fiber(fiber.assemble_fiber(V, basis, k), basis.size)
    pi = momentum.momentum_matrix(spec, 0)
    lhs = sumrule.sumrule_lhs(V, spec, p["band"])
    part = sumrule.sumrule_rhs_partial(pi, spec, p["band"], p["cutoffs"], lhs)
    part.to_csv(out / "sumrule_partial.csv")
    part.to_json(out / "sumrule.json")
    tol = cfg.tolerances["sumrule"]
    gap = part.relative_gap
    if p["expect_converge"]:
        checks.add("sumrule_gap", gap <= tol, gap, tol)
    result = {"lhs": lhs, "partial_sums": part.partial_sums, "relative_gap": gap, "slope": part.slope}
    if p["t_grid"]:
        t = np.geomspace(*p["t_grid"][:2], int(p["t_grid"][2])) if len(p["t_grid"]) == 3 else np.asarray(p["t_grid"])
        osc = sumrule.oscillation_series(pi, spec, p["band"], t, max(p["cutoffs"]))
        osc.to_csv(out / "oscillation.csv")
        result["holder_exponent"] = osc.holder_exponent(*p["holder_window"])
    return result


def run_perturb(cfg, out, pool, checks):
    V, basis = _setup(cfg)
    p = cfg.params
    d = basis.dimension
    k0, k = _k(p["k0"], d), _k(p["k"], d)
    fr = perturb.feshbach_eigenvalue(V, basis, k0, k)
    direct = fiber.solve_fiber(fiber.assemble_fiber(V, basis, k), 1, vectors=False).eigenvalues[0]
    err = abs(fr.eigenvalue - direct)
    checks.add("feshbach", err <= cfg.tolerances["feshbach"] and fr.iterations <= 50, err, cfg.tolerances["feshbach"], f"{fr.iterations} iterations")
    kp = []
    for kk in p["kp_points"]:
        kv = _k(kk, d)
        spec = fiber.solve_fiber(fiber.assemble_fiber(V, basis, kv), basis.size)
        a = perturb.kp_second_derivative(spec, momentum.momentum_matrix(spec, 0))
        b = perturb.fd_second_derivative(V, basis, kv, h=p["fd_step"], richardson=p["richardson"])
        kp.append({"k": kv.tolist(), "kp": a, "fd": b, "relative": abs(a - b) / max(abs(b), 1.0)})
    if kp:
        worst = max(x["relative"] for x in kp)
        checks.add("kp_vs_fd", worst <= cfg.tolerances["kp"], worst, cfg.tolerances["kp"])
    spec0 = fiber.solve_fiber(fiber.assemble_fiber(V, basis, k0), basis.size)
    nest = perturb.nested_sum_apatra2(momentum.momentum_matrix(spec0, 0), spec0, p["nested_cutoffs"], cfg.tolerances["nested"])
    nest.to_json(out / "nested_sum.json")
    exp = p["expect_nested_converged"]
    if exp is not None:
        checks.add("nested_converged" if exp else "nested_contrast_flag", nest.converged == exp, nest.abs_increments[-1] if nest.abs_increments else None, cfg.tolerances["nested"])
        if exp:
            od = nest.order_difference
            checks.add("nested_order", od <= cfg.tolerances["nested"], od, cfg.tolerances["nested"])
    return {
        "feshbach": {"eigenvalue": fr.eigenvalue, "direct": float(direct), "iterations": fr.iterations},
        "kp": kp,
        "nested": {"values": nest.values, "abs_sums": nest.abs_sums, "converged": nest.converged, "order_difference": nest.order_difference},
    }


def run_trace(cfg, out, pool, checks):
    V, basis = _setup(cfg)
    p = cfg.params
    grid = sample_brillouin(basis.dimension, cfg.grid_n, cfg.grid_offset)
    alphas = tuple(p["alphas"])
    bs = trace.trace_per_unit_volume(V, basis, cfg.contour, alphas, p["j"], grid, executor=pool)
    orc = trace.trace_oracle_direct(V, basis, cfg.contour, alphas[::-1], grid, executor=pool)
    bs.to_csv(out / "trace_band_sum.csv")
    orc.to_csv(out / "trace_oracle.csv")
    cmp = trace.compare_traces(bs, orc)
    tol = cfg.tolerances["trace"]
    checks.add("trace_oracle", cmp["relative_difference"] <= tol, cmp["relative_difference"], tol, f"worst k = {cmp['worst_k']}")
    result = {"band_sum": [bs.value.real, bs.value.imag], "oracle": [orc.value.real, orc.value.imag], **cmp}
    if p["check_cyclic"] and len(alphas) > 1:
        rot = alphas[1:] + alphas[:1]
        r = trace.trace_per_unit_volume(V, basis, cfg.contour, rot, p["j"], grid, executor=pool)
        diff = abs(r.value - bs.value) / max(abs(bs.value), 1e-300)
        checks.add("cyclic_invariance", diff <= cfg.tolerances["cyclic"], diff, cfg.tolerances["cyclic"])
        result["cyclic_difference"] = diff
    return result


def run_delta(cfg, out, pool, checks):
    p = cfg.params
    model = delta.delta_levels(p["g"], p["j_max"])
    model.levels_csv(out / "delta_levels.csv")
    delta.pi_table_csv(model, p["pi_js"], out / "delta_pi.csv")
    div = delta.delta_sumrule_divergence(model, p["cutoffs"])
    div.to_csv(out / "delta_sumrule.csv")
    div.to_json(out / "delta_sumrule.json")
    checks.add("divergence_slope", div.relative_error <= cfg.tolerances["slope"], div.relative_error, cfg.tolerances["slope"])
    jmax = max(p["pi_js"])
    a = delta.delta_pi(model, jmax)
    rel = abs(a.remainder / a.leading)
    checks.add(f"pi_asymptote_j{jmax}", rel <= cfg.tolerances["asymptote"], rel, cfg.tolerances["asymptote"])
    hf = delta.holder_fit(*p["holder_window"], J=p["holder_j"])
    lo, hi = cfg.tolerances["holder_low"], cfg.tolerances["holder_high"]
    checks.add("holder_exponent", lo <= hf.exponent <= hi, hf.exponent, [lo, hi])
    return {
        "beta_1": float(model.beta[0]),
        "lambda_1": float(model.even_levels[0]),
        "C_1": float(model.norms[0]),
        "max_residual": float(model.residuals().max()),
        "slope": div.slope,
        "predicted_slope": div.predicted_slope,
        "holder_exponent": hf.exponent,
    }


RUNNERS = {
    "spectrum": run_spectrum,
    "pimatrix": run_pimatrix,
    "decay": run_decay,
    "sumrule": run_sumrule,
    "perturb": run_perturb,
    "trace": run_trace,
    "delta": run_delta,
}


def _default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, complex):
        return [o.real, o.imag]
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def run(cfg: ExperimentConfig, out_dir, workers: int | None = None) -> int:
    """Run one experiment, write ``report.json`` plus its CSVs, return the exit status."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    checks = Checks()
    failures = []
    result = None
    t0 = time.perf_counter()
    with ThreadPoolExecutor(max_workers=workers or os.cpu_count() or 1) as pool:
        try:
            result = RUNNERS[cfg.experiment](cfg, out, pool, checks)
        except Exception as exc:  # aggregated into the report, not re-raised
            log.exception("experiment %s failed", cfg.experiment)
            failures.append({"error": type(exc).__name__, "message": str(exc)})
    elapsed = time.perf_counter() - t0
    log.info("%s finished in %.2f s", cfg.experiment, elapsed)
    passed = checks.passed and not failures
    report = {
        "experiment": cfg.experiment,
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "config": cfg.resolved(),
        "passed": passed,
        "checks": checks.items,
        "failures": failures,
        "result": result,
    }
    with open(out / "report.json", "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True, default=_default)
        fh.write("\n")
    return 0 if passed else 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="blochsum", description="Run a Bloch-band numerical experiment.")
    ap.add_argument("experiment", choices=EXPERIMENTS)
    ap.add_argument("--config", required=True, help="INI config file")
    ap.add_argument("--out", help="output directory (default: [run] out, else ./blochsum-out/<experiment>)")
    ap.add_argument("--workers", type=int, default=None, help="worker threads (default: CPU count)")
    ap.add_argument("--seed", type=int, default=None, help="overrides the potential seed")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.workers is not None and args.workers < 1:
        print("blochsum: --workers must be at least 1", file=sys.stderr)
        return 2
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"blochsum: {args.config}: {exc}", file=sys.stderr)
        return 2
    if cfg.experiment != args.experiment:
        print(f"blochsum: config is for '{cfg.experiment}', not '{args.experiment}'", file=sys.stderr)
        return 2
    if args.seed is not None:
        cfg.seed = args.seed
        cfg.potential = replace(cfg.potential, seed=args.seed)
    out = args.out or cfg.out or os.path.join("blochsum-out", cfg.experiment)
    try:
        return run(cfg, out, args.workers)
    except OSError as exc:
        print(f"blochsum: cannot write to {out}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
