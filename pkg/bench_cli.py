"""Benchmark runner for the Trotterization formulas.

Subcommands write CSV datasets (dt-sweep, mu-sweep, ising-bench, norm-ratio),
JSON-lines gate programs (export-gates) or a single composed-evolution report
(evolve). The exit code is 0 only when every requested assertion passes.
"""

import argparse
import logging
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import pandas as pd

from utils import config_loader, data_handler, formulas, linalg, models, quadrature, reference
from utils.errors import ConfigError, TrotterBenchError

logger = logging.getLogger("bench_cli")

ROOT = os.path.dirname(os.path.abspath(__file__))

# ===== Configuration =====
CONFIG = {
    "bench_config": os.path.join(ROOT, "config", "bench.json"),
    "sweep_config": os.path.join(ROOT, "config", "sweeps.yaml"),
    "log_format": "[%(levelname)s] %(message)s",
}

SWEEP_COLUMNS = reference.CSV_COLUMNS + ["assignment", "row_type", "status", "slope", "r2"]
NORM_RATIO_COLUMNS = SWEEP_COLUMNS + ["ratio"]
ISING_COLUMNS = reference.CSV_COLUMNS + ["n_gates_per_L", "structural_gates", "row_type", "status", "slope", "r2"]
EVOLVE_COLUMNS = reference.CSV_COLUMNS + ["unitarity_defect", "structural_gates", "status"]
INTEGER_COLUMNS = ["N", "n_exponentials", "n_gates", "structural_gates"]


@dataclass
class Assertion:
    name: str
    passed: bool
    detail: str = ""


def setup_logging(verbose=False, quiet=False):
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    logging.basicConfig(level=level, format=CONFIG["log_format"], stream=sys.stderr, force=True)


# ===== Row helpers =====
def _failed_row(formula_id, mu, dt, n_steps, error, **extra):
    row = {
        "formula": formulas.FormulaId(formula_id).value,
        "mu": mu,
        "dt": dt,
        "N": n_steps,
        "n_exponentials": formulas.n_exponentials(formula_id) * n_steps,
        "row_type": "data",
        "status": getattr(error, "code", "error"),
    }
    row.update(extra)
    logger.error(f"{row['formula']} mu={mu:g} dt={dt:g}: {error}")
    return row


def _ok_row(record, **extra):
    row = record.as_row()
    row.update(row_type="data", status="ok", **extra)
    return row


def _parallel_map(fn, items, workers):
    if workers <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _ok(rows, **match):
    return [r for r in rows if r["status"] == "ok" and all(r.get(k) == v for k, v in match.items())]


def _fit_row(points, floor, **keys):
    row = {"row_type": "fit", **keys}
    try:
        slope, r2 = reference.order_fit(points, floor)
        row.update(status="ok", slope=slope, r2=r2)
    except TrotterBenchError as e:
        row.update(status=e.code)
        logger.warning(f"fit {keys}: {e}")
    return row


def _check_slope(name, fit, band, min_r2=None):
    if fit["status"] != "ok":
        return Assertion(name, False, fit["status"])
    target, tol = band
    passed = abs(fit["slope"] - target) <= tol and (min_r2 is None or fit["r2"] >= min_r2)
    detail = f"slope {fit['slope']:.3f} (want {target} +/- {tol}), r2 {fit['r2']:.5f}"
    return Assertion(name, passed, detail)


def _prepare(cfg):
    if cfg.cross_check is not None:
        reference.CONFIG["cross_check"] = cfg.cross_check


# ===== Experiments =====
def _local_error_rows(cfg, mu_dt_pairs):
    """One row per (formula, assignment, (mu, dt)) in deterministic grid order"""
    jobs = [
        (f, a, mu, dt)
        for f in cfg.formula_ids
        for a in cfg.assignments
        for mu, dt in mu_dt_pairs
    ]
    generators = {a: models.landau_zener(a) for a in cfg.assignments}

    def run(job):
        f, a, mu, dt = job
        try:
            record = reference.error_record(generators[a], f, quadrature.Window(mu, dt), cfg.oracle_tol)
            return _ok_row(record, assignment=a.value)
        except TrotterBenchError as e:
            return _failed_row(f, mu, dt, 1, e, assignment=a.value)

    return _parallel_map(run, jobs, cfg.workers)


def run_dt_sweep(cfg):
    """Local error against dt at fixed mu, plus one slope fit per formula and assignment"""
    _prepare(cfg)
    mu = float(cfg.params.get("mu", 1.0))
    rows = _local_error_rows(cfg, [(mu, dt) for dt in cfg.grid])
    slopes = cfg.params.get("slopes", {})
    fit_dt_min = cfg.params.get("fit_dt_min", {})
    min_r2 = cfg.params.get("min_r2")

    fits, assertions = [], []
    for f in cfg.formula_ids:
        for a in cfg.assignments:
            points = [
                (r["dt"], r["eps_frobenius"])
                for r in _ok(rows, formula=f.value, assignment=a.value)
                if r["dt"] >= fit_dt_min.get(f.value, 0.0)
            ]
            fit = _fit_row(points, None, formula=f.value, assignment=a.value, mu=mu)
            fits.append(fit)
            if f.value in slopes:
                assertions.append(_check_slope(f"dt-sweep {f.value} {a.value}", fit, slopes[f.value], min_r2))
    logger.info(f"dt-sweep: {len(rows)} rows, {len(fits)} fits")
    return rows + fits, assertions


def run_mu_sweep(cfg):
    """Local error across mu with dt = dt_scale / sqrt(1 + mu^2)"""
    _prepare(cfg)
    scale = float(cfg.params.get("dt_scale", 0.1))
    pairs = [(mu, scale / math.sqrt(1.0 + mu**2)) for mu in cfg.grid]
    rows = _local_error_rows(cfg, pairs)

    tail_min = float(cfg.params.get("tail_mu_min", 30.0))
    tail_slopes = cfg.params.get("tail_slopes", {})
    fits, assertions = [], []
    for f in cfg.formula_ids:
        for a in cfg.assignments:
            points = [(r["mu"], r["eps_frobenius"]) for r in _ok(rows, formula=f.value, assignment=a.value)
                      if r["mu"] >= tail_min]
            fit = _fit_row(points, None, formula=f.value, assignment=a.value)
            fits.append(fit)
            if f.value in tail_slopes:
                assertions.append(_check_slope(f"mu-sweep tail {f.value} {a.value}", fit, tail_slopes[f.value]))

    wrong = cfg.params.get("wrong_assignment", models.Assignment.TERM_A_TO_X.value)
    divergence_mu_max = float(cfg.params.get("divergence_mu_max", 0.1))
    if wrong in [a.value for a in cfg.assignments]:
        for name in cfg.params.get("divergent_formulas", []):
            if name not in cfg.formulas:
                continue
            series = sorted(
                (r["mu"], r["eps_frobenius"])
                for r in _ok(rows, formula=name, assignment=wrong)
                if r["mu"] < divergence_mu_max
            )
            eps = [e for _, e in series]
            passed = len(eps) >= 2 and all(x > y for x, y in zip(eps, eps[1:]))
            assertions.append(Assertion(
                f"mu-sweep {name} {wrong} grows as mu -> 0", passed, f"{len(eps)} points below mu={divergence_mu_max}"
            ))

    band = cfg.params.get("ratio_band")
    if band and len(cfg.assignments) == 2 and "mft" in cfg.formulas:
        top = max(cfg.grid)
        errs = [r["eps_frobenius"] for r in _ok(rows, formula="mft", mu=top)]
        if len(errs) == 2 and min(errs) > 0:
            ratio = max(errs) / min(errs)
            passed = band[0] <= ratio <= band[1]
            assertions.append(Assertion(f"mu-sweep mft assignment ratio at mu={top:g}", passed, f"ratio {ratio:.2f}"))
        else:
            assertions.append(Assertion(f"mu-sweep mft assignment ratio at mu={top:g}", False, "missing rows"))
    logger.info(f"mu-sweep: {len(rows)} rows, {len(fits)} fits")
    return rows + fits, assertions


def _ising_params(cfg):
    defaults = models.CONFIG["ising_defaults"]
    return models.IsingParams(
        L=int(cfg.params.get("L", defaults["L"])),
        J=float(cfg.params.get("J", defaults["J"])),
        hz=float(cfg.params.get("hz", defaults["hz"])),
        hx=float(cfg.params.get("hx", defaults["hx"])),
    )


def _interp_log(x, xs, ys):
    """log-log interpolation of ys(xs) at x; None outside the sampled range"""
    order = np.argsort(xs)
    lx = np.log(np.asarray(xs, dtype=float)[order])
    ly = np.log(np.asarray(ys, dtype=float)[order])
    if not lx[0] <= math.log(x) <= lx[-1]:
        return None
    return float(np.exp(np.interp(math.log(x), lx, ly)))


def run_ising_bench(cfg):
    """Global error of the composed evolution on the Ising chain against gate count"""
    _prepare(cfg)
    p = _ising_params(cfg)
    t_i = float(cfg.params.get("t_i", 0.0))
    t_f = float(cfg.params.get("t_f", math.pi))
    gen = models.ising_chain(p)
    try:
        reference.exact_propagator(gen, t_i, t_f, cfg.oracle_tol)
    except TrotterBenchError as e:
        logger.error(f"exact propagator for L={p.L}: {e}")

    jobs = [(f, int(n)) for f in cfg.formula_ids for n in cfg.grid]

    def run(job):
        f, n = job
        n_gates = models.gate_count(f, p.L, n)
        extra = {"n_gates_per_L": n_gates / p.L, "structural_gates": models.structural_gate_count(f, p.L, n)}
        try:
            record = reference.global_error_record(gen, f, t_i, t_f, n, cfg.oracle_tol, n_gates=n_gates)
            return _ok_row(record, **extra)
        except TrotterBenchError as e:
            return _failed_row(f, 0.5 * (t_i + t_f), (t_f - t_i) / n, n, e, n_gates=n_gates, **extra)

    rows = _parallel_map(run, jobs, cfg.workers)

    n_min = int(cfg.params.get("fit_n_min", 20))
    slopes = cfg.params.get("slopes", {})
    fits, assertions = [], []
    series = {}
    for f in cfg.formula_ids:
        ok = [r for r in _ok(rows, formula=f.value) if r["N"] >= n_min]
        series[f.value] = ([r["n_gates"] for r in ok], [r["eps_frobenius"] for r in ok])
        fit = _fit_row(list(zip(*series[f.value])), None, formula=f.value)
        fits.append(fit)
        if f.value in slopes:
            assertions.append(_check_slope(f"ising {f.value} slope vs N_gates", fit, slopes[f.value]))

        if f in models.CLOSED_FORM_GATES:
            per_site = models.CLOSED_FORM_GATES[f]
            exact = all(r["n_gates"] == per_site * p.L * r["N"] for r in rows if r["formula"] == f.value)
            assertions.append(Assertion(f"ising {f.value} gate count {per_site}LN", exact))

    for better, worse in cfg.params.get("orderings", []):
        if better not in series or worse not in series:
            continue
        gates, errs = series[better]
        ref_gates, ref_errs = series[worse]
        compared, violations = 0, 0
        for g, e in zip(gates, errs):
            other = _interp_log(g, ref_gates, ref_errs) if len(ref_gates) >= 2 else None
            if other is None:
                continue
            compared += 1
            violations += int(not e < other)
        assertions.append(Assertion(
            f"ising {better} < {worse} at matched N_gates",
            compared > 0 and violations == 0,
            f"{compared} compared, {violations} violations",
        ))
    logger.info(f"ising-bench L={p.L}: {len(rows)} rows")
    return rows + fits, assertions


def run_norm_ratio(cfg):
    """Spectral over Frobenius local error across the dt grid"""
    _prepare(cfg)
    mu = float(cfg.params.get("mu", 1.0))
    rows = _local_error_rows(cfg, [(mu, dt) for dt in cfg.grid])
    band = float(cfg.params.get("max_variation", 0.2))
    assertions = []
    for row in rows:
        if row["status"] == "ok" and row["eps_frobenius"] > 0:
            row["ratio"] = row["eps_spectral"] / row["eps_frobenius"]
    for f in cfg.formula_ids:
        for a in cfg.assignments:
            ratios = [r["ratio"] for r in _ok(rows, formula=f.value, assignment=a.value) if "ratio" in r]
            if not ratios:
                assertions.append(Assertion(f"norm-ratio {f.value} {a.value}", False, "no rows"))
                continue
            median = float(np.median(ratios))
            spread = max(abs(r / median - 1.0) for r in ratios)
            passed = max(ratios) <= 1.0 + 1e-12 and spread <= band
            assertions.append(Assertion(
                f"norm-ratio {f.value} {a.value}", passed, f"median {median:.4f}, spread {spread:.3f}"
            ))
    return rows, assertions


def export_gates(formula_id, p, n_steps, output, t_i=0.0, t_f=math.pi):
    """Write the gate program of the composed evolution; returns the gate count"""
    gen = models.ising_chain(p)
    gates = models.gate_program(formula_id, gen, p, t_i, t_f, n_steps)
    header = {
        "L": p.L,
        "formula": formulas.FormulaId(formula_id).value,
        "N": n_steps,
        "dt": (t_f - t_i) / n_steps if n_steps else None,
    }
    return data_handler.write_gate_program(output, header, gates)


def evolve(gen, formula_id, t_i, t_f, n_steps, tol=None, p=None):
    """Composed evolution against the exact propagator, as one report row"""
    formula_id = formulas.FormulaId(formula_id)
    row = {
        "formula": formula_id.value,
        "mu": 0.5 * (t_i + t_f),
        "dt": (t_f - t_i) / n_steps,
        "N": n_steps,
        "n_exponentials": formulas.n_exponentials(formula_id) * n_steps,
        "n_gates": models.gate_count(formula_id, p.L, n_steps) if p else 0,
        "structural_gates": models.structural_gate_count(formula_id, p.L, n_steps) if p else 0,
    }
    try:
        approx = reference.composed_evolution(gen, formula_id, t_i, t_f, n_steps)
        diff = reference.exact_propagator(gen, t_i, t_f, tol) - approx
        row.update(
            eps_frobenius=linalg.frobenius_norm(diff),
            eps_spectral=linalg.spectral_norm(diff),
            unitarity_defect=reference.unitarity_defect(approx) if gen.anti_hermitian else np.nan,
            status="ok",
        )
    except TrotterBenchError as e:
        logger.error(f"evolve {formula_id.value}: {e}")
        row["status"] = e.code
    return row


# ===== Reporting =====
def print_summary(assertions):
    if not assertions:
        return
    table = pd.DataFrame(
        [{"assertion": a.name, "result": "PASS" if a.passed else "FAIL", "detail": a.detail} for a in assertions]
    )
    sys.stderr.write(table.to_string(index=False) + "\n")


# ===== Command line =====
def _csv_list(text):
    return [item.strip() for item in text.split(",") if item.strip()]


def _float_list(text):
    return [float(v) for v in _csv_list(text)]


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--formulas", type=_csv_list, help="comma-separated formula ids")
    common.add_argument("--assignment", choices=["both", "A_to_X", "A_to_Y"])
    common.add_argument("--oracle-tol", type=float, dest="oracle_tol")
    common.add_argument("--cross-check", choices=["mst", "dop853", "off"], dest="cross_check")
    common.add_argument("--out", help="output path, '-' for standard output")
    common.add_argument("--config", help="YAML/JSON file with module and experiment sections")
    common.add_argument("--workers", type=int)
    common.add_argument("--verbose", action="store_true")
    common.add_argument("--quiet", action="store_true")

    parser = argparse.ArgumentParser(prog="bench_cli", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("dt-sweep", parents=[common], help="local error against dt")
    p.add_argument("--mu", type=float)
    p.add_argument("--dt", type=_float_list, help="comma-separated dt grid")

    p = sub.add_parser("mu-sweep", parents=[common], help="local error across mu")
    p.add_argument("--mu", type=_float_list, help="comma-separated mu grid")
    p.add_argument("--dt-scale", type=float, dest="dt_scale")

    p = sub.add_parser("ising-bench", parents=[common], help="global error on the Ising chain")
    p.add_argument("--L", type=int)
    p.add_argument("--N", type=_float_list, help="comma-separated step counts")

    p = sub.add_parser("norm-ratio", parents=[common], help="spectral/Frobenius error ratio")
    p.add_argument("--mu", type=float)
    p.add_argument("--dt", type=_float_list)

    p = sub.add_parser("export-gates", parents=[common], help="write an Ising gate program")
    p.add_argument("--formula", default="midpoint")
    p.add_argument("--L", type=int)
    p.add_argument("--N", type=int, default=10)
    p.add_argument("--t-i", type=float, dest="t_i")
    p.add_argument("--t-f", type=float, dest="t_f")

    p = sub.add_parser("evolve", parents=[common], help="one composed evolution against the exact propagator")
    p.add_argument("--model", choices=["landau_zener", "ising"], default="landau_zener")
    p.add_argument("--formula", default="mft")
    p.add_argument("--L", type=int)
    p.add_argument("--N", type=int, default=100)
    p.add_argument("--t-i", type=float, dest="t_i")
    p.add_argument("--t-f", type=float, dest="t_f")
    return parser


def _load_settings(args):
    settings = {}
    for path in (CONFIG["bench_config"], CONFIG["sweep_config"], args.config):
        if not path:
            continue
        loader = config_loader.load_bench_config if path == CONFIG["bench_config"] else config_loader.load_sweep_config
        loaded = loader(path)
        if loaded is None:
            if path == args.config:
                raise ConfigError(f"could not read {path}")
            continue
        for section, values in loaded.items():
            if isinstance(values, dict):
                settings.setdefault(section, {}).update(values)
    config_loader.apply_overrides(settings)
    return settings


EXPERIMENT_RUNNERS = {
    "dt-sweep": ("dt_sweep", run_dt_sweep, SWEEP_COLUMNS),
    "mu-sweep": ("mu_sweep", run_mu_sweep, SWEEP_COLUMNS),
    "ising-bench": ("ising_bench", run_ising_bench, ISING_COLUMNS),
    "norm-ratio": ("norm_ratio", run_norm_ratio, NORM_RATIO_COLUMNS),
}


def _flags(args):
    flags = {k: getattr(args, k, None) for k in ("formulas", "assignment", "oracle_tol", "cross_check", "out", "workers")}
    for key in ("mu", "dt", "dt_scale", "L", "N", "t_i", "t_f"):
        value = getattr(args, key, None)
        if value is not None:
            flags[key] = value
    return flags


def main(argv=None):
    args = build_parser().parse_args(argv)
    setup_logging(args.verbose, args.quiet)
    try:
        settings = _load_settings(args)
        if args.command in EXPERIMENT_RUNNERS:
            section, runner, columns = EXPERIMENT_RUNNERS[args.command]
            cfg = config_loader.build_sweep_config(section, settings, _flags(args))
            rows, assertions = runner(cfg)
            data_handler.write_dataset(rows, columns, cfg.out, INTEGER_COLUMNS)
            print_summary(assertions)
            failed = [a for a in assertions if not a.passed]
            if failed:
                logger.error(f"{len(failed)} of {len(assertions)} assertions failed")
                return 1
            return 0

        section = args.command.replace("-", "_")
        cfg = config_loader.build_sweep_config(section, settings, _flags(args))
        _prepare(cfg)
        t_i = float(cfg.params.get("t_i", 0.0))
        t_f = float(cfg.params.get("t_f", math.pi))
        if args.command == "export-gates":
            p = _ising_params(cfg)
            export_gates(args.formula, p, args.N, cfg.out or "-", t_i, t_f)
            return 0

        p = _ising_params(cfg) if args.model == "ising" else None
        gen = models.ising_chain(p) if p else models.landau_zener(
            cfg.assignments[0] if cfg.assignment != "both" else models.Assignment.TERM_A_TO_Y
        )
        row = evolve(gen, args.formula, t_i, t_f, args.N, cfg.oracle_tol, p)
        data_handler.write_dataset([row], EVOLVE_COLUMNS, cfg.out, INTEGER_COLUMNS)
        return 0 if row["status"] == "ok" else 1
    except (TrotterBenchError, ValueError) as e:
        logger.error(str(e))
        return 2


if __name__ == "__main__":
    sys.exit(main())
