"""Exact propagators, Trotter error metrics and order fitting."""

import logging
import math
import threading
from collections import OrderedDict
from dataclasses import asdict, dataclass

import numpy as np
from scipy.integrate import solve_ivp

from utils import formulas, linalg, magnus, quadrature
from utils.errors import (
    DegenerateBetaError,
    FitRangeError,
    IllConditionedSystemError,
    OracleDisagreementError,
    OracleError,
    StepFailedError,
    StepSizeUnderflowError,
    TrotterBenchError,
)

logger = logging.getLogger(__name__)

# ===== Configuration =====
CONFIG = {
    "oracle_tol": 1e-12,
    "min_oracle_tol": 1e-13,
    "rk_method": "RK45",
    "rk_rtol_scale": 0.01,  # rtol = scale * tol, clamped at 100 eps; atol = rtol / dim
    "cross_check": "mst",  # mst | dop853 | off
    "cross_check_substep": 0.02,  # fine-step width times the generator norm
    "cross_check_nodes": 6,
    "cross_check_factor": 10.0,
    "mst_regular_ratio": 0.5,  # below this the fine step uses the Magnus exponential
    "roundoff_floor": 1e-14,
    "min_fit_points": 4,
    "propagator_cache_size": 1024,
}

CSV_COLUMNS = ["formula", "mu", "dt", "N", "n_exponentials", "n_gates", "eps_frobenius", "eps_spectral"]


@dataclass(frozen=True)
class ErrorRecord:
    formula_id: str
    mu: float
    dt: float
    n_steps: int
    n_exponentials: int
    n_gates: int
    eps_frobenius: float
    eps_spectral: float

    def as_row(self):
        return {
            "formula": self.formula_id,
            "mu": self.mu,
            "dt": self.dt,
            "N": self.n_steps,
            "n_exponentials": self.n_exponentials,
            "n_gates": self.n_gates,
            "eps_frobenius": self.eps_frobenius,
            "eps_spectral": self.eps_spectral,
        }

    def to_dict(self):
        return asdict(self)


# ===== Propagator cache =====
_cache = OrderedDict()
_cache_lock = threading.Lock()


def clear_propagator_cache():
    with _cache_lock:
        _cache.clear()


def _cached(key, compute):
    with _cache_lock:
        if key in _cache:
            _cache.move_to_end(key)
            return _cache[key]
    value = compute()
    value.setflags(write=False)
    with _cache_lock:
        _cache[key] = value
        while len(_cache) > CONFIG["propagator_cache_size"]:
            _cache.popitem(last=False)
    return value


# ===== Oracles =====
def _ode_propagator(gen, t0, t1, tol, method):
    dim = gen.dim
    rtol = tol * CONFIG["rk_rtol_scale"]
    floor = 100.0 * np.finfo(float).eps
    if rtol < floor:
        logger.debug(f"rtol {rtol:.2e} clamped to {floor:.2e}")
        rtol = floor
    atol = rtol / dim

    def rhs(t, y):
        return (gen.at(t) @ y.reshape(dim, dim)).ravel()

    start = np.eye(dim, dtype=np.complex128).ravel()
    sol = solve_ivp(rhs, (t0, t1), start, method=method, rtol=rtol, atol=atol)
    if not sol.success:
        if "step size" in sol.message.lower():
            raise StepSizeUnderflowError(f"{method} oracle on [{t0}, {t1}]: {sol.message}")
        raise OracleError(f"{method} oracle on [{t0}, {t1}]: {sol.message}")
    logger.debug(f"{method} oracle on [{t0}, {t1}]: {sol.t.size} accepted steps")
    return sol.y[:, -1].reshape(dim, dim)


def _generator_scale(gen, t0, t1):
    return max(linalg.spectral_norm(gen.at(t)) for t in (t0, 0.5 * (t0 + t1), t1))


def _fine_step(gen, w):
    nodes = CONFIG["cross_check_nodes"]
    b = magnus.beta_set(gen, w, order=6, nodes=nodes)
    big = max(abs(b.b1), abs(b.b2))
    if big > 0 and min(abs(b.b1), abs(b.b2)) >= CONFIG["mst_regular_ratio"] * big:
        try:
            schedule, _ = formulas.mst(gen, w, nodes=nodes)
            return formulas.evaluate(schedule, gen)
        except (DegenerateBetaError, IllConditionedSystemError) as e:
            logger.debug(f"fine step on {w} falls back to the Magnus exponential: {e}")
    return magnus_oracle(gen, w.start, w.end, abs(w.end - w.start))


def fine_step_propagator(gen, t0, t1):
    """Composed 15-exponential evolution on sub-windows sized by the generator norm.

    Sub-windows where one coefficient integral is small next to the other use
    the truncated Magnus exponential instead.
    """
    width = CONFIG["cross_check_substep"] / max(1.0, _generator_scale(gen, t0, t1))
    n = max(1, math.ceil(abs(t1 - t0) / width))
    edges = np.linspace(t0, t1, n + 1)
    result = np.eye(gen.dim, dtype=np.complex128)
    for a, b in zip(edges[:-1], edges[1:]):
        result = _fine_step(gen, quadrature.Window.between(a, b)) @ result
    return result


def magnus_oracle(gen, t0, t1, step):
    """Composed exp(Omega_1 + ... + Omega_4) over sub-windows no wider than ``step``"""
    n = max(1, math.ceil(abs(t1 - t0) / step))
    edges = np.linspace(t0, t1, n + 1)
    result = np.eye(gen.dim, dtype=np.complex128)
    for a, b in zip(edges[:-1], edges[1:]):
        result = magnus.magnus_exponential(gen, quadrature.Window.between(a, b), order=6) @ result
    return result


def exact_propagator(gen, t0, t1, tol=None):
    """S(t1, t0) for dS/dt = A(t) S, checked against an independent second oracle"""
    tol = CONFIG["oracle_tol"] if tol is None else tol
    if tol < CONFIG["min_oracle_tol"]:
        raise ValueError(f"oracle tolerance must be >= {CONFIG['min_oracle_tol']:g}, got {tol:g}")
    if t0 == t1:
        return np.eye(gen.dim, dtype=np.complex128)

    mode = CONFIG["cross_check"]

    def compute():
        primary = _ode_propagator(gen, t0, t1, tol, CONFIG["rk_method"])
        if mode == "off":
            return primary
        if mode == "dop853":
            secondary = _ode_propagator(gen, t0, t1, tol, "DOP853")
        elif mode == "mst":
            secondary = fine_step_propagator(gen, t0, t1)
        else:
            raise ValueError(f"unknown cross-check mode {mode!r}")
        deviation = linalg.frobenius_norm(primary - secondary)
        if deviation > CONFIG["cross_check_factor"] * tol:
            raise OracleDisagreementError(
                f"oracles disagree on [{t0}, {t1}] by {deviation:.3e} (> {CONFIG['cross_check_factor'] * tol:.1e})",
                deviation=deviation,
            )
        logger.debug(f"oracle cross-check ({mode}) on [{t0}, {t1}]: {deviation:.3e}")
        return primary

    return _cached((gen, float(t0), float(t1), tol, mode), compute)


# ===== Error metrics =====
def unitarity_defect(m):
    m = np.asarray(m)
    return linalg.frobenius_norm(linalg.dagger(m) @ m - np.eye(m.shape[0]))


def _norm(m, norm):
    if norm == "frobenius":
        return linalg.frobenius_norm(m)
    if norm == "spectral":
        return linalg.spectral_norm(m)
    raise ValueError(f"norm must be 'frobenius' or 'spectral', got {norm!r}")


def trotter_error(gen, formula_id, w, norm="frobenius", tol=None):
    """|| S(window) - T(window) || in the requested norm"""
    approx = formulas.evaluate(formulas.build_schedule(formula_id, gen, w), gen)
    exact = exact_propagator(gen, w.start, w.end, tol)
    return _norm(exact - approx, norm)


def error_record(gen, formula_id, w, tol=None, n_gates=0):
    """Local error of one formula step in both norms"""
    # schedule failures take precedence over oracle failures
    approx = formulas.evaluate(formulas.build_schedule(formula_id, gen, w), gen)
    exact = exact_propagator(gen, w.start, w.end, tol)
    diff = exact - approx
    return ErrorRecord(
        formula_id=formulas.FormulaId(formula_id).value,
        mu=w.mu,
        dt=w.dt,
        n_steps=1,
        n_exponentials=formulas.n_exponentials(formula_id),
        n_gates=n_gates,
        eps_frobenius=linalg.frobenius_norm(diff),
        eps_spectral=linalg.spectral_norm(diff),
    )


def composed_evolution(gen, formula_id, t_i, t_f, n_steps):
    """Left-ordered product of one formula step per window t_{k-1} -> t_k"""
    if n_steps < 1:
        raise ValueError(f"number of steps must be >= 1, got {n_steps}")
    edges = np.linspace(t_i, t_f, n_steps + 1)
    result = np.eye(gen.dim, dtype=np.complex128)
    for k, (a, b) in enumerate(zip(edges[:-1], edges[1:]), start=1):
        try:
            schedule = formulas.build_schedule(formula_id, gen, quadrature.Window.between(a, b))
            result = formulas.evaluate(schedule, gen) @ result
        except TrotterBenchError as e:
            raise StepFailedError(k, e) from e
    return result


def global_error_record(gen, formula_id, t_i, t_f, n_steps, tol=None, n_gates=0):
    """Global error of the composed evolution over [t_i, t_f]"""
    approx = composed_evolution(gen, formula_id, t_i, t_f, n_steps)
    diff = exact_propagator(gen, t_i, t_f, tol) - approx
    return ErrorRecord(
        formula_id=formulas.FormulaId(formula_id).value,
        mu=0.5 * (t_i + t_f),
        dt=(t_f - t_i) / n_steps,
        n_steps=n_steps,
        n_exponentials=formulas.n_exponentials(formula_id) * n_steps,
        n_gates=n_gates,
        eps_frobenius=linalg.frobenius_norm(diff),
        eps_spectral=linalg.spectral_norm(diff),
    )


# ===== Order fitting =====
def order_fit(points, floor=None):
    """Least-squares slope of log(eps) against log(dt) and its r^2"""
    floor = CONFIG["roundoff_floor"] if floor is None else floor
    points = list(points)
    if len(points) < CONFIG["min_fit_points"]:
        raise FitRangeError(f"need at least {CONFIG['min_fit_points']} points, got {len(points)}")
    low = [(dt, eps) for dt, eps in points if not eps > 10.0 * floor]
    if low:
        raise FitRangeError(
            f"{len(low)} point(s) at or below 10x the roundoff floor {floor:g}; use a larger dt range"
        )
    x = np.log(np.abs([dt for dt, _ in points]))
    y = np.log([eps for _, eps in points])
    slope, intercept = np.polyfit(x, y, 1)
    residual = y - (slope * x + intercept)
    total = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - float(np.sum(residual**2) / total) if total > 0 else 1.0
    return float(slope), r2
