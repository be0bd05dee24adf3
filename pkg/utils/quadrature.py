"""Scalar integration engine.

Gauss-Legendre rules, time-ordered (simplex) integrals over one window and the
Legendre expansion coefficients of a coefficient function on that window.

Coefficient functions (``ScalarFn``) are plain callables ``f(t)``. They are
called with numpy arrays whenever possible; callables that only accept floats
are wrapped with ``numpy.vectorize`` on the fly.
"""

import logging
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial import legendre

from utils.errors import QuadratureError

logger = logging.getLogger(__name__)

# ===== Configuration =====
CONFIG = {
    "integrate_start_nodes": 16,
    "integrate_max_doublings": 6,
    "integrate_rtol": 1e-13,
    "simplex_nodes": 16,
    "simplex_verify_nodes": 24,
    "simplex_rtol": 1e-10,
    "verify_simplex": True,
    "legendre_nodes": 32,
    "beta12_prefactor": 1.0 / 6.0,  # beta_12 ~ -prefactor * c_x[1] * c_y[2]
    "parity_fd_fraction": 0.01,  # finite-difference step as a fraction of dt
}

MAX_GAUSS_NODES = 64
MAX_SIMPLEX_DEPTH = 4


@dataclass(frozen=True)
class Window:
    """The interval [mu - dt/2, mu + dt/2]; a negative dt means backward traversal"""

    mu: float
    dt: float

    def __post_init__(self):
        if not (np.isfinite(self.mu) and np.isfinite(self.dt)):
            raise ValueError(f"window must be finite, got mu={self.mu}, dt={self.dt}")
        if self.dt == 0:
            raise ValueError("window width dt must be nonzero")

    @property
    def start(self):
        return self.mu - self.dt / 2.0

    @property
    def end(self):
        return self.mu + self.dt / 2.0

    @property
    def forward(self):
        return self.dt > 0

    def reversed(self):
        return Window(self.mu, -self.dt)

    @classmethod
    def between(cls, t0, t1):
        """Window running from t0 to t1"""
        return cls(mu=0.5 * (t0 + t1), dt=t1 - t0)


@dataclass(frozen=True)
class LegendreCoeffs:
    window: Window
    values: tuple  # u^(1) .. u^(n_max)

    def __getitem__(self, n):
        """1-based access, u^(n)"""
        return self.values[n - 1]

    def __len__(self):
        return len(self.values)


def evaluate_fn(f, t):
    """Evaluate a ScalarFn on an array of times, broadcasting constants"""
    t = np.asarray(t, dtype=float)
    try:
        values = np.asarray(f(t), dtype=float)
    except (TypeError, ValueError):
        values = np.vectorize(f, otypes=[float])(t)
    if values.shape != t.shape:
        values = np.broadcast_to(values, t.shape)
    return values


# ===== Gauss-Legendre =====
@lru_cache(maxsize=None)
def _leggauss(n):
    nodes, weights = legendre.leggauss(n)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def gauss_legendre(n):
    """Nodes and weights of the n-point Gauss-Legendre rule on [-1, 1]"""
    if not isinstance(n, (int, np.integer)) or n < 1 or n > MAX_GAUSS_NODES:
        raise ValueError(f"Gauss-Legendre order must be in 1..{MAX_GAUSS_NODES}, got {n}")
    return _leggauss(int(n))


def _gauss_panel(f, a, b, n):
    nodes, weights = gauss_legendre(n)
    half = 0.5 * (b - a)
    values = evaluate_fn(f, a + half * (nodes + 1.0))
    return half * float(np.dot(weights, values)), abs(half) * float(np.dot(weights, np.abs(values)))


def integrate(f, a, b):
    """Adaptive Gauss-Legendre integral of f over [a, b] (signed when a > b)"""
    if a == b:
        return 0.0
    if a > b:
        return -integrate(f, b, a)

    n = CONFIG["integrate_start_nodes"]
    estimate, scale = _gauss_panel(f, a, b, n)
    for _ in range(CONFIG["integrate_max_doublings"]):
        n *= 2
        if n > MAX_GAUSS_NODES:
            # past the tabulated rules, split into panels of MAX_GAUSS_NODES nodes
            panels = n // MAX_GAUSS_NODES
            edges = np.linspace(a, b, panels + 1)
            parts = [_gauss_panel(f, lo, hi, MAX_GAUSS_NODES) for lo, hi in zip(edges[:-1], edges[1:])]
            refined = sum(p[0] for p in parts)
            scale = sum(p[1] for p in parts)
        else:
            refined, scale = _gauss_panel(f, a, b, n)
        if abs(refined - estimate) <= CONFIG["integrate_rtol"] * max(abs(refined), scale):
            return refined
        estimate = refined
    raise QuadratureError(
        f"integral over [{a}, {b}] did not converge after {CONFIG['integrate_max_doublings']} doublings",
        best_estimate=estimate,
    )


# ===== Time-ordered integrals =====
def simplex_grid(w, depth, n):
    """Nested Gauss-Legendre points and weights for a depth-S time-ordered integral.

    Level 0 is the outermost (latest) time t_S; level k has n**(k+1) points.
    Weights are signed so backward windows integrate with the right orientation.
    """
    nodes, weights = gauss_legendre(n)
    a = w.start
    upper = np.asarray(w.end, dtype=float)
    levels = []
    for _ in range(depth):
        half = 0.5 * (upper - a)[..., None]
        points = a + half * (nodes + 1.0)
        levels.append((points, half * weights))
        upper = points
    return levels


def _contract(levels, values):
    acc = None
    for k in reversed(range(len(levels))):
        _, wts = levels[k]
        integrand = values[k] if acc is None else values[k] * acc
        acc = np.sum(wts * integrand, axis=-1)
    return float(acc)


def _word_integral(levels, samples, word):
    """samples[slot][k] holds the slot function on level k; word[0] is the earliest time"""
    depth = len(word)
    values = [samples[word[depth - 1 - k]][k] for k in range(depth)]
    signed = _contract(levels, values)
    magnitude = abs(_contract(levels, [np.abs(v) for v in values]))
    return signed, magnitude


def _sample(fns, levels):
    return {slot: [evaluate_fn(f, pts) for pts, _ in levels] for slot, f in fns.items()}


def nested_words(fns, words, w, nodes=None, verify_nodes=None):
    """Time-ordered integrals omega_word for every word over the window.

    ``fns`` maps a slot key to its ScalarFn; each word is a sequence of slot keys
    with word[0] attached to the earliest time t_1 and word[-1] to the latest.
    Every function is evaluated once per grid and shared by all words.
    ``nodes``/``verify_nodes`` override the configured rule sizes for short windows.
    """
    nodes = CONFIG["simplex_nodes"] if nodes is None else nodes
    verify_nodes = CONFIG["simplex_verify_nodes"] if verify_nodes is None else verify_nodes
    words = [tuple(word) for word in words]
    for word in words:
        if not 1 <= len(word) <= MAX_SIMPLEX_DEPTH:
            raise ValueError(f"simplex depth must be in 1..{MAX_SIMPLEX_DEPTH}, got {len(word)}")

    results = {}
    for depth in sorted({len(word) for word in words}):
        group = [word for word in words if len(word) == depth]
        levels = simplex_grid(w, depth, nodes)
        samples = _sample(fns, levels)
        for word in group:
            results[word] = _word_integral(levels, samples, word)[0]

        if not CONFIG["verify_simplex"]:
            continue
        check_levels = simplex_grid(w, depth, verify_nodes)
        check_samples = _sample(fns, check_levels)
        for word in group:
            check, magnitude = _word_integral(check_levels, check_samples, word)
            deviation = abs(results[word] - check)
            if deviation > CONFIG["simplex_rtol"] * max(abs(check), magnitude):
                raise QuadratureError(
                    f"time-ordered integral {word} on {w} failed verification "
                    f"(deviation {deviation:.3e})",
                    best_estimate=check,
                )
    logger.debug(f"nested integrals on {w}: {len(words)} words")
    return results


def nested_simplex(fs, w):
    """The time-ordered integral of prod fs[k](t_{k+1}) with t_1 <= ... <= t_S.

    fs[-1] is the outermost (latest-time) integrand.
    """
    fs = list(fs)
    fns = {k: f for k, f in enumerate(fs)}
    word = tuple(range(len(fs)))
    return nested_words(fns, [word], w)[word]


# ===== Orthogonal-polynomial expansion =====
def legendre_coeffs(f, w, n_max):
    """Legendre expansion coefficients u^(1)..u^(n_max) of f on the window"""
    if not 1 <= n_max <= 6:
        raise ValueError(f"n_max must be in 1..6, got {n_max}")
    nodes, weights = gauss_legendre(CONFIG["legendre_nodes"])
    values = evaluate_fn(f, w.mu + nodes * w.dt / 2.0)
    coeffs = []
    for n in range(1, n_max + 1):
        basis = legendre.legval(nodes, [0.0] * (n - 1) + [1.0])
        c_prev = 2.0 / (2 * (n - 1) + 1)
        coeffs.append(w.dt / c_prev * float(np.dot(weights, values * basis)))
    return LegendreCoeffs(window=w, values=tuple(coeffs))


def reconstruct_midpoint(coeffs):
    """Partial Legendre sum evaluated at the window midpoint"""
    p_at_zero = [legendre.legval(0.0, [0.0] * k + [1.0]) for k in range(len(coeffs))]
    return float(np.dot(coeffs.values, p_at_zero)) / coeffs.window.dt


def fast_beta12(cx, cy, prefactor=None):
    """Leading-order beta_12 from the Legendre coefficients of x (cx) and y (cy)"""
    prefactor = CONFIG["beta12_prefactor"] if prefactor is None else prefactor
    return prefactor * (cy[1] * cx[2] - cx[1] * cy[2])


def parity_residual(f, w):
    """integrate(f) minus its two leading odd-order terms; O(dt^5) for smooth f"""
    h = CONFIG["parity_fd_fraction"] * abs(w.dt)
    mid = float(evaluate_fn(f, w.mu))
    second = (float(evaluate_fn(f, w.mu + h)) - 2.0 * mid + float(evaluate_fn(f, w.mu - h))) / h**2
    return integrate(f, w.start, w.end) - (mid * w.dt + second * w.dt**3 / 24.0)
