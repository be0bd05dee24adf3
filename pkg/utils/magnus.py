"""Continuous-BCH (Magnus) coefficients for two-term generators.

A generator is A(t) = x(t) Z1 + y(t) Z2. Everything a product formula needs
about the time dependence on one window is condensed into the scalar
``BetaSet``; the matrix-valued Magnus terms are commutator words in Z1, Z2
weighted by those scalars.

Word convention: omega_(i1 ... iS) integrates u_i1(t1) ... u_iS(tS) over
t1 <= ... <= tS, so the last index sits at the latest time.
"""

import logging
import threading
from collections import OrderedDict
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import cached_property
from typing import Callable, Optional

import numpy as np

from utils import linalg, quadrature
from utils.errors import DegenerateBetaError, DimensionMismatchError, NotHermitianError

logger = logging.getLogger(__name__)

# ===== Configuration =====
CONFIG = {
    "u_floor": 1e-12,  # |beta_2| below u_floor*|dt| makes u = beta_12/beta_2 meaningless
    "omega4_prefactor": 1.0 / 12.0,
    "beta_cache_size": 4096,
    "beta_cache_enabled": True,
}

# Leading fifth-order error constants of the Forest-Ruth-Suzuki product;
# only gamma_1 and gamma_4 are tabulated, the others are zero.
FRS_GAMMAS = (-0.0004138, 0.0, 0.0, 0.0046844, 0.0, 0.0)


class Slot(str, Enum):
    X = "X"
    Y = "Y"

    @property
    def index(self):
        return 1 if self is Slot.X else 2


@dataclass(frozen=True, eq=False)
class TwoTermGenerator:
    """A(t) = xfn(t) * z1 + yfn(t) * z2.

    Instances hash by identity so they can key the beta cache.
    """

    z1: np.ndarray
    z2: np.ndarray
    xfn: Callable
    yfn: Callable
    anti_hermitian: bool = False
    name: str = "generator"
    labels: tuple = field(default=("X", "Y"))

    def __post_init__(self):
        z1 = linalg.as_cmatrix(self.z1)
        z2 = linalg.as_cmatrix(self.z2)
        if z1.shape != z2.shape:
            raise DimensionMismatchError(f"z1 is {z1.shape} but z2 is {z2.shape}")
        if self.anti_hermitian:
            for label, z in (("z1", z1), ("z2", z2)):
                if not linalg.is_anti_hermitian(z):
                    raise NotHermitianError(f"{label} is flagged anti-Hermitian but is not")
        object.__setattr__(self, "z1", z1)
        object.__setattr__(self, "z2", z2)

    @property
    def dim(self):
        return self.z1.shape[0]

    def operator(self, slot):
        return self.z1 if Slot(slot) is Slot.X else self.z2

    def fn(self, slot):
        return self.xfn if Slot(slot) is Slot.X else self.yfn

    def at(self, t):
        """A(t) as a dense matrix"""
        x = float(quadrature.evaluate_fn(self.xfn, t))
        y = float(quadrature.evaluate_fn(self.yfn, t))
        return x * self.z1 + y * self.z2

    @cached_property
    def _spectral(self):
        # per slot: (eig, scale) with exp(c Z) = exp_scaled(eig, scale * c), or None for expm
        out = {}
        for slot in Slot:
            z = self.operator(slot)
            if self.anti_hermitian:
                out[slot] = (linalg.hermitian_eig(1j * z), -1j)
            elif linalg.is_hermitian(z):
                out[slot] = (linalg.hermitian_eig(z), 1.0)
            else:
                out[slot] = None
        return out

    def exponential(self, slot, coeff):
        """exp(coeff * Z_slot)"""
        slot = Slot(slot)
        spectral = self._spectral[slot]
        if spectral is None:
            return linalg.expm(coeff * self.operator(slot))
        eig, scale = spectral
        return linalg.exp_scaled(eig, scale * coeff)


@dataclass(frozen=True)
class BetaSet:
    window: quadrature.Window
    order: int
    b1: float
    b2: float
    b12: Optional[float] = None
    b112: Optional[float] = None
    b212: Optional[float] = None
    b1112: Optional[float] = None
    b1212: Optional[float] = None
    b2112: Optional[float] = None
    b2212: Optional[float] = None

    def b_i12(self, i):
        return self.b112 if i == 1 else self.b212

    def b_ij12(self, i, j):
        return {(1, 1): self.b1112, (1, 2): self.b1212, (2, 1): self.b2112, (2, 2): self.b2212}[(i, j)]

    def as_dict(self):
        return {
            "b1": self.b1,
            "b2": self.b2,
            "b12": self.b12,
            "b112": self.b112,
            "b212": self.b212,
            "b1112": self.b1112,
            "b1212": self.b1212,
            "b2112": self.b2112,
            "b2212": self.b2212,
        }


# ===== Word lists =====
def _words_i12(i):
    return [(2, 1, i), (1, 2, i), (i, 2, 1), (i, 1, 2)]


def _combination_i12(omega, i):
    return (omega[(2, 1, i)] - omega[(1, 2, i)] - omega[(i, 2, 1)] + omega[(i, 1, 2)]) / 6.0


def _words_ij12(i, j):
    return [
        (i, j, 2, 1),
        (i, j, 1, 2),
        (j, 1, 2, i),
        (j, 2, 1, i),
        (2, 1, j, i),
        (1, 2, j, i),
        (1, j, i, 2),
        (2, j, i, 1),
    ]


def _combination_ij12(omega, i, j):
    w = _words_ij12(i, j)
    total = (
        omega[w[0]] - omega[w[1]] + omega[w[2]] - omega[w[3]]
        + omega[w[4]] - omega[w[5]] + omega[w[6]] - omega[w[7]]
    )
    return CONFIG["omega4_prefactor"] * total


def _words_for(order):
    words = [(1,), (2,)]
    if order >= 4:
        words += [(1, 2), (2, 1)]
    if order >= 6:
        for i in (1, 2):
            words += _words_i12(i)
            for j in (1, 2):
                words += _words_ij12(i, j)
    return list(dict.fromkeys(words))


# ===== Beta cache =====
_cache = OrderedDict()
_cache_lock = threading.Lock()


def _cache_key(gen, w, order, nodes=None):
    return (gen, w.mu, w.dt, order, nodes, CONFIG["omega4_prefactor"])


def clear_beta_cache():
    with _cache_lock:
        _cache.clear()


def _cache_get(key):
    with _cache_lock:
        hit = _cache.get(key)
        if hit is not None:
            _cache.move_to_end(key)
        return hit


def _cache_put(key, value):
    with _cache_lock:
        _cache[key] = value
        while len(_cache) > CONFIG["beta_cache_size"]:
            _cache.popitem(last=False)


# ===== Operations =====
def beta_set(gen, w, order=6, nodes=None):
    """Scalar continuous-BCH coefficients of ``gen`` on window ``w``.

    order 2 fills beta_1, beta_2; order 4 adds beta_12; order 6 fills every class.
    Entries beyond the requested order stay None. ``nodes`` selects a smaller
    Gauss rule for the short sub-windows of the fine-step oracle.
    """
    if order not in (2, 4, 6):
        raise ValueError(f"order must be 2, 4 or 6, got {order}")

    use_cache = CONFIG["beta_cache_enabled"]
    if use_cache:
        for candidate in (order, 6) if order != 6 else (6,):
            hit = _cache_get(_cache_key(gen, w, candidate, nodes))
            if hit is not None:
                logger.debug(f"beta cache hit for {gen.name} on {w}")
                return hit if candidate == order else _truncate(hit, order)

    verify_nodes = None if nodes is None else nodes + 4
    omega = quadrature.nested_words({1: gen.xfn, 2: gen.yfn}, _words_for(order), w, nodes, verify_nodes)
    values = {"b1": omega[(1,)], "b2": omega[(2,)]}
    if order >= 4:
        values["b12"] = 0.5 * (omega[(2, 1)] - omega[(1, 2)])
    if order >= 6:
        values["b112"] = _combination_i12(omega, 1)
        values["b212"] = _combination_i12(omega, 2)
        for i in (1, 2):
            for j in (1, 2):
                values[f"b{i}{j}12"] = _combination_ij12(omega, i, j)

    betas = BetaSet(window=w, order=order, **values)
    if use_cache:
        _cache_put(_cache_key(gen, w, order, nodes), betas)
    return betas


def _truncate(betas, order):
    if order == 2:
        return replace(betas, order=2, b12=None, b112=None, b212=None,
                       b1112=None, b1212=None, b2112=None, b2212=None)
    return replace(betas, order=4, b112=None, b212=None,
                   b1112=None, b1212=None, b2112=None, b2212=None)


def _nested(gen):
    z = {1: gen.z1, 2: gen.z2}
    c12 = linalg.commutator(gen.z1, gen.z2)
    c_i12 = {i: linalg.commutator(z[i], c12) for i in (1, 2)}
    c_ij12 = {(i, j): linalg.commutator(z[i], c_i12[j]) for i in (1, 2) for j in (1, 2)}
    return c12, c_i12, c_ij12


def omega_matrices(gen, w, nodes=None):
    """Magnus terms Omega_1 .. Omega_4 on the window"""
    b = beta_set(gen, w, order=6, nodes=nodes)
    c12, c_i12, c_ij12 = _nested(gen)
    omega1 = b.b1 * gen.z1 + b.b2 * gen.z2
    omega2 = b.b12 * c12
    omega3 = sum(b.b_i12(i) * c_i12[i] for i in (1, 2))
    omega4 = sum(b.b_ij12(i, j) * c_ij12[(i, j)] for i in (1, 2) for j in (1, 2))
    return omega1, omega2, omega3, omega4


def magnus_exponential(gen, w, order=6):
    """exp of the Magnus series truncated to the given order (2: Omega_1, 4: +Omega_2, 6: Omega_1..4)"""
    if order == 2:
        b = beta_set(gen, w, order=2)
        return linalg.expm(b.b1 * gen.z1 + b.b2 * gen.z2)
    if order == 4:
        b = beta_set(gen, w, order=4)
        return linalg.expm(b.b1 * gen.z1 + b.b2 * gen.z2 + b.b12 * linalg.commutator(gen.z1, gen.z2))
    if order != 6:
        raise ValueError(f"order must be 2, 4 or 6, got {order}")
    return linalg.expm(sum(omega_matrices(gen, w)))


def u_correction(betas):
    """u = beta_12 / beta_2, guarded by the configured floor"""
    floor = CONFIG["u_floor"] * abs(betas.window.dt)
    if abs(betas.b2) < floor:
        raise DegenerateBetaError(
            f"beta_2 = {betas.b2:.3e} is below {floor:.3e} on {betas.window}",
            slot=Slot.Y.value,
            beta=betas.b2,
            remedies=(
                "swap the term assignment so the regular coefficient sits in slot Y",
                "set u = 0 when both coefficients are degenerate",
                "shrink dt",
            ),
        )
    return betas.b12 / betas.b2


def upsilon5(gen, w):
    """Time-dependent part of the leading error of the 7-exponential formula"""
    b = beta_set(gen, w, order=6)
    u = u_correction(b)
    _, c_i12, _ = _nested(gen)
    omega3, omega4 = omega_matrices(gen, w)[2:]
    return omega3 + omega4 - 0.5 * u**2 * b.b2 * c_i12[1]


def c5_leading_error(gammas, a, b):
    """Sum of the six fifth-order nested commutators weighted by gammas"""
    if len(gammas) != 6:
        raise ValueError(f"expected 6 gamma coefficients, got {len(gammas)}")
    a = linalg.as_cmatrix(a)
    b = linalg.as_cmatrix(b)
    if a.shape != b.shape:
        raise DimensionMismatchError(f"dimension mismatch: {a.shape} vs {b.shape}")

    def c(p, q):
        return linalg.commutator(p, q)

    ab = c(a, b)
    aab = c(a, ab)
    bab = c(b, ab)
    aaab = c(a, aab)
    terms = (
        c(a, aaab),
        c(a, c(a, bab)),
        c(b, aaab),
        c(b, c(b, bab)),
        c(b, c(b, aab)),
        c(a, c(b, bab)),
    )
    return sum(g * t for g, t in zip(gammas, terms))


def gamma5_estimate(gammas, gen, w):
    b = beta_set(gen, w, order=2)
    return c5_leading_error(gammas, b.b1 * gen.z1, b.b2 * gen.z2)


def swap_terms(gen):
    """The same generator with the two slots interchanged"""
    return TwoTermGenerator(
        z1=gen.z2,
        z2=gen.z1,
        xfn=gen.yfn,
        yfn=gen.xfn,
        anti_hermitian=gen.anti_hermitian,
        name=f"{gen.name}:swapped",
        labels=tuple(reversed(gen.labels)),
    )
