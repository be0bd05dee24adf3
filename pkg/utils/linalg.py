"""Dense complex matrix kernel.

Matrices are plain ``numpy.ndarray`` objects of dtype complex128; ``as_cmatrix``
is the single gate that enforces the square/finite invariants.
"""

import logging
from dataclasses import dataclass

import numpy as np

from utils.errors import DimensionMismatchError, NonFiniteMatrixError, NotHermitianError

logger = logging.getLogger(__name__)

# ===== Configuration =====
CONFIG = {
    "hermitian_tol": 1e-12,  # relative Frobenius tolerance on z - z^dagger
    "anti_hermitian_tol": 1e-12,
}

# Padé numerator coefficients b_0..b_m per degree (Higham 2005, algorithm 2.3)
PADE_B13 = (
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
)

# 1-norm thresholds below which the degree-m approximant is accurate to unit roundoff
PADE_THETA = {
    3: 1.495585217958292e-2,
    5: 2.539398330063230e-1,
    7: 9.504178996162932e-1,
    9: 2.097847961257068,
    13: 5.371920351148152,
}

PADE_COEFFS = {
    3: (120.0, 60.0, 12.0, 1.0),
    5: (30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0),
    7: (17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0),
    9: (
        17643225600.0,
        8821612800.0,
        2075673600.0,
        302702400.0,
        30270240.0,
        2162160.0,
        110880.0,
        3960.0,
        90.0,
        1.0,
    ),
    13: PADE_B13,
}

CMatrix = np.ndarray


@dataclass(frozen=True)
class HermitianEig:
    eigenvalues: np.ndarray  # ascending, real
    basis: np.ndarray  # columns are eigenvectors

    @property
    def dim(self):
        return self.basis.shape[0]


# ===== Construction helpers =====
def as_cmatrix(m):
    """Validate a square finite matrix and return it as complex128"""
    arr = np.asarray(m, dtype=np.complex128)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] < 1:
        raise DimensionMismatchError(f"expected a non-empty square matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteMatrixError("matrix has NaN or Inf entries")
    return arr


def dagger(m):
    return np.conj(np.swapaxes(m, -1, -2))


def _check_same_dim(a, b):
    if a.shape != b.shape:
        raise DimensionMismatchError(f"dimension mismatch: {a.shape} vs {b.shape}")


def is_hermitian(m, tol=None):
    tol = CONFIG["hermitian_tol"] if tol is None else tol
    m = np.asarray(m)
    return frobenius_norm(m - dagger(m)) <= tol * max(frobenius_norm(m), 1e-300)


def is_anti_hermitian(m, tol=None):
    tol = CONFIG["anti_hermitian_tol"] if tol is None else tol
    m = np.asarray(m)
    return frobenius_norm(m + dagger(m)) <= tol * max(frobenius_norm(m), 1e-300)


def random_unitary(dim, rng):
    """Haar-ish random unitary from the QR factorization of a complex Gaussian"""
    z = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2.0)
    q, r = np.linalg.qr(z)
    phases = np.diag(r) / np.abs(np.diag(r))
    return q * phases


# ===== Products =====
def commutator(a, b):
    """Return ab - ba"""
    a = as_cmatrix(a)
    b = as_cmatrix(b)
    _check_same_dim(a, b)
    return a @ b - b @ a


# ===== Matrix exponential =====
def _one_norm(a):
    return float(np.max(np.sum(np.abs(a), axis=0)))


def _pade_uv(a, m):
    ident = np.eye(a.shape[0], dtype=np.complex128)
    b = PADE_COEFFS[m]
    a2 = a @ a
    if m == 13:
        a4 = a2 @ a2
        a6 = a2 @ a4
        u = a @ (a6 @ (b[13] * a6 + b[11] * a4 + b[9] * a2) + b[7] * a6 + b[5] * a4 + b[3] * a2 + b[1] * ident)
        v = a6 @ (b[12] * a6 + b[10] * a4 + b[8] * a2) + b[6] * a6 + b[4] * a4 + b[2] * a2 + b[0] * ident
        return u, v
    powers = [ident, a2]
    for _ in range(2, m // 2 + 1):
        powers.append(powers[-1] @ a2)
    u = sum(b[j] * powers[j // 2] for j in range(m, 0, -2))
    v = sum(b[j] * powers[j // 2] for j in range(m - 1, -1, -2))
    return a @ u, v


def expm(m):
    """Matrix exponential by scaling and squaring with a Padé approximant"""
    a = as_cmatrix(m)
    norm = _one_norm(a)
    for degree in (3, 5, 7, 9):
        if norm <= PADE_THETA[degree]:
            u, v = _pade_uv(a, degree)
            return np.linalg.solve(v - u, v + u)

    scale = 0
    if norm > PADE_THETA[13]:
        scale = max(0, int(np.ceil(np.log2(norm / PADE_THETA[13]))))
        a = a / (2.0**scale)
    u, v = _pade_uv(a, 13)
    r = np.linalg.solve(v - u, v + u)
    for _ in range(scale):
        r = r @ r
    return r


# ===== Hermitian eigensystems =====
def hermitian_eig(z):
    """Full eigendecomposition of a Hermitian matrix, eigenvalues ascending"""
    z = as_cmatrix(z)
    if not is_hermitian(z):
        raise NotHermitianError(
            f"matrix is not Hermitian within {CONFIG['hermitian_tol']:g} "
            f"(|z - z^dagger|_F = {frobenius_norm(z - dagger(z)):.3e})"
        )
    eigenvalues, basis = np.linalg.eigh(z)
    return HermitianEig(eigenvalues=eigenvalues, basis=basis)


def exp_scaled(eig, c):
    """e^{c Z} for the Hermitian Z behind ``eig``"""
    phases = np.exp(complex(c) * eig.eigenvalues)
    return (eig.basis * phases) @ dagger(eig.basis)


# ===== Norms =====
def frobenius_norm(m):
    return float(np.sqrt(np.sum(np.abs(m) ** 2)))


def spectral_norm(m):
    """Largest singular value, from the top eigenvalue of m^dagger m"""
    m = np.asarray(m, dtype=np.complex128)
    gram = dagger(m) @ m
    top = float(np.linalg.eigvalsh(gram)[-1])
    return float(np.sqrt(max(top, 0.0)))
