import math

import numpy as np
import pytest

from utils import linalg, magnus, reference
from utils.errors import DegenerateBetaError, DimensionMismatchError, NotHermitianError
from utils.magnus import Slot, TwoTermGenerator
from utils.quadrature import Window


def log2_ratio(big, small):
    return math.log2(abs(big) / abs(small))


# ===== TwoTermGenerator =====
def test_generator_validates_dimensions():
    with pytest.raises(DimensionMismatchError):
        TwoTermGenerator(z1=np.eye(2), z2=np.eye(3), xfn=np.sin, yfn=np.cos)


def test_generator_validates_anti_hermitian_flag():
    with pytest.raises(NotHermitianError):
        TwoTermGenerator(z1=np.eye(2), z2=np.eye(2), xfn=np.sin, yfn=np.cos, anti_hermitian=True)


def test_generator_evaluates_at_time(lz):
    np.testing.assert_allclose(1j * lz.at(0.0), [[0, 1], [1, 0]], atol=1e-15)
    np.testing.assert_allclose(1j * lz.at(2.0), [[2, 1], [1, -2]], atol=1e-15)
    assert lz.dim == 2
    assert lz.fn(Slot.Y)(3.0) == 3.0


@pytest.mark.parametrize("slot", [Slot.X, Slot.Y])
def test_generator_exponential_matches_expm(lz, slot):
    coeff = 0.37
    expected = linalg.expm(coeff * lz.operator(slot))
    assert np.linalg.norm(lz.exponential(slot, coeff) - expected) < 1e-13


def test_generator_exponential_without_symmetry(rng):
    z1 = rng.standard_normal((3, 3))
    z2 = rng.standard_normal((3, 3))
    gen = TwoTermGenerator(z1=z1, z2=z2, xfn=np.sin, yfn=np.cos)
    np.testing.assert_allclose(gen.exponential("Y", -0.2), linalg.expm(-0.2 * z2), atol=1e-13)


# ===== beta_set =====
def test_beta_set_constants(constant_generator):
    dt = 0.2
    b = magnus.beta_set(constant_generator, Window(0.3, dt), order=6)
    assert b.b1 == pytest.approx(dt, rel=1e-14)
    assert b.b2 == pytest.approx(dt, rel=1e-14)
    for key in ("b12", "b112", "b212", "b1112", "b1212", "b2112", "b2212"):
        assert abs(getattr(b, key)) < 1e-15


@pytest.mark.parametrize("dt", [0.05, 0.1, 0.2])
def test_beta12_landau_zener_closed_form(lz, dt):
    b = magnus.beta_set(lz, Window(1.0, dt), order=4)
    assert b.b1 == pytest.approx(dt, rel=1e-13)
    assert b.b2 == pytest.approx(dt, rel=1e-13)
    assert b.b12 == pytest.approx(-(dt**3) / 12.0, rel=1e-12)


def test_beta1112_landau_zener_leading_term(lz):
    dt = 0.05
    b = magnus.beta_set(lz, Window(0.0, dt), order=6)
    assert b.b1112 == pytest.approx(dt**5 / 720.0, rel=0.05)


def test_beta_set_order_controls_population(lz):
    w = Window(1.0, 0.1)
    b2 = magnus.beta_set(lz, w, order=2)
    assert b2.b12 is None and b2.b112 is None
    b4 = magnus.beta_set(lz, w, order=4)
    assert b4.b12 is not None and b4.b112 is None and b4.b2212 is None
    with pytest.raises(ValueError):
        magnus.beta_set(lz, w, order=3)


def test_beta_set_sign_reversal(smooth_generator):
    w = Window(0.4, 0.2)
    forward = magnus.beta_set(smooth_generator, w, order=6)
    backward = magnus.beta_set(smooth_generator, w.reversed(), order=6)
    for key in ("b1", "b2", "b12", "b112", "b212", "b1112", "b2212"):
        assert getattr(backward, key) == pytest.approx(-getattr(forward, key), rel=1e-9)
    assert backward.b1212 + backward.b2112 == pytest.approx(-(forward.b1212 + forward.b2112), rel=1e-9)


def test_beta12_slope():
    gen = TwoTermGenerator(z1=np.eye(2), z2=np.eye(2), xfn=np.sin, yfn=lambda t: 1.0)
    big = magnus.beta_set(gen, Window(0.7, 0.1), order=4).b12
    small = magnus.beta_set(gen, Window(0.7, 0.05), order=4).b12
    assert log2_ratio(big, small) == pytest.approx(3.0, abs=0.05)


@pytest.mark.parametrize("key, order", [("b12", 3), ("b112", 5), ("b1112", 5)])
def test_beta_slope_laws(smooth_generator, key, order):
    big = getattr(magnus.beta_set(smooth_generator, Window(0.7, 0.1)), key)
    small = getattr(magnus.beta_set(smooth_generator, Window(0.7, 0.05)), key)
    assert log2_ratio(big, small) == pytest.approx(order, abs=0.1)


# ===== cache =====
def test_beta_cache_reuses_and_truncates(lz):
    w = Window(1.0, 0.1)
    full = magnus.beta_set(lz, w, order=6)
    assert magnus.beta_set(lz, w, order=6) is full
    truncated = magnus.beta_set(lz, w, order=4)
    assert truncated.b12 == full.b12 and truncated.b112 is None
    magnus.clear_beta_cache()
    assert magnus.beta_set(lz, w, order=6) is not full


def test_beta_cache_can_be_disabled(lz):
    magnus.CONFIG["beta_cache_enabled"] = False
    w = Window(1.0, 0.1)
    assert magnus.beta_set(lz, w) is not magnus.beta_set(lz, w)


def test_beta_cache_is_bounded(lz):
    magnus.CONFIG["beta_cache_size"] = 3
    first = magnus.beta_set(lz, Window(1.0, 0.1), order=2)
    for k in range(4):
        magnus.beta_set(lz, Window(2.0 + k, 0.1), order=2)
    assert magnus.beta_set(lz, Window(1.0, 0.1), order=2) is not first


# ===== Omega terms =====
def test_omega_matrices_constants(constant_generator):
    omegas = magnus.omega_matrices(constant_generator, Window(0.0, 0.3))
    for omega in omegas[1:]:
        assert linalg.frobenius_norm(omega) < 1e-14
    expected = 0.3 * (constant_generator.z1 + constant_generator.z2)
    np.testing.assert_allclose(omegas[0], expected, atol=1e-15)


def test_omega2_is_anti_hermitian(lz):
    omega2 = magnus.omega_matrices(lz, Window(1.0, 0.2))[1]
    assert linalg.frobenius_norm(omega2) > 0
    assert linalg.is_anti_hermitian(omega2)


def test_magnus_exponential_sixth_order(lz):
    def deviation(dt):
        w = Window(1.0, dt)
        exact = reference.exact_propagator(lz, w.start, w.end)
        return linalg.frobenius_norm(magnus.magnus_exponential(lz, w, order=6) - exact)

    assert log2_ratio(deviation(0.25), deviation(0.125)) == pytest.approx(7.0, abs=0.3)


def test_magnus_exponential_fourth_order(lz_swapped):
    def deviation(dt):
        w = Window(1.0, dt)
        exact = reference.exact_propagator(lz_swapped, w.start, w.end)
        return linalg.frobenius_norm(magnus.magnus_exponential(lz_swapped, w, order=4) - exact)

    assert log2_ratio(deviation(0.2), deviation(0.1)) == pytest.approx(5.0, abs=0.2)


def test_magnus_exponential_rejects_order(lz):
    with pytest.raises(ValueError):
        magnus.magnus_exponential(lz, Window(1.0, 0.1), order=8)


# ===== Leading error =====
def test_upsilon5_vanishes_for_constants(constant_generator):
    assert linalg.frobenius_norm(magnus.upsilon5(constant_generator, Window(0.5, 0.2))) < 1e-14


def test_upsilon5_scaling_and_symmetry(lz):
    big = magnus.upsilon5(lz, Window(1.0, 0.2))
    small = magnus.upsilon5(lz, Window(1.0, 0.1))
    assert linalg.is_anti_hermitian(small)
    assert log2_ratio(linalg.frobenius_norm(big), linalg.frobenius_norm(small)) == pytest.approx(5.0, abs=0.2)


def test_u_correction_requires_regular_beta2(lz):
    b = magnus.beta_set(lz, Window(0.0, 0.1), order=4)
    with pytest.raises(DegenerateBetaError) as info:
        magnus.u_correction(b)
    assert info.value.slot == "Y"
    assert len(info.value.remedies) == 3
    assert "swap" in info.value.remedies[0]


def test_u_correction_landau_zener(lz):
    b = magnus.beta_set(lz, Window(1.0, 0.1), order=4)
    assert magnus.u_correction(b) == pytest.approx(-8.3333333333e-4, rel=1e-9)


def test_c5_leading_error_trivial_cases(rng):
    a = rng.standard_normal((3, 3))
    b = rng.standard_normal((3, 3))
    assert np.allclose(magnus.c5_leading_error([0.0] * 6, a, b), 0)
    assert np.allclose(magnus.c5_leading_error(magnus.FRS_GAMMAS, a, 2.0 * a + np.eye(3)), 0)
    with pytest.raises(ValueError):
        magnus.c5_leading_error([1.0] * 5, a, b)
    with pytest.raises(DimensionMismatchError):
        magnus.c5_leading_error(magnus.FRS_GAMMAS, a, np.eye(2))


def test_c5_leading_error_single_terms(rng):
    a = rng.standard_normal((3, 3))
    b = rng.standard_normal((3, 3))
    ab = linalg.commutator(a, b)
    first = linalg.commutator(a, linalg.commutator(a, linalg.commutator(a, ab)))
    fourth = linalg.commutator(b, linalg.commutator(b, linalg.commutator(b, ab)))
    np.testing.assert_allclose(magnus.c5_leading_error([1, 0, 0, 0, 0, 0], a, b), first, atol=1e-12)
    np.testing.assert_allclose(magnus.c5_leading_error([0, 0, 0, 1, 0, 0], a, b), fourth, atol=1e-12)


def test_frs_gamma_ratio():
    g1, g4 = magnus.FRS_GAMMAS[0], magnus.FRS_GAMMAS[3]
    assert 5.0 <= abs(g4 / g1) <= 20.0


def test_gamma5_estimate_uses_first_order_betas(lz):
    w = Window(1.0, 0.1)
    b = magnus.beta_set(lz, w, order=2)
    expected = magnus.c5_leading_error(magnus.FRS_GAMMAS, b.b1 * lz.z1, b.b2 * lz.z2)
    np.testing.assert_allclose(magnus.gamma5_estimate(magnus.FRS_GAMMAS, lz, w), expected, atol=1e-18)


# ===== Term swap =====
def test_swap_negates_beta12_and_keeps_omega2(smooth_generator):
    w = Window(0.3, 0.2)
    swapped = magnus.swap_terms(smooth_generator)
    original = magnus.beta_set(smooth_generator, w)
    flipped = magnus.beta_set(swapped, w)
    assert flipped.b12 == pytest.approx(-original.b12, rel=1e-12)
    assert flipped.b1 == pytest.approx(original.b2, rel=1e-14)
    omega2 = magnus.omega_matrices(smooth_generator, w)[1]
    omega2_swapped = magnus.omega_matrices(swapped, w)[1]
    assert linalg.frobenius_norm(omega2 - omega2_swapped) < 1e-12 * linalg.frobenius_norm(omega2)
