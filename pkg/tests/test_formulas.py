import dataclasses
import json

import numpy as np
import pytest

from utils import formulas, linalg, magnus, reference
from utils.errors import DegenerateBetaError, IllConditionedSystemError
from utils.formulas import FormulaId, Step
from utils.magnus import Slot
from utils.quadrature import Window

ALL_FORMULAS = list(FormulaId)


def local_error(gen, formula_id, dt, mu=1.0):
    w = Window(mu, dt)
    exact = reference.exact_propagator(gen, w.start, w.end)
    return linalg.frobenius_norm(exact - formulas.evaluate(formulas.build_schedule(formula_id, gen, w), gen))


def slope(gen, formula_id, dts, mu=1.0):
    points = [(dt, local_error(gen, formula_id, dt, mu)) for dt in dts]
    return reference.order_fit(points)


# ===== Schedule structure =====
@pytest.mark.parametrize("formula_id", ALL_FORMULAS)
def test_step_count_and_alternation(lz_swapped, formula_id):
    schedule = formulas.build_schedule(formula_id, lz_swapped, Window(1.0, 0.2))
    assert len(schedule) == formulas.n_exponentials(formula_id)
    slots = [step.slot for step in schedule.steps]
    assert all(a is not b for a, b in zip(slots, slots[1:]))
    assert slots[0] is Slot.X and slots[-1] is Slot.X


@pytest.mark.parametrize("formula_id", ALL_FORMULAS)
def test_exponent_sums_match_first_order_betas(lz_swapped, formula_id):
    w = Window(1.0, 0.2)
    schedule = formulas.build_schedule(formula_id, lz_swapped, w)
    b = magnus.beta_set(lz_swapped, w, order=2)
    assert schedule.slot_sum(Slot.X) == pytest.approx(b.b1, rel=1e-12)
    assert schedule.slot_sum(Slot.Y) == pytest.approx(b.b2, rel=1e-12)


def test_n_exponentials_table():
    assert [formulas.n_exponentials(f) for f in ALL_FORMULAS] == [3, 3, 7, 9, 11, 15]
    assert formulas.n_exponentials("mft") == 7


# ===== Splitting coefficients =====
@pytest.mark.parametrize("coeffs", [formulas.FOREST_RUTH_SUZUKI, formulas.OMELYAN_FR, formulas.YOSHIDA6])
def test_splittings_are_consistent(coeffs):
    assert formulas.splitting_is_consistent(coeffs)
    assert len(coeffs.a) == len(coeffs.b) + 1


def test_omelyan_closure():
    a1, a2, a3 = formulas.OMELYAN_FR.a[:3]
    b1, b2 = formulas.OMELYAN_FR.b[:2]
    assert abs(2 * a1 + 2 * a2 + a3 - 1.0) < 1e-14
    assert abs(2 * b1 + 2 * b2 - 1.0) < 1e-14


def test_yoshida_closure():
    assert formulas.YOSHIDA_A4 == pytest.approx(formulas.YOSHIDA_A4_PRINTED, abs=1e-13)
    assert formulas.YOSHIDA_B4 == pytest.approx(formulas.YOSHIDA_B4_PRINTED, abs=1e-13)
    assert abs(2 * sum(formulas.YOSHIDA_A) + 2 * formulas.YOSHIDA_A4 - 1.0) < 1e-14


@pytest.mark.parametrize("coeffs", [formulas.FOREST_RUTH_SUZUKI, formulas.OMELYAN_FR, formulas.YOSHIDA6])
def test_classic_splittings_local_order(constant_generator, coeffs):
    def deviation(dt):
        schedule = formulas.classic_schedule(coeffs, dt, dt, Window(0.0, dt), FormulaId.MFT)
        exact = linalg.expm(dt * (constant_generator.z1 + constant_generator.z2))
        return linalg.frobenius_norm(formulas.evaluate(schedule, constant_generator) - exact)

    expected = 7.0 if coeffs is formulas.YOSHIDA6 else 5.0
    assert np.log2(deviation(0.2) / deviation(0.1)) == pytest.approx(expected, abs=0.3)


# ===== Individual formulas =====
def test_midpoint_constants(constant_generator):
    schedule = formulas.midpoint(constant_generator, Window(0.5, 0.2))
    assert schedule.coeffs() == pytest.approx([0.1, 0.2, 0.1], rel=1e-15)


def test_midpoint_keeps_zero_steps(lz_swapped):
    schedule = formulas.midpoint(lz_swapped, Window(0.0, 0.2))
    assert len(schedule) == 3
    assert schedule.steps[0].coeff == 0.0 and schedule.steps[2].coeff == 0.0


def test_hdr_equals_midpoint_for_constants(constant_generator):
    w = Window(-0.3, 0.2)
    assert formulas.hdr(constant_generator, w).coeffs() == pytest.approx(
        formulas.midpoint(constant_generator, w).coeffs(), rel=1e-14
    )


def test_hdr_half_window_integrals(lz_swapped):
    dt = 0.2
    later, full, earlier = formulas.hdr(lz_swapped, Window(0.0, dt)).coeffs()
    assert abs(later) == pytest.approx(dt**2 / 8.0, rel=1e-13)
    assert abs(earlier) == pytest.approx(dt**2 / 8.0, rel=1e-13)
    assert full == pytest.approx(dt, rel=1e-14)


def test_hdr_differs_from_midpoint_at_third_order(smooth_generator):
    def gap(dt):
        w = Window(0.5, dt)
        return linalg.frobenius_norm(
            formulas.evaluate(formulas.hdr(smooth_generator, w), smooth_generator)
            - formulas.evaluate(formulas.midpoint(smooth_generator, w), smooth_generator)
        )

    assert np.log2(gap(0.2) / gap(0.1)) == pytest.approx(3.0, abs=0.2)


def test_mft_landau_zener_decoration(lz):
    w = Window(1.0, 0.1)
    schedule = formulas.mft(lz, w)
    b = magnus.beta_set(lz, w, order=4)
    u = schedule.steps[0].coeff - formulas.FRS_S * b.b1 / 2.0
    assert u == pytest.approx(-8.3333333333e-4, rel=1e-9)
    assert schedule.steps[-1].coeff == pytest.approx(formulas.FRS_S * b.b1 / 2.0 - u, rel=1e-13)


@pytest.mark.parametrize(
    "builder, coeffs",
    [(formulas.mft, formulas.FOREST_RUTH_SUZUKI), (formulas.nine_exp, formulas.OMELYAN_FR)],
)
def test_fourth_order_formulas_reduce_to_classic(constant_generator, builder, coeffs):
    w = Window(0.7, 0.2)
    schedule = builder(constant_generator, w)
    classic = formulas.classic_schedule(coeffs, 0.2, 0.2, w, schedule.formula_id)
    np.testing.assert_allclose(schedule.coeffs(), classic.coeffs(), rtol=0, atol=1e-13)


def test_mft_degenerate_beta2(lz):
    w = Window(0.0, 0.1)
    with pytest.raises(DegenerateBetaError):
        formulas.mft(lz, w)
    fallback = formulas.mft(lz, w, degenerate="zero")
    b = magnus.beta_set(lz, w, order=2)
    classic = formulas.classic_schedule(formulas.FOREST_RUTH_SUZUKI, b.b1, b.b2, w, FormulaId.MFT)
    np.testing.assert_allclose(fallback.coeffs(), classic.coeffs(), atol=1e-15)


def test_suzuki_subwindows_tile_the_window():
    w = Window(0.4, 0.3)
    subs = formulas.suzuki_subwindows(w)
    assert len(subs) == 5
    assert subs[0].end == pytest.approx(w.end)
    assert subs[-1].start == pytest.approx(w.start)
    for later, earlier in zip(subs, subs[1:]):
        assert later.start == pytest.approx(earlier.end, abs=1e-15)
    assert sum(s.dt for s in subs) == pytest.approx(w.dt, rel=1e-14)
    assert subs[2].dt < 0


def test_suzuki4_merges_to_eleven_steps(lz):
    raw = []
    for sub in formulas.suzuki_subwindows(Window(1.0, 0.2)):
        raw.extend(formulas.midpoint(lz, sub).steps)
    assert len(raw) == 15
    schedule = formulas.suzuki4(lz, Window(1.0, 0.2))
    assert len(schedule) == 11
    assert schedule.formula_id is FormulaId.SUZUKI4


def test_mst_reduces_to_yoshida(constant_generator):
    dt = 0.2
    w = Window(0.1, dt)
    schedule, decoration = formulas.mst(constant_generator, w)
    for value in decoration.as_dict().values():
        assert abs(value) <= 1e-12 * dt**2
    classic = formulas.classic_schedule(formulas.YOSHIDA6, dt, dt, w, FormulaId.MST)
    np.testing.assert_allclose(schedule.coeffs(), classic.coeffs(), rtol=0, atol=1e-13)


def test_mst_decoration_placement(lz_swapped):
    schedule, d = formulas.mst(lz_swapped, Window(1.0, 0.2))
    c = schedule.coeffs()
    assert len(c) == 15
    assert c[0] - c[14] == pytest.approx(2 * d.u4, rel=1e-9, abs=1e-15)
    assert c[1] - c[13] == pytest.approx(2 * d.u3, rel=1e-9, abs=1e-15)
    assert c[2] - c[12] == pytest.approx(2 * d.u2, rel=1e-9, abs=1e-15)
    assert c[4] == c[10] and c[5] == c[9] and c[6] == c[8]


def test_mst_decoration_scaling(smooth_generator):
    big = formulas.mst(smooth_generator, Window(0.6, 0.1))[1]
    small = formulas.mst(smooth_generator, Window(0.6, 0.05))[1]
    for name in ("u1", "u2", "u3", "u4"):
        assert np.log2(abs(getattr(big, name) / getattr(small, name))) == pytest.approx(2.0, abs=0.1)
    for name in ("w", "z"):
        assert np.log2(abs(getattr(big, name) / getattr(small, name))) == pytest.approx(3.0, abs=0.15)


def test_mst_rejects_degenerate_beta(lz):
    with pytest.raises(DegenerateBetaError) as info:
        formulas.mst(lz, Window(0.0, 0.1))
    assert info.value.slot == "Y"


def test_mst_reports_ill_conditioning(lz_swapped):
    formulas.CONFIG["mst_max_condition"] = 1.0
    with pytest.raises(IllConditionedSystemError) as info:
        formulas.mst(lz_swapped, Window(1.0, 0.2))
    assert info.value.condition > 1.0
    assert info.value.ratio_name == "beta_1/beta_2"


# ===== evaluate =====
def test_evaluate_empty_schedule(lz):
    empty = formulas.ExponentSchedule((), FormulaId.MIDPOINT, Window(0.0, 0.1))
    np.testing.assert_array_equal(formulas.evaluate(empty, lz), np.eye(2))


def test_evaluate_order_of_factors(lz):
    schedule = formulas.ExponentSchedule(
        (Step(Slot.X, 0.3), Step(Slot.Y, -0.2)), FormulaId.MIDPOINT, Window(0.0, 0.1)
    )
    expected = linalg.expm(0.3 * lz.z1) @ linalg.expm(-0.2 * lz.z2)
    np.testing.assert_allclose(formulas.evaluate(schedule, lz), expected, atol=1e-14)


def test_midpoint_second_order_on_constants(constant_generator):
    def deviation(dt):
        schedule = formulas.midpoint(constant_generator, Window(0.0, dt))
        exact = linalg.expm(dt * (constant_generator.z1 + constant_generator.z2))
        return linalg.frobenius_norm(formulas.evaluate(schedule, constant_generator) - exact)

    assert deviation(0.1) / deviation(0.05) == pytest.approx(8.0, rel=0.05)


@pytest.mark.parametrize("formula_id", ALL_FORMULAS)
def test_evaluate_is_unitary(lz_swapped, formula_id):
    schedule = formulas.build_schedule(formula_id, lz_swapped, Window(1.0, 0.3))
    assert reference.unitarity_defect(formulas.evaluate(schedule, lz_swapped)) <= 1e-12


@pytest.mark.parametrize("formula_id", formulas.SYMMETRIC_FORMULAS)
def test_time_reversal(lz_swapped, formula_id):
    w = Window(1.0, 0.2)
    forward = formulas.evaluate(formulas.build_schedule(formula_id, lz_swapped, w), lz_swapped)
    backward = formulas.evaluate(formulas.build_schedule(formula_id, lz_swapped, w.reversed()), lz_swapped)
    assert linalg.frobenius_norm(backward @ forward - np.eye(2)) <= 1e-11


# ===== merge_adjacent =====
def test_merge_adjacent():
    steps = [Step(Slot.X, 0.1), Step(Slot.X, 0.2), Step(Slot.Y, 0.3)]
    merged = formulas.merge_adjacent(steps)
    assert [s.slot for s in merged] == [Slot.X, Slot.Y]
    assert merged[0].coeff == pytest.approx(0.3)
    assert formulas.merge_adjacent(merged) == merged


def test_merge_adjacent_keeps_zero_coefficients():
    steps = [Step(Slot.X, 0.0), Step(Slot.Y, 0.5), Step(Slot.X, 0.0)]
    assert len(formulas.merge_adjacent(steps)) == 3


# ===== Serialization =====
def test_schedule_json_document(lz):
    schedule = formulas.mft(lz, Window(1.0, 0.1))
    text = formulas.schedule_to_json(schedule)
    doc = json.loads(text)
    assert doc["formula"] == "mft" and doc["mu"] == 1.0 and doc["dt"] == 0.1
    assert [s["slot"] for s in doc["steps"]] == ["X", "Y", "X", "Y", "X", "Y", "X"]
    restored = formulas.schedule_from_json(text)
    assert restored == schedule


def test_schedule_json_keeps_full_precision(lz):
    schedule = formulas.mft(lz, Window(1.0, 0.1))
    text = formulas.schedule_to_json(schedule)
    assert '"dt": 0.10000000000000001' in text
    for step in schedule.steps:
        assert "%.17g" % step.coeff in text
    assert formulas.schedule_from_json(text) == schedule


# ===== Local order =====
@pytest.mark.parametrize("gen_name", ["lz", "lz_swapped"])
@pytest.mark.parametrize(
    "formula_id, order",
    [("midpoint", 3.0), ("hdr", 3.0), ("mft", 5.0), ("nine_exp", 5.0), ("suzuki4", 5.0)],
)
def test_local_order(request, gen_name, formula_id, order):
    gen = request.getfixturevalue(gen_name)
    fitted, r2 = slope(gen, formula_id, (0.05, 0.1, 0.2, 0.3))
    assert fitted == pytest.approx(order, abs=0.2)
    assert r2 >= 0.999


@pytest.mark.slow
@pytest.mark.parametrize("gen_name", ["lz", "lz_swapped"])
def test_mst_local_order(request, gen_name):
    gen = request.getfixturevalue(gen_name)
    fitted, _ = slope(gen, "mst", (0.1, 0.15, 0.2, 0.3, 0.4))
    assert fitted == pytest.approx(7.0, abs=0.3)


def test_flipped_beta12_sign_degrades_mft(lz, monkeypatch):
    reference.CONFIG["cross_check"] = "dop853"
    dts = (0.05, 0.1, 0.2, 0.3)
    correct, _ = slope(lz, "mft", dts)

    original = magnus.beta_set

    def flipped(gen, w, order=6, nodes=None):
        b = original(gen, w, order, nodes)
        return dataclasses.replace(b, b12=-b.b12) if b.b12 is not None else b

    monkeypatch.setattr(magnus, "beta_set", flipped)
    degraded, _ = slope(lz, "mft", dts)
    assert correct == pytest.approx(5.0, abs=0.2)
    assert degraded == pytest.approx(3.0, abs=0.3)
