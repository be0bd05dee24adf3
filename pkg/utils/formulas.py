"""Product formulas as exponent schedules.

A schedule lists (slot, coeff) steps in written order: the leftmost factor acts
last in time. ``evaluate`` multiplies exp(coeff * Z_slot) in that same order.
"""

import json
import logging
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from utils import magnus, quadrature
from utils.errors import DegenerateBetaError, IllConditionedSystemError
from utils.magnus import Slot

logger = logging.getLogger(__name__)

# ===== Configuration =====
CONFIG = {
    "mst_regular_floor": 1e-6,  # |beta_i| >= floor*|dt| for the 15-exponential solve
    "mst_max_condition": 1e12,
    "coeff_check_tol": 1e-13,
}


class FormulaId(str, Enum):
    MIDPOINT = "midpoint"
    HDR = "hdr"
    MFT = "mft"
    NINE_EXP = "nine_exp"
    SUZUKI4 = "suzuki4"
    MST = "mst"


N_EXPONENTIALS = {
    FormulaId.MIDPOINT: 3,
    FormulaId.HDR: 3,
    FormulaId.MFT: 7,
    FormulaId.NINE_EXP: 9,
    FormulaId.SUZUKI4: 11,
    FormulaId.MST: 15,
}

LOCAL_ORDER = {
    FormulaId.MIDPOINT: 3,
    FormulaId.HDR: 3,
    FormulaId.MFT: 5,
    FormulaId.NINE_EXP: 5,
    FormulaId.SUZUKI4: 5,
    FormulaId.MST: 7,
}

SYMMETRIC_FORMULAS = (FormulaId.MIDPOINT, FormulaId.MFT, FormulaId.NINE_EXP, FormulaId.SUZUKI4, FormulaId.MST)


def n_exponentials(formula_id):
    return N_EXPONENTIALS[FormulaId(formula_id)]


@dataclass(frozen=True)
class Step:
    slot: Slot
    coeff: float


@dataclass(frozen=True)
class ExponentSchedule:
    steps: tuple
    formula_id: FormulaId
    window: quadrature.Window

    def __len__(self):
        return len(self.steps)

    def slot_sum(self, slot):
        return sum(step.coeff for step in self.steps if step.slot is Slot(slot))

    def coeffs(self):
        return [step.coeff for step in self.steps]


@dataclass(frozen=True)
class MstDecoration:
    u1: float
    u2: float
    u3: float
    u4: float
    w: float
    z: float

    def as_dict(self):
        return {"u1": self.u1, "u2": self.u2, "u3": self.u3, "u4": self.u4, "w": self.w, "z": self.z}


@dataclass(frozen=True)
class SplittingCoeffs:
    """Time-independent splitting; ``a`` and ``b`` are the full written sequences"""

    name: str
    a: tuple
    b: tuple


# ===== Splitting coefficients =====
FRS_S = 1.0 / (2.0 - 2.0 ** (1.0 / 3.0))
SUZUKI_W = 1.0 / (4.0 - 4.0 ** (1.0 / 3.0))

FOREST_RUTH_SUZUKI = SplittingCoeffs(
    name="ForestRuthSuzuki",
    a=(FRS_S / 2.0, (1.0 - FRS_S) / 2.0, (1.0 - FRS_S) / 2.0, FRS_S / 2.0),
    b=(FRS_S, 1.0 - 2.0 * FRS_S, FRS_S),
)

OMELYAN_XI = 0.1786178958448091
OMELYAN_LAMBDA = -0.2123418310626054
OMELYAN_CHI = -0.06626458266981849

OMELYAN_FR = SplittingCoeffs(
    name="OmelyanFR",
    a=(OMELYAN_XI, OMELYAN_CHI, 1.0 - 2.0 * (OMELYAN_CHI + OMELYAN_XI), OMELYAN_CHI, OMELYAN_XI),
    b=((1.0 - 2.0 * OMELYAN_LAMBDA) / 2.0, OMELYAN_LAMBDA, OMELYAN_LAMBDA, (1.0 - 2.0 * OMELYAN_LAMBDA) / 2.0),
)

YOSHIDA_A = (0.39225680523878, 0.5100434119184585, -0.4710533854097566)
YOSHIDA_B = (0.78451361047756, 0.235573213359357, -1.17767998417887)
YOSHIDA_A4_PRINTED = 0.0687531682525181
YOSHIDA_B4_PRINTED = 1.31518632068391
YOSHIDA_A4 = 0.5 - sum(YOSHIDA_A)
YOSHIDA_B4 = 1.0 - 2.0 * sum(YOSHIDA_B)

assert abs(YOSHIDA_A4 - YOSHIDA_A4_PRINTED) < 1e-13
assert abs(YOSHIDA_B4 - YOSHIDA_B4_PRINTED) < 1e-13

YOSHIDA6 = SplittingCoeffs(
    name="Yoshida6",
    a=YOSHIDA_A + (YOSHIDA_A4, YOSHIDA_A4) + tuple(reversed(YOSHIDA_A)),
    b=YOSHIDA_B + (YOSHIDA_B4,) + tuple(reversed(YOSHIDA_B)),
)

# Second-order polynomial coefficients of the decorated Yoshida product,
# c_12 ... c_1212 in terms of u1..u4, w, z and beta_1, beta_2.
C12_U1B1 = 0.804600434314477
C12_U3B1 = -0.21548638952244
C12_U2B2 = -0.56902722095512
C12_U4B2 = 1.0

C112_B2U2U2 = -0.28451361047756
C112_U1B1U2 = 0.804600434314477
C112_U4B2U2 = -0.56902722095512
C112_ZB1B1 = -0.157118466580002
C112_U1U4B1 = 0.804600434314477
C112_U3U4B1 = -0.21548638952244
C112_U4U4B2 = 0.5
C112_WB1B2 = -0.161938460199746

C212_B1U1U1 = 0.402300217157238
C212_U3B1U1 = 0.804600434314477
C212_WB2B2 = -0.161938460199745
C212_U3U3B1 = -0.10774319476122
C212_U2U3B2 = -0.56902722095512
C212_ZB1B2 = -0.489977318150775

C1112_U1B1B1B1 = -0.0118215295615413
C1112_U3B1B1B1 = 0.00856168382290096
C1112_U2B2B1B1 = 0.0562690326323137

C2212_U2B2B2B2 = 0.0160325321433039
C2212_U1B1B2B2 = 0.0641595078732893
C2212_U3B1B2B2 = 0.065376134206464

C1212_U1B2B1B1 = 0.0115567664079044
C1212_U3B2B1B1 = 0.0538195677848599
C1212_U2B2B2B1 = 0.112538065264628


def splitting_is_consistent(coeffs):
    """Both coefficient sequences sum to one"""
    tol = CONFIG["coeff_check_tol"]
    return abs(sum(coeffs.a) - 1.0) <= tol and abs(sum(coeffs.b) - 1.0) <= tol


# ===== Schedule helpers =====
def merge_adjacent(steps):
    """Sum neighbouring steps on the same slot; zero coefficients are kept"""
    merged = []
    for step in steps:
        if merged and merged[-1].slot is step.slot:
            merged[-1] = Step(step.slot, merged[-1].coeff + step.coeff)
        else:
            merged.append(Step(Slot(step.slot), float(step.coeff)))
    return merged


def _interleave(coeffs, b1, b2):
    steps = []
    for k, a in enumerate(coeffs.a):
        steps.append(Step(Slot.X, a * b1))
        if k < len(coeffs.b):
            steps.append(Step(Slot.Y, coeffs.b[k] * b2))
    return steps


def classic_schedule(coeffs, b1, b2, window, formula_id):
    """Time-independent product of exp(a_k b1 X) and exp(b_k b2 Y)"""
    return ExponentSchedule(tuple(_interleave(coeffs, b1, b2)), FormulaId(formula_id), window)


# ===== Formulas =====
def midpoint(gen, w):
    x = float(quadrature.evaluate_fn(gen.xfn, w.mu))
    y = float(quadrature.evaluate_fn(gen.yfn, w.mu))
    steps = (Step(Slot.X, x * w.dt / 2.0), Step(Slot.Y, y * w.dt), Step(Slot.X, x * w.dt / 2.0))
    return ExponentSchedule(steps, FormulaId.MIDPOINT, w)


def hdr(gen, w):
    """Huyghebaert-de Raedt: exact half-window integrals of x around the full integral of y"""
    later = quadrature.integrate(gen.xfn, w.mu, w.end)
    earlier = quadrature.integrate(gen.xfn, w.start, w.mu)
    full_y = quadrature.integrate(gen.yfn, w.start, w.end)
    steps = (Step(Slot.X, later), Step(Slot.Y, full_y), Step(Slot.X, earlier))
    return ExponentSchedule(steps, FormulaId.HDR, w)


def _u_or_zero(betas, degenerate):
    try:
        return magnus.u_correction(betas)
    except DegenerateBetaError as e:
        if degenerate != "zero":
            raise
        logger.warning(f"{e}; falling back to u = 0")
        return 0.0


def _decorate_ends(steps, u):
    steps[0] = Step(Slot.X, steps[0].coeff + u)
    steps[-1] = Step(Slot.X, steps[-1].coeff - u)
    return steps


def mft(gen, w, degenerate="raise"):
    """Minimum 7-exponential fourth-order formula"""
    b = magnus.beta_set(gen, w, order=4)
    u = _u_or_zero(b, degenerate)
    logger.debug(f"mft on {w}: u = {u:.6e}, |u|/dt^2 = {abs(u) / w.dt**2:.6e}")
    steps = _decorate_ends(_interleave(FOREST_RUTH_SUZUKI, b.b1, b.b2), u)
    return ExponentSchedule(tuple(steps), FormulaId.MFT, w)


def nine_exp(gen, w, degenerate="raise"):
    """9-exponential fourth-order formula on the Omelyan base"""
    b = magnus.beta_set(gen, w, order=4)
    u = _u_or_zero(b, degenerate)
    steps = _decorate_ends(_interleave(OMELYAN_FR, b.b1, b.b2), u)
    return ExponentSchedule(tuple(steps), FormulaId.NINE_EXP, w)


def suzuki_subwindows(w):
    """The five sub-windows of the fractal composition, latest first"""
    widths = (SUZUKI_W, SUZUKI_W, 1.0 - 4.0 * SUZUKI_W, SUZUKI_W, SUZUKI_W)
    end = w.end
    windows = []
    for fraction in widths:
        start = end - fraction * w.dt
        windows.append(quadrature.Window.between(start, end))
        end = start
    return windows


def suzuki4(gen, w):
    steps = []
    for sub in suzuki_subwindows(w):
        steps.extend(midpoint(gen, sub).steps)
    return ExponentSchedule(tuple(merge_adjacent(steps)), FormulaId.SUZUKI4, w)


def _equilibrated_solve(matrix, rhs, ratio_name):
    matrix = np.asarray(matrix, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    scale = np.max(np.abs(matrix), axis=1)
    scale[scale == 0] = 1.0
    scaled = matrix / scale[:, None]
    condition = float(np.linalg.cond(scaled))
    if not np.isfinite(condition) or condition > CONFIG["mst_max_condition"]:
        raise IllConditionedSystemError(
            f"decoration system is ill-conditioned (cond = {condition:.3e}); degenerate ratio {ratio_name}",
            condition=condition,
            ratio_name=ratio_name,
        )
    return np.linalg.solve(scaled, rhs / scale)


def solve_mst_decoration(betas):
    """Solve the six decoration equations for u1..u4, w, z"""
    b1, b2 = betas.b1, betas.b2
    floor = CONFIG["mst_regular_floor"] * abs(betas.window.dt)
    for slot, value in ((Slot.X, b1), (Slot.Y, b2)):
        if abs(value) < floor:
            raise DegenerateBetaError(
                f"beta_{slot.index} = {value:.3e} is below {floor:.3e} on {betas.window}",
                slot=slot.value,
                beta=value,
                remedies=("shrink dt", "split the window where the coefficient changes sign"),
            )

    system = [
        [C1112_U1B1B1B1 * b1**3, C1112_U2B2B1B1 * b2 * b1**2, C1112_U3B1B1B1 * b1**3],
        [C2212_U1B1B2B2 * b1 * b2**2, C2212_U2B2B2B2 * b2**3, C2212_U3B1B2B2 * b1 * b2**2],
        [C1212_U1B2B1B1 * b2 * b1**2, C1212_U2B2B2B1 * b2**2 * b1, C1212_U3B2B1B1 * b2 * b1**2],
    ]
    rhs = [betas.b1112, betas.b2212, betas.b1212 + betas.b2112]
    u1, u2, u3 = _equilibrated_solve(system, rhs, "beta_1/beta_2")
    u4 = (betas.b12 - C12_U1B1 * u1 * b1 - C12_U3B1 * u3 * b1 - C12_U2B2 * u2 * b2) / (C12_U4B2 * b2)

    const112 = (
        C112_B2U2U2 * b2 * u2**2
        + C112_U1B1U2 * u1 * b1 * u2
        + C112_U4B2U2 * u4 * b2 * u2
        + C112_U1U4B1 * u1 * u4 * b1
        + C112_U3U4B1 * u3 * u4 * b1
        + C112_U4U4B2 * u4**2 * b2
    )
    const212 = (
        C212_B1U1U1 * b1 * u1**2
        + C212_U3B1U1 * u3 * b1 * u1
        + C212_U3U3B1 * u3**2 * b1
        + C212_U2U3B2 * u2 * u3 * b2
    )
    system_wz = [
        [C112_WB1B2 * b1 * b2, C112_ZB1B1 * b1**2],
        [C212_WB2B2 * b2**2, C212_ZB1B2 * b1 * b2],
    ]
    w_dec, z_dec = _equilibrated_solve(system_wz, [betas.b112 - const112, betas.b212 - const212], "beta_1/beta_2")
    return MstDecoration(
        u1=float(u1), u2=float(u2), u3=float(u3), u4=float(u4), w=float(w_dec), z=float(z_dec)
    )


def mst(gen, w, nodes=None):
    """Minimum 15-exponential sixth-order formula and its decorations"""
    b = magnus.beta_set(gen, w, order=6, nodes=nodes)
    d = solve_mst_decoration(b)
    a1, a2, a3 = YOSHIDA_A
    y1, y2, y3 = YOSHIDA_B
    a4, y4 = YOSHIDA_A4, YOSHIDA_B4
    b1, b2 = b.b1, b.b2
    coeffs = (
        (Slot.X, a1 * b1 + d.u4),
        (Slot.Y, y1 * b2 + d.u3),
        (Slot.X, a2 * b1 + d.u2),
        (Slot.Y, y2 * b2 + d.u1 - d.z),
        (Slot.X, a3 * b1 - d.w),
        (Slot.Y, y3 * b2 + d.z),
        (Slot.X, a4 * b1 + d.w),
        (Slot.Y, y4 * b2),
        (Slot.X, a4 * b1 + d.w),
        (Slot.Y, y3 * b2 + d.z),
        (Slot.X, a3 * b1 - d.w),
        (Slot.Y, y2 * b2 - d.u1 - d.z),
        (Slot.X, a2 * b1 - d.u2),
        (Slot.Y, y1 * b2 - d.u3),
        (Slot.X, a1 * b1 - d.u4),
    )
    steps = tuple(Step(slot, float(c)) for slot, c in coeffs)
    return ExponentSchedule(steps, FormulaId.MST, w), d


_BUILDERS = {
    FormulaId.MIDPOINT: midpoint,
    FormulaId.HDR: hdr,
    FormulaId.MFT: mft,
    FormulaId.NINE_EXP: nine_exp,
    FormulaId.SUZUKI4: suzuki4,
    FormulaId.MST: lambda gen, w: mst(gen, w)[0],
}


def build_schedule(formula_id, gen, w):
    return _BUILDERS[FormulaId(formula_id)](gen, w)


def evaluate(schedule, gen):
    """Product of exp(coeff * Z_slot) over the steps in written order"""
    result = np.eye(gen.dim, dtype=np.complex128)
    for step in schedule.steps:
        result = result @ gen.exponential(step.slot, step.coeff)
    return result


# ===== Serialization =====
def _json_float(x):
    x = float(x)
    return "%.17g" % x if math.isfinite(x) else json.dumps(x)


def schedule_to_json(schedule):
    """JSON document of the schedule with every float at 17 significant digits"""
    steps = ", ".join(
        f'{{"slot": {json.dumps(step.slot.value)}, "coeff": {_json_float(step.coeff)}}}' for step in schedule.steps
    )
    return (
        f'{{"formula": {json.dumps(schedule.formula_id.value)}, "mu": {_json_float(schedule.window.mu)}, '
        f'"dt": {_json_float(schedule.window.dt)}, "steps": [{steps}]}}'
    )


def schedule_from_json(text):
    doc = json.loads(text)
    steps = tuple(Step(Slot(s["slot"]), float(s["coeff"])) for s in doc["steps"])
    return ExponentSchedule(steps, FormulaId(doc["formula"]), quadrature.Window(float(doc["mu"]), float(doc["dt"])))
