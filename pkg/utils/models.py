"""Benchmark models and the Ising gate compiler.

Landau-Zener: H(t) = sigma_x + t sigma_z on one qubit.
Ising chain: H(t) = sin(t) F + G on a periodic chain of L sites, with
F = hx sum sigma_x^i and G = sum (J sigma_z^i sigma_z^{i+1} + hz sigma_z^i).
Both enter the library as A(t) = -i H(t).
"""

import logging
from dataclasses import dataclass
from enum import Enum
from functools import reduce

import numpy as np

from utils import formulas, quadrature
from utils.errors import ConfigError, GateModelError
from utils.magnus import Slot, TwoTermGenerator

logger = logging.getLogger(__name__)

# ===== Configuration =====
CONFIG = {
    "min_sites": 2,
    "max_sites": 10,
    "ising_defaults": {"L": 6, "J": -1.0, "hz": 0.2, "hx": -2.0},
}

PAULI = {
    "i": np.eye(2, dtype=np.complex128),
    "x": np.array([[0, 1], [1, 0]], dtype=np.complex128),
    "y": np.array([[0, -1j], [1j, 0]], dtype=np.complex128),
    "z": np.array([[1, 0], [0, -1]], dtype=np.complex128),
}

# Closed-form gate counts per site per step
CLOSED_FORM_GATES = {
    formulas.FormulaId.MIDPOINT: 5,
    formulas.FormulaId.MFT: 10,
    formulas.FormulaId.NINE_EXP: 13,
    formulas.FormulaId.SUZUKI4: 15,
}

# (X steps, Y steps) of each merged schedule
STEP_SLOTS = {
    formulas.FormulaId.MIDPOINT: (2, 1),
    formulas.FormulaId.HDR: (2, 1),
    formulas.FormulaId.MFT: (4, 3),
    formulas.FormulaId.NINE_EXP: (5, 4),
    formulas.FormulaId.SUZUKI4: (6, 5),
    formulas.FormulaId.MST: (8, 7),
}


class Assignment(str, Enum):
    """Which Landau-Zener term (A = sigma_x, B = t sigma_z) occupies slot X"""

    TERM_A_TO_X = "A_to_X"
    TERM_A_TO_Y = "A_to_Y"


class GateKind(str, Enum):
    RX = "rx"
    RZ = "rz"
    RZZ = "rzz"


@dataclass(frozen=True)
class GateOp:
    kind: GateKind
    qubits: tuple
    angle: float

    def to_dict(self):
        return {"kind": self.kind.value, "qubits": list(self.qubits), "angle": self.angle}

    @classmethod
    def from_dict(cls, doc):
        return cls(GateKind(doc["kind"]), tuple(int(q) for q in doc["qubits"]), float(doc["angle"]))


@dataclass(frozen=True)
class IsingParams:
    L: int = 6
    J: float = -1.0
    hz: float = 0.2
    hx: float = -2.0

    def __post_init__(self):
        if not CONFIG["min_sites"] <= self.L <= CONFIG["max_sites"]:
            raise ConfigError(f"L must be in {CONFIG['min_sites']}..{CONFIG['max_sites']}, got {self.L}")

    @property
    def bonds(self):
        return [(i, (i + 1) % self.L) for i in range(self.L)]


# ===== Coefficient functions =====
def unit(t):
    return np.ones_like(np.asarray(t, dtype=float))


def ramp(t):
    return np.asarray(t, dtype=float)


def oscillation(t):
    return np.sin(t)


# ===== Tensor constructors =====
def pauli_string(ops, L):
    """Kronecker product with ops[site] on the given sites and identity elsewhere; site 0 is leftmost"""
    for site, op in ops.items():
        if not 0 <= site < L:
            raise ValueError(f"site {site} out of range for L={L}")
        if op not in PAULI:
            raise ValueError(f"unknown Pauli label {op!r}")
    factors = [PAULI[ops.get(site, "i")] for site in range(L)]
    return reduce(np.kron, factors)


def landau_zener(assign=Assignment.TERM_A_TO_X):
    assign = Assignment(assign)
    term_a = (-1j * PAULI["x"], unit)
    term_b = (-1j * PAULI["z"], ramp)
    first, second = (term_a, term_b) if assign is Assignment.TERM_A_TO_X else (term_b, term_a)
    labels = ("sigma_x", "t*sigma_z") if assign is Assignment.TERM_A_TO_X else ("t*sigma_z", "sigma_x")
    return TwoTermGenerator(
        z1=first[0],
        z2=second[0],
        xfn=first[1],
        yfn=second[1],
        anti_hermitian=True,
        name=f"landau_zener:{assign.value}",
        labels=labels,
    )


def ising_terms(p):
    """Dense F and G of the periodic chain"""
    dim = 2**p.L
    f = np.zeros((dim, dim), dtype=np.complex128)
    g = np.zeros((dim, dim), dtype=np.complex128)
    for i in range(p.L):
        f += p.hx * pauli_string({i: "x"}, p.L)
        g += p.hz * pauli_string({i: "z"}, p.L)
    for a, b in p.bonds:
        # at L=2 the closing bond repeats (0, 1) and both copies are kept
        g += p.J * pauli_string({a: "z", b: "z"}, p.L)
    return f, g


def ising_chain(p):
    f, g = ising_terms(p)
    return TwoTermGenerator(
        z1=-1j * f,
        z2=-1j * g,
        xfn=oscillation,
        yfn=unit,
        anti_hermitian=True,
        name=f"ising:L={p.L}",
        labels=("F", "G"),
    )


# ===== Gate compiler =====
def compile_gates(schedule, p):
    """Gates of one schedule on the Ising chain, in the order they act"""
    gates = []
    for step in reversed(schedule.steps):
        c = step.coeff
        if step.slot is Slot.X:
            gates.extend(GateOp(GateKind.RX, (i,), 2.0 * c * p.hx) for i in range(p.L))
        elif step.slot is Slot.Y:
            gates.extend(GateOp(GateKind.RZZ, bond, 2.0 * c * p.J) for bond in p.bonds)
            gates.extend(GateOp(GateKind.RZ, (i,), 2.0 * c * p.hz) for i in range(p.L))
        else:
            raise GateModelError(f"slot {step.slot!r} has no Ising gate model")
    return gates


def gate_program(formula_id, gen, p, t_i, t_f, n_steps):
    """Gates of the composed evolution; n_steps = 0 gives an empty program"""
    if n_steps == 0:
        return []
    edges = np.linspace(t_i, t_f, n_steps + 1)
    gates = []
    for a, b in zip(edges[:-1], edges[1:]):
        schedule = formulas.build_schedule(formula_id, gen, quadrature.Window.between(a, b))
        gates.extend(compile_gates(schedule, p))
    return gates


def gate_matrix(gate, L):
    half = gate.angle / 2.0
    if gate.kind is GateKind.RZZ:
        a, b = gate.qubits
        if a == b or not (0 <= a < L and 0 <= b < L):
            raise GateModelError(f"invalid RZZ qubits {gate.qubits} for L={L}")
        generator = pauli_string({a: "z", b: "z"}, L)
    else:
        (q,) = gate.qubits
        generator = pauli_string({q: "x" if gate.kind is GateKind.RX else "z"}, L)
    return np.cos(half) * np.eye(2**L, dtype=np.complex128) - 1j * np.sin(half) * generator


def replay_gates(gates, L):
    """Unitary of a gate program; the first gate acts first"""
    result = np.eye(2**L, dtype=np.complex128)
    for gate in gates:
        result = gate_matrix(gate, L) @ result
    return result


def structural_gate_count(formula_id, L, n_steps):
    x_steps, y_steps = STEP_SLOTS[formulas.FormulaId(formula_id)]
    return (x_steps + 2 * y_steps) * L * n_steps


def gate_count(formula_id, L, n_steps):
    """Closed-form count; HdR and MST fall back to the structural count"""
    try:
        formula_id = formulas.FormulaId(formula_id)
    except ValueError as e:
        raise GateModelError(f"no gate model for formula {formula_id!r}") from e
    if formula_id in CLOSED_FORM_GATES:
        return CLOSED_FORM_GATES[formula_id] * L * n_steps
    return structural_gate_count(formula_id, L, n_steps)
