"""Quantum 2-design sets built from complete sets of mutually unbiased bases."""
from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .channels import QuantumChannel, apply, kraus_to_chi, random_unitary
from .operators import EXACT_TOL, DimensionError, OperatorBasis, build_pauli_basis

_h = 0.5
_j = 1j

# columns of B_1 .. B_5 for two qubits in the computational basis |q1 q2>
_MUB_D4 = (
    ((1, 0, 0, 0), (0, 1, 0, 0), (0, 0, 1, 0), (0, 0, 0, 1)),
    ((1, 1, 1, 1), (1, 1, -1, -1), (1, -1, -1, 1), (1, -1, 1, -1)),
    ((1, _j, _j, -1), (1, -_j, _j, 1), (1, _j, -_j, 1), (1, -_j, -_j, -1)),
    # third vector: the commonly printed (1, 1, -i, -i) is not orthogonal to
    # its neighbours; (1, 1, i, -i) is the unique single-sign repair
    ((1, -1, -_j, -_j), (1, -1, _j, _j), (1, 1, _j, -_j), (1, 1, -_j, _j)),
    ((1, -_j, -1, -_j), (1, -_j, 1, _j), (1, _j, -1, _j), (1, _j, 1, -_j)),
)
_MUB_D4_SCALE = (1.0, _h, _h, _h, _h)

_s = 1 / np.sqrt(2)
_MUB_D2 = (
    ((1, 0), (0, 1)),
    ((_s, _s), (_s, -_s)),
    ((_s, _j * _s), (_s, -_j * _s)),
)


@dataclass(frozen=True, eq=False)
class DesignSet:
    """Ordered pure states ``|phi_j>`` with the MUB and element they came from.

    ``labels[j]`` is ``(basis_number, element_number)``, both 1-based.
    """

    dimension: int
    states: np.ndarray
    labels: tuple[tuple[int, int], ...]

    def __post_init__(self):
        s = np.asarray(self.states, dtype=complex)
        if s.ndim != 2 or s.shape[1] != self.dimension:
            raise DimensionError(f"states must have shape (K, {self.dimension}), got {s.shape}")
        norms = np.linalg.norm(s, axis=1)
        if np.max(np.abs(norms - 1)) > EXACT_TOL:
            raise ValueError("design states must have unit norm")
        s.setflags(write=False)
        object.__setattr__(self, "states", s)

    def __len__(self) -> int:
        return self.states.shape[0]

    @property
    def K(self) -> int:
        return len(self)

    @property
    def projectors(self) -> np.ndarray:
        """``rho_j = |phi_j><phi_j|`` stacked with shape ``(K, D, D)``."""
        return np.einsum("ja,jb->jab", self.states, self.states.conj())

    def state(self, basis_number: int, element_number: int) -> np.ndarray:
        return self.states[self.labels.index((basis_number, element_number))]

    def to_json(self) -> str:
        payload = {
            "dimension": self.dimension,
            "states": [[[float(z.real), float(z.imag)] for z in v] for v in self.states],
            "labels": [list(lab) for lab in self.labels],
        }
        return json.dumps(payload, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "DesignSet":
        payload = json.loads(text)
        states = np.array([[complex(re, im) for re, im in v] for v in payload["states"]])
        labels = tuple(tuple(lab) for lab in payload["labels"])
        return cls(payload["dimension"], states, labels)


@lru_cache(maxsize=None)
def build_mub_design(dim: int) -> DesignSet:
    """The complete-MUB 2-design: 20 states for ``dim=4``, 6 for ``dim=2``."""
    if dim == 4:
        bases = [np.array(b, dtype=complex) * scale for b, scale in zip(_MUB_D4, _MUB_D4_SCALE)]
    elif dim == 2:
        bases = [np.array(b, dtype=complex) for b in _MUB_D2]
    else:
        raise ValueError(f"only D=2 and D=4 are supported, got {dim}")
    states = np.concatenate(bases)
    labels = tuple((k + 1, p + 1) for k, b in enumerate(bases) for p in range(len(b)))
    design = DesignSet(dim, states, labels)
    check_mub(design)
    return design


def overlap_table(design: DesignSet) -> np.ndarray:
    """``|<phi_p|phi_q>|^2`` for every ordered pair."""
    g = design.states.conj() @ design.states.T
    return np.abs(g) ** 2


def check_mub(design: DesignSet, tol: float = EXACT_TOL) -> float:
    """Largest violation of intra-basis orthonormality or cross-basis unbiasedness."""
    ov = overlap_table(design)
    basis_of = np.array([lab[0] for lab in design.labels])
    same = basis_of[:, None] == basis_of[None, :]
    expected = np.where(same, np.eye(len(design)), 1.0 / design.dimension)
    worst = float(np.max(np.abs(ov - expected)))
    if worst > tol:
        raise ValueError(f"design set is not a set of mutually unbiased bases (violation {worst:.3g})")
    return worst


def state_coefficients(design: DesignSet, basis: OperatorBasis) -> np.ndarray:
    """Real table ``e[j, k] = Tr(rho_j E_k) / D`` so that ``rho_j = sum_k e[j, k] E_k``."""
    if design.dimension != basis.dimension:
        raise DimensionError("design and basis dimensions differ")
    rhos = design.projectors
    e = np.einsum("jab,kba->jk", rhos, basis.elements) / basis.dimension
    if np.max(np.abs(e.imag)) > EXACT_TOL:
        raise ValueError("state coefficients are not real")
    return e.real


def nonzero_coefficient_counts(design: DesignSet, basis: OperatorBasis, tol: float = EXACT_TOL) -> dict:
    """Per-state count of nonzero ``e[j, k]``, with and without the identity term.

    ``without_identity`` is the number of product-operator readouts needed to
    evaluate ``Tr(rho_j X)``; the identity term needs none.
    """
    nz = np.abs(state_coefficients(design, basis)) > tol
    return {
        "with_identity": nz.sum(axis=1).tolist(),
        "without_identity": nz[:, 1:].sum(axis=1).tolist(),
    }


def design_average(design: DesignSet, channel: QuantumChannel, a: int, b: int, basis: OperatorBasis) -> complex:
    """``(1/K) sum_j <phi_j| L(E_a^dag |phi_j><phi_j| E_b) |phi_j>`` evaluated directly."""
    ea_dag = basis[a].conj().T
    eb = basis[b]
    total = 0j
    for rho in design.projectors:
        total += np.trace(rho @ apply(channel, ea_dag @ rho @ eb))
    return total / len(design)


@dataclass(frozen=True)
class DesignReport:
    trials: int
    max_deviation: float
    worst: tuple[int, int, int]


def verify_2design(design: DesignSet, trials: int, seed: int) -> DesignReport:
    """Check the survival-probability identity on random unitary channels.

    For each trial a Haar-random unitary and a random ``(a, b)`` are drawn; the
    design average is compared with ``(D chi_ab + delta_ab) / (D + 1)``.
    """
    rng = np.random.default_rng(seed)
    d = design.dimension
    basis = build_pauli_basis(int(round(np.log2(d))))
    worst = 0.0
    where = (-1, -1, -1)
    for t in range(trials):
        u = random_unitary(d, rng)
        ch = QuantumChannel.from_unitary(u)
        a, b = (int(x) for x in rng.integers(0, d * d, size=2))
        chi = kraus_to_chi([u], basis)
        lhs = design_average(design, ch, a, b, basis)
        rhs = (d * chi[a, b] + (a == b)) / (d + 1)
        dev = abs(lhs - rhs)
        if dev > worst:
            worst, where = dev, (t, a, b)
    return DesignReport(trials, float(worst), where)
