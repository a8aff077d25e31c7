"""Quantum channels in unitary, Kraus and chi form, plus the gate library.

The chi form follows ``L(M) = sum_ab chi_ab E_a M E_b^dag`` over an
:class:`~mseqpt.operators.OperatorBasis`. With the ``Tr(E_m E_n^dag) = D``
normalisation a trace-preserving channel has ``Tr(chi) = 1``.

Rotations use ``R_phi(theta) = exp(-i theta sigma_phi / 2)``; a leading ``-``
on the phase axis (``"-y"``) is the negative phase written with a bar in NMR
notation.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .operators import (
    I2,
    PREDICATE_TOL,
    SX,
    SY,
    SZ,
    DimensionError,
    OperatorBasis,
    as_matrix,
    build_pauli_basis,
    expand_in_basis,
    is_hermitian,
    is_psd,
    is_unitary,
    kron,
)

CHANNEL_TOL = PREDICATE_TOL


class InvalidChannelError(ValueError):
    """A channel fails its physicality invariants."""


@dataclass(frozen=True, eq=False)
class QuantumChannel:
    """A CP trace-preserving map stored in one of three forms.

    Use :meth:`from_unitary`, :meth:`from_kraus` or :meth:`from_chi` rather
    than the raw constructor; they validate the input and never repair it.
    """

    dimension: int
    form: str
    data: tuple[np.ndarray, ...] | np.ndarray
    basis: OperatorBasis | None = None
    name: str = ""
    _kraus: tuple[np.ndarray, ...] = field(default=(), repr=False)

    @classmethod
    def from_unitary(cls, u, name: str = "", tol: float = CHANNEL_TOL) -> "QuantumChannel":
        u = as_matrix(u)
        if u.shape[0] != u.shape[1]:
            raise DimensionError(f"unitary must be square, got {u.shape}")
        if not is_unitary(u, tol):
            raise InvalidChannelError("matrix is not unitary")
        u = u.copy()
        u.setflags(write=False)
        return cls(u.shape[0], "unitary", u, None, name, (u,))

    @classmethod
    def from_kraus(cls, ops: Sequence, name: str = "", tol: float = CHANNEL_TOL) -> "QuantumChannel":
        ops = [as_matrix(a) for a in ops]
        if not ops:
            raise InvalidChannelError("empty Kraus list")
        d = ops[0].shape[0]
        for a in ops:
            if a.shape != (d, d):
                raise DimensionError(f"Kraus operators must all be {d}x{d}, got {a.shape}")
        completeness = sum(a.conj().T @ a for a in ops)
        if np.max(np.abs(completeness - np.eye(d))) > tol:
            raise InvalidChannelError("Kraus operators are not trace preserving (sum A^dag A != I)")
        frozen = []
        for a in ops:
            a = a.copy()
            a.setflags(write=False)
            frozen.append(a)
        frozen = tuple(frozen)
        return cls(d, "kraus", frozen, None, name, frozen)

    @classmethod
    def from_chi(cls, chi, basis: OperatorBasis, name: str = "", tol: float = CHANNEL_TOL) -> "QuantumChannel":
        chi = as_matrix(chi)
        n = len(basis)
        if chi.shape != (n, n):
            raise DimensionError(f"chi must be {n}x{n} for this basis, got {chi.shape}")
        if not is_hermitian(chi, tol):
            raise InvalidChannelError("chi is not Hermitian")
        if not is_psd(chi, tol):
            raise InvalidChannelError("chi is not positive semidefinite")
        els = basis.elements
        # sum_ab chi_ab E_b^dag E_a
        completeness = np.einsum("ab,bij,ajk->ik", chi, els.conj().transpose(0, 2, 1), els)
        if np.max(np.abs(completeness - np.eye(basis.dimension))) > tol:
            raise InvalidChannelError("chi is not trace preserving")
        chi = chi.copy()
        chi.setflags(write=False)
        evals, evecs = np.linalg.eigh((chi + chi.conj().T) / 2)
        kraus = tuple(
            np.sqrt(lam) * np.einsum("i,iab->ab", evecs[:, m], els)
            for m, lam in enumerate(evals)
            if lam > tol
        )
        return cls(basis.dimension, "chi", chi, basis, name, kraus)

    @property
    def kraus_ops(self) -> tuple[np.ndarray, ...]:
        return self._kraus

    @property
    def num_qubits(self) -> int:
        return int(round(np.log2(self.dimension)))

    def __call__(self, m) -> np.ndarray:
        return apply(self, m)

    def is_unital(self, tol: float = CHANNEL_TOL) -> bool:
        out = apply(self, np.eye(self.dimension))
        return bool(np.max(np.abs(out - np.eye(self.dimension))) <= tol)

    def chi(self, basis: OperatorBasis | None = None) -> np.ndarray:
        basis = basis or build_pauli_basis(self.num_qubits)
        return kraus_to_chi(self.kraus_ops, basis)


def apply(ch: QuantumChannel, m) -> np.ndarray:
    """Apply the channel to an arbitrary ``D x D`` matrix (linear extension)."""
    m = as_matrix(m)
    if m.shape != (ch.dimension, ch.dimension):
        raise DimensionError(f"channel acts on {ch.dimension}x{ch.dimension}, got {m.shape}")
    if ch.form == "unitary":
        u = ch.data
        return u @ m @ u.conj().T
    if ch.form == "kraus":
        return sum(a @ m @ a.conj().T for a in ch.data)
    if ch.form == "chi":
        els = ch.basis.elements
        left = np.einsum("aij,jk->aik", els, m)
        return np.einsum("ab,aik,bkl->il", ch.data, left, els.conj().transpose(0, 2, 1))
    raise InvalidChannelError(f"unknown channel form {ch.form!r}")


def unitary_to_chi(u, basis: OperatorBasis, tol: float = CHANNEL_TOL) -> np.ndarray:
    """Rank-one chi matrix ``chi_ab = a_a conj(a_b)`` of a unitary."""
    u = as_matrix(u)
    if not is_unitary(u, tol):
        raise InvalidChannelError("matrix is not unitary")
    a = expand_in_basis(u, basis)
    return np.outer(a, a.conj())


def kraus_to_chi(ops: Sequence, basis: OperatorBasis, tol: float = CHANNEL_TOL) -> np.ndarray:
    """Chi matrix of a Kraus decomposition; the reference for every estimator."""
    ops = [as_matrix(a) for a in ops]
    d = basis.dimension
    completeness = sum(a.conj().T @ a for a in ops)
    if completeness.shape != (d, d):
        raise DimensionError(f"Kraus operators do not match basis dimension {d}")
    if np.max(np.abs(completeness - np.eye(d))) > tol:
        raise InvalidChannelError("Kraus operators are not trace preserving (sum A^dag A != I)")
    coeffs = np.array([expand_in_basis(a, basis) for a in ops])
    return coeffs.T @ coeffs.conj()


# gate library ---------------------------------------------------------------

_AXES = {"x": SX, "y": SY, "z": SZ}


def rotation(phase: str, theta: float) -> np.ndarray:
    """Single-qubit rotation ``exp(-i theta sigma_phase / 2)``; phase in {x, y, z, -x, -y, -z}."""
    sign = -1.0 if phase.startswith("-") else 1.0
    axis = phase.lstrip("-+")
    if axis not in _AXES:
        raise ValueError(f"unknown rotation phase {phase!r}")
    return np.cos(theta / 2) * I2 - 1j * sign * np.sin(theta / 2) * _AXES[axis]


def controlled(target_op) -> np.ndarray:
    """Two-qubit gate with qubit 1 as control: ``|0><0| x I + |1><1| x target_op``."""
    p0 = np.diag([1.0, 0.0]).astype(complex)
    p1 = np.diag([0.0, 1.0]).astype(complex)
    return kron(p0, I2) + kron(p1, as_matrix(target_op))


HADAMARD = (SX + SZ) / np.sqrt(2)
CNOT_TEXTBOOK = controlled(SX)
CH_TEXTBOOK = controlled(HADAMARD)


@dataclass(frozen=True)
class GateSpec:
    """A controlled rotation ``R_phase(theta)`` on qubit 2 controlled by qubit 1.

    The built-in names carry their own parameters: NOOP (theta 0), CNOT
    (x, pi) and CH (-y, pi/2). ``CNOT_TEXTBOOK`` and ``CH_TEXTBOOK`` are the
    usual phase-free CNOT and controlled-Hadamard.
    """

    name: str
    phase: str = "x"
    theta: float = 0.0


BUILTIN_GATES = {
    "NOOP": GateSpec("NOOP", "x", 0.0),
    "CNOT": GateSpec("CNOT", "x", np.pi),
    "CH": GateSpec("CH", "-y", np.pi / 2),
    "CNOT_TEXTBOOK": GateSpec("CNOT_TEXTBOOK"),
    "CH_TEXTBOOK": GateSpec("CH_TEXTBOOK"),
}


def gate_unitary(spec: GateSpec | str) -> np.ndarray:
    if isinstance(spec, str):
        key = spec.upper().replace("-", "_")
        if key not in BUILTIN_GATES:
            raise ValueError(f"unknown gate {spec!r}; choose from {sorted(BUILTIN_GATES)}")
        spec = BUILTIN_GATES[key]
    name = spec.name.upper()
    if name == "CNOT_TEXTBOOK":
        return CNOT_TEXTBOOK.copy()
    if name == "CH_TEXTBOOK":
        return CH_TEXTBOOK.copy()
    if name in ("NOOP", "CNOT", "CH"):
        builtin = BUILTIN_GATES[name]
        return controlled(rotation(builtin.phase, builtin.theta))
    if name == "CUSTOM":
        return controlled(rotation(spec.phase, spec.theta))
    raise ValueError(f"unknown gate {spec.name!r}")


def make_gate(spec: GateSpec | str) -> QuantumChannel:
    name = spec if isinstance(spec, str) else spec.name
    return QuantumChannel.from_unitary(gate_unitary(spec), name=name.upper())


# noise channels ------------------------------------------------------------


def embed(op, qubit: int, num_qubits: int) -> np.ndarray:
    """Place a single-qubit operator on ``qubit`` (1-based, qubit 1 most significant)."""
    if not 1 <= qubit <= num_qubits:
        raise ValueError(f"qubit {qubit} out of range for {num_qubits} qubits")
    factors = [I2] * num_qubits
    factors[qubit - 1] = as_matrix(op)
    return kron(*factors)


def depolarizing(p: float, num_qubits: int = 1) -> QuantumChannel:
    """``rho -> (1 - p) rho + p Tr(rho) I / D`` written over the Pauli products."""
    if not 0.0 <= p <= 1.0:
        raise ValueError("depolarizing probability must lie in [0, 1]")
    basis = build_pauli_basis(num_qubits)
    n = len(basis)
    weights = np.full(n, p / n)
    weights[0] = 1.0 - p * (n - 1) / n
    ops = [np.sqrt(w) * e for w, e in zip(weights, basis.elements) if w > 0]
    return QuantumChannel.from_kraus(ops, name=f"depolarizing({p})")


def phase_damping(p: float, qubit: int = 1, num_qubits: int = 2) -> QuantumChannel:
    """Phase flip with probability ``p`` on one qubit: Kraus ``sqrt(1-p) I, sqrt(p) Z``."""
    if not 0.0 <= p <= 1.0:
        raise ValueError("phase damping probability must lie in [0, 1]")
    d = 2**num_qubits
    ops = [np.sqrt(1 - p) * np.eye(d), np.sqrt(p) * embed(SZ, qubit, num_qubits)]
    return QuantumChannel.from_kraus(ops, name=f"phase_damping({p})")


def amplitude_damping(gamma: float, qubit: int = 1, num_qubits: int = 2) -> QuantumChannel:
    """Energy relaxation ``|1> -> |0>`` with probability ``gamma``; not unital."""
    if not 0.0 <= gamma <= 1.0:
        raise ValueError("damping rate must lie in [0, 1]")
    k0 = np.array([[1, 0], [0, np.sqrt(1 - gamma)]], dtype=complex)
    k1 = np.array([[0, np.sqrt(gamma)], [0, 0]], dtype=complex)
    ops = [embed(k0, qubit, num_qubits), embed(k1, qubit, num_qubits)]
    return QuantumChannel.from_kraus(ops, name=f"amplitude_damping({gamma})")


def compose(*channels: QuantumChannel) -> QuantumChannel:
    """Sequential composition; the first channel acts first."""
    if not channels:
        raise ValueError("nothing to compose")
    d = channels[0].dimension
    ops = [np.eye(d, dtype=complex)]
    for ch in channels:
        if ch.dimension != d:
            raise DimensionError("cannot compose channels of different dimension")
        ops = [b @ a for a in ops for b in ch.kraus_ops]
    name = "+".join(ch.name or ch.form for ch in channels)
    if len(ops) == 1:
        return QuantumChannel.from_unitary(ops[0], name=name)
    return QuantumChannel.from_kraus(ops, name=name)


# random channels for property checks ---------------------------------------


def random_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random unitary via QR of a complex Ginibre matrix with phase fix."""
    z = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    phases = np.diag(r) / np.abs(np.diag(r))
    return q * phases


def random_kraus_channel(dim: int, num_ops: int, rng: np.random.Generator) -> QuantumChannel:
    """Random CPTP map: split a random isometry ``C^D -> C^(num_ops D)`` into blocks."""
    z = rng.standard_normal((num_ops * dim, dim)) + 1j * rng.standard_normal((num_ops * dim, dim))
    v, _ = np.linalg.qr(z)
    ops = [v[k * dim:(k + 1) * dim] for k in range(num_ops)]
    return QuantumChannel.from_kraus(ops, name=f"random_kraus({num_ops})")
