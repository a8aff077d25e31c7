"""Dense complex matrix helpers and the Pauli product-operator basis.

Matrices are plain ``numpy.ndarray`` objects of dtype ``complex128``. The
basis convention is ``Tr(E_m E_n^dag) = D delta_mn`` with ``E_0 = I``, so the
expansion coefficient of a matrix ``M`` along ``E_i`` is ``Tr(M E_i) / D``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache, reduce

import numpy as np

#: absolute tolerance for the boolean predicates below
PREDICATE_TOL = 1e-9
#: tolerance for identities that hold in exact arithmetic
EXACT_TOL = 1e-12

I2 = np.eye(2, dtype=complex)
SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)
PAULIS = (I2, SX, SY, SZ)
_PAULI_NAMES = ("I", "x", "y", "z")


class DimensionError(ValueError):
    """Raised when matrix shapes do not match."""


def as_matrix(m) -> np.ndarray:
    a = np.asarray(m, dtype=complex)
    if a.ndim != 2:
        raise DimensionError(f"expected a 2-d matrix, got shape {a.shape}")
    return a


def _square(m) -> np.ndarray:
    a = as_matrix(m)
    if a.shape[0] != a.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {a.shape}")
    return a


def dagger(m) -> np.ndarray:
    return as_matrix(m).conj().T


def trace(m) -> complex:
    return complex(np.trace(_square(m)))


def matmul(*ms) -> np.ndarray:
    mats = [as_matrix(m) for m in ms]
    for left, right in zip(mats, mats[1:]):
        if left.shape[1] != right.shape[0]:
            raise DimensionError(f"cannot multiply {left.shape} by {right.shape}")
    return reduce(np.matmul, mats)


def kron(*ms) -> np.ndarray:
    return reduce(np.kron, [as_matrix(m) for m in ms])


def is_hermitian(m, tol: float = PREDICATE_TOL) -> bool:
    a = _square(m)
    return bool(np.max(np.abs(a - a.conj().T), initial=0.0) <= tol)


def is_unitary(m, tol: float = PREDICATE_TOL) -> bool:
    a = _square(m)
    eye = np.eye(a.shape[0])
    return bool(np.max(np.abs(a.conj().T @ a - eye)) <= tol)


def is_psd(m, tol: float = PREDICATE_TOL) -> bool:
    """True when ``m`` is Hermitian and no eigenvalue is below ``-tol``."""
    a = _square(m)
    if not is_hermitian(a, tol):
        return False
    evals = np.linalg.eigvalsh((a + a.conj().T) / 2)
    return bool(evals.min() >= -tol)


@dataclass(frozen=True, eq=False)
class OperatorBasis:
    """Ordered orthogonal operator basis ``E_0 .. E_{D^2-1}`` with ``E_0 = I``.

    ``elements`` is a read-only array of shape ``(D**2, D, D)``.
    """

    dimension: int
    elements: np.ndarray
    labels: tuple[str, ...]

    def __post_init__(self):
        els = np.asarray(self.elements, dtype=complex)
        d = self.dimension
        if els.shape != (d * d, d, d):
            raise DimensionError(f"basis of dimension {d} needs shape {(d * d, d, d)}, got {els.shape}")
        if len(self.labels) != d * d:
            raise ValueError("one label per basis element required")
        if not np.allclose(els[0], np.eye(d), atol=EXACT_TOL):
            raise ValueError("E_0 must be the identity")
        gram = np.einsum("mab,nab->mn", els, els.conj())
        if not np.allclose(gram, d * np.eye(d * d), atol=EXACT_TOL * d * d):
            raise ValueError("basis violates Tr(E_m E_n^dag) = D delta_mn")
        traces = np.einsum("maa->m", els)
        expected = np.zeros(d * d)
        expected[0] = d
        if not np.allclose(traces, expected, atol=EXACT_TOL * d):
            raise ValueError("basis violates Tr(E_m) = D delta_m0")
        for m, e in enumerate(els):
            if not is_hermitian(e, EXACT_TOL):
                raise ValueError(f"basis element {m} is not Hermitian")
        els.setflags(write=False)
        object.__setattr__(self, "elements", els)

    def __len__(self) -> int:
        return self.dimension**2

    def __getitem__(self, i: int) -> np.ndarray:
        return self.elements[i]

    @property
    def num_qubits(self) -> int:
        return int(round(np.log2(self.dimension)))

    def index(self, label: str) -> int:
        return self.labels.index(label)


def _label(digits: tuple[int, ...]) -> str:
    if not any(digits):
        return "I"
    n = len(digits)
    if n == 1:
        return "s" + _PAULI_NAMES[digits[0]]
    return "".join(f"s{q + 1}{_PAULI_NAMES[p]}" for q, p in enumerate(digits) if p)


@lru_cache(maxsize=None)
def build_pauli_basis(num_qubits: int) -> OperatorBasis:
    """Pauli product basis on ``num_qubits`` qubits.

    Elements are ordered base-4 with qubit 1 as the most significant digit and
    per-qubit digit order (I, x, y, z). For two qubits this gives
    ``I, s2x, s2y, s2z, s1x, s1xs2x, ..., s1zs2z``.
    """
    if not isinstance(num_qubits, (int, np.integer)) or num_qubits < 1:
        raise ValueError(f"num_qubits must be a positive integer, got {num_qubits!r}")
    digits = list(itertools.product(range(4), repeat=int(num_qubits)))
    elements = np.array([kron(*(PAULIS[p] for p in ds)) for ds in digits])
    labels = tuple(_label(ds) for ds in digits)
    return OperatorBasis(2**num_qubits, elements, labels)


def expand_in_basis(m, basis: OperatorBasis) -> np.ndarray:
    """Coefficients ``c_i = Tr(M E_i) / D`` so that ``M = sum_i c_i E_i``."""
    a = _square(m)
    d = basis.dimension
    if a.shape != (d, d):
        raise DimensionError(f"matrix of shape {a.shape} does not match basis dimension {d}")
    # E_i is Hermitian, so Tr(M E_i) = sum_ab M_ab conj(E_i)_ab
    return np.einsum("ab,iab->i", a, basis.elements.conj()) / d


def recombine(coefficients, basis: OperatorBasis) -> np.ndarray:
    c = np.asarray(coefficients, dtype=complex)
    if c.shape != (len(basis),):
        raise DimensionError(f"need {len(basis)} coefficients, got {c.shape}")
    return np.einsum("i,iab->ab", c, basis.elements)
