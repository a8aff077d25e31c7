"""Chi-matrix estimators over a :class:`~mseqpt.measurement.MeasurementBackend`.

The selective estimator writes the design-averaged survival probability

    F_ab = (1/K) sum_j Tr[rho_j L(E_a^dag rho_j E_b)]

as a fixed linear combination of product-operator expectations
``Tr[E_k L(E_i)]``. With ``E_a^dag rho_j E_b = sum_i c[j, i] E_i`` and
``rho_j = sum_k e[j, k] E_k``,

    F_ab = (1/K) sum_{j,i,k} e[j, k] c[j, i] Tr[E_k L(E_i)],

and ``chi_ab = ((D + 1) F_ab - delta_ab) / D``. The weights depend only on
the design and the basis, never on the channel.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .designs import DesignSet, state_coefficients
from .measurement import MeasurementBackend
from .operators import DimensionError, OperatorBasis

#: |beta| below this is treated as exactly zero
ZERO_COEFF = 1e-12


@dataclass(frozen=True)
class CoefficientTensor:
    """Process-independent weights for one ``(a, b)``.

    ``c[j, i]`` expands ``E_a^dag rho_j E_b``; ``e[j, k]`` expands ``rho_j``;
    ``beta[j, k, i] = e[j, k] c[j, i]``.
    """

    a: int
    b: int
    c: np.ndarray
    e: np.ndarray

    @property
    def beta(self) -> np.ndarray:
        beta = self.e[:, :, None] * self.c[:, None, :]
        beta[np.abs(beta) < ZERO_COEFF] = 0
        return beta

    def weights(self) -> np.ndarray:
        """``W[i, k] = (1/K) sum_j beta[j, k, i]`` so that ``F_ab = sum W[i, k] <E_k^i>``."""
        return self.beta.sum(axis=0).T / self.c.shape[0]

    def support(self) -> list[tuple[int, int]]:
        """``(i, k)`` pairs with a nonzero ``beta`` for at least one design state."""
        nz = np.any(self.beta != 0, axis=0)
        return [(int(i), int(k)) for k, i in zip(*np.nonzero(nz))]


def _check_pair(a: int, b: int, basis: OperatorBasis) -> None:
    n = len(basis)
    if not (0 <= a < n and 0 <= b < n):
        raise IndexError(f"element ({a}, {b}) out of range for a {n}x{n} chi matrix")


def compute_coefficients(a: int, b: int, design: DesignSet, basis: OperatorBasis) -> CoefficientTensor:
    _check_pair(a, b, basis)
    if design.dimension != basis.dimension:
        raise DimensionError("design and basis dimensions differ")
    d = basis.dimension
    rhos = design.projectors
    sandwich = np.einsum("xy,jyz,zw->jxw", basis[a].conj().T, rhos, basis[b])
    c = np.einsum("jxw,iwx->ji", sandwich, basis.elements) / d
    return CoefficientTensor(a, b, c, state_coefficients(design, basis))


@dataclass
class ElementEstimate:
    a: int
    b: int
    survival: complex
    chi: complex
    stderr: float
    support: list[tuple[int, int]] = field(default_factory=list)


@dataclass
class ChiEstimate:
    """A possibly partial chi estimate with per-element standard errors."""

    chi: np.ndarray
    mask: np.ndarray
    stderr: np.ndarray
    protocol: str
    ledger: dict
    survival: np.ndarray | None = None

    @property
    def dimension(self) -> int:
        return int(round(np.sqrt(self.chi.shape[0])))


def chi_from_survival(f, a: int, b: int, dim: int) -> complex:
    return ((dim + 1) * f - (1.0 if a == b else 0.0)) / dim


def mseqpt_element(a: int, b: int, design: DesignSet, basis: OperatorBasis, backend: MeasurementBackend) -> ElementEstimate:
    """Selectively estimate one ``chi_ab``.

    Walks the design states in order: for each ``rho_j``, every basis
    preparation ``E_i`` with nonzero ``c[j, i]`` is read out on every ``E_k``
    with nonzero ``e[j, k]``. Only those ``(i, k)`` pairs touch the backend.
    """
    coeffs = compute_coefficients(a, b, design, basis)
    c, e = coeffs.c, coeffs.e
    total = 0j
    for j in range(len(design)):
        preps = np.nonzero(np.abs(c[j]) >= ZERO_COEFF)[0]
        reads = np.nonzero(np.abs(e[j]) >= ZERO_COEFF)[0]
        for i in preps:
            for k in reads:
                beta = e[j, k] * c[j, i]
                if abs(beta) >= ZERO_COEFF:
                    total += beta * backend.expectation(int(i), int(k), "mseqpt")
    f = total / len(design)
    w = coeffs.weights()
    err = backend.standard_error({("E", i, k): w[i, k] for i, k in coeffs.support()})
    d = basis.dimension
    return ElementEstimate(a, b, f, chi_from_survival(f, a, b, d), (d + 1) / d * err, coeffs.support())


@lru_cache(maxsize=8)
def _weight_tensor(design: DesignSet, basis: OperatorBasis) -> np.ndarray:
    """``W[a, b, i, k]`` for every element at once."""
    d = basis.dimension
    els = basis.elements
    rhos = design.projectors
    e = state_coefficients(design, basis)
    # c[a, b, j, i] = Tr[E_a^dag rho_j E_b E_i] / D
    left = np.einsum("axy,jyz->ajxz", els.conj().transpose(0, 2, 1), rhos)
    right = np.einsum("bzw,iwx->bizx", els, els)
    c = np.einsum("ajxz,bizx->abji", left, right) / d
    beta = np.einsum("jk,abji->abjki", e, c)
    beta[np.abs(beta) < ZERO_COEFF] = 0
    return beta.sum(axis=2).transpose(0, 1, 3, 2) / len(design)


def _full_mask(n: int) -> np.ndarray:
    return np.ones((n, n), dtype=bool)


def mseqpt_full(design: DesignSet, basis: OperatorBasis, backend: MeasurementBackend, elements=None) -> ChiEstimate:
    """Estimate all (or the listed) chi elements from one shared expectation table.

    ``elements`` is an optional iterable of ``(a, b)`` pairs; only the
    expectations in their combined support are requested from the backend.
    No Hermitisation is applied.
    """
    n = len(basis)
    d = basis.dimension
    weights = _weight_tensor(design, basis)
    if elements is None:
        mask = _full_mask(n)
    else:
        mask = np.zeros((n, n), dtype=bool)
        for a, b in elements:
            _check_pair(a, b, basis)
            mask[a, b] = True
    needed = np.any(weights[mask] != 0, axis=0)
    table = np.zeros((n, n))
    for i, k in zip(*np.nonzero(needed)):
        table[i, k] = backend.expectation(int(i), int(k), "mseqpt")
    f = np.where(mask, np.einsum("abik,ik->ab", weights, table), 0)
    chi = np.where(mask, ((d + 1) * f - np.eye(n)) / d, 0)
    stderr = np.zeros((n, n))
    if backend.mode != "ideal":
        for a, b in zip(*np.nonzero(mask)):
            w = weights[a, b]
            terms = {("E", int(i), int(k)): w[i, k] for i, k in zip(*np.nonzero(w))}
            stderr[a, b] = (d + 1) / d * backend.standard_error(terms)
    return ChiEstimate(chi, mask, stderr, "mseqpt", backend.ledger.snapshot(), survival=f)


@lru_cache(maxsize=4)
def _qpt_system(basis: OperatorBasis) -> np.ndarray:
    """``A[(i, k), (a, b)] = Tr[E_k E_a E_i E_b^dag]``."""
    els = basis.elements
    n = els.shape[0]
    edag = els.conj().transpose(0, 2, 1)
    ea_ei = np.einsum("axy,iyz->aixz", els, els)
    ek_ea_ei = np.einsum("kwx,aixz->kaiwz", els, ea_ei)
    a = np.einsum("kaiwz,bzw->ikab", ek_ea_ei, edag)
    return a.reshape(n * n, n * n)


def standard_qpt(basis: OperatorBasis, backend: MeasurementBackend, residual_tol: float = 1e-10) -> ChiEstimate:
    """Full chi by inverting output-state tomography of every basis preparation.

    Each non-identity ``E_i`` is prepared and its output fully tomographed
    (all ``Tr[E_k L(E_i)]``); the linear map ``chi -> {Tr[E_k L(E_i)]}`` is
    then inverted by least squares.
    """
    n = len(basis)
    table = np.array([[backend.expectation(i, k, "qpt") for k in range(n)] for i in range(n)])
    system = _qpt_system(basis)
    sol, _, rank, _ = np.linalg.lstsq(system, table.reshape(-1).astype(complex), rcond=None)
    if rank < n * n:
        raise np.linalg.LinAlgError(f"process tomography system is singular (rank {rank} < {n * n})")
    resid = np.max(np.abs(system @ sol - table.reshape(-1)))
    if resid > residual_tol * max(1.0, np.max(np.abs(table))):
        raise np.linalg.LinAlgError(f"least-squares residual {resid:.3g} exceeds tolerance")
    chi = sol.reshape(n, n)
    stderr = np.zeros((n, n))
    if backend.mode != "ideal":
        inv = np.linalg.pinv(system)
        keys = [("E", i, k) for i in range(n) for k in range(n)]
        for row in range(n * n):
            stderr.flat[row] = backend.standard_error(dict(zip(keys, inv[row])))
    return ChiEstimate(chi, _full_mask(n), stderr, "qpt", backend.ledger.snapshot())


def seqpt_element(a: int, b: int, design: DesignSet, backend: MeasurementBackend) -> ElementEstimate:
    """One ``chi_ab`` from survival probabilities of prepared combination states.

    For ``a != b`` four states are prepared per design state: the
    normalised ``(E_a + s E_b)^dag rho_j (E_a + s E_b)`` for ``s`` in
    ``{1, -1, i, -i}``. Their trace is carried as a classical weight, so with
    ``P_s = Tr(M_s) Tr[rho_j L(M_s / Tr M_s)]``

        Re f_j = (P_1 - P_-1) / 4,    Im f_j = -(P_i - P_-i) / 4.

    For ``a == b`` the state ``E_a^dag rho_j E_a`` is prepared directly and the
    imaginary part is not requested.

    The ledger charges one preparation per ``(j, s)`` setting, even when two
    settings happen to produce the same physical state.
    """
    basis = backend.basis
    _check_pair(a, b, basis)
    if design.dimension != basis.dimension:
        raise DimensionError("design and backend dimensions differ")
    d = basis.dimension
    ea, eb = basis[a], basis[b]
    weights: dict = {}
    total = 0j
    signs = (1, -1, 1j, -1j) if a != b else (None,)
    for j, rho in enumerate(design.projectors):
        for s in signs:
            if s is None:
                m = ea.conj().T @ rho @ ea
                factor = 1.0
            else:
                op = ea + s * eb
                m = op.conj().T @ rho @ op
                factor = {1: 0.25, -1: -0.25, 1j: -0.25j, -1j: 0.25j}[s]
            weight = float(np.real(np.trace(m)))
            setting = ("seqpt", a, b, j, str(s))
            if weight < ZERO_COEFF:
                # the combination vanishes for this design state; the setting is still charged
                backend.ledger.record("seqpt", setting)
                continue
            sigma = m / weight
            p = backend.survival_probability(sigma, rho, "seqpt", setting=setting)
            coef = factor * weight
            total += coef * p
            key = backend.survival_key(sigma, rho)
            weights[key] = weights.get(key, 0) + coef / len(design)
    f = total / len(design)
    err = backend.standard_error(weights)
    return ElementEstimate(a, b, f, chi_from_survival(f, a, b, d), (d + 1) / d * err)


def seqpt_full(design: DesignSet, backend: MeasurementBackend, elements=None) -> ChiEstimate:
    n = len(backend.basis)
    pairs = [(a, b) for a in range(n) for b in range(n)] if elements is None else list(elements)
    chi = np.zeros((n, n), dtype=complex)
    mask = np.zeros((n, n), dtype=bool)
    stderr = np.zeros((n, n))
    survival = np.zeros((n, n), dtype=complex)
    for a, b in pairs:
        est = seqpt_element(a, b, design, backend)
        chi[a, b], stderr[a, b], survival[a, b] = est.chi, est.stderr, est.survival
        mask[a, b] = True
    return ChiEstimate(chi, mask, stderr, "seqpt", backend.ledger.snapshot(), survival=survival)
