"""Simulated NMR readout: product-operator expectations via single-spin z magnetisation.

Every product operator ``E_k`` is read out by rotating the output state with a
fixed unitary ``U_k`` and detecting ``sigma_z`` of one spin, using
``Tr[rho E_k] = Tr[U_k rho U_k^dag sigma_z^(target)]``.

Preparations are deviation states. Basis operator ``E_i`` is prepared as
``I/D + eps E_i / D`` and a state ``sigma`` as ``(1 - eps) I/D + eps sigma``,
where ``eps`` is the ``signal_scale`` (pseudopure polarisation). The identity
part carries signal only when the channel is not unital; it is then measured
once per readout setting in a reference experiment and subtracted.

Returned values are linear in the raw single-spin means and the backend keeps
that linear form per query, so shot noise can be propagated exactly,
including the correlation introduced by the shared reference experiment.
"""
from __future__ import annotations

import csv
import hashlib
import io
import threading
from collections import defaultdict
from dataclasses import dataclass
from typing import Hashable, Mapping

import numpy as np

from .channels import QuantumChannel, apply, controlled, embed, rotation
from .operators import SX, SZ, DimensionError, build_pauli_basis, is_psd

#: readouts charged per preparation when reproducing the resource table
READOUTS_PER_PREPARATION = {"mseqpt": 4, "qpt": 8, "seqpt": 3}

_HALF_PI = np.pi / 2


class MappingError(RuntimeError):
    """An observable-to-magnetisation mapping row fails its defining identity."""


@dataclass(frozen=True)
class ObservableRow:
    """``<E_k> = Tr[U_k rho U_k^dag sigma_z^(target)]``.

    ``sequence`` lists the named pulses as written, leftmost applied last:
    ``("CNOT", "-X2", "Y1")`` means ``CNOT . Xbar_2 . Y_1``.
    """

    index: int
    target: int
    sequence: tuple[str, ...]
    unitary: np.ndarray


# Two-qubit readout table; a leading "-" is the barred (negative) phase.
_TWO_QUBIT_ROWS = {
    1: (2, ("-Y2",)),
    2: (2, ("X2",)),
    3: (2, ()),
    4: (1, ("-Y1",)),
    5: (2, ("CNOT", "Y2", "Y1")),
    6: (2, ("CNOT", "-X2", "Y1")),
    7: (2, ("CNOT", "-Y1")),
    8: (1, ("X1",)),
    9: (2, ("CNOT", "-Y2", "X1")),
    10: (2, ("CNOT", "-X2", "-X1")),
    11: (2, ("CNOT", "X1")),
    12: (1, ()),
    13: (2, ("CNOT", "-Y2")),
    14: (2, ("CNOT", "X2")),
    15: (2, ("CNOT",)),
}

_ONE_QUBIT_ROWS = {
    1: (1, ("-Y1",)),
    2: (1, ("X1",)),
    3: (1, ()),
}


def _pulse(token: str, num_qubits: int) -> np.ndarray:
    if token == "CNOT":
        if num_qubits != 2:
            raise ValueError("CNOT readout pulses need two qubits")
        return controlled(-1j * SX)
    sign = "-" if token.startswith("-") else ""
    body = token.lstrip("-")
    axis, spin = body[0].lower(), int(body[1:])
    return embed(rotation(sign + axis, _HALF_PI), spin, num_qubits)


def _sequence_unitary(sequence: tuple[str, ...], num_qubits: int) -> np.ndarray:
    u = np.eye(2**num_qubits, dtype=complex)
    for token in sequence:
        u = u @ _pulse(token, num_qubits)
    return u


def target_z(target: int, num_qubits: int) -> np.ndarray:
    return embed(SZ, target, num_qubits)


def build_observable_map(num_qubits: int = 2) -> tuple[ObservableRow, ...]:
    """Readout rows for every non-identity product operator, verified on construction.

    Each row is checked through the operator identity
    ``U_k^dag sigma_z^(target) U_k = E_k``, which is equivalent to the
    expectation identity holding for every ``rho``.
    """
    table = {1: _ONE_QUBIT_ROWS, 2: _TWO_QUBIT_ROWS}.get(num_qubits)
    if table is None:
        raise ValueError(f"readout mapping is defined for 1 or 2 qubits, not {num_qubits}")
    basis = build_pauli_basis(num_qubits)
    rows, bad = [], []
    for k, (target, seq) in sorted(table.items()):
        u = _sequence_unitary(seq, num_qubits)
        heis = u.conj().T @ target_z(target, num_qubits) @ u
        if np.max(np.abs(heis - basis[k])) > 1e-10:
            bad.append(k)
        u.setflags(write=False)
        rows.append(ObservableRow(k, target, seq, u))
    if bad:
        raise MappingError(f"readout rows {bad} do not map onto their product operators")
    return tuple(rows)


def magnetization(state: np.ndarray, row: ObservableRow) -> float:
    """Exact ``<sigma_z>`` of the target spin after the readout rotation."""
    n = int(round(np.log2(state.shape[0])))
    rotated = row.unitary @ state @ row.unitary.conj().T
    diag = np.real(np.diag(rotated))
    # bit of the target spin in each computational basis label (qubit 1 most significant)
    bits = (np.arange(state.shape[0]) >> (n - row.target)) & 1
    p_up = float(np.clip(diag[bits == 0].sum(), 0.0, 1.0))
    return 2.0 * p_up - 1.0


class ResourceLedger:
    """Distinct preparations and readout acquisitions, per protocol.

    ``readouts`` uses the per-preparation accounting constants of
    :data:`READOUTS_PER_PREPARATION`; ``acquisitions`` is the number of
    distinct (preparation, readout setting) experiments actually simulated.
    Both only ever grow.
    """

    def __init__(self):
        self._lock = threading.Lock()
        self._preps: dict[str, set] = defaultdict(set)
        self._acq: dict[str, set] = defaultdict(set)

    def record(self, protocol: str, preparation: Hashable, setting: Hashable | None = None) -> None:
        with self._lock:
            self._preps[protocol].add(preparation)
            if setting is not None:
                self._acq[protocol].add((preparation, setting))

    def preparations(self, protocol: str) -> int:
        return len(self._preps.get(protocol, ()))

    def readouts(self, protocol: str) -> int:
        return self.preparations(protocol) * READOUTS_PER_PREPARATION.get(protocol, 1)

    def acquisitions(self, protocol: str) -> int:
        return len(self._acq.get(protocol, ()))

    def counts(self, protocol: str) -> tuple[int, int]:
        return self.preparations(protocol), self.readouts(protocol)

    def snapshot(self) -> dict:
        protocols = sorted(set(self._preps) | set(self._acq))
        return {
            p: {
                "preparations": self.preparations(p),
                "readouts": self.readouts(p),
                "acquisitions": self.acquisitions(p),
            }
            for p in protocols
        }


def _matrix_digest(*ms: np.ndarray) -> tuple[int, ...]:
    h = hashlib.blake2b(digest_size=16)
    for m in ms:
        h.update(np.round(np.asarray(m, dtype=complex), 12).tobytes())
    raw = h.digest()
    return tuple(int.from_bytes(raw[i:i + 4], "little") for i in range(0, 16, 4))


class MeasurementBackend:
    """Expectation values ``Tr[E_k L(E_i)]`` and survival probabilities for one channel.

    Parameters
    ----------
    channel : QuantumChannel
        The process under test.
    mode : {"ideal", "shots", "gaussian"}
        ``ideal`` returns exact traces. ``shots`` draws ``shots`` projective
        +-1 outcomes per acquisition. ``gaussian`` adds ``N(0, sigma)`` to each
        exact single-spin magnetisation.
    seed : int
        Root seed. Each acquisition draws from its own stream derived as
        ``SeedSequence(seed, spawn_key=key)``, so results do not depend on
        query order.
    signal_scale : float
        Deviation (polarisation) fraction ``eps`` of every preparation.
    reference : {"auto", "always", "never"}
        When to run the identity-preparation reference experiment. ``auto``
        runs it only for non-unital channels; ``never`` assumes the identity
        part carries no signal.
    """

    MODES = ("ideal", "shots", "gaussian")

    def __init__(
        self,
        channel: QuantumChannel,
        mode: str = "ideal",
        shots: int | None = None,
        sigma: float = 0.0,
        seed: int = 0,
        signal_scale: float = 1.0,
        reference: str = "auto",
    ):
        if mode not in self.MODES:
            raise ValueError(f"unknown backend mode {mode!r}")
        if mode == "shots" and (shots is None or int(shots) < 1):
            raise ValueError("shots mode needs a positive number of shots")
        if sigma < 0:
            raise ValueError("sigma must be non-negative")
        if not 0 < signal_scale <= 1:
            raise ValueError("signal_scale must lie in (0, 1]")
        if reference not in ("auto", "always", "never"):
            raise ValueError(f"unknown reference policy {reference!r}")
        self.channel = channel
        self.mode = mode
        self.shots = int(shots) if shots is not None else None
        self.sigma = float(sigma)
        self.seed = int(seed)
        self.signal_scale = float(signal_scale)
        self.num_qubits = channel.num_qubits
        self.dimension = channel.dimension
        self.basis = build_pauli_basis(self.num_qubits)
        self.ledger = ResourceLedger()
        if reference == "auto":
            self.measure_reference = not channel.is_unital()
        else:
            self.measure_reference = reference == "always"
        self.rows = build_observable_map(self.num_qubits) if mode != "ideal" else None
        self._lock = threading.Lock()
        # raw acquisition key -> (mean, variance of the mean)
        self._raw: dict[tuple, tuple[float, float]] = {}
        # query key -> (value, {raw key: coefficient})
        self._queries: dict[tuple, tuple[float, dict]] = {}

    # raw acquisitions ------------------------------------------------------

    def _acquire(self, key: tuple, state: np.ndarray, k: int) -> tuple[float, float]:
        with self._lock:
            hit = self._raw.get(key)
        if hit is not None:
            return hit
        row = self.rows[k - 1]
        exact = magnetization(apply(self.channel, state), row)
        rng = np.random.default_rng(np.random.SeedSequence(self.seed, spawn_key=key))
        if self.mode == "shots":
            p_up = (1.0 + exact) / 2.0
            ups = rng.binomial(self.shots, p_up)
            mean = 2.0 * ups / self.shots - 1.0
            var = (1.0 - mean * mean) / self.shots
        else:
            mean = exact + (rng.normal(0.0, self.sigma) if self.sigma > 0 else 0.0)
            var = self.sigma**2
        with self._lock:
            self._raw.setdefault(key, (mean, var))
            return self._raw[key]

    def _reference_form(self, k: int, protocol: str) -> tuple[float, dict]:
        """``Tr[E_k L(I)]`` as (value, linear form over raw keys)."""
        d = self.dimension
        if not self.measure_reference:
            return 0.0, {}
        self.ledger.record(protocol, ("basis", 0), k)
        if self.mode == "ideal":
            return float(np.real(np.trace(self.basis[k] @ apply(self.channel, np.eye(d))))), {}
        key = (0, 0, k)
        mean, _ = self._acquire(key, np.eye(d, dtype=complex) / d, k)
        return d * mean, {key: d}

    def _store(self, qkey: tuple, value: float, form: dict) -> float:
        with self._lock:
            self._queries.setdefault(qkey, (value, form))
            return self._queries[qkey][0]

    # public queries --------------------------------------------------------

    def _check_index(self, idx: int, name: str) -> None:
        if not 0 <= idx < self.dimension**2:
            raise IndexError(f"{name}={idx} out of range for dimension {self.dimension}")

    def expectation(self, i: int, k: int, protocol: str = "mseqpt") -> float:
        """``Tr[E_k L(E_i)]`` in raw-trace units (``Tr[E_k E_k] = D``).

        ``k = 0`` is answered from trace preservation and ``i = 0`` from the
        reference experiment (zero for unital channels).
        """
        self._check_index(i, "i")
        self._check_index(k, "k")
        d = self.dimension
        if k == 0:
            return float(d) if i == 0 else 0.0
        qkey = ("E", i, k)
        with self._lock:
            hit = self._queries.get(qkey)
        if i == 0:
            value, form = self._reference_form(k, protocol)
            return hit[0] if hit else self._store(qkey, value, form)
        self.ledger.record(protocol, ("basis", i), k)
        if hit is not None:
            return hit[0]
        if self.mode == "ideal":
            value = float(np.real(np.trace(self.basis[k] @ apply(self.channel, self.basis[i]))))
            return self._store(qkey, value, {})
        eps = self.signal_scale
        state = (np.eye(d) + eps * self.basis[i]) / d
        if not is_psd(state):
            raise ValueError(f"prepared state for E_{i} is not positive")
        key = (0, i, k)
        mean, _ = self._acquire(key, state, k)
        ref_value, ref_form = self._reference_form(k, protocol)
        value = (d * mean - ref_value) / eps
        form = {key: d / eps}
        for rk, c in ref_form.items():
            form[rk] = form.get(rk, 0.0) - c / eps
        return self._store(qkey, value, form)

    def survival_key(self, sigma, rho) -> tuple:
        return ("S",) + _matrix_digest(sigma, rho)

    def survival_probability(self, sigma, rho, protocol: str = "seqpt", setting: Hashable | None = None) -> float:
        """``Tr[rho L(sigma)]`` for a prepared state ``sigma`` (normalised to unit trace).

        The projection ``rho`` is evaluated from its product-operator
        expansion, one readout per nonzero non-identity coefficient.
        ``setting`` names the preparation in the ledger; by default the
        physical state itself is the key, so identical states count once.
        """
        sigma = np.asarray(sigma, dtype=complex)
        rho = np.asarray(rho, dtype=complex)
        d = self.dimension
        if sigma.shape != (d, d) or rho.shape != (d, d):
            raise DimensionError("survival probability operands must match the channel dimension")
        tr = np.trace(sigma).real
        if tr <= 0 or not is_psd(sigma):
            raise ValueError("prepared operator is not a positive state")
        sigma = sigma / tr
        qkey = self.survival_key(sigma, rho)
        coeffs = np.real(np.einsum("ab,kba->k", rho, self.basis.elements)) / d
        support = [k for k in range(1, d * d) if abs(coeffs[k]) > 1e-12]
        for k in support:
            self.ledger.record(protocol, qkey if setting is None else setting, k)
        with self._lock:
            hit = self._queries.get(qkey)
        if hit is not None:
            return hit[0]
        if self.mode == "ideal":
            value = float(np.real(np.trace(rho @ apply(self.channel, sigma))))
            return self._store(qkey, value, {})
        eps = self.signal_scale
        prepared = (1 - eps) * np.eye(d) / d + eps * sigma
        # identity term: e_0 Tr[L(sigma)] = e_0 for a trace-preserving channel
        value = coeffs[0]
        form: dict = {}
        for k in support:
            key = (1,) + qkey[1:] + (k,)
            mean, _ = self._acquire(key, prepared, k)
            ref_value, ref_form = self._reference_form(k, protocol)
            # mean = (1 - eps) Tr[E_k L(I)] / D + eps Tr[E_k L(sigma)]
            s_k = (mean - (1 - eps) * ref_value / d) / eps
            value += coeffs[k] * s_k
            form[key] = form.get(key, 0.0) + coeffs[k] / eps
            for rk, c in ref_form.items():
                form[rk] = form.get(rk, 0.0) - coeffs[k] * (1 - eps) * c / (d * eps)
        return self._store(qkey, float(value), form)

    # error propagation and export -----------------------------------------

    def standard_error(self, weights: Mapping[tuple, complex]) -> float:
        """RMS error of ``sum_q w_q value_q`` over query keys, from shot statistics.

        Query keys are ``("E", i, k)`` for expectations and
        :meth:`survival_key` results for survival probabilities.
        """
        total: dict[tuple, complex] = defaultdict(complex)
        with self._lock:
            for qkey, w in weights.items():
                if w == 0 or qkey not in self._queries:
                    continue
                for rk, c in self._queries[qkey][1].items():
                    total[rk] += w * c
            var = sum(abs(c) ** 2 * self._raw[rk][1] for rk, c in total.items())
        return float(np.sqrt(var))

    def expectation_table(self) -> list[tuple[int, int, float, float]]:
        rows = []
        for qkey in sorted(q for q in self._queries if q[0] == "E"):
            value = self._queries[qkey][0]
            rows.append((qkey[1], qkey[2], value, self.standard_error({qkey: 1.0})))
        return rows

    def export_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["i", "k", "value", "stderr"])
        for i, k, value, err in self.expectation_table():
            writer.writerow([i, k, repr(value), repr(err)])
        return buf.getvalue()
