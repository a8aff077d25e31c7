import numpy as np
import pytest

from helpers import random_density, random_hermitian
from mseqpt.channels import amplitude_damping, make_gate
from mseqpt.measurement import (
    READOUTS_PER_PREPARATION,
    MeasurementBackend,
    ResourceLedger,
    build_observable_map,
    magnetization,
    target_z,
)


def proj(bits):
    v = np.zeros(4)
    v[int(bits, 2)] = 1
    return np.outer(v, v)


def test_table_rows_cover_all_operators():
    rows = build_observable_map(2)
    assert [r.index for r in rows] == list(range(1, 16))
    assert rows[14].sequence == ("CNOT",)
    assert rows[11].sequence == () and rows[11].target == 1


def test_table_rows_on_random_hermitian(basis2, rng):
    rows = build_observable_map(2)
    for _ in range(100):
        rho = random_hermitian(rng, 4)
        for row in rows:
            lhs = np.trace(rho @ basis2[row.index])
            u = row.unitary
            rhs = np.trace(u @ rho @ u.conj().T @ target_z(row.target, 2))
            assert abs(lhs - rhs) < 1e-10


def test_single_qubit_rows():
    rows = build_observable_map(1)
    assert len(rows) == 3
    with pytest.raises(ValueError):
        build_observable_map(3)


def test_magnetization_of_states(basis2, rng):
    rows = build_observable_map(2)
    assert magnetization(proj("10"), rows[11]) == pytest.approx(-1)  # s1z on |10>
    assert magnetization(proj("10"), rows[2]) == pytest.approx(1)  # s2z on |10>
    for _ in range(20):
        rho = random_density(rng, 4)
        for row in rows:
            assert magnetization(rho, row) == pytest.approx(np.trace(rho @ basis2[row.index]).real, abs=1e-12)


def test_expectation_examples():
    noop = MeasurementBackend(make_gate("NOOP"))
    assert noop.expectation(3, 3) == pytest.approx(4)
    assert noop.expectation(3, 4) == pytest.approx(0)
    assert noop.expectation(0, 0) == 4
    assert noop.expectation(5, 0) == 0
    cnot = MeasurementBackend(make_gate("CNOT"))
    assert cnot.expectation(12, 15) == pytest.approx(0, abs=1e-15)
    # the controlled -iX flips s2z when qubit 1 is down: s2z -> s1z s2z
    assert cnot.expectation(3, 15) == pytest.approx(4)


def test_expectation_index_range():
    with pytest.raises(IndexError):
        MeasurementBackend(make_gate("NOOP")).expectation(16, 0)


def test_survival_examples():
    noop = MeasurementBackend(make_gate("NOOP"))
    assert noop.survival_probability(proj("00"), proj("00")) == pytest.approx(1)
    assert noop.survival_probability(proj("00"), proj("01")) == pytest.approx(0)
    cnot = MeasurementBackend(make_gate("CNOT_TEXTBOOK"))
    assert cnot.survival_probability(proj("10"), proj("11")) == pytest.approx(1)


def test_survival_rejects_non_positive():
    b = MeasurementBackend(make_gate("NOOP"))
    with pytest.raises(ValueError):
        b.survival_probability(np.diag([1, -0.5, 0, 0]), proj("00"))


def test_noisy_modes_match_ideal_at_large_scale(basis2):
    ch = make_gate("CH")
    ideal = MeasurementBackend(ch)
    gauss = MeasurementBackend(ch, mode="gaussian", sigma=0.0)
    for i in range(16):
        for k in range(16):
            assert gauss.expectation(i, k) == pytest.approx(ideal.expectation(i, k), abs=1e-12)


def test_signal_scale_is_removed():
    ch = amplitude_damping(0.4)
    ideal = MeasurementBackend(ch)
    weak = MeasurementBackend(ch, mode="gaussian", signal_scale=1e-3)
    for i, k in [(3, 3), (12, 12), (0, 12), (15, 3)]:
        assert weak.expectation(i, k) == pytest.approx(ideal.expectation(i, k), abs=1e-9)
    rho = proj("11")
    assert weak.survival_probability(rho, proj("01")) == pytest.approx(ideal.survival_probability(rho, proj("01")), abs=1e-9)


def test_reference_policy():
    assert MeasurementBackend(amplitude_damping(0.2)).measure_reference
    assert not MeasurementBackend(make_gate("CNOT")).measure_reference
    assert MeasurementBackend(make_gate("CNOT"), reference="always").measure_reference
    with pytest.raises(ValueError):
        MeasurementBackend(make_gate("CNOT"), reference="sometimes")


def test_shots_deterministic_and_order_independent():
    ch = make_gate("CNOT")
    a = MeasurementBackend(ch, mode="shots", shots=500, seed=9)
    b = MeasurementBackend(ch, mode="shots", shots=500, seed=9)
    keys = [(i, k) for i in range(1, 16) for k in range(1, 16)]
    first = {key: a.expectation(*key) for key in keys}
    second = {key: b.expectation(*key) for key in reversed(keys)}
    assert first == second
    c = MeasurementBackend(ch, mode="shots", shots=500, seed=10)
    assert any(c.expectation(*key) != first[key] for key in keys)


def test_stderr_of_single_readout():
    # |<E_k>| = 4 exactly -> zero binomial variance; zero signal -> 1/sqrt(N) per spin
    b = MeasurementBackend(make_gate("NOOP"), mode="shots", shots=10000, seed=0)
    b.expectation(3, 3)
    assert b.standard_error({("E", 3, 3): 1.0}) == 0.0
    b.expectation(3, 12)
    assert b.standard_error({("E", 3, 12): 1.0}) == pytest.approx(4 * 0.01, rel=0.01)


def test_validation_of_parameters():
    ch = make_gate("NOOP")
    with pytest.raises(ValueError):
        MeasurementBackend(ch, mode="shots")
    with pytest.raises(ValueError):
        MeasurementBackend(ch, mode="analog")
    with pytest.raises(ValueError):
        MeasurementBackend(ch, signal_scale=0)
    with pytest.raises(ValueError):
        MeasurementBackend(ch, sigma=-1)


def test_ledger_basics():
    led = ResourceLedger()
    for k in (1, 2, 3):
        led.record("mseqpt", ("basis", 4), k)
    led.record("mseqpt", ("basis", 4), 1)
    led.record("qpt", ("basis", 1))
    assert led.counts("mseqpt") == (1, READOUTS_PER_PREPARATION["mseqpt"])
    assert led.acquisitions("mseqpt") == 3
    assert led.snapshot()["qpt"] == {"preparations": 1, "readouts": 8, "acquisitions": 0}
    assert led.counts("seqpt") == (0, 0)


def test_export_csv():
    b = MeasurementBackend(make_gate("NOOP"))
    b.expectation(3, 3)
    lines = b.export_csv().splitlines()
    assert lines[0] == "i,k,value,stderr"
    assert lines[1] == "3,3,4.0,0.0"
