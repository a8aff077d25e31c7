import numpy as np
import pytest

from mseqpt.channels import make_gate
from mseqpt.designs import (
    DesignSet,
    build_mub_design,
    check_mub,
    design_average,
    nonzero_coefficient_counts,
    overlap_table,
    state_coefficients,
    verify_2design,
)


def test_shape_and_labels(design4):
    assert design4.K == 20
    assert design4.labels[0] == (1, 1)
    assert design4.labels[-1] == (5, 4)
    assert [lab[0] for lab in design4.labels] == [b for b in range(1, 6) for _ in range(4)]


def test_named_states(design4):
    np.testing.assert_allclose(design4.state(1, 3), [0, 0, 1, 0])
    np.testing.assert_allclose(design4.state(3, 1), np.array([1, 1j, 1j, -1]) / 2)
    np.testing.assert_allclose(design4.state(2, 1), np.full(4, 0.5))
    np.testing.assert_allclose(design4.state(4, 3), np.array([1, 1, 1j, -1j]) / 2)


def test_all_plus_coefficients(design4, basis2):
    e = state_coefficients(design4, basis2)
    j = design4.labels.index((2, 1))
    frozen = np.zeros(16)
    frozen[[0, 1, 4, 5]] = 0.25  # (I + X)(I + X) / 4
    np.testing.assert_allclose(e[j], frozen, atol=1e-15)


def test_y_product_state_coefficients(design4, basis2):
    e = state_coefficients(design4, basis2)
    j = design4.labels.index((3, 1))
    frozen = np.zeros(16)
    frozen[[0, 2, 8, 10]] = 0.25
    np.testing.assert_allclose(e[j], frozen, atol=1e-15)


def test_overlaps(design4):
    ov = overlap_table(design4)
    cross = [ov[p, q] for p in range(20) for q in range(20) if p // 4 < q // 4]
    assert len(cross) == 160
    assert max(abs(x - 0.25) for x in cross) < 1e-12
    for b in range(5):
        block = ov[4 * b:4 * b + 4, 4 * b:4 * b + 4]
        np.testing.assert_allclose(block, np.eye(4), atol=1e-12)


def test_unrepaired_vector_is_rejected(design4):
    states = np.array(design4.states)
    states[design4.labels.index((4, 3))] = np.array([1, 1, -1j, -1j]) / 2
    with pytest.raises(ValueError):
        check_mub(DesignSet(4, states, design4.labels))


def test_single_qubit_design():
    d2 = build_mub_design(2)
    assert d2.K == 6
    ov = overlap_table(d2)
    assert abs(ov[0, 2] - 0.5) < 1e-12 and abs(ov[2, 4] - 0.5) < 1e-12


def test_unsupported_dimension():
    with pytest.raises(ValueError):
        build_mub_design(3)


def test_nonzero_counts(design4, basis2):
    counts = nonzero_coefficient_counts(design4, basis2)
    assert counts["with_identity"] == [4] * 20
    assert counts["without_identity"] == [3] * 20


def test_json_round_trip(design4):
    back = DesignSet.from_json(design4.to_json())
    np.testing.assert_array_equal(back.states, design4.states)
    assert back.labels == design4.labels


def test_states_are_read_only(design4):
    with pytest.raises(ValueError):
        design4.states[0, 0] = 0


def test_noop_design_average(design4, basis2):
    # for the identity channel chi = delta_a0 delta_b0, so F_00 = 1 and F_33 = 1/5
    noop = make_gate("NOOP")
    assert design_average(design4, noop, 0, 0, basis2) == pytest.approx(1.0)
    assert design_average(design4, noop, 3, 3, basis2) == pytest.approx(0.2)
    assert abs(design_average(design4, noop, 3, 5, basis2)) < 1e-15


def test_verify_2design(design4):
    report = verify_2design(design4, trials=20, seed=4)
    assert report.trials == 20
    assert report.max_deviation < 1e-9
