import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import random_hermitian
from mseqpt.channels import make_gate
from mseqpt.estimators import mseqpt_full
from mseqpt.measurement import MeasurementBackend
from mseqpt.operators import is_psd
from mseqpt.reporting import (
    TomographyReport,
    ValidationError,
    fidelity,
    format_summary,
    project_physical,
    read_bar_csv,
    read_chi_csv,
)


def make_report(design4, basis2, name="CNOT", **kw):
    ch = make_gate(name)
    backend = MeasurementBackend(ch, **kw)
    est = mseqpt_full(design4, basis2, backend)
    return TomographyReport(est, ch.chi(basis2), basis2.labels, {"channel": name}, seed=kw.get("seed", 0),
                            channel_name=name), backend


def test_fidelity_values():
    a = np.diag([1.0, 0, 0, 0])
    b = np.diag([0.5, 0.5, 0, 0])
    assert fidelity(a, a) == pytest.approx(1)
    assert fidelity(a, b) == pytest.approx(0.5 / np.sqrt(0.5))
    assert fidelity(a, np.diag([0, 1.0, 0, 0])) == 0
    with pytest.raises(ValueError):
        fidelity(np.zeros((4, 4)), a)


def test_masked_fidelity():
    t = np.diag([1.0, 0, 0, 0])
    e = t + np.diag([0, 0, 0, 0.3])
    mask = np.zeros((4, 4), dtype=bool)
    mask[0, 0] = True
    assert fidelity(e, t, mask) == pytest.approx(1)
    assert fidelity(e, t) < 1


@settings(max_examples=40, deadline=None)
@given(st.floats(0.01, 100), st.floats(0.01, 100), st.integers(0, 2**31))
def test_fidelity_scale_invariant(s, r, seed):
    rng = np.random.default_rng(seed)
    a, b = random_hermitian(rng, 4), random_hermitian(rng, 4)
    assert fidelity(s * a, r * b) == pytest.approx(fidelity(a, b), abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31))
def test_projection_is_physical(seed):
    chi = random_hermitian(np.random.default_rng(seed), 16)
    phys, clipped = project_physical(chi)
    assert is_psd(phys, 1e-9)
    assert np.trace(phys).real == pytest.approx(1)
    assert clipped >= 0


def test_projection_keeps_physical_input(basis2):
    chi = make_gate("CH").chi(basis2)
    phys, clipped = project_physical(chi)
    np.testing.assert_allclose(phys, chi, atol=1e-12)
    assert clipped < 1e-12


def test_report_json_fields(design4, basis2):
    report, _ = make_report(design4, basis2)
    data = json.loads(report.to_json())
    assert data["schema_version"] == 1
    assert data["fidelity"] == pytest.approx(1)
    assert data["physical"]["fidelity"] == pytest.approx(1)
    assert data["ledger"]["mseqpt"]["preparations"] == 15
    assert len(data["labels"]) == 16
    assert "timestamp" in data
    assert "timestamp" not in json.loads(report.to_json(include_timestamp=False))


def test_report_deterministic(design4, basis2):
    kw = dict(mode="shots", shots=1000, seed=4)
    a, _ = make_report(design4, basis2, **kw)
    b, _ = make_report(design4, basis2, **kw)
    assert a.to_json(include_timestamp=False) == b.to_json(include_timestamp=False)


def test_report_files_round_trip(design4, basis2, tmp_path):
    report, backend = make_report(design4, basis2, "CH", mode="gaussian", sigma=0.01, seed=2)
    paths = report.write(tmp_path, "both", expectations_csv=backend.export_csv())
    assert {p.name for p in paths} == {"report.json", "chi_real.csv", "chi_imag.csv", "chi_bars.csv", "expectations.csv"}
    labels, re = read_chi_csv(tmp_path / "chi_real.csv")
    _, im = read_chi_csv(tmp_path / "chi_imag.csv")
    assert labels == list(basis2.labels)
    np.testing.assert_array_equal(re + 1j * im, report.estimate.chi)
    bars, mask = read_bar_csv(tmp_path / "chi_bars.csv", 16)
    assert mask.all()
    np.testing.assert_array_equal(bars, report.estimate.chi)


def test_json_only(design4, basis2, tmp_path):
    report, _ = make_report(design4, basis2, "NOOP")
    assert [p.name for p in report.write(tmp_path, "json")] == ["report.json"]


def test_validate_rejects_nan(design4, basis2):
    report, _ = make_report(design4, basis2, "NOOP")
    report.estimate.chi[2, 2] = np.nan
    with pytest.raises(ValidationError):
        report.validate()


def test_summary_mentions_ledger(design4, basis2):
    report, _ = make_report(design4, basis2)
    text = format_summary(report)
    assert "fidelity  : 1.000000" in text
    assert "preparations=15 readouts=60" in text
