"""Fidelity, physicality projection and report serialisation."""
from __future__ import annotations

import csv
import datetime as _dt
import hashlib
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .estimators import ChiEstimate

SCHEMA_VERSION = 1


class ValidationError(RuntimeError):
    """A numerical result failed a post-run sanity check."""


def fidelity(chi_expt, chi_theo, mask=None) -> float:
    """``|Tr[chi_e chi_t^dag]| / sqrt(Tr[chi_e^dag chi_e] Tr[chi_t^dag chi_t])``.

    With ``mask`` only the selected entries enter the Hilbert-Schmidt products,
    which scores a partial (selective) estimate against the same entries of
    the reference.
    """
    e = np.asarray(chi_expt, dtype=complex)
    t = np.asarray(chi_theo, dtype=complex)
    if e.shape != t.shape:
        raise ValueError(f"shape mismatch {e.shape} vs {t.shape}")
    if mask is not None:
        e, t = e[mask], t[mask]
    overlap = np.vdot(t, e)  # = Tr[chi_e chi_t^dag]
    norm = np.sqrt(np.vdot(e, e).real * np.vdot(t, t).real)
    if norm == 0:
        raise ValueError("fidelity is undefined for a zero-norm chi matrix")
    return float(min(abs(overlap) / norm, 1.0))


def hermitize(chi) -> np.ndarray:
    chi = np.asarray(chi, dtype=complex)
    return (chi + chi.conj().T) / 2


def project_physical(chi) -> tuple[np.ndarray, float]:
    """Nearest-by-construction physical chi: Hermitise, clip negative eigenvalues, unit trace.

    Returns the projected matrix and the total clipped eigenvalue weight.
    """
    h = hermitize(chi)
    evals, evecs = np.linalg.eigh(h)
    clipped = max(0.0, float(-evals[evals < 0].sum()))
    evals = np.clip(evals, 0, None)
    if evals.sum() <= 0:
        n = h.shape[0]
        return np.eye(n, dtype=complex) / n, clipped
    evals = evals / evals.sum()
    return (evecs * evals) @ evecs.conj().T, clipped


# grids ------------------------------------------------------------------


def _grid(m) -> list[list[float]]:
    return [[float(x) for x in row] for row in np.asarray(m)]


def write_chi_csv(path, values, labels) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([""] + list(labels))
        for label, row in zip(labels, np.asarray(values)):
            writer.writerow([label] + [repr(float(x)) for x in row])


def read_chi_csv(path) -> tuple[list[str], np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    labels = rows[0][1:]
    return labels, np.array([[float(x) for x in r[1:]] for r in rows[1:]])


def bar_rows(chi, mask) -> list[tuple[int, int, float, float]]:
    return [(int(a), int(b), float(chi[a, b].real), float(chi[a, b].imag)) for a, b in zip(*np.nonzero(mask))]


def write_bar_csv(path, chi, mask) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["index_a", "index_b", "re", "im"])
        for a, b, re, im in bar_rows(chi, mask):
            writer.writerow([a, b, repr(re), repr(im)])


def read_bar_csv(path, n: int) -> tuple[np.ndarray, np.ndarray]:
    chi = np.zeros((n, n), dtype=complex)
    mask = np.zeros((n, n), dtype=bool)
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            a, b = int(row["index_a"]), int(row["index_b"])
            chi[a, b] = complex(float(row["re"]), float(row["im"]))
            mask[a, b] = True
    return chi, mask


# report -----------------------------------------------------------------


@dataclass
class TomographyReport:
    estimate: ChiEstimate
    reference: np.ndarray
    labels: tuple[str, ...]
    config: dict
    seed: int
    channel_name: str = ""
    partial: bool = False
    error: str | None = None
    timestamp: str = field(default_factory=lambda: _dt.datetime.now(_dt.timezone.utc).isoformat())

    @property
    def fidelity(self) -> float | None:
        if not self.estimate.mask.any():
            return None
        return fidelity(self.estimate.chi, self.reference, self.estimate.mask)

    @property
    def is_full(self) -> bool:
        return bool(self.estimate.mask.all())

    def physical(self) -> tuple[np.ndarray, float] | None:
        return project_physical(self.estimate.chi) if self.is_full else None

    def config_hash(self) -> str:
        """Digest of the experiment settings; output location and format are excluded."""
        settings = {k: v for k, v in self.config.items() if k not in ("out_dir", "format")}
        canon = json.dumps(settings, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()

    def validate(self) -> None:
        f = self.fidelity
        if f is not None and not (0.0 <= f <= 1.0 + 1e-12):
            raise ValidationError(f"fidelity {f} outside [0, 1]")
        if not np.all(np.isfinite(self.estimate.chi)):
            raise ValidationError("estimate contains non-finite entries")

    def to_dict(self, include_timestamp: bool = True) -> dict:
        est = self.estimate
        out = {
            "schema_version": SCHEMA_VERSION,
            "config": self.config,
            "config_hash": self.config_hash(),
            "seed": self.seed,
            "channel": self.channel_name,
            "protocol": est.protocol,
            "labels": list(self.labels),
            "partial": self.partial,
            "error": self.error,
            "estimate": {"re": _grid(est.chi.real), "im": _grid(est.chi.imag)},
            "mask": est.mask.astype(int).tolist(),
            "stderr": _grid(est.stderr),
            "reference": {"re": _grid(self.reference.real), "im": _grid(self.reference.imag)},
            "fidelity": self.fidelity,
            "ledger": est.ledger,
        }
        if self.is_full:
            phys, clipped = self.physical()
            out["hermiticity_defect"] = float(np.max(np.abs(est.chi - est.chi.conj().T)))
            out["physical"] = {
                "re": _grid(phys.real),
                "im": _grid(phys.imag),
                "clipped_weight": clipped,
                "fidelity": fidelity(phys, self.reference),
            }
        if include_timestamp:
            out["timestamp"] = self.timestamp
        return out

    def to_json(self, include_timestamp: bool = True) -> str:
        return json.dumps(self.to_dict(include_timestamp), indent=2, sort_keys=True)

    def write(self, out_dir, fmt: str = "both", expectations_csv: str | None = None) -> list[Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        written = []
        if fmt in ("json", "both"):
            p = out / "report.json"
            p.write_text(self.to_json() + "\n")
            written.append(p)
        if fmt in ("csv", "both"):
            for name, values in (("chi_real.csv", self.estimate.chi.real), ("chi_imag.csv", self.estimate.chi.imag)):
                write_chi_csv(out / name, values, self.labels)
                written.append(out / name)
            write_bar_csv(out / "chi_bars.csv", self.estimate.chi, self.estimate.mask)
            written.append(out / "chi_bars.csv")
            if expectations_csv:
                (out / "expectations.csv").write_text(expectations_csv)
                written.append(out / "expectations.csv")
        return written


def format_summary(report: TomographyReport) -> str:
    buf = io.StringIO()
    est = report.estimate
    buf.write(f"channel   : {report.channel_name}\n")
    buf.write(f"protocol  : {est.protocol}\n")
    buf.write(f"elements  : {int(est.mask.sum())} of {est.mask.size}\n")
    f = report.fidelity
    buf.write(f"fidelity  : {'n/a' if f is None else f'{f:.6f}'}\n")
    if report.is_full:
        phys, clipped = report.physical()
        buf.write(f"projected : {fidelity(phys, report.reference):.6f} (clipped weight {clipped:.3g})\n")
    for proto, c in est.ledger.items():
        buf.write(f"ledger    : {proto} preparations={c['preparations']} readouts={c['readouts']}"
                  f" acquisitions={c['acquisitions']}\n")
    if report.partial:
        buf.write(f"PARTIAL   : {report.error}\n")
    return buf.getvalue()
