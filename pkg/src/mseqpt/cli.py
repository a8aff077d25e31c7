"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 numerical-validation failure.
"""
from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from .channels import InvalidChannelError
from .config import ConfigError, ExperimentConfig, apply_overrides, build_channel, load_config
from .designs import build_mub_design
from .estimators import ChiEstimate, mseqpt_full, seqpt_element, standard_qpt
from .measurement import MappingError, MeasurementBackend
from .operators import DimensionError, build_pauli_basis
from .reporting import TomographyReport, ValidationError, format_summary

log = logging.getLogger("mseqpt")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


def _seqpt(design, backend, pairs) -> tuple[ChiEstimate, str | None]:
    n = len(backend.basis)
    chi = np.zeros((n, n), dtype=complex)
    mask = np.zeros((n, n), dtype=bool)
    stderr = np.zeros((n, n))
    error = None
    for a, b in pairs:
        try:
            est = seqpt_element(a, b, design, backend)
        except (ValueError, RuntimeError) as exc:
            error = f"element ({a}, {b}): {exc}"
            break
        chi[a, b], stderr[a, b], mask[a, b] = est.chi, est.stderr, True
    return ChiEstimate(chi, mask, stderr, "seqpt", backend.ledger.snapshot()), error


def run(cfg: ExperimentConfig) -> tuple[TomographyReport, MeasurementBackend]:
    """Execute one configured experiment and return its report (not yet written)."""
    cfg.validate()
    channel = build_channel(cfg)
    if channel.dimension not in (2, 4):
        raise ConfigError(f"only one- and two-qubit channels are supported (D={channel.dimension})")
    basis = build_pauli_basis(channel.num_qubits)
    n = len(basis)
    pairs = cfg.selection(n)
    design = build_mub_design(channel.dimension)
    backend = MeasurementBackend(
        channel,
        mode=cfg.backend,
        shots=cfg.shots,
        sigma=cfg.sigma,
        seed=cfg.seed,
        signal_scale=cfg.signal_scale,
        reference=cfg.reference,
    )
    error = None
    if cfg.protocol == "mseqpt":
        estimate = mseqpt_full(design, basis, backend, elements=pairs)
    elif cfg.protocol == "qpt":
        estimate = standard_qpt(basis, backend)
        if pairs is not None:
            mask = np.zeros((n, n), dtype=bool)
            for a, b in pairs:
                mask[a, b] = True
            estimate.mask = mask
            estimate.chi = np.where(mask, estimate.chi, 0)
    else:
        all_pairs = pairs if pairs is not None else [(a, b) for a in range(n) for b in range(n)]
        estimate, error = _seqpt(design, backend, all_pairs)
    report = TomographyReport(
        estimate=estimate,
        reference=channel.chi(basis),
        labels=basis.labels,
        config=cfg.to_dict(),
        seed=cfg.seed,
        channel_name=channel.name,
        partial=error is not None,
        error=error,
    )
    return report, backend


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mseqpt", description="Selective chi-matrix tomography on a simulated NMR backend.")
    p.add_argument("config", nargs="?", help="flat key = value configuration file")
    p.add_argument("--channel", help="gate / noise spec, e.g. 'cnot' or 'ch+depolarizing:0.02'")
    p.add_argument("--unitary", help="JSON unitary matrix")
    p.add_argument("--kraus", help="JSON list of Kraus matrices")
    p.add_argument("--protocol", choices=("mseqpt", "qpt", "seqpt"))
    p.add_argument("--elements", help="'full' or 'a,b;a,b;...'")
    p.add_argument("--backend", choices=("ideal", "shots", "gaussian"))
    p.add_argument("--shots", type=int)
    p.add_argument("--sigma", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--signal-scale", dest="signal_scale", type=float)
    p.add_argument("--reference", choices=("auto", "always", "never"))
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument("--format", choices=("json", "csv", "both"))
    p.add_argument("-q", "--quiet", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(message)s")
    overrides = {k: v for k, v in vars(args).items() if k not in ("config", "quiet")}
    try:
        cfg = load_config(args.config) if args.config else ExperimentConfig()
        cfg = apply_overrides(cfg, overrides)
        report, backend = run(cfg)
        report.validate()
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except OSError as exc:
        log.error("cannot read config: %s", exc)
        return EXIT_CONFIG
    except (InvalidChannelError, DimensionError, MappingError, ValidationError, np.linalg.LinAlgError) as exc:
        log.error("numerical validation failed: %s", exc)
        return EXIT_NUMERIC
    written = report.write(cfg.out_dir, cfg.format, expectations_csv=backend.export_csv())
    log.info(format_summary(report).rstrip())
    for path in written:
        log.info("wrote %s", path)
    return EXIT_NUMERIC if report.partial else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
