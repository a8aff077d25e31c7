"""Experiment configuration: flat ``key = value`` files plus command-line overrides.

Example::

    # CNOT under shot noise
    channel  = cnot
    protocol = mseqpt
    elements = full
    backend  = shots
    shots    = 10000
    seed     = 1

Exactly one of ``channel``, ``unitary`` or ``kraus`` must be given.
``channel`` is a ``+``-joined sequence (applied left to right) of gate names
(``noop``, ``cnot``, ``ch``, ``cnot_textbook``, ``ch_textbook``) and noise
terms ``depolarizing:p``, ``phase_damping:p[:qubit]`` and
``amplitude_damping:gamma[:qubit]``. ``unitary`` is a JSON matrix and
``kraus`` a JSON list of matrices; entries may be numbers, ``[re, im]``
pairs or strings such as ``"0.5-0.5j"``.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields

import numpy as np

from .channels import (
    BUILTIN_GATES,
    QuantumChannel,
    amplitude_damping,
    compose,
    depolarizing,
    make_gate,
    phase_damping,
)


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None, field: str | None = None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field '{field}'")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)
        self.line = line
        self.field = field


PROTOCOLS = ("mseqpt", "qpt", "seqpt")
BACKENDS = ("ideal", "shots", "gaussian")
FORMATS = ("json", "csv", "both")


@dataclass
class ExperimentConfig:
    channel: str | None = None
    unitary: str | None = None
    kraus: str | None = None
    protocol: str = "mseqpt"
    elements: str = "full"
    backend: str = "ideal"
    shots: int | None = None
    sigma: float = 0.0
    seed: int = 0
    signal_scale: float = 1.0
    reference: str = "auto"
    out_dir: str = "mseqpt-out"
    format: str = "both"

    def to_dict(self) -> dict:
        return asdict(self)

    def selection(self, n: int) -> list[tuple[int, int]] | None:
        """``None`` for the full matrix, otherwise the listed ``(a, b)`` pairs."""
        return parse_elements(self.elements, n)

    def validate(self, n: int | None = None) -> None:
        specs = [f for f in ("channel", "unitary", "kraus") if getattr(self, f)]
        if len(specs) != 1:
            raise ConfigError(f"exactly one of channel/unitary/kraus is required, got {specs or 'none'}")
        if self.protocol not in PROTOCOLS:
            raise ConfigError(f"unknown protocol {self.protocol!r}", field="protocol")
        if self.backend not in BACKENDS:
            raise ConfigError(f"unknown backend {self.backend!r}", field="backend")
        if self.format not in FORMATS:
            raise ConfigError(f"unknown format {self.format!r}", field="format")
        if self.backend == "shots" and (self.shots is None or self.shots < 1):
            raise ConfigError("shots backend needs a positive shot count", field="shots")
        if self.sigma < 0:
            raise ConfigError("sigma must be non-negative", field="sigma")
        if not 0 < self.signal_scale <= 1:
            raise ConfigError("signal_scale must lie in (0, 1]", field="signal_scale")
        if self.reference not in ("auto", "always", "never"):
            raise ConfigError(f"unknown reference policy {self.reference!r}", field="reference")
        if n is not None:
            self.selection(n)


_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}
_CASTS = {"shots": int, "seed": int, "sigma": float, "signal_scale": float}


def _coerce(key: str, value: str, line: int | None = None):
    if key not in _TYPES:
        raise ConfigError(f"unknown key {key!r}", line=line, field=key)
    cast = _CASTS.get(key)
    if cast is None:
        return value.strip()
    try:
        return cast(value)
    except ValueError:
        raise ConfigError(f"cannot parse {value!r} as {cast.__name__}", line=line, field=key) from None


def parse_config_text(text: str) -> ExperimentConfig:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError("expected 'key = value'", line=lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key in values:
            raise ConfigError("duplicate key", line=lineno, field=key)
        values[key] = _coerce(key, value, lineno)
    return ExperimentConfig(**values)


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        return parse_config_text(fh.read())


def apply_overrides(cfg: ExperimentConfig, overrides: dict) -> ExperimentConfig:
    data = cfg.to_dict()
    for key, value in overrides.items():
        if value is None:
            continue
        if key in ("channel", "unitary", "kraus"):
            data.update(channel=None, unitary=None, kraus=None)
        data[key] = _coerce(key, str(value)) if isinstance(value, str) else value
    return ExperimentConfig(**data)


def parse_elements(text: str, n: int) -> list[tuple[int, int]] | None:
    text = text.strip()
    if text.lower() == "full":
        return None
    pairs = []
    for chunk in filter(None, (c.strip() for c in text.split(";"))):
        try:
            a, b = (int(x) for x in chunk.split(","))
        except ValueError:
            raise ConfigError(f"bad element {chunk!r}; use 'a,b;a,b'", field="elements") from None
        if not (0 <= a < n and 0 <= b < n):
            raise ConfigError(f"element ({a}, {b}) out of range for {n}x{n} chi", field="elements")
        pairs.append((a, b))
    if not pairs:
        raise ConfigError("empty element selection", field="elements")
    return pairs


def _entry(x) -> complex:
    if isinstance(x, str):
        return complex(x.replace(" ", ""))
    if isinstance(x, (list, tuple)):
        if len(x) != 2:
            raise ValueError("complex pairs must be [re, im]")
        return complex(x[0], x[1])
    return complex(x)


def parse_matrix(obj) -> np.ndarray:
    return np.array([[_entry(x) for x in row] for row in obj], dtype=complex)


def _noise(name: str, args: list[str]) -> QuantumChannel:
    nums = [float(a) for a in args]
    if name == "depolarizing":
        return depolarizing(nums[0], num_qubits=2)
    if name == "phase_damping":
        return phase_damping(nums[0], qubit=int(nums[1]) if len(nums) > 1 else 1)
    if name == "amplitude_damping":
        return amplitude_damping(nums[0], qubit=int(nums[1]) if len(nums) > 1 else 1)
    raise KeyError(name)


def build_channel(cfg: ExperimentConfig) -> QuantumChannel:
    if cfg.unitary:
        try:
            u = parse_matrix(json.loads(cfg.unitary))
        except (json.JSONDecodeError, TypeError, ValueError) as exc:
            raise ConfigError(str(exc), field="unitary") from None
        return QuantumChannel.from_unitary(u, name="unitary")
    if cfg.kraus:
        try:
            ops = [parse_matrix(m) for m in json.loads(cfg.kraus)]
        except (json.JSONDecodeError, TypeError, ValueError) as exc:
            raise ConfigError(str(exc), field="kraus") from None
        return QuantumChannel.from_kraus(ops, name="kraus")
    parts = []
    for term in cfg.channel.split("+"):
        name, *args = term.strip().split(":")
        key = name.strip().upper().replace("-", "_")
        if key in BUILTIN_GATES:
            parts.append(make_gate(key))
            continue
        try:
            parts.append(_noise(name.strip().lower(), args))
        except KeyError:
            raise ConfigError(f"unknown channel term {term!r}", field="channel") from None
        except (IndexError, ValueError) as exc:
            raise ConfigError(f"bad parameters in {term!r}: {exc}", field="channel") from None
    return parts[0] if len(parts) == 1 else compose(*parts)
