"""Experiment configuration: flat key = value text with '#' comments.

The textual form is canonical (fixed key order, repr-formatted numbers), so
a config round-trips losslessly and its SHA-256 identifies an experiment.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, fields, replace
from fractions import Fraction
from pathlib import Path


class ConfigError(ValueError):
    """Malformed or inconsistent experiment configuration."""


PLANNERS = ("endpoint", "uniform", "single-step")
POTENTIALS = ("lj",)


def parse_rate(text: str) -> float:
    """Parse a contraction rate given as a fraction ('8/9') or decimal."""
    try:
        if "/" in text:
            return float(Fraction(text))
        return float(text)
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError(f"cannot parse rate {text!r}") from exc


@dataclass(frozen=True)
class ExperimentConfig:
    """All knobs of a chain experiment; defaults reproduce the standard
    demonstration (uncoarsened 7/7/3 chain, tension scale 2.76, rate 8/9)."""

    potential: str = "lj"
    M: int = 7
    N: int = 7
    K: int = 3
    scale: float = 2.76
    alpha: str = "8/9"
    epsilon: float = 1e-6
    planner: str = "endpoint"
    seed: int = 0

    def __post_init__(self):
        if self.potential not in POTENTIALS:
            raise ConfigError(f"unknown potential {self.potential!r}; choose from {POTENTIALS}")
        if self.planner not in PLANNERS:
            raise ConfigError(f"unknown planner {self.planner!r}; choose from {PLANNERS}")
        if not (1 <= self.N <= self.M):
            raise ConfigError(f"need 1 <= N <= M, got M={self.M} N={self.N}")
        if not (0 <= self.K <= self.N - 1):
            raise ConfigError(f"need 0 <= K <= N-1, got K={self.K} N={self.N}")
        if self.scale <= 0.0:
            raise ConfigError("load scale must be positive")
        if self.epsilon <= 0.0:
            raise ConfigError("epsilon must be positive")
        a = self.alpha_value       # parse eagerly so bad text fails at load
        if not (0.0 < a < 1.0):
            raise ConfigError(f"contraction rate must be in (0, 1), got {self.alpha!r}")

    @property
    def alpha_value(self) -> float:
        return parse_rate(self.alpha)

    def to_text(self) -> str:
        lines = ["# qclab experiment configuration"]
        for f in fields(self):
            v = getattr(self, f.name)
            lines.append(f"{f.name} = {v!r}" if isinstance(v, float) else f"{f.name} = {v}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "ExperimentConfig":
        known = {f.name: f for f in fields(cls)}
        values = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
            key, val = (part.strip() for part in line.split("=", 1))
            if key not in known:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
            ftype = known[key].type
            try:
                if ftype == "int":
                    values[key] = int(val)
                elif ftype == "float":
                    values[key] = float(val)
                else:
                    values[key] = val
            except ValueError as exc:
                raise ConfigError(f"line {lineno}: bad value for {key}: {val!r}") from exc
        return cls(**values)

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        return cls.from_text(Path(path).read_text())

    def override(self, **kwargs) -> "ExperimentConfig":
        kwargs = {k: v for k, v in kwargs.items() if v is not None}
        return replace(self, **kwargs)

    def sha256(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}
