"""Line-oriented ``key = value`` experiment configuration."""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .weights import Domain, RadialGrid, Weight

KINDS = ("constants", "expansion", "minimize", "eigen", "curve", "annulus", "certify",
         "family", "pohozaev")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    n: int = 3
    p0: float = 1.0
    beta: float = 0.0
    k: float = 2.0
    theta: str = "zero"
    theta_c: float = 0.0
    theta_m: float = 1.0
    domain: str = "ball"
    R: float = 1.0
    eps_hole: float = 0.0
    grid_M: int = 1024
    grid_ratio: float = 0.97

    def __post_init__(self):
        if self.theta not in ("zero", "power"):
            raise ConfigError(f"theta must be 'zero' or 'power' in a config file, got {self.theta!r}")
        if self.domain not in ("ball", "annulus"):
            raise ConfigError(f"domain must be 'ball' or 'annulus', got {self.domain!r}")
        try:
            self.weight()
            self.make_domain()
            self.grid()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def weight(self) -> Weight:
        return Weight(p0=self.p0, beta_k=self.beta, k=self.k, theta=self.theta,
                      theta_c=self.theta_c, theta_m=self.theta_m)

    def make_domain(self) -> Domain:
        if self.domain == "annulus":
            return Domain.annulus(self.n, self.eps_hole, self.R)
        return Domain(n=self.n, R=self.R, kind="ball", eps_hole=self.eps_hole)

    def grid(self, M: int | None = None) -> RadialGrid:
        return RadialGrid.for_domain(self.make_domain(), M=M or self.grid_M, ratio=self.grid_ratio)

    def as_dict(self) -> dict:
        return asdict(self)

    def replace(self, **changes) -> "ExperimentConfig":
        d = self.as_dict()
        d.update(changes)
        return ExperimentConfig(**d)

    def digest(self, extra: dict | None = None, version: str = "") -> str:
        payload = {"config": self.as_dict(), "extra": extra or {}, "version": version}
        blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


_FIELD_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}
_CASTS = {"int": int, "float": float, "str": str}


def _cast(key: str, raw: str):
    kind = _FIELD_TYPES[key]
    try:
        if kind == "int":
            value = float(raw)
            if value != int(value):
                raise ValueError
            return int(value)
        return _CASTS[kind](raw)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None


def parse_config(text: str) -> ExperimentConfig:
    """Parse ``key = value`` lines; ``#`` starts a comment. Unknown keys are errors."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in _FIELD_TYPES:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = _cast(key, raw)
    return ExperimentConfig(**values)


def load_config(path: str | Path) -> ExperimentConfig:
    return parse_config(Path(path).read_text())


def format_config(cfg: ExperimentConfig) -> str:
    lines = []
    for key, value in cfg.as_dict().items():
        if isinstance(value, float):
            value = "%.17g" % value
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"
