"""Flat key=value configuration with every pipeline default in one place."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, fields, replace

from .errors import ConfigError

_METRICS = ("auto", "wmd", "cosine")


@dataclass(frozen=True)
class Config:
    # reproducibility
    seed: int = 1
    threads: int = 1
    # preprocessing
    prune_singletons: bool = True
    # word2vec training
    dim: int = 300
    window: int = 2
    negative_samples: int = 5
    epochs: int = 15
    learning_rate: float = 0.025
    min_count: int = 1
    # step distance matrices ("auto" picks wmd for word2vec, cosine otherwise)
    metric: str = "auto"
    matrix_cap: int = 20000
    # cluster-count sweep
    k_min: int = 50
    k_max: int = 15000
    k_step: int = 50
    # case similarity
    w_name: float = 0.5
    quorum: int = 3
    threshold_overlap: float = 0.70
    threshold_jaccard: float = 0.60
    threshold_cosine: float = 0.85
    threshold_combined: float = 0.75
    t_min: float = 0.1
    t_max: float = 1.0
    t_step: float = 0.05

    def __post_init__(self):
        if self.metric not in _METRICS:
            raise ConfigError(f"metric must be one of {', '.join(_METRICS)}, got {self.metric!r}")
        for name in ("seed", "threads", "dim", "window", "negative_samples", "min_count",
                     "matrix_cap", "k_min", "k_max", "k_step", "quorum"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be at least 1, got {getattr(self, name)}")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be non-negative, got {self.epochs}")
        if not 0.0 <= self.w_name <= 1.0:
            raise ConfigError(f"w_name must lie in [0, 1], got {self.w_name}")
        for name in ("threshold_overlap", "threshold_jaccard", "threshold_cosine",
                     "threshold_combined"):
            t = getattr(self, name)
            if not 0.0 < t <= 1.0:
                raise ConfigError(f"{name} must lie in (0, 1], got {t}")
        if not 0.0 < self.t_min <= self.t_max <= 1.0:
            raise ConfigError(
                f"threshold sweep bounds need 0 < t_min <= t_max <= 1, "
                f"got [{self.t_min}, {self.t_max}]"
            )
        if self.t_step <= 0:
            raise ConfigError(f"t_step must be positive, got {self.t_step}")
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")

    def threshold_for(self, technique: str) -> float:
        try:
            return getattr(self, f"threshold_{technique}")
        except AttributeError:
            raise ConfigError(f"no default threshold for technique {technique!r}") from None


def _parse_value(key: str, raw: str, kind):
    raw = raw.strip()
    try:
        if kind is bool:
            if raw.lower() in ("true", "1", "yes"):
                return True
            if raw.lower() in ("false", "0", "no"):
                return False
            raise ValueError(raw)
        return kind(raw)
    except ValueError:
        raise ConfigError(f"config key {key}: expected {kind.__name__}, got {raw!r}") from None


def parse_config(text: str, base: Config | None = None) -> Config:
    """Parse `key=value` lines (# comments and blanks ignored) over defaults."""
    kinds = {f.name: f.type for f in fields(Config)}
    kinds = {k: {"int": int, "float": float, "str": str, "bool": bool}[v] for k, v in kinds.items()}
    overrides = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"config line {lineno}: expected key=value, got {stripped!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        if key not in kinds:
            raise ConfigError(f"config line {lineno}: unknown key {key!r}")
        if key in overrides:
            raise ConfigError(f"config line {lineno}: duplicate key {key!r}")
        overrides[key] = _parse_value(key, raw, kinds[key])
    return replace(base or Config(), **overrides)


def load_config(path, base: Config | None = None) -> Config:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), base)


def serialize_config(cfg: Config) -> str:
    lines = [f"{f.name}={getattr(cfg, f.name)}" for f in fields(Config)]
    return "\n".join(lines) + "\n"


def config_hash(cfg: Config) -> str:
    return hashlib.sha256(serialize_config(cfg).encode("utf-8")).hexdigest()[:16]
