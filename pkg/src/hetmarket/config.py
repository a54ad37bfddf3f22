"""Model parameters, config-file parsing, and override handling."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

_UINT64_MAX = (1 << 64) - 1

# Pattern codes are stored in int64; 62 bits keeps every shift in range.
MAX_MEMORY = 62


class ConfigError(ValueError):
    """Invalid configuration value; ``field`` names the offending entry."""

    def __init__(self, field, message):
        super().__init__(f"config field '{field}': {message}")
        self.field = field


@dataclass(frozen=True)
class MarketConfig:
    """Complete parameter set for one simulation run.

    ``n_agents`` is the total population; ``ratio_ref`` of it trades on
    reference points and the rest on pair patterns. ``memory`` is the length
    of the price-change history a pair strategy matches against,
    ``n_strategies`` the number of strategy pairs each pair investor holds.
    ``delta_t`` is the rolling-mean window for the reference price band,
    ``g_max`` the largest risk-tolerance gene, ``alpha`` the price-impact
    constant, and ``k_min``/``k_max`` the per-agent holdings bounds.
    """

    n_agents: int = 1000
    ratio_ref: float = 0.0
    memory: int = 3
    n_strategies: int = 2
    delta_t: int = 10
    g_max: int = 1000
    alpha: float = 10.0
    k_max: int = 1
    k_min: int = -1
    p0: float = 100.0
    relax_steps: int = 20000
    measure_steps: int = 5000
    seed: int = 12345

    def __post_init__(self):
        if self.n_agents < 0:
            raise ConfigError("n_agents", "must be >= 0")
        if not 0.0 <= self.ratio_ref <= 1.0:
            raise ConfigError("ratio_ref", "must lie in [0, 1]")
        if not 1 <= self.memory <= MAX_MEMORY:
            raise ConfigError("memory", f"must lie in [1, {MAX_MEMORY}]")
        if self.n_strategies < 1:
            raise ConfigError("n_strategies", "must be >= 1")
        if self.delta_t < 1:
            raise ConfigError("delta_t", "must be >= 1")
        if self.g_max < 0:
            raise ConfigError("g_max", "must be >= 0")
        if not self.alpha > 0:
            raise ConfigError("alpha", "must be > 0")
        if not (self.k_min <= 0 <= self.k_max):
            raise ConfigError("k_min", "need k_min <= 0 <= k_max")
        if not self.k_min < self.k_max:
            raise ConfigError("k_min", "need k_min < k_max")
        if not self.p0 > 0:
            raise ConfigError("p0", "must be > 0")
        if self.relax_steps < 0:
            raise ConfigError("relax_steps", "must be >= 0")
        if self.measure_steps < 0:
            raise ConfigError("measure_steps", "must be >= 0")
        if not 0 <= self.seed <= _UINT64_MAX:
            raise ConfigError("seed", "must be an unsigned 64-bit integer")

    @property
    def n_ref(self) -> int:
        """Number of reference-point investors (nearest-integer split)."""
        return int(round(self.ratio_ref * self.n_agents))

    @property
    def n_pair(self) -> int:
        return self.n_agents - self.n_ref

    @property
    def n_patterns(self) -> int:
        return 1 << self.memory

    @property
    def total_steps(self) -> int:
        return self.relax_steps + self.measure_steps

    def replace(self, **changes) -> "MarketConfig":
        return dataclasses.replace(self, **changes)


_FIELD_TYPES = {
    "n_agents": int,
    "ratio_ref": float,
    "memory": int,
    "n_strategies": int,
    "delta_t": int,
    "g_max": int,
    "alpha": float,
    "k_max": int,
    "k_min": int,
    "p0": float,
    "relax_steps": int,
    "measure_steps": int,
    "seed": int,
    "replications": int,
}

#: Keys accepted in a config document. ``replications`` and ``grid`` only
#: matter for sweeps and are ignored by single runs.
KNOWN_KEYS = frozenset(_FIELD_TYPES) | {"grid"}

MARKET_KEYS = frozenset(f.name for f in dataclasses.fields(MarketConfig))


def coerce_value(key, value):
    """Coerce a JSON value to the declared type of ``key``."""
    want = _FIELD_TYPES[key]
    if isinstance(value, bool):
        raise ConfigError(key, f"expected {want.__name__}, got a boolean")
    if want is int:
        if isinstance(value, int):
            return value
        if isinstance(value, float) and value.is_integer():
            return int(value)
        raise ConfigError(key, f"expected an integer, got {value!r}")
    if isinstance(value, (int, float)):
        return float(value)
    raise ConfigError(key, f"expected a number, got {value!r}")


def load_config_file(path) -> dict:
    """Read a JSON config document and validate its keys."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError("config", f"file not found: {path}")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError("config", f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config", f"{path}: top level must be an object")
    doc = {}
    for key, value in raw.items():
        if key not in KNOWN_KEYS:
            raise ConfigError(key, "unknown key")
        doc[key] = value if key == "grid" else coerce_value(key, value)
    return doc


def parse_override(text):
    """Parse one ``key=value`` override into a (key, value) pair."""
    key, sep, raw = text.partition("=")
    key = key.strip()
    if not sep or not key:
        raise ConfigError(key or text, "override must look like key=value")
    if key not in _FIELD_TYPES:
        raise ConfigError(key, "unknown override key")
    want = _FIELD_TYPES[key]
    try:
        return key, want(raw.strip())
    except ValueError as exc:
        raise ConfigError(key, f"cannot parse {raw!r} as {want.__name__}") from exc


def apply_overrides(doc: dict, overrides) -> dict:
    """Apply repeatable ``key=value`` overrides; the last occurrence wins."""
    merged = dict(doc)
    for text in overrides:
        key, value = parse_override(text)
        merged[key] = value
    return merged


def market_config(doc: dict) -> MarketConfig:
    """Build a MarketConfig from a validated config document."""
    fields = {k: v for k, v in doc.items() if k in MARKET_KEYS}
    return MarketConfig(**fields)
