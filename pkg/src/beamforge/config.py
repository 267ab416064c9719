"""Flat ``key = value`` run configuration.

Blank lines and ``#`` comments are ignored. Unknown keys, malformed values
and constraint violations raise ConfigError naming the key and line.
Absent keys take the defaults below (the full-size 256-antenna scenario).
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields

from .airmodel import ConfigError, ScenarioConfig
from .training import TrainingConfig

_SCENARIO_KEYS = {f.name for f in fields(ScenarioConfig)}
_TRAINING_KEYS = {f.name for f in fields(TrainingConfig)} - {"seed"}


@dataclass
class RunConfig:
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    dataset_count: int = 100_000
    snr_min_db: float = -10.0
    snr_max_db: float = 10.0
    sweep_snr: str = "-10:10:5"
    sweep_trials: int = 1000
    sort_abs: bool = False
    seed: int = 0


_TYPES = {f.name: f.type for f in fields(ScenarioConfig)}
_TYPES.update({f.name: f.type for f in fields(TrainingConfig)})
_TYPES.update({"dataset_count": "int", "snr_min_db": "float", "snr_max_db": "float",
               "sweep_snr": "str", "sweep_trials": "int", "sort_abs": "bool", "seed": "int"})
KNOWN_KEYS = sorted(_TYPES)


def _convert(key, raw, lineno):
    kind = _TYPES[key]
    try:
        if kind == "int":
            return int(raw, 0)
        if kind == "float":
            return float(raw)
        if kind == "bool":
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        return raw
    except ValueError:
        raise ConfigError(f"line {lineno}: key '{key}' expects {kind}, got {raw!r}") from None


def parse_snr_grid(text):
    """``lo:hi:step`` in dB (inclusive of hi when on the grid) or a single value."""
    parts = text.split(":")
    try:
        vals = [float(p) for p in parts]
    except ValueError:
        raise ConfigError(f"bad SNR grid {text!r}; expected lo:hi:step") from None
    if len(vals) == 1:
        return vals
    if len(vals) != 3 or vals[2] <= 0 or vals[1] < vals[0]:
        raise ConfigError(f"bad SNR grid {text!r}; expected lo:hi:step with step > 0, hi >= lo")
    lo, hi, step = vals
    n = int((hi - lo) / step + 1e-9) + 1
    return [lo + i * step for i in range(n)]


def parse_config(text) -> RunConfig:
    values, where = {}, {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in _TYPES:
            raise ConfigError(f"line {lineno}: unknown key '{key}'")
        values[key] = _convert(key, raw, lineno)
        where[key] = lineno
    return build_config(values, where)


def build_config(values, where=None) -> RunConfig:
    where = where or {}

    def guarded(ctor, keys):
        kwargs = {k: values[k] for k in keys if k in values}
        try:
            return ctor(**kwargs)
        except ConfigError as exc:
            # constructor messages name the offending field; prefer the longest match
            bad = next((k for k in sorted(kwargs, key=lambda k: -len(k)) if k in str(exc)), None)
            if bad is None and len(kwargs) == 1:
                bad = next(iter(kwargs))
            loc = f"line {where[bad]}: key '{bad}': " if bad in where else \
                (f"key '{bad}': " if bad else "")
            raise ConfigError(f"{loc}{exc}") from None

    scenario = guarded(ScenarioConfig, _SCENARIO_KEYS)
    training = guarded(TrainingConfig, _TRAINING_KEYS)
    rc = RunConfig(scenario, training,
                   **{k: values[k] for k in ("dataset_count", "snr_min_db", "snr_max_db",
                                             "sweep_snr", "sweep_trials", "sort_abs", "seed")
                      if k in values})

    def fail(key, msg):
        loc = f"line {where[key]}: " if key in where else ""
        raise ConfigError(f"{loc}key '{key}': {msg}")

    if rc.training.preset not in ("nps1", "nps2"):
        fail("preset", f"unknown preset {rc.training.preset!r}; choose nps1 or nps2")
    if rc.dataset_count < 10:
        fail("dataset_count", "must be >= 10 (9:1 split)")
    if rc.snr_max_db < rc.snr_min_db:
        fail("snr_max_db", "must be >= snr_min_db")
    if rc.sweep_trials < 1:
        fail("sweep_trials", "must be >= 1")
    try:
        parse_snr_grid(rc.sweep_snr)
    except ConfigError as exc:
        fail("sweep_snr", str(exc))
    return rc
