"""Run configuration (flat ``key = value`` files) and named random streams."""

from __future__ import annotations

import dataclasses
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import ConfigError
from .tvp import TvpConfig

__all__ = ["MEAN_MODELS", "LAYERS", "ALL_MODELS", "RunConfig", "load_config", "parse_models", "stream", "stream_seed", "int_seed"]

MEAN_MODELS = ("VAR", "TVP")
LAYERS = ("DCC", "ADCC", "tcopula", "copula-mix")
ALL_MODELS = MEAN_MODELS + tuple(f"{m}-{l}" for m in MEAN_MODELS for l in LAYERS) + ("VAR-GPR", "TVP-GPR")


def parse_models(spec) -> tuple:
    names = [s.strip() for s in spec.split(",")] if isinstance(spec, str) else list(spec)
    names = [n for n in names if n]
    if not names:
        raise ConfigError("model list is empty")
    lookup = {m.lower(): m for m in ALL_MODELS}
    out = []
    for n in names:
        if n.lower() not in lookup:
            raise ConfigError(f"unknown model {n!r}; choose from {', '.join(ALL_MODELS)}")
        if lookup[n.lower()] not in out:
            out.append(lookup[n.lower()])
    return tuple(out)


def _to_bool(v) -> bool:
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {v!r}")


@dataclass(frozen=True)
class RunConfig:
    """Everything a pipeline run depends on.

    ``seed`` has no default: every run must name its root seed.
    """

    seed: int
    data: str | None = None
    date_column: str = "date"
    on_missing: str = "raise"
    ordering: tuple | None = None
    boundary: str | None = None
    p: int = 1
    max_lag: int = 12
    kappa: float = 1e-3
    ewma_lambda: float = 0.96
    prior_window: int = 60
    dcc_joint: str = "student_t"
    copula_target: str | None = None
    gof_tail: float = 0.25
    bootstrap_B: int = 2000
    gpr_lags: int = 3
    gpr_optimize: bool = True
    window: str = "expanding"
    window_length: int | None = None
    irf_horizon: int = 24
    models: tuple = ALL_MODELS
    extra: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.seed is None:
            raise ConfigError("seed is mandatory")
        try:
            object.__setattr__(self, "seed", int(self.seed))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"seed must be an integer, got {self.seed!r}") from exc
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")
        object.__setattr__(self, "models", parse_models(self.models))
        if self.ordering is not None and isinstance(self.ordering, str):
            object.__setattr__(self, "ordering", tuple(s.strip() for s in self.ordering.split(",") if s.strip()))
        if self.p < 1:
            raise ConfigError("p must be at least 1")
        if self.window not in ("expanding", "fixed"):
            raise ConfigError("window must be 'expanding' or 'fixed'")
        if self.dcc_joint not in ("gaussian", "student_t"):
            raise ConfigError("dcc_joint must be 'gaussian' or 'student_t'")
        if self.on_missing not in ("raise", "drop"):
            raise ConfigError("on_missing must be 'raise' or 'drop'")
        if self.gpr_lags < 1:
            raise ConfigError("gpr_lags must be at least 1")
        self.tvp  # validates the TVP block

    @property
    def tvp(self) -> TvpConfig:
        return TvpConfig(self.kappa, self.ewma_lambda, self.prior_window)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d.pop("extra")
        d["models"] = list(self.models)
        d["ordering"] = list(self.ordering) if self.ordering else None
        return d

    def replace(self, **kw) -> "RunConfig":
        return dataclasses.replace(self, **kw)


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig) if f.name != "extra"}
_INT = {"seed", "p", "max_lag", "prior_window", "bootstrap_B", "gpr_lags", "irf_horizon", "window_length"}
_FLOAT = {"kappa", "ewma_lambda", "gof_tail"}
_BOOL = {"gpr_optimize"}


def _coerce(key: str, value):
    if value is None:
        return None
    try:
        if key in _INT:
            return None if str(value).strip().lower() in ("", "none") else int(value)
        if key in _FLOAT:
            return float(value)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {value!r}") from exc
    if key in _BOOL:
        return _to_bool(value)
    return value.strip() if isinstance(value, str) else value


def read_config_file(path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    for n, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{n}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _FIELDS:
            raise ConfigError(f"{path}:{n}: unknown key {key!r}")
        out[key] = value
    return out


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Merge a config file with overrides (overrides win; ``None`` values are ignored)."""
    values = read_config_file(path) if path else {}
    for k, v in (overrides or {}).items():
        if v is not None:
            values[k.replace("-", "_")] = v
    if "seed" not in values:
        raise ConfigError("seed is mandatory (set seed = N or pass --seed)")
    kw = {k: _coerce(k, v) for k, v in values.items()}
    if path and kw.get("data") and not Path(kw["data"]).is_absolute():
        kw["data"] = str((Path(path).parent / kw["data"]).resolve())
    return RunConfig(**kw)


def stream_seed(root: int, *names) -> np.random.SeedSequence:
    """Seed sequence for a named purpose, independent of every other name."""
    key = tuple(zlib.crc32(str(n).encode("utf-8")) for n in names)
    return np.random.SeedSequence(entropy=int(root), spawn_key=key)


def stream(root: int, *names) -> np.random.Generator:
    return np.random.default_rng(stream_seed(root, *names))


def int_seed(root: int, *names) -> int:
    return int(stream_seed(root, *names).generate_state(1)[0])
