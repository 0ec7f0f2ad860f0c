"""Declarative experiment configuration read from JSON."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from ..errors import ConfigError

EXPERIMENTS = ("qip", "quenched_mean", "current", "two_point_cov", "local_time", "return_decay")
MODELS = ("continuum", "discrete")
MIN_REPLICATES = 100

_DEFAULT_MODEL = {
    "qip": "discrete",
    "quenched_mean": "discrete",
    "current": "discrete",
    "two_point_cov": "continuum",
    "local_time": "continuum",
    "return_decay": "continuum",
}
_ALLOWED_MODELS = {
    "qip": ("discrete",),
    "quenched_mean": ("discrete", "continuum"),
    "current": ("discrete",),
    "two_point_cov": ("continuum",),
    "local_time": ("continuum",),
    "return_decay": ("continuum",),
}


@dataclass
class ExperimentConfig:
    experiment: str
    model: str
    params: dict = field(default_factory=dict)
    scales: list = field(default_factory=list)
    replicates: int = 1000
    master_seed: int = 0
    chunk_size: int = 0
    output: str | None = None
    assertions: list | None = None

    def to_dict(self):
        return {
            "experiment": self.experiment,
            "model": self.model,
            "params": self.params,
            "scales": self.scales,
            "replicates": self.replicates,
            "master_seed": self.master_seed,
            "chunk_size": self.chunk_size,
            "output": self.output,
            "assertions": self.assertions,
        }

    def digest(self):
        """SHA-256 of the canonical JSON form, ignoring the output location."""
        d = self.to_dict()
        d.pop("output")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()

    @classmethod
    def from_dict(cls, d, source="<config>"):
        if not isinstance(d, dict):
            raise ConfigError(f"{source}: top level must be an object")
        known = {"experiment", "model", "params", "scales", "replicates", "master_seed",
                 "chunk_size", "output", "assertions", "description"}
        extra = sorted(set(d) - known)
        if extra:
            raise ConfigError(f"{source}: unknown key(s) {extra}")
        exp = d.get("experiment")
        if exp not in EXPERIMENTS:
            raise ConfigError(f"{source}: experiment: expected one of {list(EXPERIMENTS)}, got {exp!r}")
        model = d.get("model", _DEFAULT_MODEL[exp])
        if model not in _ALLOWED_MODELS[exp]:
            raise ConfigError(f"{source}: model: {exp} supports {list(_ALLOWED_MODELS[exp])}, got {model!r}")
        params = d.get("params", {})
        if not isinstance(params, dict):
            raise ConfigError(f"{source}: params: expected an object")
        scales = d.get("scales", [])
        if not isinstance(scales, list) or not all(isinstance(s, (int, float)) and s > 0 for s in scales):
            raise ConfigError(f"{source}: scales: expected a list of positive numbers")
        reps = d.get("replicates", 1000)
        if not isinstance(reps, int) or isinstance(reps, bool) or reps < MIN_REPLICATES:
            raise ConfigError(f"{source}: replicates: need an integer >= {MIN_REPLICATES}, got {reps!r}")
        seed = d.get("master_seed", 0)
        if not isinstance(seed, int) or isinstance(seed, bool) or not 0 <= seed < 2 ** 64:
            raise ConfigError(f"{source}: master_seed: expected an unsigned 64-bit integer")
        chunk = d.get("chunk_size", 0)
        if not isinstance(chunk, int) or chunk < 0:
            raise ConfigError(f"{source}: chunk_size: expected a nonnegative integer")
        out = d.get("output")
        if out is not None and not isinstance(out, str):
            raise ConfigError(f"{source}: output: expected a path string")
        asserts = d.get("assertions")
        if asserts is not None and not (isinstance(asserts, list) and all(isinstance(a, str) for a in asserts)):
            raise ConfigError(f"{source}: assertions: expected a list of check names")
        return cls(exp, model, params, list(scales), reps, seed, chunk, out, asserts)


def load_config(path):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    return ExperimentConfig.from_dict(data, source=str(path))


def get_param(cfg: ExperimentConfig, name, default=None, kind=None, required=False):
    """Typed lookup in ``cfg.params`` raising ConfigError with the key path."""
    if name not in cfg.params:
        if required:
            raise ConfigError(f"params.{name}: required for {cfg.experiment}")
        return default
    value = cfg.params[name]
    if kind is not None:
        try:
            if kind is float:
                if isinstance(value, bool):
                    raise TypeError
                value = float(value)
            elif kind is int:
                if isinstance(value, bool) or int(value) != value:
                    raise TypeError
                value = int(value)
            else:
                value = kind(value)
        except (TypeError, ValueError):
            raise ConfigError(f"params.{name}: expected {kind.__name__}, got {value!r}") from None
    return value
