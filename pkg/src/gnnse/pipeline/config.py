"""Experiment configuration.

A config is one flat YAML mapping. Model keys map onto
:class:`~gnnse.gnn.model.Hyperparams`; the rest describe data generation and
the sample-efficiency study. Unknown keys are rejected so typos do not pass
silently. Every key can be overridden from the command line.
"""
from dataclasses import asdict, dataclass, field, fields, replace

import yaml

from ..gnn.model import Hyperparams


@dataclass(frozen=True)
class Config:
    # model and optimiser
    s: int = 64
    K: int = 4
    lr: float = 4e-4
    batch: int = 32
    clip: float = 0.5
    epochs: int = 100
    normalization: str = "mean_batch"
    dtype: str = "float32"
    # data
    network: str = ""  # empty: bundled IEEE 30-bus case
    placement: str = ""  # empty: bundled PMU placement
    sigma: float = 1e-3
    load_lo: float = 0.9
    load_hi: float = 1.1
    train_count: int = 10000
    val_count: int = 100
    test_count: int = 100
    seed: int = 0
    graph: str = "augmented"
    # sample-efficiency study
    sizes: list = field(default_factory=lambda: [100, 1000, 10000])
    size_epochs: list = field(default_factory=lambda: [10000, 1000, 100])

    def __post_init__(self):
        if self.graph not in ("plain", "augmented"):
            raise ValueError("graph must be 'plain' or 'augmented'")
        if len(self.sizes) != len(self.size_epochs):
            raise ValueError("sizes and size_epochs must have equal length")
        if not self.load_lo <= self.load_hi:
            raise ValueError("load_lo must not exceed load_hi")
        self.hyperparams()  # validates the model keys

    def hyperparams(self, **over):
        keys = {f.name for f in fields(Hyperparams)}
        d = {k: v for k, v in asdict(self).items() if k in keys}
        d.update(over)
        return Hyperparams(**d)

    @property
    def bounds(self):
        return (self.load_lo, self.load_hi)

    def to_dict(self):
        return asdict(self)


def _coerce(name, value):
    kind = {f.name: f for f in fields(Config)}[name]
    default = Config().__getattribute__(name)
    if isinstance(value, str) and not isinstance(default, str):
        if isinstance(default, list):
            return [int(v) for v in value.split(",") if v.strip()]
        try:
            value = type(default)(value)
        except ValueError:
            raise ValueError(f"config key {name!r}: cannot parse {value!r}") from None
    if isinstance(default, float) and isinstance(value, int):
        value = float(value)
    if isinstance(default, bool) or not isinstance(value, type(default)):
        raise ValueError(f"config key {kind.name!r}: expected {type(default).__name__}, got {value!r}")
    return value


def make_config(values=None, **overrides):
    merged = dict(values or {})
    merged.update({k: v for k, v in overrides.items() if v is not None})
    known = {f.name for f in fields(Config)}
    unknown = sorted(set(merged) - known)
    if unknown:
        raise ValueError(f"unknown config keys: {', '.join(unknown)}")
    return Config(**{k: _coerce(k, v) for k, v in merged.items()})


def load_config(path=None, **overrides):
    values = {}
    if path:
        with open(path) as fh:
            values = yaml.safe_load(fh) or {}
        if not isinstance(values, dict):
            raise ValueError(f"{path}: config must be a mapping")
    return make_config(values, **overrides)


def dump_config(cfg):
    return yaml.safe_dump(cfg.to_dict(), sort_keys=True)


def with_overrides(cfg, **overrides):
    return replace(cfg, **{k: _coerce(k, v) for k, v in overrides.items() if v is not None})
