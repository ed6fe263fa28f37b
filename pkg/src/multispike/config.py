"""Run configuration and its flat ``key = value`` text format.

Every default reproduces the published MNIST experiment, so a run with no
overrides is that experiment.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

from .core import NeuronParams
from .forward import EngineConfig
from .loss import LossConfig


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    sizes: tuple[int, ...] = (784, 400, 10)
    tau_i: float = 0.8
    p: float = 2.0
    t_out: float = 1.0
    t_min: float = 0.0
    t_max: float = 1.0
    lam: float = 0.01
    sigma: float = 0.0001
    dead_fraction: float = 0.1
    lr: float = 0.001
    epochs: int = 100
    batch_size: int = 100
    seed: int = 0
    n1: int = 3
    n2: int = 16
    single_spike: bool = False
    init_mean: float = 0.03
    init_spread: float = 0.3
    init_reading: str = "std"
    train_samples: int = 0      # 0 = whole split
    test_samples: int = 0
    data_dir: str = "data/mnist"
    out_dir: str = "runs/default"
    n_jobs: int = 1

    def __post_init__(self):
        self.sizes = tuple(int(s) for s in self.sizes)
        self.validate()

    def validate(self):
        if len(self.sizes) < 2 or min(self.sizes) < 1:
            raise ConfigError("sizes needs at least an input and an output layer")
        if self.p != 2.0:
            raise ConfigError("only p = 2 is supported")
        if not (self.tau_i > 0 and self.t_out > 0):
            raise ConfigError("tau_i and t_out must be positive")
        if not self.t_min < self.t_max:
            raise ConfigError("need t_min < t_max")
        if self.epochs < 0 or self.batch_size < 1:
            raise ConfigError("epochs >= 0 and batch_size >= 1 required")
        if not 1 <= self.n1 <= self.n2:
            raise ConfigError("need 1 <= n1 <= n2")
        if self.init_reading not in ("std", "variance"):
            raise ConfigError("init_reading must be 'std' or 'variance'")
        try:
            self.loss_config()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def neuron_params(self) -> NeuronParams:
        return NeuronParams(tau_i=self.tau_i, tau_v=self.tau_i / self.p)

    def engine_config(self) -> EngineConfig:
        return EngineConfig.from_time(self.t_out, self.neuron_params(), n1=self.n1, n2=self.n2,
                                      single_spike=self.single_spike)

    def loss_config(self) -> LossConfig:
        return LossConfig(lam=self.lam, sigma=self.sigma, dead_fraction=self.dead_fraction)

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    # text format

    def dumps(self) -> str:
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            lines.append(f"{f.name} = {_format(value)}")
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str, base: "RunConfig | None" = None) -> "RunConfig":
        values = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            values[key] = value
        return cls.from_strings(values, base)

    @classmethod
    def from_strings(cls, values: dict, base: "RunConfig | None" = None) -> "RunConfig":
        base = base or cls()
        known = {f.name: f for f in fields(cls)}
        changes = {}
        for key, value in values.items():
            key = key.replace("-", "_")
            if key not in known:
                raise ConfigError(f"unknown config key {key!r}")
            changes[key] = _parse(key, value, type(getattr(base, key)))
        return dataclasses.replace(base, **changes)

    def save(self, path):
        Path(path).write_text(self.dumps())

    @classmethod
    def load(cls, path) -> "RunConfig":
        return cls.loads(Path(path).read_text())


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return "-".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse(key, text, kind):
    if isinstance(text, kind) and kind is not str:
        return text
    text = str(text)
    try:
        if kind is bool:
            low = text.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(text)
            return low in ("true", "1", "yes")
        if kind is tuple:
            return tuple(int(v) for v in text.replace(",", "-").split("-"))
        return kind(text)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {text!r}") from None
