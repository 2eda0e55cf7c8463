"""Run configuration: one YAML file, strict about unknown keys."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .dlaprls import DlaprlsConfig
from .exceptions import ConfigError
from .gat import GatConfig
from .kernels import KernelConfig
from .synth import SynthSpec
from .trainer import TrainConfig


@dataclass
class TrainSection:
    iterations: int = 20
    learning_rate: float = 0.001
    tau: float = 0.0
    top_k: int | None = None


@dataclass
class EvalSection:
    k: int = 5


@dataclass
class SweepSection:
    gammas: list = field(default_factory=lambda: [[2.0 ** -5, 2.0 ** -3, 2.0 ** -3]])
    layer_dims: list = field(default_factory=lambda: [[384, 192, 96]])


@dataclass
class PredictSection:
    top_n: int = 20


@dataclass
class RunConfig:
    data_dir: str | None = None
    out_dir: str = "out"
    seed: int = 42
    workers: int = 1
    ablation: str = "all"
    train: TrainSection = field(default_factory=TrainSection)
    gat: GatConfig = field(default_factory=GatConfig)
    kernels: KernelConfig = field(default_factory=KernelConfig)
    dlaprls: DlaprlsConfig = field(default_factory=DlaprlsConfig)
    eval: EvalSection = field(default_factory=EvalSection)
    sweep: SweepSection = field(default_factory=SweepSection)
    predict: PredictSection = field(default_factory=PredictSection)
    synth: SynthSpec = field(default_factory=SynthSpec)

    def train_config(self) -> TrainConfig:
        t = self.train
        return TrainConfig(iterations=t.iterations, learning_rate=t.learning_rate, seed=self.seed,
                           tau=t.tau, top_k=t.top_k, kernel_selector=self.ablation, gat=self.gat,
                           kernels=self.kernels, dlaprls=self.dlaprls)


def _build(cls, data: Any, where: str):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected a mapping, got {type(data).__name__}")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(fields))
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {unknown}")
    kwargs = {}
    for name, value in data.items():
        default = fields[name].default_factory() if fields[name].default_factory is not dataclasses.MISSING \
            else None
        if dataclasses.is_dataclass(default):
            kwargs[name] = _build(type(default), value, f"{where}.{name}" if where else name)
        else:
            kwargs[name] = value
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"{where or 'config'}: {exc}") from None


def parse_config(data: dict | None) -> RunConfig:
    return _build(RunConfig, data or {}, "")


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return parse_config(data)


def dump_config(config: RunConfig) -> str:
    def plain(x):
        if isinstance(x, tuple):
            return [plain(v) for v in x]
        if isinstance(x, list):
            return [plain(v) for v in x]
        if isinstance(x, dict):
            return {k: plain(v) for k, v in x.items()}
        return x
    return yaml.safe_dump(plain(dataclasses.asdict(config)), sort_keys=False)
