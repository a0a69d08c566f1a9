"""Run configuration: a flat INI file with one section per module.

Every tunable named in the search-space documentation is exposed here;
unknown keys are rejected so typos fail loudly.
"""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import io

from trigad.graph import InjectionConfig


@dataclasses.dataclass
class ModelConfig:
    hidden: int = 64     # shared embedding width h (all three channels)
    attn_dim: int = 64   # attention projection width in the attribute channel


@dataclasses.dataclass
class AttrChannelConfig:
    scales: int = 2      # propagation depth L, grid 1..8
    restart: float = 0.1  # grid {0.001, 0.05, 0.1, 0.2}


@dataclasses.dataclass
class StructChannelConfig:
    knn_k: int = 4
    restart: float = 0.1
    steps: int = 2       # diffusion iterations T, grid 1..8
    consistency_weight: float = 0.5
    enhanced_own_iterates: bool = True
    pos_weight: float = 1.0  # optional edge-entry weight in the adjacency loss


@dataclasses.dataclass
class MixChannelConfig:
    layers: int = 2
    delta: float = 0.5   # curvature self-mass coefficient


@dataclasses.dataclass
class TrainSchedule:
    epochs_pretrain: int = 40
    epochs_attr: int = 60
    epochs_struct: int = 60
    epochs_mix: int = 60
    lr: float = 0.01     # grid {0.1, 0.01, 0.001, 0.0001}
    rho: float = 0.1     # per-epoch masking fraction
    score_batch: int = 64
    seed: int = 0

    def validate(self) -> None:
        for name in ("epochs_pretrain", "epochs_attr", "epochs_struct",
                     "epochs_mix"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not (0.0 < self.rho <= 1.0):
            raise ValueError(f"rho must be in (0,1], got {self.rho}")
        if self.score_batch < 1:
            raise ValueError("score_batch must be >= 1")


@dataclasses.dataclass
class DistillConfig:
    margin: float = 0.5
    eta1: float = 1.0
    eta2: float = 0.5
    triplets_per_epoch: int = 0  # 0 means one triplet per node
    seed: int = 0

    def validate(self) -> None:
        if not (self.margin >= 0.0 and self.margin < float("inf")):
            raise ValueError(f"margin must be finite and >= 0, got {self.margin}")
        if self.eta1 < 0.0 or self.eta2 < 0.0:
            raise ValueError("eta1 and eta2 must be nonnegative")
        if self.eta1 + self.eta2 <= 0.0:
            raise ValueError("eta1 + eta2 must be positive")
        if self.triplets_per_epoch < 0:
            raise ValueError("triplets_per_epoch must be >= 0")


@dataclasses.dataclass
class EvalConfig:
    lambda_attr: float = 0.3  # grid {0.1 .. 0.9}
    lambda_struct: float = 0.3
    lambda_mix: float = 0.3
    bins: int = 10


@dataclasses.dataclass
class RunConfig:
    model: ModelConfig = dataclasses.field(default_factory=ModelConfig)
    attr: AttrChannelConfig = dataclasses.field(default_factory=AttrChannelConfig)
    struct: StructChannelConfig = dataclasses.field(default_factory=StructChannelConfig)
    mix: MixChannelConfig = dataclasses.field(default_factory=MixChannelConfig)
    train: TrainSchedule = dataclasses.field(default_factory=TrainSchedule)
    distill: DistillConfig = dataclasses.field(default_factory=DistillConfig)
    eval: EvalConfig = dataclasses.field(default_factory=EvalConfig)
    injection: InjectionConfig = dataclasses.field(default_factory=InjectionConfig)

    def validate(self) -> None:
        self.train.validate()
        self.distill.validate()
        self.injection.validate()


_SECTIONS = ("model", "attr", "struct", "mix", "train", "distill", "eval",
             "injection")


def default_config() -> RunConfig:
    return RunConfig()


def _coerce(field: dataclasses.Field, raw: str):
    if field.type in ("int", int):
        return int(raw)
    if field.type in ("float", float):
        return float(raw)
    if field.type in ("bool", bool):
        lowered = raw.strip().lower()
        if lowered in ("1", "true", "yes", "on"):
            return True
        if lowered in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"cannot parse {raw!r} as a boolean")
    return raw


def load_config(path) -> RunConfig:
    """Parse an INI file over the defaults; unknown sections/keys error."""
    parser = configparser.ConfigParser()
    with open(path, encoding="utf-8") as fh:
        parser.read_file(fh)
    cfg = default_config()
    for section in parser.sections():
        if section not in _SECTIONS:
            raise ValueError(f"{path}: unknown section [{section}]")
        target = getattr(cfg, section)
        known = {f.name: f for f in dataclasses.fields(target)}
        for key, raw in parser.items(section):
            if key not in known:
                raise ValueError(f"{path}: unknown key {key!r} in [{section}]")
            setattr(target, key, _coerce(known[key], raw))
    cfg.validate()
    return cfg


def dump_config(cfg: RunConfig) -> str:
    """Canonical INI text (stable ordering, repr'd floats)."""
    lines = []
    for section in _SECTIONS:
        target = getattr(cfg, section)
        lines.append(f"[{section}]")
        for f in dataclasses.fields(target):
            value = getattr(target, f.name)
            if isinstance(value, float):
                value = repr(value)
            lines.append(f"{f.name} = {value}")
        lines.append("")
    return "\n".join(lines)


def save_config(cfg: RunConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dump_config(cfg))


def config_hash(cfg: RunConfig) -> str:
    return hashlib.sha256(dump_config(cfg).encode("utf-8")).hexdigest()[:12]


def set_option(cfg: RunConfig, dotted_key: str, raw: str) -> None:
    """Assign one option given as "section.key" and a raw string value."""
    if dotted_key.count(".") != 1:
        raise ValueError(f"expected section.key, got {dotted_key!r}")
    section, key = dotted_key.split(".")
    if section not in _SECTIONS:
        raise ValueError(f"unknown section {section!r} in {dotted_key!r}")
    target = getattr(cfg, section)
    known = {f.name: f for f in dataclasses.fields(target)}
    if key not in known:
        raise ValueError(f"unknown key {key!r} in [{section}]")
    setattr(target, key, _coerce(known[key], raw))


def config_to_dict(cfg: RunConfig) -> dict:
    return {section: dataclasses.asdict(getattr(cfg, section))
            for section in _SECTIONS}
