"""Experiment configuration and its flat text file format.

Config files are plain text, one ``section.key = value`` per line, with
typed values (int, float, bool, string) and ``#`` comments.  Parsing and
re-serializing a config is lossless, and the config hash is the SHA-256 of
the canonical serialization, so artifacts can always be traced back to the
exact configuration that produced them.  See docs/config_schema.md.
"""

from __future__ import annotations

import hashlib
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .diffusion import DenoiserConfig
from .encoder import EncoderConfig
from .errors import ConfigurationError


@dataclass(frozen=True)
class DatasetConfig:
    generator: str = "toy_speaker"
    n_train: int = 2048
    n_test: int = 192
    n_frames: int = 16
    seed: int = 0
    correlated: bool = False
    n_speakers: int = 64


@dataclass(frozen=True)
class DenoiserNetConfig:
    base_channels: int = 32
    width: int = 192
    depth: int = 3
    groups: int = 8
    embed_dim: int = 64


@dataclass(frozen=True)
class ScheduleConfig:
    steps: int = 24
    s_churn: float = 0.0
    s_noise: float = 1.0
    s_tmin: float = 0.0
    s_tmax: float = float("inf")


@dataclass(frozen=True)
class PriorTrainConfig:
    diffusion_steps: int = 1000
    beta_start: float = 1e-4
    beta_end: float = 2e-2
    mlp_layers: int = 10
    mlp_hidden: int = 128
    inference_steps: int = 50
    train_steps: int = 2000
    batch_size: int = 128
    lr: float = 1e-3


@dataclass(frozen=True)
class OptimizerConfig:
    lr: float = 2e-3
    weight_decay: float = 1e-5
    batch_size: int = 16
    steps: int = 3000
    grad_clip: float = 1.0


@dataclass(frozen=True)
class EvalConfig:
    n_pairs: int = 48
    max_trials: int = 20000
    n_eval_sequences: int = 64
    swap_churn: float = 0.0


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    diffusion: DenoiserConfig = field(default_factory=DenoiserConfig)
    denoiser_net: DenoiserNetConfig = field(default_factory=DenoiserNetConfig)
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    prior: PriorTrainConfig = field(default_factory=PriorTrainConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    seed: int = 0
    swap_encode_conditioning: str = "dyn_source"

    def validate(self) -> "ExperimentConfig":
        """Cross-section consistency checks; raises ConfigurationError."""
        if self.dataset.generator == "bouncing_shapes" and self.encoder.backbone != "conv":
            raise ConfigurationError("image datasets require the conv encoder backbone")
        if self.dataset.generator in ("toy_speaker", "toy_physio") \
                and self.encoder.backbone != "mlp":
            raise ConfigurationError("vector datasets require the mlp encoder backbone")
        if self.swap_encode_conditioning not in ("dyn_source", "swapped"):
            raise ConfigurationError(
                f"unknown swap_encode_conditioning {self.swap_encode_conditioning!r}")
        if self.schedule.steps < 1:
            raise ConfigurationError("schedule.steps must be >= 1")
        return self

    # ------------------------------------------------------------------
    # flat text round trip

    def to_flat(self) -> dict:
        flat: dict = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if hasattr(value, "__dataclass_fields__"):
                for key, sub in asdict(value).items():
                    flat[f"{f.name}.{key}"] = sub
            else:
                flat[f.name] = value
        return flat

    @classmethod
    def from_flat(cls, flat: dict) -> "ExperimentConfig":
        groups: dict[str, dict] = {}
        scalars: dict = {}
        for key, value in flat.items():
            if "." in key:
                section, _, name = key.partition(".")
                groups.setdefault(section, {})[name] = value
            else:
                scalars[key] = value
        kwargs: dict = {}
        for f in fields(cls):
            if f.name in groups:
                sub_cls = _SECTION_TYPES[f.name]
                known = {sf.name for sf in fields(sub_cls)}
                unknown = set(groups[f.name]) - known
                if unknown:
                    raise ConfigurationError(
                        f"unknown key(s) in section {f.name}: {sorted(unknown)}")
                kwargs[f.name] = sub_cls(**groups[f.name])
            elif f.name in scalars:
                kwargs[f.name] = scalars.pop(f.name)
        stray = (set(scalars) | set(groups)) - {f.name for f in fields(cls)}
        if stray:
            raise ConfigurationError(f"unknown config section(s)/key(s): {sorted(stray)}")
        return cls(**kwargs)

    def to_text(self) -> str:
        flat = self.to_flat()
        lines = [f"{key} = {_format(flat[key])}" for key in sorted(flat)]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "ExperimentConfig":
        flat: dict = {}
        for raw in text.splitlines():
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigurationError(f"malformed config line: {raw!r}")
            key, _, value = line.partition("=")
            flat[key.strip()] = _parse(value.strip())
        return cls.from_flat(flat)

    def save(self, path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_text(Path(path).read_text()).validate()

    def config_hash(self) -> str:
        return hashlib.sha256(self.to_text().encode("utf-8")).hexdigest()[:12]

    def with_overrides(self, **kwargs) -> "ExperimentConfig":
        return replace(self, **kwargs)


_SECTION_TYPES = {
    "dataset": DatasetConfig,
    "encoder": EncoderConfig,
    "diffusion": DenoiserConfig,
    "denoiser_net": DenoiserNetConfig,
    "schedule": ScheduleConfig,
    "prior": PriorTrainConfig,
    "optimizer": OptimizerConfig,
    "eval": EvalConfig,
}


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse(text: str):
    if text == "true":
        return True
    if text == "false":
        return False
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def default_config(generator: str) -> ExperimentConfig:
    """Tuned desk-scale defaults per synthetic dataset."""
    if generator == "bouncing_shapes":
        return ExperimentConfig(
            dataset=DatasetConfig(generator=generator, n_train=2048, n_test=192, n_frames=8),
            encoder=EncoderConfig(frame_feature_dim=64, hidden_dim=64, static_dim=16,
                                  dynamic_dim=2, backbone="conv"),
            diffusion=DenoiserConfig(p_mean=-0.4, p_std=1.7),
            denoiser_net=DenoiserNetConfig(base_channels=32),
            optimizer=OptimizerConfig(lr=1e-3, batch_size=16, steps=6000),
            eval=EvalConfig(n_pairs=48, swap_churn=6.0),
        )
    if generator == "toy_speaker":
        return ExperimentConfig(
            dataset=DatasetConfig(generator=generator, n_train=2048, n_test=256,
                                  n_frames=16, n_speakers=96),
            encoder=EncoderConfig(frame_feature_dim=96, hidden_dim=96, static_dim=32,
                                  dynamic_dim=2, backbone="mlp"),
            diffusion=DenoiserConfig(p_mean=-0.6, p_std=1.6),
            denoiser_net=DenoiserNetConfig(width=192, depth=3),
            optimizer=OptimizerConfig(lr=2e-3, batch_size=32, steps=2500),
        )
    if generator == "toy_physio":
        return ExperimentConfig(
            dataset=DatasetConfig(generator=generator, n_train=2048, n_test=256, n_frames=20),
            encoder=EncoderConfig(frame_feature_dim=64, hidden_dim=64, static_dim=16,
                                  dynamic_dim=2, backbone="mlp"),
            diffusion=DenoiserConfig(p_mean=-0.6, p_std=1.6),
            denoiser_net=DenoiserNetConfig(width=128, depth=3),
            optimizer=OptimizerConfig(lr=2e-3, batch_size=32, steps=1500),
        )
    raise ConfigurationError(f"no default config for generator {generator!r}")
