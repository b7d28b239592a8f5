"""Configuration dataclasses and strict JSON (de)serialization.

One JSON document configures a whole run; unknown keys are rejected at
every level so typos fail fast instead of silently using defaults.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


@dataclass
class SparseAttentionConfig:
    num_hash_rounds: int = 1
    bucket_count: int = 8
    rng_seed: int = 0

    def validate(self):
        if self.bucket_count < 1:
            raise ConfigError(f"bucket_count must be >= 1, got {self.bucket_count}")
        if self.num_hash_rounds < 1:
            raise ConfigError(f"num_hash_rounds must be >= 1, got {self.num_hash_rounds}")


@dataclass
class ModelConfig:
    base_channels: int = 32
    unet_levels: int = 3
    blocks_per_level: int = 2
    scale: int = 4
    use_layernorm: bool = True
    use_bicubic_skip: bool = True
    use_gdfn: bool = True
    use_unet: bool = True
    attention: str = "sparse"
    dw_activation: str = "none"
    ca_reduction: int = 16
    gdfn_expansion: float = 2.0
    sparse: SparseAttentionConfig = field(default_factory=SparseAttentionConfig)

    def validate(self):
        if self.scale not in (2, 3, 4):
            raise ConfigError(f"scale must be 2, 3 or 4, got {self.scale}")
        if self.unet_levels < 1:
            raise ConfigError(f"unet_levels must be >= 1, got {self.unet_levels}")
        if self.blocks_per_level < 1:
            raise ConfigError(f"blocks_per_level must be >= 1, got {self.blocks_per_level}")
        if self.base_channels < 1:
            raise ConfigError(f"base_channels must be >= 1, got {self.base_channels}")
        if self.attention not in ("dense", "sparse"):
            raise ConfigError(f"attention must be 'dense' or 'sparse', got {self.attention!r}")
        if self.dw_activation not in ("none", "gelu"):
            raise ConfigError(f"dw_activation must be 'none' or 'gelu', got {self.dw_activation!r}")
        self.sparse.validate()


# kernel-width sampling ranges during training, keyed by scale
CONFIG1_WIDTH_RANGES = {2: (0.2, 2.0), 3: (0.2, 3.0), 4: (0.2, 4.0)}
CONFIG2_WIDTH_RANGE = (0.6, 5.0)
CONFIG2_KERNEL_SIZES = {2: 11, 4: 31}
CONFIG1_KERNEL_SIZE = 21
# evaluation grids: 8 isotropic widths, endpoints included
TEST_GRID_RANGES = {2: (0.80, 1.60), 3: (1.35, 2.40), 4: (1.8, 3.2)}


@dataclass
class DegradationSpec:
    mode: str = "config1"           # config1 | config2 | identity
    scale: int = 4
    kernel_size: Optional[int] = None   # defaults per mode/scale
    width_range: Optional[tuple] = None
    rotation_range: tuple = (-3.141592653589793, 3.141592653589793)
    noise_sigma: float = 0.0        # AWGN std on the 0..255 scale
    seed: int = 0
    range_is_variance: bool = False  # interpret width_range as sigma^2

    def validate(self):
        if self.mode not in ("config1", "config2", "identity"):
            raise ConfigError(f"degradation mode must be config1/config2/identity, got {self.mode!r}")
        if self.scale not in (2, 3, 4):
            raise ConfigError(f"scale must be 2, 3 or 4, got {self.scale}")
        if self.mode == "config2" and self.kernel_size is None and self.scale not in CONFIG2_KERNEL_SIZES:
            raise ConfigError(
                f"config2 defines kernel sizes only for scales {sorted(CONFIG2_KERNEL_SIZES)}; "
                f"pass kernel_size explicitly for scale {self.scale}")
        if self.noise_sigma < 0:
            raise ConfigError(f"noise_sigma must be >= 0, got {self.noise_sigma}")

    def resolved_kernel_size(self) -> int:
        if self.kernel_size is not None:
            return self.kernel_size
        if self.mode == "config2":
            return CONFIG2_KERNEL_SIZES[self.scale]
        return CONFIG1_KERNEL_SIZE

    def resolved_width_range(self) -> tuple:
        if self.width_range is not None:
            lo, hi = self.width_range
        elif self.mode == "config2":
            lo, hi = CONFIG2_WIDTH_RANGE
        else:
            lo, hi = CONFIG1_WIDTH_RANGES[self.scale]
        if self.range_is_variance:
            lo, hi = lo ** 0.5, hi ** 0.5
        return (lo, hi)


@dataclass
class CropPolicy:
    center_size: int = 512
    patch_size: int = 64            # LR patch side; HR crops are patch_size * scale
    mode: str = "center_then_random"  # center_then_random | random_only
    seed: int = 0

    def validate(self):
        if self.mode not in ("center_then_random", "random_only"):
            raise ConfigError(f"crop mode must be center_then_random/random_only, got {self.mode!r}")
        if self.patch_size < 1 or self.center_size < self.patch_size:
            raise ConfigError(
                f"need 1 <= patch_size <= center_size, got {self.patch_size}/{self.center_size}")


@dataclass
class TrainConfig:
    stage: str = "psnr"             # psnr | gan
    iterations: int = 1_200_000
    batch_size: int = 4
    beta1: float = 0.9
    beta2: float = 0.99
    adam_eps: float = 1e-8
    lr: float = 4e-4
    decay_every: Optional[int] = 300_000   # None = constant (GAN stage default)
    lr_decay: float = 0.5
    w_l1: float = 1.0
    w_perc: float = 1.0
    w_adv: float = 0.1
    val_every: int = 1000
    ckpt_every: int = 10000
    grad_clip: float = 0.0          # 0 disables clipping
    disc_base_channels: int = 64
    init_checkpoint: Optional[str] = None  # PSNR-stage weights for the GAN stage

    def validate(self):
        if self.stage not in ("psnr", "gan"):
            raise ConfigError(f"stage must be 'psnr' or 'gan', got {self.stage!r}")
        for name in ("w_l1", "w_perc", "w_adv"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        for name in ("beta1", "beta2"):
            b = getattr(self, name)
            if not 0.0 < b < 1.0:
                raise ConfigError(f"{name} must lie in (0, 1), got {b}")
        if self.iterations < 1 or self.batch_size < 1:
            raise ConfigError("iterations and batch_size must be >= 1")

    @staticmethod
    def gan_defaults() -> "TrainConfig":
        return TrainConfig(stage="gan", lr=1e-4, decay_every=None, iterations=1_200_000)


@dataclass
class DataConfig:
    train_manifest: Optional[str] = None
    val_manifest: Optional[str] = None

    def validate(self):
        pass


@dataclass
class RunConfig:
    schema_version: int = SCHEMA_VERSION
    seed: int = 0
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    degradation: DegradationSpec = field(default_factory=DegradationSpec)
    crop: CropPolicy = field(default_factory=CropPolicy)
    data: DataConfig = field(default_factory=DataConfig)

    def validate(self):
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError(
                f"unsupported schema_version {self.schema_version}, expected {SCHEMA_VERSION}")
        self.model.validate()
        self.train.validate()
        self.degradation.validate()
        self.crop.validate()
        self.data.validate()
        if self.model.scale != self.degradation.scale:
            raise ConfigError(
                f"model scale {self.model.scale} and degradation scale "
                f"{self.degradation.scale} must agree")


_TUPLE_FIELDS = {"width_range", "rotation_range"}


def _from_dict(cls, payload: dict, path: str):
    if not isinstance(payload, dict):
        raise ConfigError(f"{path or 'config'}: expected an object, got {type(payload).__name__}")
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(payload) - set(known)
    if unknown:
        raise ConfigError(f"{path or 'config'}: unknown keys {sorted(unknown)}")
    nested = {"model": ModelConfig, "train": TrainConfig, "degradation": DegradationSpec,
              "crop": CropPolicy, "data": DataConfig, "sparse": SparseAttentionConfig}
    kwargs = {}
    for name, value in payload.items():
        if name in nested:
            kwargs[name] = _from_dict(nested[name], value, f"{path}{name}.")
        elif name in _TUPLE_FIELDS and value is not None:
            kwargs[name] = tuple(value)
        else:
            kwargs[name] = value
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"{path or 'config'}: {exc}") from exc


def _to_dict(obj):
    out = {}
    for f in dataclasses.fields(obj):
        value = getattr(obj, f.name)
        if dataclasses.is_dataclass(value):
            out[f.name] = _to_dict(value)
        elif isinstance(value, tuple):
            out[f.name] = list(value)
        else:
            out[f.name] = value
    return out


def run_config_from_dict(payload: dict) -> RunConfig:
    cfg = _from_dict(RunConfig, payload, "")
    cfg.validate()
    return cfg


def run_config_to_json(cfg: RunConfig) -> str:
    return json.dumps(_to_dict(cfg), indent=2) + "\n"


def load_run_config(path) -> RunConfig:
    text = Path(path).read_text()
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return run_config_from_dict(payload)
