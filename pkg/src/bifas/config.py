"""Model and training configuration, with JSON round-tripping.

Defaults reproduce the published setup (256x256 input, 64-channel stem,
[128, 196, 128] blocks, sigma_r^2 = 1, C' = 20, K = 5, Adam at 1e-4 with
weight decay 5e-5, batch 7, 1300 epochs halving every 500). ``tiny_*``
helpers give desk-scale variants used by the tests and acceptance runs.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

from .bilateral import DboParams


@dataclass
class BcnConfig:
    input_size: int = 256
    in_channels: int = 3
    stem_channels: int = 64
    level_channels: tuple = ((128, 196, 128), (128, 196, 128), (128, 196, 128))
    dbo: DboParams = field(default_factory=DboParams)
    # where the DBO sits inside BilateralConvBlock: "input" or "output"
    dbo_position: str = "input"
    # "dbo" or "identity"; identity reproduces the no-bilateral ablation
    bilateral: str = "dbo"

    def __post_init__(self):
        self.level_channels = tuple(tuple(int(c) for c in t) for t in self.level_channels)
        if isinstance(self.dbo, dict):
            self.dbo = DboParams(**self.dbo)
        if len(self.level_channels) != 3 or any(len(t) != 3 for t in self.level_channels):
            raise ValueError("BCN needs exactly three levels of three conv widths each")
        if min(min(t) for t in self.level_channels) <= 0 or self.stem_channels <= 0:
            raise ValueError("channel counts must be positive")
        if self.input_size % 8:
            raise ValueError(f"input_size must be divisible by 8, got {self.input_size}")
        if self.dbo_position not in ("input", "output"):
            raise ValueError(f"dbo_position must be 'input' or 'output', got {self.dbo_position!r}")
        if self.bilateral not in ("dbo", "identity"):
            raise ValueError(f"bilateral must be 'dbo' or 'identity', got {self.bilateral!r}")

    @property
    def map_size(self):
        return self.input_size // 8


@dataclass
class MfrmConfig:
    compressed_channels: int = 20
    kernel_size: int = 5
    encoder_kernel: int = 5

    def __post_init__(self):
        if self.kernel_size % 2 != 1 or self.encoder_kernel % 2 != 1:
            raise ValueError("MFRM kernel sizes must be odd")


@dataclass
class HeadConfig:
    channels: tuple = (128, 64)
    # None for the binary live/spoof setup; 5 for material recognition
    material_classes: int | None = None

    def __post_init__(self):
        self.channels = tuple(int(c) for c in self.channels)


@dataclass
class ModelConfig:
    bcn: BcnConfig = field(default_factory=BcnConfig)
    mfrm: MfrmConfig = field(default_factory=MfrmConfig)
    heads: HeadConfig = field(default_factory=HeadConfig)

    def __post_init__(self):
        if isinstance(self.bcn, dict):
            self.bcn = BcnConfig(**self.bcn)
        if isinstance(self.mfrm, dict):
            self.mfrm = MfrmConfig(**self.mfrm)
        if isinstance(self.heads, dict):
            self.heads = HeadConfig(**self.heads)
        smallest = min(t[-1] for t in self.bcn.level_channels)
        if self.mfrm.compressed_channels > smallest:
            raise ValueError(
                f"compressed_channels={self.mfrm.compressed_channels} exceeds a level width of {smallest}")

    @property
    def material_mode(self):
        return self.heads.material_classes is not None

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass
class TrainConfig:
    lr: float = 1e-4
    weight_decay: float = 5e-5
    batch_size: int = 7
    max_epochs: int = 1300
    lr_halving_period: int = 500
    seed: int = 0
    # optional cap on optimizer steps, for desk-scale runs
    max_steps: int | None = None
    checkpoint_every: int = 100

    def __post_init__(self):
        if self.lr <= 0 or self.weight_decay < 0 or self.batch_size <= 0:
            raise ValueError("lr and batch_size must be positive, weight_decay non-negative")
        if self.max_epochs < 0 or self.lr_halving_period <= 0:
            raise ValueError("max_epochs must be >= 0 and lr_halving_period > 0")


def tiny_model_config(input_size=64, width=8, **bcn_overrides):
    """Small network for CPU-scale experiments: ``width`` channels everywhere."""
    bcn = BcnConfig(input_size=input_size, stem_channels=width,
                    level_channels=((width,) * 3,) * 3, **bcn_overrides)
    return ModelConfig(
        bcn=bcn,
        mfrm=MfrmConfig(compressed_channels=max(1, width // 2)),
        heads=HeadConfig(channels=(2 * width, width)),
    )


def load_config(path):
    """Read a JSON config with optional ``model`` and ``train`` sections."""
    with open(path) as fh:
        raw = json.load(fh)
    model = ModelConfig.from_dict(raw.get("model", {}))
    train = TrainConfig(**raw.get("train", {}))
    return model, train


def save_config(path, model, train):
    with open(path, "w") as fh:
        json.dump({"model": model.to_dict(), "train": dataclasses.asdict(train)}, fh, indent=2)
