"""Run configuration dataclasses and YAML round-tripping.

Defaults follow the standard training recipe: 256x256 inputs, batches of
4 normal + 4 simulated-anomalous images, 2700 SGD iterations at lr 0.04,
focal exponent 4, loss weights 0.6 (L1) and 0.4 (focal), 30 memory
samples, image score from the top 100 pixels.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml


@dataclass
class SimConfig:
    """Knobs for the synthetic-anomaly generator."""

    perlin_threshold: float = 0.5
    delta_range: tuple[float, float] = (0.15, 1.0)
    foreground_enhancement: bool = False
    structural_grid: tuple[int, int] = (4, 8)  # rows x cols
    texture_prob: float = 0.5  # probability of a textural (vs structural) noise source
    morph_kernel: int = 6
    min_freq_exp: int = 1  # Perlin cells per axis drawn as 2**U{min..max}
    max_freq_exp: int = 5
    max_retries: int = 10

    def validate(self) -> None:
        lo, hi = self.delta_range
        if not (0.0 <= lo <= hi <= 1.0):
            raise ValueError(f"delta_range must be within [0, 1], got {self.delta_range}")
        if not (0.0 <= self.texture_prob <= 1.0):
            raise ValueError(f"texture_prob must be in [0, 1], got {self.texture_prob}")
        if self.morph_kernel < 1:
            raise ValueError("morph_kernel must be >= 1")


@dataclass
class TextureConfig:
    """Where textural noise comes from: an image directory or a procedural generator."""

    mode: str = "procedural"  # "procedural" | "directory"
    directory: str | None = None

    def validate(self) -> None:
        if self.mode not in ("procedural", "directory"):
            raise ValueError(f"texture mode must be 'procedural' or 'directory', got {self.mode!r}")
        if self.mode == "directory" and not self.directory:
            raise ValueError("directory texture mode requires a directory path")


@dataclass
class EncoderConfig:
    kind: str = "resnet18"  # "resnet18" | "toy"
    weights: str | None = None  # local path to pretrained weights; never downloaded
    width: int = 64  # base channel width; stages carry (w, 2w, 4w, 8w)
    seed: int = 0  # init seed for the toy encoder

    def validate(self) -> None:
        if self.kind not in ("resnet18", "toy"):
            raise ValueError(f"encoder kind must be 'resnet18' or 'toy', got {self.kind!r}")
        if self.kind == "resnet18" and self.width != 64:
            raise ValueError("resnet18 encoder has a fixed width of 64")


@dataclass
class LossConfig:
    gamma: float = 4.0
    alpha: float = 1.0
    weight_l1: float = 0.6
    weight_focal: float = 0.4

    def validate(self) -> None:
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")
        if self.weight_l1 < 0 or self.weight_focal < 0:
            raise ValueError("loss weights must be >= 0")


@dataclass
class TrainConfig:
    iterations: int = 2700
    lr: float = 0.04
    momentum: float = 0.9
    weight_decay: float = 0.0
    batch_normal: int = 4
    batch_anomalous: int = 4
    memory_size: int = 30
    checkpoint_interval: int = 0  # 0: only the final checkpoint is written

    def validate(self) -> None:
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if self.batch_normal < 0 or self.batch_anomalous < 1:
            raise ValueError("batch must contain >= 0 normal and >= 1 anomalous samples")
        if self.memory_size < 1:
            raise ValueError("memory_size must be >= 1")


@dataclass
class ModelFlags:
    """Component toggles; each removes exactly its computation."""

    use_memory: bool = True
    use_multiscale: bool = True
    use_spatial_attention: bool = True
    use_coord_attention: bool = True
    per_scale_select: bool = False  # argmin per scale instead of one global argmin
    ca_reduction: int = 16


@dataclass
class EvalConfig:
    top_k: int = 100
    heatmaps: bool = False


@dataclass
class RunConfig:
    seed: int = 0
    image_size: int = 256
    data_root: str = "."
    category: str = ""
    out_dir: str = "runs/out"
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    sim: SimConfig = field(default_factory=SimConfig)
    texture: TextureConfig = field(default_factory=TextureConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    model: ModelFlags = field(default_factory=ModelFlags)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def validate(self) -> None:
        if self.image_size % 32 != 0:
            raise ValueError(f"image_size must be a multiple of 32, got {self.image_size}")
        self.encoder.validate()
        self.sim.validate()
        self.texture.validate()
        self.loss.validate()
        self.train.validate()

    def to_dict(self) -> dict[str, Any]:
        return _plain(dataclasses.asdict(self))

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "RunConfig":
        return _build(cls, d)


def _plain(obj: Any) -> Any:
    """Collapse tuples to lists so the dict round-trips through YAML cleanly."""
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def _build(cls: type, d: dict[str, Any]) -> Any:
    kwargs: dict[str, Any] = {}
    fields = {f.name: f for f in dataclasses.fields(cls)}
    for name, value in d.items():
        if name not in fields:
            raise ValueError(f"unknown config field {name!r} for {cls.__name__}")
        f = fields[name]
        if dataclasses.is_dataclass(f.type) or (isinstance(f.type, str) and f.type in _NESTED):
            sub = _NESTED[f.type] if isinstance(f.type, str) else f.type
            kwargs[name] = _build(sub, value)
        elif isinstance(value, list):
            kwargs[name] = tuple(value)
        else:
            kwargs[name] = value
    return cls(**kwargs)


_NESTED = {
    "EncoderConfig": EncoderConfig,
    "SimConfig": SimConfig,
    "TextureConfig": TextureConfig,
    "LossConfig": LossConfig,
    "TrainConfig": TrainConfig,
    "ModelFlags": ModelFlags,
    "EvalConfig": EvalConfig,
}


def load_config(path: str | Path) -> RunConfig:
    with open(path) as fh:
        data = yaml.safe_load(fh) or {}
    return RunConfig.from_dict(data)


def save_config(cfg: RunConfig, path: str | Path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        yaml.safe_dump(cfg.to_dict(), fh, sort_keys=False)
