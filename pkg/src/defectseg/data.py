"""Dataset ingestion and image/texture loading.

Datasets follow the MVTec-style layout::

    <root>/<category>/train/good/*.png
    <root>/<category>/test/good/*.png
    <root>/<category>/test/<defect>/*.png
    <root>/<category>/ground_truth/<defect>/<stem>_mask.png

Train splits contain only normal images; test splits mix normal
(``good``) and anomalous items. Images are decoded to float32 HxWx3 in
[0, 1]; any encoder-specific mean/std normalization happens inside the
encoder, so simulation math stays in plain pixel space.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from PIL import Image

IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff"}


class DatasetError(Exception):
    pass


@dataclass(frozen=True)
class DatasetItem:
    image_path: Path
    label: int  # 0 normal, 1 anomalous
    mask_path: Path | None = None
    defect_type: str = "good"


@dataclass
class DatasetIndex:
    root: Path
    category: str
    split: str
    items: list[DatasetItem] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.items)

    @property
    def normal_items(self) -> list[DatasetItem]:
        return [it for it in self.items if it.label == 0]

    @property
    def anomalous_items(self) -> list[DatasetItem]:
        return [it for it in self.items if it.label == 1]


def scan_dataset(root: str | Path, category: str, split: str) -> DatasetIndex:
    """Index one category split; items are sorted lexicographically by path."""
    if split not in ("train", "test"):
        raise DatasetError(f"split must be 'train' or 'test', got {split!r}")
    root = Path(root)
    base = root / category
    if not base.is_dir():
        raise DatasetError(f"category not found: {base}")
    split_dir = base / split
    if not split_dir.is_dir():
        raise DatasetError(f"split directory not found: {split_dir}")

    items: list[DatasetItem] = []
    if split == "train":
        good = split_dir / "good"
        if not good.is_dir():
            raise DatasetError(f"train split missing 'good' directory: {good}")
        for p in _sorted_images(good):
            items.append(DatasetItem(image_path=p, label=0))
    else:
        gt_root = base / "ground_truth"
        for sub in sorted(d for d in split_dir.iterdir() if d.is_dir()):
            defect = sub.name
            for p in _sorted_images(sub):
                if defect == "good":
                    items.append(DatasetItem(image_path=p, label=0))
                    continue
                mask = gt_root / defect / f"{p.stem}_mask.png"
                if not mask.is_file():
                    candidates = sorted((gt_root / defect).glob(f"{p.stem}*")) if (gt_root / defect).is_dir() else []
                    mask = candidates[0] if candidates else None
                if mask is None:
                    warnings.warn(
                        f"anomalous test item without ground-truth mask, "
                        f"excluded from pixel-level evaluation: {p}",
                        stacklevel=2,
                    )
                items.append(DatasetItem(image_path=p, label=1, mask_path=mask, defect_type=defect))
    items.sort(key=lambda it: str(it.image_path))
    return DatasetIndex(root=root, category=category, split=split, items=items)


def _sorted_images(directory: Path) -> list[Path]:
    return sorted(p for p in directory.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES and p.is_file())


def resize_bilinear(arr: np.ndarray, size: int) -> np.ndarray:
    """Bilinear resize of an HxWxC float array to size x size."""
    t = torch.from_numpy(np.ascontiguousarray(arr, dtype=np.float32)).permute(2, 0, 1).unsqueeze(0)
    out = F.interpolate(t, size=(size, size), mode="bilinear", align_corners=False)
    return out.squeeze(0).permute(1, 2, 0).numpy()


def _decode(path: Path) -> np.ndarray:
    """Decode to HxWxC float32 in [0, 1]; 8- and 16-bit inputs supported."""
    try:
        with Image.open(path) as img:
            if img.mode in ("I", "I;16", "I;16B", "I;16L"):
                arr = np.asarray(img, dtype=np.float32) / 65535.0
            elif img.mode == "F":
                arr = np.asarray(img, dtype=np.float32)
            elif img.mode in ("L", "LA", "P", "1"):
                arr = np.asarray(img.convert("L"), dtype=np.float32) / 255.0
            else:
                arr = np.asarray(img.convert("RGB"), dtype=np.float32) / 255.0
    except Exception as exc:
        raise DatasetError(f"cannot decode image {path}: {exc}") from exc
    if arr.ndim == 2:
        arr = arr[:, :, None]
    return arr


def load_image(path: str | Path, size: int) -> np.ndarray:
    """Load one image as size x size x 3 float32 in [0, 1].

    Grayscale inputs are replicated across the three channels; resizing is
    bilinear.
    """
    arr = _decode(Path(path))
    if arr.shape[2] == 1:
        arr = np.repeat(arr, 3, axis=2)
    if arr.shape[0] != size or arr.shape[1] != size:
        arr = resize_bilinear(arr, size)
    return np.clip(arr, 0.0, 1.0)


def load_mask(path: str | Path, size: int) -> np.ndarray:
    """Load a ground-truth mask as size x size float32 in {0, 1}.

    Resizing introduces intermediate values, so the mask is re-binarized at
    0.5 after the bilinear resize.
    """
    arr = _decode(Path(path))
    if arr.shape[2] > 1:
        arr = arr.mean(axis=2, keepdims=True)
    if arr.shape[0] != size or arr.shape[1] != size:
        arr = resize_bilinear(arr, size)
    return (arr[:, :, 0] >= 0.5).astype(np.float32)


@dataclass(frozen=True)
class TextureSource:
    """Noise-texture provider: a directory of texture photos or a procedural generator.

    The procedural mode mixes sinusoidal gratings, checker fields and
    smoothed noise; it exists so the pipeline runs with no external data and
    is not a substitute for a real texture photo collection.
    """

    mode: str = "procedural"
    directory: Path | None = None

    def __post_init__(self) -> None:
        if self.mode not in ("procedural", "directory"):
            raise ValueError(f"unknown texture mode {self.mode!r}")
        if self.mode == "directory":
            if self.directory is None:
                raise ValueError("directory texture mode requires a path")
            if not Path(self.directory).is_dir():
                raise DatasetError(f"texture directory does not exist: {self.directory}")


def _as_rng(rng: int | np.random.Generator) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def sample_texture(src: TextureSource, size: int, rng: int | np.random.Generator) -> np.ndarray:
    """Draw one size x size x 3 texture image in [0, 1]; deterministic per seed."""
    rng = _as_rng(rng)
    if src.mode == "directory":
        files = _sorted_images(Path(src.directory))
        if not files:
            raise DatasetError(f"no decodable images in texture directory {src.directory}")
        path = files[rng.integers(len(files))]
        img = load_image(path, max(size, 64))
        return _random_crop_resize(img, size, rng)
    return procedural_texture(size, rng)


def _random_crop_resize(img: np.ndarray, size: int, rng: np.random.Generator) -> np.ndarray:
    h, w = img.shape[:2]
    scale = rng.uniform(0.5, 1.0)
    ch, cw = max(8, int(h * scale)), max(8, int(w * scale))
    y0 = int(rng.integers(0, h - ch + 1))
    x0 = int(rng.integers(0, w - cw + 1))
    crop = img[y0 : y0 + ch, x0 : x0 + cw]
    if crop.shape[0] != size or crop.shape[1] != size:
        crop = resize_bilinear(crop, size)
    return np.clip(crop, 0.0, 1.0)


def procedural_texture(size: int, rng: int | np.random.Generator) -> np.ndarray:
    """Synthesize a texture from gratings, checkers and smoothed noise layers."""
    rng = _as_rng(rng)
    ys, xs = np.mgrid[0:size, 0:size].astype(np.float64) / size
    gray = np.zeros((size, size), dtype=np.float64)
    n_layers = int(rng.integers(2, 5))
    for _ in range(n_layers):
        kind = rng.choice(["grating", "checker", "noise"])
        amp = rng.uniform(0.3, 1.0)
        if kind == "grating":
            f = rng.uniform(2.0, 16.0)
            theta = rng.uniform(0.0, np.pi)
            phase = rng.uniform(0.0, 2 * np.pi)
            gray += amp * np.sin(2 * np.pi * f * (xs * np.cos(theta) + ys * np.sin(theta)) + phase)
        elif kind == "checker":
            fy = int(rng.integers(2, 12))
            fx = int(rng.integers(2, 12))
            cells = (np.floor(ys * fy).astype(int) + np.floor(xs * fx).astype(int)) % 2
            gray += amp * (2.0 * cells - 1.0)
        else:
            coarse = rng.standard_normal((size // 8 + 1, size // 8 + 1))
            t = torch.from_numpy(coarse[None, None].astype(np.float32))
            smooth = F.interpolate(t, size=(size, size), mode="bilinear", align_corners=False)
            gray += amp * smooth[0, 0].numpy()

    lo, hi = gray.min(), gray.max()
    if hi - lo < 1e-9:
        gray = np.full_like(gray, 0.5)
    else:
        gray = (gray - lo) / (hi - lo)

    # Tint: blend between two random colors along the gray axis.
    c0 = rng.uniform(0.0, 1.0, size=3)
    c1 = rng.uniform(0.0, 1.0, size=3)
    img = gray[:, :, None] * c1[None, None, :] + (1.0 - gray[:, :, None]) * c0[None, None, :]
    return np.clip(img, 0.0, 1.0).astype(np.float32)
