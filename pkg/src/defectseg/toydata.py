"""Synthetic dataset with known ground truth.

Generates a folder tree shaped like the industrial-inspection layout
that scan_dataset expects: normals are a softly jittered woven pattern,
defects are painted shapes with exact rasterized masks, so pixel-level
metrics are meaningful without any hand labeling.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image
from skimage import draw

SHAPES = ("circle", "rect", "triangle", "star", "heart", "bolt")
PAINTS = ("dark", "bright", "noise")


@dataclass(frozen=True)
class ToySpec:
    category: str = "weave"
    image_size: int = 64
    n_train: int = 60
    n_test_good: int = 10
    n_test_defect: int = 12
    seed: int = 0

    def validate(self) -> None:
        if self.image_size < 16:
            raise ValueError(f"image_size too small: {self.image_size}")
        if min(self.n_train, self.n_test_good, self.n_test_defect) < 1:
            raise ValueError("all split sizes must be positive")


def normal_image(size: int, rng: np.random.Generator) -> np.ndarray:
    """One sample of the normal pattern: crossed gratings with mild jitter."""
    y, x = np.mgrid[0:size, 0:size].astype(np.float64)
    f = 4.0
    px, py = rng.uniform(-0.4, 0.4, size=2)
    g = 0.55 + 0.10 * np.sin(2 * np.pi * f * x / size + px) + 0.10 * np.sin(2 * np.pi * f * y / size + py)
    g = g + rng.normal(0.0, 0.015, size=g.shape)
    tint = np.array([0.95, 1.0, 0.85]) * rng.uniform(0.97, 1.03)
    img = np.clip(g[..., None] * tint[None, None, :], 0.0, 1.0)
    return img.astype(np.float32)


def _heart_outline(n: int = 80) -> tuple[np.ndarray, np.ndarray]:
    t = np.linspace(0.0, 2 * np.pi, n, endpoint=False)
    x = 16 * np.sin(t) ** 3
    y = 13 * np.cos(t) - 5 * np.cos(2 * t) - 2 * np.cos(3 * t) - np.cos(4 * t)
    return -y / 17.0, x / 17.0  # rows grow downward; roughly unit radius


_BOLT_R = np.array([-1.0, -1.0, -0.1, -0.1, 1.0, 0.1, 0.1])
_BOLT_C = np.array([-0.15, 0.65, 0.05, 0.65, -0.35, -0.05, -0.65])


def rasterize_shape(kind: str, size: int, rng: np.random.Generator) -> np.ndarray:
    """Boolean defect mask for one of the SHAPES kinds.

    Resamples until the mask covers a minimum area so no defect is a
    sub-detectable sliver (border clipping and thin polygons otherwise
    produce masks of a handful of pixels).
    """
    if kind not in SHAPES:
        raise ValueError(f"unknown shape {kind!r}")
    min_area = max(30, (size * size) // 80)
    for _ in range(20):
        m = _draw_shape(kind, size, rng)
        if int(m.sum()) >= min_area:
            break
    return m


def _draw_shape(kind: str, size: int, rng: np.random.Generator) -> np.ndarray:
    m = np.zeros((size, size), dtype=bool)
    lo, hi = size // 4, 3 * size // 4
    cy, cx = rng.integers(lo, hi, size=2)
    r = int(rng.integers(max(3, size // 12), max(4, size // 6)))
    if kind == "circle":
        rr, cc = draw.disk((cy, cx), r, shape=m.shape)
    elif kind == "rect":
        h = int(rng.integers(r, 2 * r))
        w = int(rng.integers(r, 2 * r))
        start = (max(0, cy - h // 2), max(0, cx - w // 2))
        rr, cc = draw.rectangle(start, extent=(h, w), shape=m.shape)
        rr, cc = rr.astype(int).ravel(), cc.astype(int).ravel()
    elif kind == "triangle":
        # vertices spread around the center so the triangle is never a sliver
        ang = rng.uniform(0, 2 * np.pi) + np.array([0.0, 2 * np.pi / 3, 4 * np.pi / 3])
        ang = ang + rng.uniform(-0.5, 0.5, size=3)
        rad = rng.uniform(1.2 * r, 2.0 * r, size=3)
        rr, cc = draw.polygon(cy + rad * np.sin(ang), cx + rad * np.cos(ang), shape=m.shape)
    elif kind == "star":
        ang = np.linspace(0, 2 * np.pi, 10, endpoint=False) + rng.uniform(0, np.pi)
        rad = np.where(np.arange(10) % 2 == 0, 2.0 * r, 0.8 * r)
        rr, cc = draw.polygon(cy + rad * np.sin(ang), cx + rad * np.cos(ang), shape=m.shape)
    elif kind == "heart":
        hr, hc = _heart_outline()
        rr, cc = draw.polygon(cy + 2.0 * r * hr, cx + 2.0 * r * hc, shape=m.shape)
    else:  # bolt
        rr, cc = draw.polygon(cy + 2.2 * r * _BOLT_R, cx + 2.2 * r * _BOLT_C, shape=m.shape)
    m[rr, cc] = True
    if not m.any():
        m[cy, cx] = True
    return m


def paint_defect(img: np.ndarray, mask: np.ndarray, kind: str, rng: np.random.Generator) -> np.ndarray:
    if kind not in PAINTS:
        raise ValueError(f"unknown paint {kind!r}")
    out = img.copy()
    if kind == "dark":
        fill = rng.uniform(0.02, 0.14)
    elif kind == "bright":
        fill = rng.uniform(0.9, 1.0)
    else:
        # blocky color noise: per-pixel noise would average to mid-gray at
        # coarse feature scales and vanish against the base texture
        h, w = mask.shape
        field = rng.random(size=(h // 4 + 1, w // 4 + 1, 3)).astype(np.float32)
        field = np.repeat(np.repeat(field, 4, axis=0), 4, axis=1)[:h, :w]
        out[mask] = field[mask]
        return out
    out[mask] = np.float32(fill)
    return out


def _save_image(img: np.ndarray, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    arr = np.clip(np.round(img * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(arr).save(path)


def _save_mask(mask: np.ndarray, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray((mask.astype(np.uint8) * 255)).save(path)


def gen_toyset(root: Path | str, spec: ToySpec | None = None) -> Path:
    """Write the full tree; returns the category directory."""
    spec = spec or ToySpec()
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    root = Path(root)
    cat = root / spec.category
    size = spec.image_size
    for i in range(spec.n_train):
        _save_image(normal_image(size, rng), cat / "train" / "good" / f"{i:03d}.png")
    for i in range(spec.n_test_good):
        _save_image(normal_image(size, rng), cat / "test" / "good" / f"{i:03d}.png")
    for i in range(spec.n_test_defect):
        shape = SHAPES[i % len(SHAPES)]
        paint = PAINTS[i % len(PAINTS)]
        img = normal_image(size, rng)
        mask = rasterize_shape(shape, size, rng)
        bad = paint_defect(img, mask, paint, rng)
        _save_image(bad, cat / "test" / shape / f"{i:03d}.png")
        _save_mask(mask, cat / "ground_truth" / shape / f"{i:03d}_mask.png")
    return cat
