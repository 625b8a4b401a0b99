"""Synthetic anomaly generation on normal images.

Three steps: build a binary region mask (thresholded gradient noise,
optionally intersected with the object foreground), blend a noise source
into that region with a transparency factor, and composite the result
back over the untouched background. Noise sources are either textural
(a texture image) or structural (the input itself, jittered and
tile-shuffled).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from matplotlib.colors import hsv_to_rgb, rgb_to_hsv
from skimage.color import rgb2gray
from skimage.filters import threshold_otsu
from skimage.morphology import binary_closing, binary_opening, footprint_rectangle

from .config import SimConfig
from .data import TextureSource, _as_rng, sample_texture
from .perlin import generate_perlin


class DegenerateMaskError(Exception):
    """Raised when no non-empty anomaly mask could be produced."""


@dataclass(frozen=True)
class SimulatedSample:
    image: np.ndarray  # HxWx3 float32, anomalous composite
    mask: np.ndarray  # HxW float32 in {0, 1}
    delta: float  # transparency factor used in the blend
    noise_kind: str  # "textural" | "structural"


def binarize_field(values: np.ndarray, threshold: float) -> np.ndarray:
    """1 where the field exceeds the threshold, else 0."""
    return (values > threshold).astype(np.float32)


def foreground_mask(image: np.ndarray, kernel: int = 6) -> np.ndarray:
    """Object-region mask: Otsu binarization cleaned by opening then closing.

    Polarity is picked so the side with fewer border pixels counts as the
    object (objects rarely touch every border). Constant images yield an
    all-one mask with a warning.
    """
    gray = rgb2gray(image)
    if float(gray.max() - gray.min()) < 1e-6:
        warnings.warn("constant image, foreground mask degenerates to all-ones", stacklevel=2)
        return np.ones(gray.shape, dtype=np.float32)
    th = threshold_otsu(gray)
    cand = gray > th
    if _border_count(cand) > _border_count(~cand):
        cand = ~cand
    foot = footprint_rectangle((kernel, kernel))
    cleaned = binary_closing(binary_opening(cand, foot), foot)
    if not cleaned.any():
        warnings.warn("foreground vanished after morphology, falling back to all-ones", stacklevel=2)
        return np.ones(gray.shape, dtype=np.float32)
    return cleaned.astype(np.float32)


def _border_count(mask: np.ndarray) -> int:
    return int(mask[0, :].sum() + mask[-1, :].sum() + mask[1:-1, 0].sum() + mask[1:-1, -1].sum())


def combine_masks(region: np.ndarray, fg: np.ndarray | None) -> np.ndarray:
    """Element-wise product of the region mask with the foreground mask."""
    if fg is None:
        return region
    if region.shape != fg.shape:
        raise ValueError(f"mask shapes differ: {region.shape} vs {fg.shape}")
    return region * fg


def structural_noise(
    image: np.ndarray,
    grid: tuple[int, int],
    rng: int | np.random.Generator,
    jitter: bool = True,
    permutation: np.ndarray | None = None,
) -> np.ndarray:
    """Photometric/geometric jitter followed by a uniform tile shuffle.

    Jitter: horizontal mirror with probability 0.5, a rotation by a multiple
    of 90 degrees (square images only), brightness and saturation scaled by
    up to +-30 percent, hue shifted by up to +-0.1. The image is then split
    into ``rows x cols`` tiles which are permuted uniformly at random.
    """
    rng = _as_rng(rng)
    rows, cols = grid
    h, w = image.shape[:2]
    if h % rows != 0 or w % cols != 0:
        raise ValueError(f"grid {rows}x{cols} does not divide image {h}x{w}")

    out = image.astype(np.float32, copy=True)
    if jitter:
        if rng.random() < 0.5:
            out = out[:, ::-1]
        if h == w:
            out = np.rot90(out, k=int(rng.integers(0, 4)))
        hsv = rgb_to_hsv(np.clip(out, 0.0, 1.0))
        hsv[..., 0] = (hsv[..., 0] + rng.uniform(-0.1, 0.1)) % 1.0
        hsv[..., 1] = np.clip(hsv[..., 1] * rng.uniform(0.7, 1.3), 0.0, 1.0)
        hsv[..., 2] = np.clip(hsv[..., 2] * rng.uniform(0.7, 1.3), 0.0, 1.0)
        out = hsv_to_rgb(hsv).astype(np.float32)

    th, tw = h // rows, w // cols
    tiles = out.reshape(rows, th, cols, tw, -1).transpose(0, 2, 1, 3, 4).reshape(rows * cols, th, tw, -1)
    if permutation is None:
        permutation = rng.permutation(rows * cols)
    tiles = tiles[permutation]
    out = tiles.reshape(rows, cols, th, tw, -1).transpose(0, 2, 1, 3, 4).reshape(h, w, -1)
    return np.ascontiguousarray(out, dtype=np.float32)


def blend_noise_foreground(image: np.ndarray, noise: np.ndarray, mask: np.ndarray, delta: float) -> np.ndarray:
    """Transparency blend of the noise source into the masked region.

    Returns ``delta * (M * noise) + (1 - delta) * (M * image)``; zero
    outside the mask.
    """
    if image.shape != noise.shape:
        raise ValueError(f"image/noise shapes differ: {image.shape} vs {noise.shape}")
    if mask.shape != image.shape[:2]:
        raise ValueError(f"mask shape {mask.shape} does not match image {image.shape[:2]}")
    if not (0.0 <= delta <= 1.0):
        raise ValueError(f"delta must be in [0, 1], got {delta}")
    m = mask[:, :, None].astype(np.float32)
    return (np.float32(delta) * (m * noise) + np.float32(1.0 - delta) * (m * image)).astype(np.float32)


def compose_anomaly(image: np.ndarray, noise_fg: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Composite: untouched image outside the mask plus the blended foreground."""
    if image.shape != noise_fg.shape:
        raise ValueError(f"shapes differ: {image.shape} vs {noise_fg.shape}")
    if mask.shape != image.shape[:2]:
        raise ValueError(f"mask shape {mask.shape} does not match image {image.shape[:2]}")
    inv = (1.0 - mask)[:, :, None].astype(np.float32)
    return (inv * image + noise_fg).astype(np.float32)


def simulate(
    image: np.ndarray,
    cfg: SimConfig,
    tex: TextureSource,
    rng: int | np.random.Generator,
) -> SimulatedSample:
    """Produce one simulated-anomalous sample from a normal image.

    Resamples the noise field (up to ``cfg.max_retries`` times) if the
    combined mask comes out empty, then raises ``DegenerateMaskError``.
    """
    rng = _as_rng(rng)
    h, w = image.shape[:2]
    if h != w:
        raise ValueError(f"simulate expects square images, got {h}x{w}")
    image = image.astype(np.float32, copy=False)

    textural = rng.random() < cfg.texture_prob
    fg = foreground_mask(image, cfg.morph_kernel) if cfg.foreground_enhancement else None

    mask = None
    for _ in range(cfg.max_retries):
        fy = 2 ** int(rng.integers(cfg.min_freq_exp, cfg.max_freq_exp + 1))
        fx = 2 ** int(rng.integers(cfg.min_freq_exp, cfg.max_freq_exp + 1))
        seed = int(rng.integers(0, 2**31))
        field = generate_perlin(h, w, (fy, fx), seed)
        candidate = combine_masks(binarize_field(field.values, cfg.perlin_threshold), fg)
        if candidate.any():
            mask = candidate
            break
    if mask is None:
        raise DegenerateMaskError(f"degenerate mask: empty after {cfg.max_retries} attempts")

    if textural:
        noise = sample_texture(tex, h, int(rng.integers(0, 2**31)))
    else:
        noise = structural_noise(image, cfg.structural_grid, rng)

    delta = float(rng.uniform(cfg.delta_range[0], cfg.delta_range[1]))
    fg_blend = blend_noise_foreground(image, noise, mask, delta)
    composite = compose_anomaly(image, fg_blend, mask)
    return SimulatedSample(
        image=composite,
        mask=mask.astype(np.float32),
        delta=delta,
        noise_kind="textural" if textural else "structural",
    )
