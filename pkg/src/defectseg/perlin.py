"""Classic 2D gradient noise.

Unit gradient vectors sit on a coarse lattice; values between lattice
points are smoothstep-interpolated dot products. The raw field lies in
[-sqrt(2)/2, sqrt(2)/2] and is rescaled by sqrt(2) so the output covers
[-1, 1]. The field is exactly zero at every lattice point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class PerlinField:
    values: np.ndarray  # (h, w) float64 in [-1, 1]
    freq: tuple[int, int]  # lattice cells along (y, x)
    seed: int


def _fade(t: np.ndarray) -> np.ndarray:
    return t * t * t * (t * (t * 6.0 - 15.0) + 10.0)


def generate_perlin(h: int, w: int, freq: int | tuple[int, int], seed: int) -> PerlinField:
    """Sample an (h, w) gradient-noise field with the given cell counts.

    ``freq`` is the number of lattice cells per axis, either one value for
    both axes or a ``(fy, fx)`` pair. Requires ``freq >= 1`` and the image
    to be at least one pixel per cell. Deterministic per seed.
    """
    fy, fx = (freq, freq) if isinstance(freq, int) else freq
    if fy < 1 or fx < 1:
        raise ValueError(f"freq must be >= 1, got {(fy, fx)}")
    if h < fy or w < fx:
        raise ValueError(f"field {h}x{w} smaller than lattice {fy}x{fx}")

    rng = np.random.default_rng(seed)
    angles = rng.uniform(0.0, 2.0 * math.pi, size=(fy + 1, fx + 1))
    grad_y = np.sin(angles)
    grad_x = np.cos(angles)

    # Integer pixel coordinates scaled into lattice space; exact integers at
    # lattice points, which pins the field to zero there.
    ys = (np.arange(h, dtype=np.float64) * fy) / h
    xs = (np.arange(w, dtype=np.float64) * fx) / w
    iy = np.minimum(ys.astype(np.intp), fy - 1)
    ix = np.minimum(xs.astype(np.intp), fx - 1)
    ty = (ys - iy)[:, None]
    tx = (xs - ix)[None, :]

    iyg = iy[:, None]
    ixg = ix[None, :]

    def corner_dot(dy: int, dx: int) -> np.ndarray:
        gy = grad_y[iyg + dy, ixg + dx]
        gx = grad_x[iyg + dy, ixg + dx]
        return gy * (ty - dy) + gx * (tx - dx)

    n00 = corner_dot(0, 0)
    n01 = corner_dot(0, 1)
    n10 = corner_dot(1, 0)
    n11 = corner_dot(1, 1)

    u = _fade(tx)
    v = _fade(ty)
    top = n00 + u * (n01 - n00)
    bot = n10 + u * (n11 - n10)
    values = math.sqrt(2.0) * (top + v * (bot - top))
    return PerlinField(values=values, freq=(fy, fx), seed=seed)


def lattice_pixels(field: PerlinField) -> list[tuple[int, int]]:
    """Pixel coordinates that fall exactly on lattice points."""
    h, w = field.values.shape
    fy, fx = field.freq
    ys = [p for p in range(h) if (p * fy) % h == 0]
    xs = [p for p in range(w) if (p * fx) % w == 0]
    return [(y, x) for y in ys for x in xs]
