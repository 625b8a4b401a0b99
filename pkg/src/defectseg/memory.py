"""Memory pool of normal-sample features and the difference machinery.

The pool stores the frozen three-scale pyramids of N normal training
images. For an input pyramid, the per-element absolute difference
against each memory sample is computed; the sample with the smallest
total difference (summed over every element of all three scales) wins,
and its difference tensors drive both the channel concatenation and the
cascaded spatial attention maps.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F
from torch import Tensor

from .data import DatasetIndex, load_image
from .encoder import EncoderHandle, FeaturePyramid, extract_pyramid


@dataclass
class MemoryPool:
    """Immutable store of frozen feature pyramids; shapes (N, C_k, H_k, W_k)."""

    f1: Tensor
    f2: Tensor
    f3: Tensor
    sources: tuple[str, ...]
    seed: int

    @property
    def size(self) -> int:
        return int(self.f1.shape[0])

    def to(self, dtype: torch.dtype | None = None, device=None) -> "MemoryPool":
        cast = lambda t: t.to(dtype=dtype, device=device)
        return MemoryPool(cast(self.f1), cast(self.f2), cast(self.f3), self.sources, self.seed)


@dataclass
class DifferencePyramid:
    """Absolute feature differences of the input against one memory sample."""

    d1: Tensor
    d2: Tensor
    d3: Tensor

    def total(self) -> Tensor:
        """Sum of all elements across the three scales, per batch item."""
        return (
            self.d1.flatten(1).sum(dim=1)
            + self.d2.flatten(1).sum(dim=1)
            + self.d3.flatten(1).sum(dim=1)
        )


@dataclass
class BestDifference:
    """The winning difference tensors plus the selected memory indices."""

    d1: Tensor
    d2: Tensor
    d3: Tensor
    indices: Tensor  # (B,) long; with per-scale selection this is the scale-3 pick


def build_pool(
    enc: EncoderHandle,
    train_index: DatasetIndex,
    n: int,
    seed: int,
    image_size: int = 256,
) -> MemoryPool:
    """Sample n normal training images (uniform, without replacement, over
    the lexicographically sorted index) and store their frozen pyramids."""
    normals = train_index.normal_items
    if n > len(normals):
        raise ValueError(f"memory size {n} exceeds {len(normals)} normal training images")
    rng = np.random.default_rng(seed)
    picks = sorted(rng.choice(len(normals), size=n, replace=False).tolist())
    f1s, f2s, f3s, sources = [], [], [], []
    for i in picks:
        item = normals[i]
        pyr = extract_pyramid(enc, load_image(item.image_path, image_size))
        f1s.append(pyr.f1[0])
        f2s.append(pyr.f2[0])
        f3s.append(pyr.f3[0])
        sources.append(str(item.image_path))
    return MemoryPool(
        f1=torch.stack(f1s), f2=torch.stack(f2s), f3=torch.stack(f3s),
        sources=tuple(sources), seed=seed,
    )


def pool_from_pyramids(pyramids: list[FeaturePyramid], sources=None, seed: int = 0) -> MemoryPool:
    """Build a pool directly from extracted pyramids (batch dim 1 each)."""
    return MemoryPool(
        f1=torch.cat([p.f1 for p in pyramids]),
        f2=torch.cat([p.f2 for p in pyramids]),
        f3=torch.cat([p.f3 for p in pyramids]),
        sources=tuple(sources or [""] * len(pyramids)),
        seed=seed,
    )


def difference_all(pool: MemoryPool, pyr: FeaturePyramid) -> list[DifferencePyramid]:
    """Per-element |memory - input| against every memory sample."""
    _check_scale(pool.f1, pyr.f1, "scale 1")
    _check_scale(pool.f2, pyr.f2, "scale 2")
    _check_scale(pool.f3, pyr.f3, "scale 3")
    out = []
    for i in range(pool.size):
        out.append(
            DifferencePyramid(
                d1=(pool.f1[i].unsqueeze(0) - pyr.f1).abs(),
                d2=(pool.f2[i].unsqueeze(0) - pyr.f2).abs(),
                d3=(pool.f3[i].unsqueeze(0) - pyr.f3).abs(),
            )
        )
    return out


def _check_scale(pool_t: Tensor, in_t: Tensor, label: str) -> None:
    if pool_t.shape[1:] != in_t.shape[1:]:
        raise ValueError(f"{label} shape mismatch: pool {tuple(pool_t.shape[1:])} vs input {tuple(in_t.shape[1:])}")


def best_difference(dis: list[DifferencePyramid], per_scale: bool = False) -> BestDifference:
    """Pick the memory sample with the minimum total difference.

    The sum runs over all elements of all three scales; ties break toward
    the lowest memory index. With ``per_scale`` each scale runs its own
    argmin, mixing memory samples.
    """
    if not dis:
        raise ValueError("empty difference list")
    if not per_scale:
        totals = torch.stack([d.total() for d in dis])  # (N, B)
        idx = totals.argmin(dim=0)  # first minimal index per batch item
        return BestDifference(
            d1=_gather(dis, idx, "d1"),
            d2=_gather(dis, idx, "d2"),
            d3=_gather(dis, idx, "d3"),
            indices=idx,
        )
    picks = []
    for name in ("d1", "d2", "d3"):
        sums = torch.stack([getattr(d, name).flatten(1).sum(dim=1) for d in dis])
        picks.append(sums.argmin(dim=0))
    return BestDifference(
        d1=_gather(dis, picks[0], "d1"),
        d2=_gather(dis, picks[1], "d2"),
        d3=_gather(dis, picks[2], "d3"),
        indices=picks[2],
    )


def _gather(dis: list[DifferencePyramid], idx: Tensor, name: str) -> Tensor:
    return torch.stack([getattr(dis[int(i)], name)[b] for b, i in enumerate(idx)])


def select_best(pool: MemoryPool, pyr: FeaturePyramid, per_scale: bool = False) -> BestDifference:
    """Streaming equivalent of ``best_difference(difference_all(...))``.

    Two passes over the pool: one to find the winning index per batch item,
    one to rebuild only the winning difference tensors. Avoids holding all
    N difference pyramids at once.
    """
    b = pyr.f1.shape[0]
    n = pool.size
    scales = ((pool.f1, pyr.f1), (pool.f2, pyr.f2), (pool.f3, pyr.f3))
    for pool_t, in_t in scales:
        _check_scale(pool_t, in_t, "scale")

    per_scale_sums = []
    for pool_t, in_t in scales:
        s = torch.empty(n, b, dtype=in_t.dtype, device=in_t.device)
        for i in range(n):
            s[i] = (pool_t[i].unsqueeze(0) - in_t).abs().flatten(1).sum(dim=1)
        per_scale_sums.append(s)

    if per_scale:
        picks = [s.argmin(dim=0) for s in per_scale_sums]
    else:
        total = per_scale_sums[0] + per_scale_sums[1] + per_scale_sums[2]
        picks = [total.argmin(dim=0)] * 3

    def rebuild(scale: int, idx: Tensor) -> Tensor:
        pool_t, in_t = scales[scale]
        return (pool_t[idx] - in_t).abs()

    return BestDifference(
        d1=rebuild(0, picks[0]),
        d2=rebuild(1, picks[1]),
        d3=rebuild(2, picks[2]),
        indices=picks[2] if per_scale else picks[0],
    )


@dataclass
class ConcatenatedInfo:
    """Input features and best differences stacked along channels, input first."""

    c1: Tensor  # (B, 2w,  H/4,  W/4)
    c2: Tensor  # (B, 4w,  H/8,  W/8)
    c3: Tensor  # (B, 8w,  H/16, W/16)


def concat_info(pyr: FeaturePyramid, best: BestDifference) -> ConcatenatedInfo:
    for a, b, label in ((pyr.f1, best.d1, "scale 1"), (pyr.f2, best.d2, "scale 2"), (pyr.f3, best.d3, "scale 3")):
        if a.shape != b.shape:
            raise ValueError(f"{label} shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")
    return ConcatenatedInfo(
        c1=torch.cat([pyr.f1, best.d1], dim=1),
        c2=torch.cat([pyr.f2, best.d2], dim=1),
        c3=torch.cat([pyr.f3, best.d3], dim=1),
    )


def attention_maps(best: BestDifference) -> tuple[Tensor, Tensor, Tensor]:
    """Cascaded single-channel attention maps (m1, m2, m3), shapes (B, 1, H_k, W_k).

    The deepest scale's channel mean seeds the cascade; each shallower map
    is its scale's channel mean gated by the bilinear 2x upsampling of the
    previous map.
    """
    m3 = best.d3.mean(dim=1, keepdim=True)
    m2 = best.d2.mean(dim=1, keepdim=True) * _up2(m3)
    m1 = best.d1.mean(dim=1, keepdim=True) * _up2(m2)
    return m1, m2, m3


def _up2(x: Tensor) -> Tensor:
    return F.interpolate(x, scale_factor=2, mode="bilinear", align_corners=False)
