"""U-Net style segmentation network over the frozen pyramid.

The decoder doubles resolution five times (H/32 back to H). Each level
is a bilinear upsampling followed by a basic convolution block (conv,
batch norm, ReLU) and a pair of stacked basic blocks; the attention-
gated fused features join by channel concatenation at the three pyramid
resolutions. The last level ends in a single basic block plus a
2-channel convolution whose per-pixel softmax gives the anomaly
probability.
"""

from __future__ import annotations

import numpy as np
import torch
import torch.nn.functional as F
from torch import Tensor, nn

from .config import ModelFlags
from .encoder import EncoderHandle, FeaturePyramid
from .fusion import MultiScaleFusion, apply_spatial_attention
from .memory import (
    ConcatenatedInfo,
    MemoryPool,
    attention_maps,
    concat_info,
    select_best,
)


def _basic_block(cin: int, cout: int) -> nn.Sequential:
    return nn.Sequential(
        nn.Conv2d(cin, cout, kernel_size=3, padding=1, bias=False),
        nn.BatchNorm2d(cout),
        nn.ReLU(inplace=True),
    )


class _UpLevel(nn.Module):
    """Bilinear x2 upsampling, a basic block, optional skip concat, two basic blocks.

    Skips are batch-normed before the concat: the attention gating can
    leave them orders of magnitude below the trunk activations, which
    would starve the skip path of gradient.
    """

    def __init__(self, cin: int, cmid: int, skip: int, cout: int):
        super().__init__()
        self.pre = _basic_block(cin, cmid)
        self.skip_bn = nn.BatchNorm2d(skip) if skip else None
        self.post = nn.Sequential(_basic_block(cmid + skip, cout), _basic_block(cout, cout))

    def forward(self, x: Tensor, skip: Tensor | None = None) -> Tensor:
        x = F.interpolate(x, scale_factor=2, mode="bilinear", align_corners=False)
        x = self.pre(x)
        if skip is not None:
            x = torch.cat([x, self.skip_bn(skip)], dim=1)
        return self.post(x)


class Decoder(nn.Module):
    def __init__(self, width: int):
        super().__init__()
        w = width
        wd = max(2, (3 * w) // 4)  # 48 at the default width
        self.level1 = _UpLevel(8 * w, 4 * w, skip=8 * w, cout=4 * w)  # H/16, joins scale 3
        self.level2 = _UpLevel(4 * w, 2 * w, skip=4 * w, cout=2 * w)  # H/8, joins scale 2
        self.level3 = _UpLevel(2 * w, w, skip=2 * w, cout=w)          # H/4, joins scale 1
        self.level4 = _UpLevel(w, wd, skip=0, cout=wd)                # H/2
        self.up5 = _basic_block(wd, wd)                               # H
        self.head = nn.Sequential(_basic_block(wd, wd), nn.Conv2d(wd, 2, kernel_size=3, padding=1))

    def forward(self, bottleneck: Tensor, skips: tuple[Tensor, Tensor, Tensor]) -> Tensor:
        s1, s2, s3 = skips
        x = self.level1(bottleneck, s3)
        x = self.level2(x, s2)
        x = self.level3(x, s1)
        x = self.level4(x)
        x = self.up5(F.interpolate(x, scale_factor=2, mode="bilinear", align_corners=False))
        return self.head(x)


class SegModel(nn.Module):
    """End-to-end segmentation model: encoder, memory comparison, fusion, decoder."""

    def __init__(
        self,
        encoder: EncoderHandle,
        pool: MemoryPool | None,
        flags: ModelFlags | None = None,
    ):
        super().__init__()
        self.encoder = encoder
        self.pool = pool
        self.flags = flags or ModelFlags()
        w = encoder.width
        self.msff = MultiScaleFusion(channels=(2 * w, 4 * w, 8 * w), reduction=self.flags.ca_reduction)
        self.decoder = Decoder(width=w)
        if self.flags.use_memory and pool is None:
            raise ValueError("memory is enabled but no pool was given")

    def forward(self, x: Tensor, collect: bool = False):
        pyr: FeaturePyramid = self.encoder(x)
        if self.flags.use_memory:
            best = select_best(self.pool, pyr, per_scale=self.flags.per_scale_select)
            ci = concat_info(pyr, best)
        else:
            best = None
            ci = ConcatenatedInfo(
                c1=torch.cat([pyr.f1, pyr.f1], dim=1),
                c2=torch.cat([pyr.f2, pyr.f2], dim=1),
                c3=torch.cat([pyr.f3, pyr.f3], dim=1),
            )
        if self.flags.use_spatial_attention and best is not None:
            maps = attention_maps(best)
        else:
            maps = _unit_maps(pyr)
        fused = self.msff(
            ci,
            use_coord_attention=self.flags.use_coord_attention,
            use_multiscale=self.flags.use_multiscale,
        )
        gated = apply_spatial_attention(fused, maps)
        logits = self.decoder(pyr.f4, gated)
        probs = torch.softmax(logits, dim=1)[:, 1]
        if collect:
            return probs, {
                "pyramid": pyr,
                "best": best,
                "ci": ci,
                "maps": maps,
                "fused": fused,
                "gated": gated,
                "logits": logits,
            }
        return probs


def _unit_maps(pyr: FeaturePyramid) -> tuple[Tensor, Tensor, Tensor]:
    mk = lambda f: torch.ones(f.shape[0], 1, f.shape[2], f.shape[3], dtype=f.dtype, device=f.device)
    return mk(pyr.f1), mk(pyr.f2), mk(pyr.f3)


def trainable_parameters(model: SegModel) -> dict[str, Tensor]:
    """Everything the optimizer touches; excludes the frozen encoder stages."""
    return {n: p for n, p in model.named_parameters() if p.requires_grad}


def infer(model: SegModel, image: np.ndarray) -> np.ndarray:
    """Per-pixel anomaly probabilities for one HxWx3 image in [0, 1]."""
    t = torch.from_numpy(np.ascontiguousarray(image, dtype=np.float32)).permute(2, 0, 1).unsqueeze(0)
    was_training = model.training
    model.eval()
    with torch.no_grad():
        probs = model(t)
    if was_training:
        model.train()
    return probs[0].numpy()
