"""Multi-scale fusion of the concatenated features.

Each scale goes through a channel-preserving 3x3 convolution and a
coordinate-attention block; the scales are then merged top-down (deepest
first) by bilinear upsampling, a 1x1 channel projection and element-wise
addition. The fused maps are finally gated by the spatial attention
maps, broadcast across channels.
"""

from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import Tensor, nn

from .memory import ConcatenatedInfo


class CoordAttention(nn.Module):
    """Coordinate attention: factorized axis pooling into per-axis sigmoid gates."""

    def __init__(self, channels: int, reduction: int = 16):
        super().__init__()
        mid = max(8, channels // reduction)
        self.conv1 = nn.Conv2d(channels, mid, kernel_size=1, bias=False)
        self.bn1 = nn.BatchNorm2d(mid)
        self.act = nn.ReLU(inplace=True)
        self.conv_h = nn.Conv2d(mid, channels, kernel_size=1, bias=False)
        self.conv_w = nn.Conv2d(mid, channels, kernel_size=1, bias=False)

    def gates(self, x: Tensor) -> tuple[Tensor, Tensor]:
        _, _, h, w = x.shape
        x_h = F.adaptive_avg_pool2d(x, (h, 1))
        x_w = F.adaptive_avg_pool2d(x, (1, w)).permute(0, 1, 3, 2)
        y = self.act(self.bn1(self.conv1(torch.cat([x_h, x_w], dim=2))))
        y_h, y_w = torch.split(y, [h, w], dim=2)
        a_h = torch.sigmoid(self.conv_h(y_h))
        a_w = torch.sigmoid(self.conv_w(y_w.permute(0, 1, 3, 2)))
        return a_h, a_w

    def forward(self, x: Tensor) -> Tensor:
        a_h, a_w = self.gates(x)
        return x * a_h * a_w


class MultiScaleFusion(nn.Module):
    """Per-scale conv + coordinate attention, then top-down cross-scale addition."""

    def __init__(self, channels: tuple[int, int, int], reduction: int = 16):
        super().__init__()
        c1, c2, c3 = channels
        self.conv1 = nn.Conv2d(c1, c1, kernel_size=3, padding=1)
        self.conv2 = nn.Conv2d(c2, c2, kernel_size=3, padding=1)
        self.conv3 = nn.Conv2d(c3, c3, kernel_size=3, padding=1)
        self.ca1 = CoordAttention(c1, reduction)
        self.ca2 = CoordAttention(c2, reduction)
        self.ca3 = CoordAttention(c3, reduction)
        self.proj32 = nn.Conv2d(c3, c2, kernel_size=1)
        self.proj21 = nn.Conv2d(c2, c1, kernel_size=1)

    def forward(
        self,
        ci: ConcatenatedInfo,
        use_coord_attention: bool = True,
        use_multiscale: bool = True,
    ) -> tuple[Tensor, Tensor, Tensor]:
        h1 = self.conv1(ci.c1)
        h2 = self.conv2(ci.c2)
        h3 = self.conv3(ci.c3)
        if use_coord_attention:
            h1, h2, h3 = self.ca1(h1), self.ca2(h2), self.ca3(h3)
        g3 = h3
        if use_multiscale:
            g2 = h2 + self.proj32(_up2(g3))
            g1 = h1 + self.proj21(_up2(g2))
        else:
            g2, g1 = h2, h1
        return g1, g2, g3


def apply_spatial_attention(
    fused: tuple[Tensor, Tensor, Tensor],
    maps: tuple[Tensor, Tensor, Tensor],
) -> tuple[Tensor, Tensor, Tensor]:
    """Gate each fused scale by its single-channel attention map."""
    out = []
    for g, m in zip(fused, maps):
        if m.shape[-2:] != g.shape[-2:]:
            raise ValueError(f"attention map {tuple(m.shape[-2:])} does not match features {tuple(g.shape[-2:])}")
        out.append(g * m)
    return tuple(out)


def _up2(x: Tensor) -> Tensor:
    return F.interpolate(x, scale_factor=2, mode="bilinear", align_corners=False)
