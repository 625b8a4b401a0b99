"""Frozen multi-resolution feature extraction.

Stages 1-3 produce the pyramid the memory pool is matched against and
never change during training; stage 4 feeds the decoder bottleneck and
stays trainable. For a 256x256 input and base width 64 the stages emit
64x64x64, 128x32x32, 256x16x16 and 512x8x8 feature maps (spatial sizes
scale with the input).
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np
import torch
from torch import Tensor, nn

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


@dataclass
class FeaturePyramid:
    f1: Tensor  # (B, w,  H/4,  W/4)
    f2: Tensor  # (B, 2w, H/8,  W/8)
    f3: Tensor  # (B, 4w, H/16, W/16)
    f4: Tensor  # (B, 8w, H/32, W/32), trainable stage

    def frozen_scales(self) -> tuple[Tensor, Tensor, Tensor]:
        return self.f1, self.f2, self.f3


class EncoderHandle(nn.Module):
    """Backbone wrapper with frozen early stages and a trainable last stage."""

    def __init__(self, name: str, stages: nn.ModuleList, mean: tuple, std: tuple, width: int):
        super().__init__()
        if len(stages) != 4:
            raise ValueError("encoder needs exactly 4 stages")
        self.name = name
        self.width = width
        self.stages = stages
        self.register_buffer("input_mean", torch.tensor(mean).view(1, 3, 1, 1))
        self.register_buffer("input_std", torch.tensor(std).view(1, 3, 1, 1))
        for i in range(3):
            for p in self.stages[i].parameters():
                p.requires_grad_(False)
            self.stages[i].eval()

    def train(self, mode: bool = True) -> "EncoderHandle":
        super().train(mode)
        for i in range(3):
            self.stages[i].eval()  # frozen stages keep inference statistics
        return self

    @property
    def tag(self) -> str:
        return f"{self.name}:{self.frozen_hash()[:12]}"

    def frozen_hash(self) -> str:
        """Hash over the frozen-stage parameters and buffers, in state-dict order."""
        h = hashlib.sha256()
        for i in range(3):
            sd = self.stages[i].state_dict()
            for key in sorted(sd):
                h.update(key.encode())
                h.update(sd[key].detach().cpu().numpy().tobytes())
        return h.hexdigest()

    def trainable_stage_parameters(self):
        return self.stages[3].parameters()

    def forward(self, x: Tensor) -> FeaturePyramid:
        if x.ndim != 4 or x.shape[1] != 3:
            raise ValueError(f"expected (B, 3, H, W) input, got {tuple(x.shape)}")
        if x.shape[2] % 32 != 0 or x.shape[3] % 32 != 0:
            raise ValueError(f"input size must be a multiple of 32, got {tuple(x.shape[2:])}")
        x = (x - self.input_mean) / self.input_std
        f1 = self.stages[0](x)
        f2 = self.stages[1](f1)
        f3 = self.stages[2](f2)
        f4 = self.stages[3](f3)
        return FeaturePyramid(f1=f1, f2=f2, f3=f3, f4=f4)


def extract_pyramid(enc: EncoderHandle, image: np.ndarray | Tensor) -> FeaturePyramid:
    """Extract the feature pyramid of one HxWx3 image (or a (B,3,H,W) batch).

    Inference-mode everywhere, so repeated calls on the same image are
    identical.
    """
    if isinstance(image, np.ndarray):
        t = torch.from_numpy(np.ascontiguousarray(image, dtype=np.float32)).permute(2, 0, 1).unsqueeze(0)
    else:
        t = image if image.ndim == 4 else image.unsqueeze(0)
    was_training = enc.training
    enc.eval()
    with torch.no_grad():
        pyr = enc(t)
    if was_training:
        enc.train()
    return pyr


def _init_conv(conv: nn.Conv2d, gen: torch.Generator) -> None:
    fan_in = conv.in_channels * conv.kernel_size[0] * conv.kernel_size[1]
    std = math.sqrt(2.0 / fan_in)
    with torch.no_grad():
        conv.weight.copy_(torch.randn(conv.weight.shape, generator=gen) * std)
        if conv.bias is not None:
            conv.bias.zero_()


def make_toy_encoder(seed: int = 0, width: int = 64) -> EncoderHandle:
    """Small fixed-architecture extractor with randomly initialized, frozen
    early stages; a hermetic substitute for the pretrained backbone."""
    w = width
    stage1 = nn.Sequential(
        nn.Conv2d(3, w, 3, stride=2, padding=1), nn.ReLU(inplace=True),
        nn.Conv2d(w, w, 3, stride=2, padding=1), nn.ReLU(inplace=True),
        nn.Conv2d(w, w, 3, stride=1, padding=1), nn.ReLU(inplace=True),
    )
    stage2 = nn.Sequential(nn.Conv2d(w, 2 * w, 3, stride=2, padding=1), nn.ReLU(inplace=True))
    stage3 = nn.Sequential(nn.Conv2d(2 * w, 4 * w, 3, stride=2, padding=1), nn.ReLU(inplace=True))
    stage4 = nn.Sequential(nn.Conv2d(4 * w, 8 * w, 3, stride=2, padding=1), nn.ReLU(inplace=True))

    gen = torch.Generator().manual_seed(seed)
    for stage in (stage1, stage2, stage3, stage4):
        for m in stage.modules():
            if isinstance(m, nn.Conv2d):
                _init_conv(m, gen)

    # Calibrate each stage to unit output scale on a fixed probe. A
    # pretrained backbone emits O(1) features; without this the random
    # stages decay with depth and the downstream difference/attention
    # products underflow. ReLU is positively homogeneous, so scaling the
    # last conv of a stage scales the stage output exactly.
    probe = torch.randn(4, 3, 64, 64, generator=gen)
    with torch.no_grad():
        x = probe
        for stage in (stage1, stage2, stage3, stage4):
            x = stage(x)
            std = float(x.std())
            last = [m for m in stage.modules() if isinstance(m, nn.Conv2d)][-1]
            last.weight.mul_(1.0 / std)
            x = x / std

    enc = EncoderHandle(
        name=f"toy-w{w}-s{seed}",
        stages=nn.ModuleList([stage1, stage2, stage3, stage4]),
        mean=(0.5, 0.5, 0.5),
        std=(0.5, 0.5, 0.5),
        width=w,
    )
    return enc


def make_resnet_encoder(weights_path: str | None = None) -> EncoderHandle:
    """Standard 18-layer residual backbone; weights only ever come from a
    local file, never the network."""
    from torchvision.models import resnet18

    net = resnet18(weights=None)
    if weights_path is not None:
        state = torch.load(weights_path, map_location="cpu", weights_only=True)
        net.load_state_dict(state)
    stage1 = nn.Sequential(net.conv1, net.bn1, net.relu, net.maxpool, net.layer1)
    stage2 = net.layer2
    stage3 = net.layer3
    stage4 = net.layer4
    return EncoderHandle(
        name="resnet18",
        stages=nn.ModuleList([stage1, stage2, stage3, stage4]),
        mean=IMAGENET_MEAN,
        std=IMAGENET_STD,
        width=64,
    )
