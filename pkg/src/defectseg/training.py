"""Losses and the training loop.

Training needs only normal images: each batch is half clean images with
all-zero targets and half synthetic anomalies paired with their exact
masks. The objective mixes a pixel L1 term with a focal term that
concentrates on hard pixels.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import torch
from torch import Tensor

from .config import LossConfig, RunConfig
from .data import TextureSource
from .network import SegModel, trainable_parameters
from .simulate import DegenerateMaskError, simulate

FOCAL_EPS = 1e-7


class TrainingAborted(RuntimeError):
    """Raised when the loss turns non-finite."""


def l1_loss(pred: Tensor, target: Tensor) -> Tensor:
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {tuple(pred.shape)} vs {tuple(target.shape)}")
    return (pred - target).abs().mean()


def focal_loss(pred: Tensor, target: Tensor, gamma: float = 4.0, alpha: float = 1.0) -> Tensor:
    """Mean of -alpha * (1 - p_t)^gamma * log(p_t) with p_t clamped away from 0."""
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {tuple(pred.shape)} vs {tuple(target.shape)}")
    pt = torch.where(target > 0.5, pred, 1.0 - pred)
    pt = pt.clamp(min=FOCAL_EPS, max=1.0)
    return (-alpha * (1.0 - pt) ** gamma * torch.log(pt)).mean()


def total_loss(pred: Tensor, target: Tensor, cfg: LossConfig) -> tuple[Tensor, Tensor, Tensor]:
    """(total, l1 part, focal part)."""
    part_l1 = l1_loss(pred, target)
    part_f = focal_loss(pred, target, gamma=cfg.gamma, alpha=cfg.alpha)
    return cfg.weight_l1 * part_l1 + cfg.weight_focal * part_f, part_l1, part_f


@dataclass(frozen=True)
class Batch:
    images: Tensor  # (B, 3, H, W)
    targets: Tensor  # (B, H, W) in {0, 1}


def make_batch(
    normals: Sequence[np.ndarray],
    cfg: RunConfig,
    tex: TextureSource,
    rng: np.random.Generator,
) -> Batch:
    """batch_normal clean images followed by batch_anomalous simulated ones."""
    if not normals:
        raise ValueError("no normal images to sample from")
    tc = cfg.train
    images: list[np.ndarray] = []
    targets: list[np.ndarray] = []
    picks = rng.integers(0, len(normals), size=tc.batch_normal)
    for i in picks:
        img = normals[int(i)]
        images.append(img)
        targets.append(np.zeros(img.shape[:2], dtype=np.float32))
    made = 0
    attempts = 0
    while made < tc.batch_anomalous:
        attempts += 1
        if attempts > 20 * tc.batch_anomalous:
            raise DegenerateMaskError("could not synthesize enough anomalous samples")
        img = normals[int(rng.integers(0, len(normals)))]
        try:
            sample = simulate(img, cfg.sim, tex, rng)
        except DegenerateMaskError:
            continue
        images.append(sample.image)
        targets.append(sample.mask)
        made += 1
    stack = np.stack(images).transpose(0, 3, 1, 2)
    return Batch(
        images=torch.from_numpy(np.ascontiguousarray(stack)),
        targets=torch.from_numpy(np.stack(targets)),
    )


@dataclass(frozen=True)
class TrainStep:
    step: int
    total: float
    l1: float
    focal: float


@dataclass
class TrainResult:
    steps: list[TrainStep]

    @property
    def final(self) -> TrainStep:
        return self.steps[-1]


def write_loss_csv(steps: Sequence[TrainStep], path: Path | str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "total", "l1", "focal"])
        for s in steps:
            writer.writerow([s.step, f"{s.total:.8f}", f"{s.l1:.8f}", f"{s.focal:.8f}"])


def train(
    model: SegModel,
    normals: Sequence[np.ndarray],
    cfg: RunConfig,
    tex: TextureSource,
    rng: np.random.Generator,
    on_step: Callable[[TrainStep, SegModel], None] | None = None,
) -> TrainResult:
    """Run the SGD loop; the frozen encoder stages stay untouched throughout."""
    tc = cfg.train
    params = list(trainable_parameters(model).values())
    opt = torch.optim.SGD(params, lr=tc.lr, momentum=tc.momentum, weight_decay=tc.weight_decay)
    model.train()
    steps: list[TrainStep] = []
    for step in range(1, tc.iterations + 1):
        batch = make_batch(normals, cfg, tex, rng)
        probs = model(batch.images)
        loss, part_l1, part_f = total_loss(probs, batch.targets, cfg.loss)
        if not torch.isfinite(loss):
            raise TrainingAborted(f"non-finite loss at step {step}: {loss.item()!r}")
        opt.zero_grad()
        loss.backward()
        opt.step()
        entry = TrainStep(step, float(loss.item()), float(part_l1.item()), float(part_f.item()))
        steps.append(entry)
        if on_step is not None:
            on_step(entry, model)
    return TrainResult(steps=steps)
