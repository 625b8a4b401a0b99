"""Single-file checkpoints.

A checkpoint carries the format version, the full model state, the
memory pool tensors, the run configuration, and the encoder tag. On
load the encoder is rebuilt from the configuration and its tag must
match the saved one -- refusing silently mismatched frozen weights.
"""

from __future__ import annotations

from pathlib import Path
from typing import Any

import torch

from .config import RunConfig
from .encoder import EncoderHandle, make_resnet_encoder, make_toy_encoder
from .memory import MemoryPool
from .network import SegModel

FORMAT_VERSION = 1


class CheckpointError(RuntimeError):
    pass


def build_encoder(cfg: RunConfig) -> EncoderHandle:
    ec = cfg.encoder
    if ec.kind == "toy":
        return make_toy_encoder(seed=ec.seed, width=ec.width)
    return make_resnet_encoder(weights_path=ec.weights)


def save_checkpoint(path: Path | str, model: SegModel, cfg: RunConfig, step: int | None = None) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pool = None
    if model.pool is not None:
        pool = {
            "f1": model.pool.f1,
            "f2": model.pool.f2,
            "f3": model.pool.f3,
            "sources": list(model.pool.sources),
            "seed": model.pool.seed,
        }
    payload = {
        "format_version": FORMAT_VERSION,
        "encoder_tag": model.encoder.tag,
        "config": cfg.to_dict(),
        "state_dict": model.state_dict(),
        "pool": pool,
        "step": step,
    }
    torch.save(payload, path)


def load_checkpoint(path: Path | str) -> tuple[SegModel, RunConfig, dict[str, Any]]:
    path = Path(path)
    try:
        payload = torch.load(path, map_location="cpu", weights_only=False)
    except Exception as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if not isinstance(payload, dict) or "format_version" not in payload:
        raise CheckpointError(f"{path} is not a checkpoint produced by this package")
    version = payload["format_version"]
    if version != FORMAT_VERSION:
        raise CheckpointError(f"checkpoint format {version} is not supported (expected {FORMAT_VERSION})")
    cfg = RunConfig.from_dict(payload["config"])
    # State comes from the checkpoint itself; do not require the original
    # pretrained-weights file to be present at load time.
    if cfg.encoder.kind == "toy":
        encoder = make_toy_encoder(seed=cfg.encoder.seed, width=cfg.encoder.width)
    else:
        encoder = make_resnet_encoder(weights_path=None)
    pool = None
    if payload["pool"] is not None:
        p = payload["pool"]
        pool = MemoryPool(f1=p["f1"], f2=p["f2"], f3=p["f3"], sources=tuple(p["sources"]), seed=p["seed"])
    model = SegModel(encoder, pool, cfg.model)
    model.load_state_dict(payload["state_dict"])
    if model.encoder.tag != payload["encoder_tag"]:
        raise CheckpointError(
            f"encoder tag mismatch: checkpoint was written with {payload['encoder_tag']!r} "
            f"but the rebuilt encoder is {model.encoder.tag!r}"
        )
    meta = {"step": payload.get("step")}
    return model, cfg, meta
