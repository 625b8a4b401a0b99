"""End-to-end run orchestration: dataset -> pool -> train -> artifacts.

These helpers are shared by the command-line entry points, the
experiment scripts and the acceptance tests, so a "run" always means
the same thing: scan the dataset, build the encoder and memory pool,
train, then write checkpoint / loss curve / config / report under one
output directory.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .checkpoint import build_encoder, save_checkpoint
from .config import (
    EncoderConfig,
    EvalConfig,
    RunConfig,
    SimConfig,
    TextureConfig,
    TrainConfig,
)
from .data import DatasetIndex, TextureSource, load_image, scan_dataset
from .encoder import EncoderHandle
from .evaluation import EvalReport, evaluate, write_report, write_scores_csv
from .memory import MemoryPool, build_pool
from .network import SegModel
from .toydata import ToySpec, gen_toyset
from .training import TrainResult, train, write_loss_csv


@dataclass
class Prepared:
    cfg: RunConfig
    encoder: EncoderHandle
    pool: MemoryPool | None
    model: SegModel
    train_index: DatasetIndex
    normals: list[np.ndarray]
    texture: TextureSource


def prepare(cfg: RunConfig) -> Prepared:
    """Everything up to (but not including) the optimization loop."""
    cfg.validate()
    torch.manual_seed(cfg.seed)
    encoder = build_encoder(cfg)
    train_index = scan_dataset(Path(cfg.data_root), cfg.category, "train")
    normal_items = train_index.normal_items
    if not normal_items:
        raise ValueError(f"no normal training images under {cfg.data_root}/{cfg.category}")
    normals = [load_image(it.image_path, cfg.image_size) for it in normal_items]
    pool = None
    if cfg.model.use_memory:
        pool = build_pool(encoder, train_index, n=cfg.train.memory_size, seed=cfg.seed,
                          image_size=cfg.image_size)
    model = SegModel(encoder, pool, cfg.model)
    texture = TextureSource(mode=cfg.texture.mode, directory=cfg.texture.directory)
    return Prepared(cfg=cfg, encoder=encoder, pool=pool, model=model,
                    train_index=train_index, normals=normals, texture=texture)


def fit(p: Prepared, out_dir: Path | str | None = None) -> TrainResult:
    """Train and, if out_dir is given, write checkpoint + loss curve + config."""
    from .config import save_config  # local import to avoid a cycle at module load

    cfg = p.cfg
    rng = np.random.default_rng(cfg.seed)
    callbacks = None
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        interval = cfg.train.checkpoint_interval

        def callbacks(entry, model):
            if interval and entry.step % interval == 0:
                save_checkpoint(out / f"model_{entry.step:06d}.pt", model, cfg, step=entry.step)

    result = train(p.model, p.normals, cfg, p.texture, rng, on_step=callbacks)
    if out_dir is not None:
        out = Path(out_dir)
        save_checkpoint(out / "model.pt", p.model, cfg, step=cfg.train.iterations)
        write_loss_csv(result.steps, out / "loss.csv")
        save_config(cfg, out / "config.yaml")
    return result


def evaluate_run(cfg: RunConfig, model: SegModel, out_dir: Path | str | None = None) -> EvalReport:
    test_index = scan_dataset(Path(cfg.data_root), cfg.category, "test")
    heatmap_dir = None
    if out_dir is not None and cfg.eval.heatmaps:
        heatmap_dir = Path(out_dir) / "heatmaps"
    report = evaluate(model, test_index, cfg, heatmap_dir=heatmap_dir)
    if out_dir is not None:
        out = Path(out_dir)
        header = {"category": cfg.category, "model_flags": dataclasses.asdict(cfg.model)}
        write_report(report, out / "report.json", header=header)
        write_scores_csv(report.results, out / "scores.csv")
    return report


def desk_scale_config(data_root: Path | str, out_dir: Path | str, *, seed: int = 0,
                      image_size: int = 64, width: int = 16, iterations: int = 1000,
                      memory_size: int = 10, category: str = "weave") -> RunConfig:
    """Small-footprint recipe that trains in minutes on one CPU core."""
    return RunConfig(
        seed=seed,
        image_size=image_size,
        data_root=str(data_root),
        category=category,
        out_dir=str(out_dir),
        encoder=EncoderConfig(kind="toy", width=width, seed=seed),
        sim=SimConfig(min_freq_exp=1, max_freq_exp=4),
        texture=TextureConfig(mode="procedural"),
        train=TrainConfig(iterations=iterations, memory_size=memory_size),
        eval=EvalConfig(top_k=50),
    )


def run_desk_scale(workdir: Path | str, *, seed: int = 0, n_train: int = 200,
                   iterations: int = 1000, image_size: int = 64, width: int = 16,
                   n_test_good: int = 50, n_test_defect: int = 50,
                   ) -> tuple[EvalReport, TrainResult, RunConfig]:
    """Generate a toy dataset, train on it, evaluate on its held-out split."""
    workdir = Path(workdir)
    data_root = workdir / "data"
    out_dir = workdir / "run"
    spec = ToySpec(image_size=image_size, n_train=n_train, n_test_good=n_test_good,
                   n_test_defect=n_test_defect, seed=seed)
    gen_toyset(data_root, spec)
    cfg = desk_scale_config(data_root, out_dir, seed=seed, image_size=image_size,
                            width=width, iterations=iterations, category=spec.category)
    p = prepare(cfg)
    result = fit(p, out_dir=out_dir)
    report = evaluate_run(cfg, p.model, out_dir=out_dir)
    return report, result, cfg
