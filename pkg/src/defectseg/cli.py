"""Command-line interface.

Subcommands: simulate, train, infer, eval, toyset, bench. Options
layer as defaults < --config file < explicit flags, and every artifact
directory receives the effective config for reproducibility. Runtime
failures print a single "error: ..." line and exit 1; argparse usage
errors exit 2.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .checkpoint import CheckpointError, load_checkpoint
from .config import RunConfig, load_config, save_config
from .data import DatasetError, TextureSource, load_image
from .evaluation import benchmark, image_score
from .experiments import evaluate_run, fit, prepare
from .network import infer as run_infer
from .simulate import DegenerateMaskError, simulate
from .toydata import ToySpec, gen_toyset


def _base_config(args: argparse.Namespace) -> RunConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else RunConfig()
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    for flag, target in [
        ("data_root", "data_root"),
        ("category", "category"),
        ("out", "out_dir"),
    ]:
        value = getattr(args, flag, None)
        if value is not None:
            setattr(cfg, target, str(value))
    if getattr(args, "image_size", None) is not None:
        cfg.image_size = args.image_size
    if getattr(args, "iterations", None) is not None:
        cfg.train.iterations = args.iterations
    if getattr(args, "encoder", None) is not None:
        cfg.encoder.kind = args.encoder
        if args.encoder == "toy" and cfg.encoder.width == 64:
            pass  # width stays whatever the config said
    if getattr(args, "width", None) is not None:
        cfg.encoder.width = args.width
    if getattr(args, "memory_size", None) is not None:
        cfg.train.memory_size = args.memory_size
    for flag, attr in [
        ("no_memory", "use_memory"),
        ("no_multiscale", "use_multiscale"),
        ("no_spatial_attention", "use_spatial_attention"),
        ("no_coord_attention", "use_coord_attention"),
    ]:
        if getattr(args, flag, False):
            setattr(cfg.model, attr, False)
    return cfg


def _save_png(arr: np.ndarray, path: Path) -> None:
    from PIL import Image

    path.parent.mkdir(parents=True, exist_ok=True)
    a = np.clip(np.round(np.asarray(arr, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(a).save(path)


def _save_heatmap_png(amap: np.ndarray, path: Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    path.parent.mkdir(parents=True, exist_ok=True)
    plt.imsave(path, amap, cmap="magma", vmin=0.0, vmax=1.0)


def cmd_simulate(args: argparse.Namespace) -> int:
    cfg = _base_config(args)
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    if args.image:
        base = load_image(Path(args.image), cfg.image_size)
    else:
        from .toydata import normal_image

        base = normal_image(cfg.image_size, rng)
    tex = TextureSource(mode=cfg.texture.mode, directory=cfg.texture.directory)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i in range(args.count):
        sample = simulate(base, cfg.sim, tex, rng)
        _save_png(sample.image, out / f"sample_{i:03d}.png")
        _save_png(sample.mask, out / f"sample_{i:03d}_mask.png")
    save_config(cfg, out / "config.yaml")
    print(f"wrote {args.count} simulated pair(s) to {out}")
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    cfg = _base_config(args)
    cfg.validate()
    p = prepare(cfg)
    result = fit(p, out_dir=cfg.out_dir)
    print(f"trained {cfg.train.iterations} steps; final loss {result.final.total:.6f}; "
          f"artifacts in {cfg.out_dir}")
    return 0


def cmd_infer(args: argparse.Namespace) -> int:
    model, cfg, _ = load_checkpoint(args.checkpoint)
    out = Path(args.out) if args.out else None
    scored: list[tuple[str, float]] = []
    for image_path in args.images:
        img = load_image(Path(image_path), cfg.image_size)
        amap = run_infer(model, img)
        score = image_score(amap, k=cfg.eval.top_k)
        scored.append((str(image_path), score))
        print(f"{image_path}\t{score:.6f}")
        if out is not None:
            stem = Path(image_path).stem
            _save_heatmap_png(amap, out / f"{stem}_heatmap.png")
            np.save(out / f"{stem}_map.npy", amap)
    if out is not None:
        with (out / "scores.csv").open("w") as fh:
            fh.write("path,score\n")
            for path, score in scored:
                fh.write(f"{path},{score:.8f}\n")
        save_config(cfg, out / "config.yaml")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    model, cfg, _ = load_checkpoint(args.checkpoint)
    if args.data_root is not None:
        cfg.data_root = str(args.data_root)
    if args.category is not None:
        cfg.category = args.category
    if args.heatmaps:
        cfg.eval.heatmaps = True
    out_dir = args.out or cfg.out_dir
    report = evaluate_run(cfg, model, out_dir=out_dir)
    save_config(cfg, Path(out_dir) / "config.yaml")
    pixel = "n/a" if report.pixel_auroc is None else f"{report.pixel_auroc:.4f}"
    print(f"image AUROC {report.image_auroc:.4f}  pixel AUROC {pixel}  "
          f"({report.n_images} images, mean {report.latency_mean_ms:.1f} ms)")
    return 0


def cmd_toyset(args: argparse.Namespace) -> int:
    spec = ToySpec(category=args.category, image_size=args.size, n_train=args.n_train,
                   n_test_good=args.n_test_good, n_test_defect=args.n_test_defect,
                   seed=args.seed if args.seed is not None else 0)
    cat_dir = gen_toyset(args.root, spec)
    n = spec.n_train + spec.n_test_good + spec.n_test_defect
    print(f"wrote {n} images under {cat_dir}")
    return 0


def cmd_bench(args: argparse.Namespace) -> int:
    if args.deterministic:
        import torch

        torch.manual_seed(args.seed or 0)
        torch.use_deterministic_algorithms(True)
    if args.checkpoint:
        model, cfg, _ = load_checkpoint(args.checkpoint)
        size = args.size or cfg.image_size
    else:
        import torch

        from .config import ModelFlags
        from .encoder import extract_pyramid, make_toy_encoder
        from .memory import pool_from_pyramids
        from .network import SegModel

        size = args.size or 64
        torch.manual_seed(args.seed or 0)
        enc = make_toy_encoder(seed=args.seed or 0, width=args.width)
        rng = np.random.default_rng(args.seed or 0)
        pyrs = [extract_pyramid(enc, rng.random((size, size, 3)).astype(np.float32))
                for _ in range(4)]
        model = SegModel(enc, pool_from_pyramids(pyrs, seed=0), ModelFlags())
    result = benchmark(model, size, n_warmup=args.warmup, n_runs=args.runs,
                       seed=args.seed or 0)
    print(json.dumps(result.to_dict(), indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="defectseg",
                                     description="memory-guided surface defect segmentation")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="write simulated anomaly/mask pairs")
    p.add_argument("--config")
    p.add_argument("--image", help="source image; a synthetic pattern is used if omitted")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=4)
    p.add_argument("--seed", type=int)
    p.add_argument("--image-size", type=int, dest="image_size")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train", help="train a model on normal images")
    p.add_argument("--config")
    p.add_argument("--data-root", dest="data_root")
    p.add_argument("--category")
    p.add_argument("--out")
    p.add_argument("--seed", type=int)
    p.add_argument("--iterations", type=int)
    p.add_argument("--image-size", type=int, dest="image_size")
    p.add_argument("--encoder", choices=["resnet18", "toy"])
    p.add_argument("--width", type=int)
    p.add_argument("--memory-size", type=int, dest="memory_size")
    p.add_argument("--no-memory", action="store_true", dest="no_memory")
    p.add_argument("--no-multiscale", action="store_true", dest="no_multiscale")
    p.add_argument("--no-spatial-attention", action="store_true", dest="no_spatial_attention")
    p.add_argument("--no-coord-attention", action="store_true", dest="no_coord_attention")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="score images with a trained checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out")
    p.add_argument("images", nargs="+")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a test split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data-root", dest="data_root")
    p.add_argument("--category")
    p.add_argument("--out")
    p.add_argument("--heatmaps", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("toyset", help="generate a synthetic dataset")
    p.add_argument("--root", required=True)
    p.add_argument("--category", default="weave")
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--n-train", type=int, default=60, dest="n_train")
    p.add_argument("--n-test-good", type=int, default=10, dest="n_test_good")
    p.add_argument("--n-test-defect", type=int, default=12, dest="n_test_defect")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_toyset)

    p = sub.add_parser("bench", help="measure single-image inference latency")
    p.add_argument("--checkpoint")
    p.add_argument("--size", type=int)
    p.add_argument("--width", type=int, default=16)
    p.add_argument("--runs", type=int, default=10)
    p.add_argument("--warmup", type=int, default=2)
    p.add_argument("--seed", type=int)
    p.add_argument("--deterministic", action="store_true",
                   help="seed and force deterministic kernels (slower)")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (DatasetError, DegenerateMaskError, CheckpointError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
