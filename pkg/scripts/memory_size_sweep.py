#!/usr/bin/env python3
"""Sweep the memory-pool size N and record both AUROCs per setting.

One shared toy dataset, one training run per N; results land in
<workdir>/sweep.csv.
"""

import argparse
import csv
import sys
from pathlib import Path

from defectseg.experiments import desk_scale_config, evaluate_run, fit, prepare
from defectseg.toydata import ToySpec, gen_toyset


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--workdir", default="runs/memory_sweep")
    ap.add_argument("--sizes", type=int, nargs="+", default=[1, 5, 10, 20, 40])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--n-train", type=int, default=120)
    ap.add_argument("--iterations", type=int, default=400)
    ap.add_argument("--image-size", type=int, default=64)
    ap.add_argument("--width", type=int, default=16)
    args = ap.parse_args()

    workdir = Path(args.workdir)
    data_root = workdir / "data"
    spec = ToySpec(image_size=args.image_size, n_train=args.n_train,
                   n_test_good=20, n_test_defect=24, seed=args.seed)
    gen_toyset(data_root, spec)

    rows = []
    for n in args.sizes:
        out = workdir / f"n{n:03d}"
        cfg = desk_scale_config(data_root, out, seed=args.seed,
                                image_size=args.image_size, width=args.width,
                                iterations=args.iterations, memory_size=n,
                                category=spec.category)
        p = prepare(cfg)
        fit(p, out_dir=out)
        report = evaluate_run(cfg, p.model, out_dir=out)
        rows.append((n, report.image_auroc, report.pixel_auroc, report.latency_mean_ms))
        print(f"N={n:3d}  image {report.image_auroc:.4f}  pixel {report.pixel_auroc:.4f}  "
              f"{report.latency_mean_ms:.1f} ms/img")

    with (workdir / "sweep.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["memory_size", "image_auroc", "pixel_auroc", "latency_mean_ms"])
        w.writerows(rows)
    print(f"wrote {workdir / 'sweep.csv'}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
