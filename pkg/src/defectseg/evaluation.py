"""Scoring and evaluation.

Image-level scores are the mean of the top-k anomaly pixels; AUROC is
computed from midranks, which matches the Mann-Whitney U statistic and
handles ties exactly.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.stats import rankdata

from .config import RunConfig
from .data import DatasetIndex, load_image, load_mask
from .network import SegModel, infer


def image_score(amap: np.ndarray, k: int = 100) -> float:
    """Mean of the k largest pixel scores (all pixels if the map is smaller)."""
    if k < 1:
        raise ValueError(f"k must be positive, got {k}")
    flat = np.asarray(amap, dtype=np.float64).ravel()
    if flat.size == 0:
        raise ValueError("empty anomaly map")
    if flat.size <= k:
        return float(flat.mean())
    top = np.partition(flat, flat.size - k)[flat.size - k:]
    return float(top.mean())


def auroc(scores: Sequence[float] | np.ndarray, labels: Sequence[int] | np.ndarray) -> float:
    """Midrank AUROC; requires both classes to be present."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if s.shape != y.shape or s.ndim != 1:
        raise ValueError(f"scores/labels must be equal-length 1-d, got {s.shape} and {y.shape}")
    n_pos = int((y == 1).sum())
    n_neg = int((y == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError(f"need both classes for AUROC (pos={n_pos}, neg={n_neg})")
    ranks = rankdata(s)
    u = ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


@dataclass(frozen=True)
class ImageResult:
    path: str
    label: int
    score: float
    latency_ms: float


@dataclass
class EvalReport:
    image_auroc: float
    pixel_auroc: float | None
    n_images: int
    latency_mean_ms: float
    latency_p50_ms: float
    latency_p95_ms: float
    results: list[ImageResult] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "image_auroc": self.image_auroc,
            "pixel_auroc": self.pixel_auroc,
            "n_images": self.n_images,
            "latency_mean_ms": self.latency_mean_ms,
            "latency_p50_ms": self.latency_p50_ms,
            "latency_p95_ms": self.latency_p95_ms,
        }


def _latency_stats(ms: np.ndarray) -> tuple[float, float, float]:
    return float(ms.mean()), float(np.percentile(ms, 50)), float(np.percentile(ms, 95))


def evaluate(
    model: SegModel,
    index: DatasetIndex,
    cfg: RunConfig,
    heatmap_dir: Path | None = None,
) -> EvalReport:
    """Score every test image; pixel AUROC uses ground-truth masks where available.

    Normal images contribute all-zero masks; anomalous images without a
    mask are skipped for the pixel metric but still scored image-level.
    """
    if not index.items:
        raise ValueError("empty dataset index")
    size = cfg.image_size
    results: list[ImageResult] = []
    pixel_scores: list[np.ndarray] = []
    pixel_labels: list[np.ndarray] = []
    latencies = []
    for item in index.items:
        img = load_image(item.image_path, size)
        t0 = time.perf_counter()
        amap = infer(model, img)
        ms = (time.perf_counter() - t0) * 1e3
        latencies.append(ms)
        score = image_score(amap, k=cfg.eval.top_k)
        results.append(ImageResult(str(item.image_path), item.label, score, ms))
        if item.label == 0:
            pixel_scores.append(amap.ravel())
            pixel_labels.append(np.zeros(amap.size, dtype=np.int64))
        elif item.mask_path is not None:
            mask = load_mask(item.mask_path, size)
            pixel_scores.append(amap.ravel())
            pixel_labels.append(mask.ravel().astype(np.int64))
        if heatmap_dir is not None:
            _save_heatmap(amap, heatmap_dir, item)
    scores = np.array([r.score for r in results])
    labels = np.array([r.label for r in results])
    img_auc = auroc(scores, labels)
    pix_auc = None
    if pixel_scores:
        ps = np.concatenate(pixel_scores)
        pl = np.concatenate(pixel_labels)
        if pl.min() == 0 and pl.max() == 1:
            pix_auc = auroc(ps, pl)
    mean, p50, p95 = _latency_stats(np.array(latencies))
    return EvalReport(
        image_auroc=img_auc,
        pixel_auroc=pix_auc,
        n_images=len(results),
        latency_mean_ms=mean,
        latency_p50_ms=p50,
        latency_p95_ms=p95,
        results=results,
    )


def _save_heatmap(amap: np.ndarray, out_dir: Path, item) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out_dir.mkdir(parents=True, exist_ok=True)
    name = f"{item.defect_type or 'good'}_{Path(item.image_path).stem}.png"
    plt.imsave(out_dir / name, amap, cmap="magma", vmin=0.0, vmax=1.0)


def write_scores_csv(results: Sequence[ImageResult], path: Path | str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["path", "label", "score", "latency_ms"])
        for r in results:
            writer.writerow([r.path, r.label, f"{r.score:.8f}", f"{r.latency_ms:.3f}"])


def write_report(report: EvalReport, path: Path | str, header: dict | None = None) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = dict(header or {})
    payload.update(report.to_dict())
    path.write_text(json.dumps(payload, indent=2) + "\n")


@dataclass(frozen=True)
class BenchResult:
    n_runs: int
    image_size: int
    latency_mean_ms: float
    latency_p50_ms: float
    latency_p95_ms: float
    throughput_ips: float

    def to_dict(self) -> dict:
        return {
            "n_runs": self.n_runs,
            "image_size": self.image_size,
            "latency_mean_ms": self.latency_mean_ms,
            "latency_p50_ms": self.latency_p50_ms,
            "latency_p95_ms": self.latency_p95_ms,
            "throughput_ips": self.throughput_ips,
        }


def benchmark(model: SegModel, size: int, n_warmup: int = 2, n_runs: int = 10, seed: int = 0) -> BenchResult:
    """Single-image inference latency on synthetic inputs."""
    rng = np.random.default_rng(seed)
    imgs = [rng.random((size, size, 3)).astype(np.float32) for _ in range(n_warmup + n_runs)]
    for img in imgs[:n_warmup]:
        infer(model, img)
    stamps = []
    for img in imgs[n_warmup:]:
        t0 = time.perf_counter()
        infer(model, img)
        stamps.append((time.perf_counter() - t0) * 1e3)
    ms = np.array(stamps)
    mean, p50, p95 = _latency_stats(ms)
    return BenchResult(
        n_runs=n_runs,
        image_size=size,
        latency_mean_ms=mean,
        latency_p50_ms=p50,
        latency_p95_ms=p95,
        throughput_ips=float(1e3 / mean),
    )
