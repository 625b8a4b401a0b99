import math

import numpy as np
import pytest
import torch
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from defectseg.config import LossConfig, RunConfig, SimConfig, TrainConfig
from defectseg.data import TextureSource
from defectseg.training import (
    FOCAL_EPS,
    TrainingAborted,
    focal_loss,
    l1_loss,
    make_batch,
    total_loss,
    train,
    write_loss_csv,
)

probs_arrays = hnp.arrays(
    np.float64, (6, 6), elements=st.floats(0, 1, allow_nan=False)
)
binary_arrays = hnp.arrays(np.float64, (6, 6), elements=st.sampled_from([0.0, 1.0]))


def np_focal(p, y, gamma=4.0, alpha=1.0):
    pt = np.where(y > 0.5, p, 1.0 - p).astype(np.float64)
    pt = np.clip(pt, FOCAL_EPS, 1.0)
    return float(np.mean(-alpha * (1.0 - pt) ** gamma * np.log(pt)))


def test_l1_matches_numpy(rng):
    p = rng.random((4, 8, 8)).astype(np.float32)
    t = (rng.random((4, 8, 8)) > 0.5).astype(np.float32)
    got = l1_loss(torch.from_numpy(p), torch.from_numpy(t)).item()
    assert got == pytest.approx(np.abs(p.astype(np.float64) - t).mean(), abs=1e-6)


def test_focal_matches_numpy(rng):
    p = rng.random((4, 8, 8)).astype(np.float32)
    t = (rng.random((4, 8, 8)) > 0.5).astype(np.float32)
    got = focal_loss(torch.from_numpy(p), torch.from_numpy(t)).item()
    assert got == pytest.approx(np_focal(p, t), abs=1e-6)


def test_focal_single_pixel_closed_form():
    # p_t = 0.5 with exponent 4 gives -(0.5^4) ln 0.5 regardless of the class
    want = -(0.5**4) * math.log(0.5)
    for target in (0.0, 1.0):
        got = focal_loss(torch.tensor([[0.5]], dtype=torch.float64),
                         torch.tensor([[target]], dtype=torch.float64)).item()
        assert got == pytest.approx(want, abs=1e-9)


def test_focal_is_finite_at_the_boundary():
    p = torch.tensor([[0.0, 1.0]], dtype=torch.float64)
    t = torch.tensor([[1.0, 0.0]], dtype=torch.float64)
    v = focal_loss(p, t).item()
    assert math.isfinite(v) and v > 0


def test_perfect_prediction_has_zero_loss():
    t = torch.tensor([[0.0, 1.0], [1.0, 0.0]], dtype=torch.float64)
    assert focal_loss(t, t).item() == 0.0
    assert l1_loss(t, t).item() == 0.0


@given(p=probs_arrays, y=binary_arrays)
def test_focal_nonnegative_and_matches_oracle(p, y):
    got = focal_loss(torch.from_numpy(p), torch.from_numpy(y)).item()
    assert got >= 0.0
    assert got == pytest.approx(np_focal(p, y), abs=1e-9)


def test_total_is_weighted_sum(rng):
    p = torch.from_numpy(rng.random((2, 4, 4)).astype(np.float32))
    t = torch.from_numpy((rng.random((2, 4, 4)) > 0.5).astype(np.float32))
    cfg = LossConfig(weight_l1=0.6, weight_focal=0.4)
    total, part_l1, part_f = total_loss(p, t, cfg)
    assert total.item() == pytest.approx(0.6 * part_l1.item() + 0.4 * part_f.item(), abs=1e-7)


def test_loss_shape_mismatch(rng):
    with pytest.raises(ValueError):
        l1_loss(torch.rand(2, 4, 4), torch.rand(2, 5, 4))
    with pytest.raises(ValueError):
        focal_loss(torch.rand(2, 4, 4), torch.rand(2, 4, 5))


@pytest.fixture
def tiny_run_cfg():
    cfg = RunConfig(seed=0, image_size=32)
    cfg.train = TrainConfig(iterations=3, batch_normal=2, batch_anomalous=2, memory_size=2)
    cfg.sim = SimConfig(min_freq_exp=1, max_freq_exp=3)
    return cfg


def test_make_batch_composition(rng, tiny_run_cfg):
    normals = [rng.random((32, 32, 3)).astype(np.float32) for _ in range(5)]
    batch = make_batch(normals, tiny_run_cfg, TextureSource(mode="procedural"), rng)
    assert batch.images.shape == (4, 3, 32, 32)
    assert batch.targets.shape == (4, 32, 32)
    assert batch.images.dtype == torch.float32
    # clean half has empty targets, simulated half has non-empty masks
    assert torch.all(batch.targets[:2] == 0)
    assert batch.targets[2].sum() > 0 and batch.targets[3].sum() > 0


def test_make_batch_deterministic(tiny_run_cfg):
    normals = [np.random.default_rng(1).random((32, 32, 3)).astype(np.float32)]
    tex = TextureSource(mode="procedural")
    a = make_batch(normals, tiny_run_cfg, tex, np.random.default_rng(3))
    b = make_batch(normals, tiny_run_cfg, tex, np.random.default_rng(3))
    assert torch.equal(a.images, b.images)
    assert torch.equal(a.targets, b.targets)


def test_make_batch_requires_normals(tiny_run_cfg):
    with pytest.raises(ValueError):
        make_batch([], tiny_run_cfg, TextureSource(mode="procedural"), np.random.default_rng(0))


def test_train_records_every_step(rng, tiny_run_cfg, model_factory):
    model = model_factory(width=4, img_size=32)
    normals = [rng.random((32, 32, 3)).astype(np.float32) for _ in range(4)]
    result = train(model, normals, tiny_run_cfg, TextureSource(mode="procedural"), rng)
    assert [s.step for s in result.steps] == [1, 2, 3]
    assert all(math.isfinite(s.total) for s in result.steps)
    assert result.final.step == 3
    for s in result.steps:
        assert s.total == pytest.approx(0.6 * s.l1 + 0.4 * s.focal, abs=1e-6)


def test_train_aborts_on_nonfinite(rng, tiny_run_cfg, model_factory):
    model = model_factory(width=4, img_size=32)
    with torch.no_grad():
        model.decoder.head[-1].weight.fill_(float("nan"))
    normals = [rng.random((32, 32, 3)).astype(np.float32) for _ in range(4)]
    with pytest.raises(TrainingAborted, match="step 1"):
        train(model, normals, tiny_run_cfg, TextureSource(mode="procedural"), rng)


def test_loss_csv_round_trip(tmp_path, rng, tiny_run_cfg, model_factory):
    model = model_factory(width=4, img_size=32)
    normals = [rng.random((32, 32, 3)).astype(np.float32) for _ in range(4)]
    result = train(model, normals, tiny_run_cfg, TextureSource(mode="procedural"), rng)
    out = tmp_path / "loss.csv"
    write_loss_csv(result.steps, out)
    lines = out.read_text().strip().splitlines()
    assert lines[0] == "step,total,l1,focal"
    assert len(lines) == 4
    assert lines[1].startswith("1,")


def test_frozen_stages_untouched_by_short_training(rng, tiny_run_cfg, model_factory):
    model = model_factory(width=4, img_size=32)
    h0 = model.encoder.frozen_hash()
    normals = [rng.random((32, 32, 3)).astype(np.float32) for _ in range(4)]
    train(model, normals, tiny_run_cfg, TextureSource(mode="procedural"), rng)
    assert model.encoder.frozen_hash() == h0
