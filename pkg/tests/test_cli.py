import json

import pytest

from defectseg.cli import main


def run(args):
    return main([str(a) for a in args])


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """Toyset + a 2-step trained checkpoint shared across CLI tests."""
    ws = tmp_path_factory.mktemp("cli")
    assert run(["toyset", "--root", ws / "data", "--size", 64, "--n-train", 6,
                "--n-test-good", 3, "--n-test-defect", 4, "--seed", 0]) == 0
    assert run(["train", "--data-root", ws / "data", "--category", "weave",
                "--out", ws / "run", "--encoder", "toy", "--width", 8,
                "--memory-size", 3, "--iterations", 2, "--image-size", 64,
                "--seed", 0]) == 0
    return ws


def test_toyset_writes_tree(workspace):
    assert (workspace / "data" / "weave" / "train" / "good").is_dir()
    assert (workspace / "data" / "weave" / "ground_truth").is_dir()


def test_train_artifacts(workspace):
    out = workspace / "run"
    assert (out / "model.pt").is_file()
    assert (out / "loss.csv").is_file()
    assert (out / "config.yaml").is_file()
    assert len((out / "loss.csv").read_text().strip().splitlines()) == 3


def test_train_ablation_flags(workspace, tmp_path):
    out = tmp_path / "nomem"
    assert run(["train", "--data-root", workspace / "data", "--category", "weave",
                "--out", out, "--encoder", "toy", "--width", 8,
                "--iterations", 1, "--image-size", 64, "--seed", 0,
                "--no-memory", "--no-coord-attention"]) == 0
    import yaml

    cfg = yaml.safe_load((out / "config.yaml").read_text())
    assert cfg["model"]["use_memory"] is False
    assert cfg["model"]["use_coord_attention"] is False
    assert cfg["model"]["use_multiscale"] is True
    # the memoryless checkpoint must reload and evaluate
    assert run(["eval", "--checkpoint", out / "model.pt", "--out", tmp_path / "ev"]) == 0


def test_simulate_writes_pairs(tmp_path):
    out = tmp_path / "sims"
    assert run(["simulate", "--out", out, "--count", 2, "--seed", 1,
                "--image-size", 64]) == 0
    assert (out / "sample_000.png").is_file()
    assert (out / "sample_001_mask.png").is_file()
    assert (out / "config.yaml").is_file()


def test_simulate_from_file(tmp_path, workspace):
    src = next((workspace / "data" / "weave" / "train" / "good").glob("*.png"))
    out = tmp_path / "sims"
    assert run(["simulate", "--image", src, "--out", out, "--count", 1,
                "--image-size", 64, "--seed", 2]) == 0
    assert (out / "sample_000.png").is_file()


def test_eval_command(workspace, tmp_path, capsys):
    code = run(["eval", "--checkpoint", workspace / "run" / "model.pt",
                "--out", tmp_path / "ev"])
    assert code == 0
    out = capsys.readouterr().out
    assert "image AUROC" in out and "pixel AUROC" in out
    report = json.loads((tmp_path / "ev" / "report.json").read_text())
    assert 0.0 <= report["image_auroc"] <= 1.0
    assert (tmp_path / "ev" / "scores.csv").is_file()


def test_infer_command(workspace, tmp_path, capsys):
    img = next((workspace / "data" / "weave" / "test" / "good").glob("*.png"))
    code = run(["infer", "--checkpoint", workspace / "run" / "model.pt",
                "--out", tmp_path / "inf", img])
    assert code == 0
    line = capsys.readouterr().out.strip()
    assert line.startswith(str(img))
    assert float(line.split("\t")[1]) >= 0.0
    assert (tmp_path / "inf" / f"{img.stem}_heatmap.png").is_file()
    assert (tmp_path / "inf" / f"{img.stem}_map.npy").is_file()


def test_bench_command(capsys):
    assert run(["bench", "--width", 8, "--size", 64, "--runs", 2, "--warmup", 1]) == 0
    data = json.loads(capsys.readouterr().out)
    assert data["n_runs"] == 2
    assert data["latency_mean_ms"] > 0


def test_runtime_error_exits_one(capsys):
    assert run(["eval", "--checkpoint", "/no/such/model.pt"]) == 1
    assert capsys.readouterr().err.startswith("error:")


def test_dataset_error_exits_one(workspace, capsys):
    code = run(["train", "--data-root", workspace / "data", "--category", "missing",
                "--out", workspace / "x", "--iterations", 1])
    assert code == 1
    assert "error:" in capsys.readouterr().err


def test_usage_error_exits_two():
    with pytest.raises(SystemExit) as exc:
        run(["train", "--bogus"])
    assert exc.value.code == 2


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as exc:
        run(["--version"])
    assert exc.value.code == 0
    assert "defectseg" in capsys.readouterr().out
