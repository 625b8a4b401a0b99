import numpy as np
import pytest
from PIL import Image

from defectseg.data import (
    DatasetError,
    TextureSource,
    load_image,
    load_mask,
    procedural_texture,
    sample_texture,
    scan_dataset,
)
from defectseg.toydata import ToySpec, gen_toyset


@pytest.fixture(scope="module")
def dataset_root(tmp_path_factory):
    root = tmp_path_factory.mktemp("data")
    gen_toyset(root, ToySpec(image_size=32, n_train=5, n_test_good=3, n_test_defect=4, seed=0))
    return root


def test_scan_train(dataset_root):
    idx = scan_dataset(dataset_root, "weave", "train")
    assert idx.split == "train"
    assert len(idx.items) == 5
    assert all(it.label == 0 for it in idx.items)
    assert idx.items == sorted(idx.items, key=lambda it: str(it.image_path))


def test_scan_test_pairs_masks(dataset_root):
    idx = scan_dataset(dataset_root, "weave", "test")
    assert len(idx.normal_items) == 3
    assert len(idx.anomalous_items) == 4
    for it in idx.anomalous_items:
        assert it.mask_path is not None and it.mask_path.exists()
        assert it.defect_type not in (None, "good")
    for it in idx.normal_items:
        assert it.mask_path is None


def test_scan_missing_category(dataset_root):
    with pytest.raises(DatasetError, match="no_such_cat"):
        scan_dataset(dataset_root, "no_such_cat", "train")


def test_scan_bad_split(dataset_root):
    with pytest.raises(DatasetError):
        scan_dataset(dataset_root, "weave", "val")


def test_maskless_anomaly_warns(tmp_path):
    d = tmp_path / "cat" / "test" / "scratch"
    (tmp_path / "cat" / "test" / "good").mkdir(parents=True)
    d.mkdir(parents=True)
    Image.fromarray(np.zeros((8, 8, 3), np.uint8)).save(tmp_path / "cat/test/good/0.png")
    Image.fromarray(np.zeros((8, 8, 3), np.uint8)).save(d / "0.png")
    with pytest.warns(UserWarning, match="mask"):
        idx = scan_dataset(tmp_path, "cat", "test")
    assert idx.anomalous_items[0].mask_path is None


def test_load_image_shape_range(dataset_root):
    idx = scan_dataset(dataset_root, "weave", "train")
    img = load_image(idx.items[0].image_path, 48)
    assert img.shape == (48, 48, 3)
    assert img.dtype == np.float32
    assert img.min() >= 0.0 and img.max() <= 1.0


def test_load_image_grayscale_and_16bit(tmp_path):
    Image.fromarray((np.arange(64, dtype=np.uint8).reshape(8, 8) * 4), mode="L").save(tmp_path / "g.png")
    img = load_image(tmp_path / "g.png", 8)
    assert img.shape == (8, 8, 3)
    # gray input replicates across channels
    assert np.array_equal(img[..., 0], img[..., 1])

    arr16 = (np.linspace(0, 65535, 64).reshape(8, 8)).astype(np.uint16)
    Image.fromarray(arr16).save(tmp_path / "d.png")
    img16 = load_image(tmp_path / "d.png", 8)
    assert img16.max() <= 1.0
    assert img16.max() > 0.95  # used the full 16-bit scale, not /255


def test_load_mask_is_binary(dataset_root):
    idx = scan_dataset(dataset_root, "weave", "test")
    it = idx.anomalous_items[0]
    m = load_mask(it.mask_path, 32)
    assert m.shape == (32, 32)
    assert set(np.unique(m)) <= {0.0, 1.0}
    assert m.sum() > 0


def test_procedural_texture_contract():
    a = procedural_texture(32, 5)
    b = procedural_texture(32, 5)
    c = procedural_texture(32, 6)
    assert a.shape == (32, 32, 3) and a.dtype == np.float32
    assert a.min() >= 0.0 and a.max() <= 1.0
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_sample_texture_procedural_mode():
    src = TextureSource(mode="procedural")
    t = sample_texture(src, 16, np.random.default_rng(0))
    assert t.shape == (16, 16, 3)


def test_sample_texture_directory_mode(tmp_path):
    for i in range(3):
        arr = np.full((40, 40, 3), 50 * (i + 1), np.uint8)
        Image.fromarray(arr).save(tmp_path / f"t{i}.png")
    src = TextureSource(mode="directory", directory=str(tmp_path))
    t = sample_texture(src, 16, np.random.default_rng(1))
    assert t.shape == (16, 16, 3)
    assert t.min() >= 0.0 and t.max() <= 1.0


def test_texture_directory_must_exist():
    with pytest.raises((DatasetError, ValueError)):
        TextureSource(mode="directory", directory="/definitely/not/here")
