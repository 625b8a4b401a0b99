import numpy as np
import pytest
import torch
from hypothesis import HealthCheck, settings

from defectseg.encoder import extract_pyramid, make_toy_encoder
from defectseg.memory import pool_from_pyramids

# single-core box: keep example counts modest and drop deadlines
settings.register_profile(
    "ci",
    max_examples=25,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("ci")

torch.set_num_threads(1)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture(scope="session")
def tiny_encoder():
    return make_toy_encoder(seed=0, width=8)


@pytest.fixture(scope="session")
def tiny_pool(tiny_encoder):
    r = np.random.default_rng(7)
    pyrs = [extract_pyramid(tiny_encoder, r.random((64, 64, 3)).astype(np.float32))
            for _ in range(3)]
    return pool_from_pyramids(pyrs, seed=7)


@pytest.fixture
def checker_image():
    """64x64 image with an obvious dark object on a bright background."""
    img = np.full((64, 64, 3), 0.9, dtype=np.float32)
    img[16:48, 20:44] = 0.15
    return img


def build_model(flags=None, width=8, seed=0, pool_seed=7, pool_n=3, img_size=64):
    """Fully assembled model over the toy encoder with a random memory pool."""
    from defectseg.config import ModelFlags
    from defectseg.network import SegModel

    torch.manual_seed(seed)
    enc = make_toy_encoder(seed=seed, width=width)
    r = np.random.default_rng(pool_seed)
    pyrs = [extract_pyramid(enc, r.random((img_size, img_size, 3)).astype(np.float32))
            for _ in range(pool_n)]
    pool = pool_from_pyramids(pyrs, seed=pool_seed)
    return SegModel(enc, pool, flags or ModelFlags())


@pytest.fixture(scope="session")
def model_factory():
    return build_model
