import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from defectseg.perlin import generate_perlin, lattice_pixels


def test_shape_and_dtype():
    f = generate_perlin(64, 48, freq=(4, 2), seed=0)
    assert f.values.shape == (64, 48)
    assert f.values.dtype == np.float64
    assert f.freq == (4, 2)


def test_range_bounded():
    for seed in range(10):
        f = generate_perlin(64, 64, freq=8, seed=seed)
        assert np.all(f.values >= -1.0) and np.all(f.values <= 1.0)


def test_lattice_pixels_are_exact_zeros():
    # when freq divides the size, grid-aligned pixels sit on lattice points
    f = generate_perlin(64, 64, freq=4, seed=3)
    pts = lattice_pixels(f)
    assert len(pts) == 16  # rows/cols 0, 16, 32, 48 land on the 4-cell lattice
    for y, x in pts:
        assert f.values[y, x] == 0.0


def test_nontrivial_field():
    f = generate_perlin(32, 32, freq=2, seed=1)
    assert f.values.std() > 0.01


def test_deterministic_by_seed():
    a = generate_perlin(32, 32, freq=4, seed=5)
    b = generate_perlin(32, 32, freq=4, seed=5)
    c = generate_perlin(32, 32, freq=4, seed=6)
    assert np.array_equal(a.values, b.values)
    assert not np.array_equal(a.values, c.values)


@pytest.mark.parametrize("freq", [0, -1, (0, 4), (4, 0)])
def test_rejects_bad_freq(freq):
    with pytest.raises(ValueError):
        generate_perlin(32, 32, freq=freq, seed=0)


def test_rejects_freq_larger_than_size():
    with pytest.raises(ValueError):
        generate_perlin(8, 8, freq=16, seed=0)


@given(
    h=st.sampled_from([16, 32, 48]),
    w=st.sampled_from([16, 32, 48]),
    fexp=st.integers(0, 3),
    seed=st.integers(0, 2**31 - 1),
)
def test_bound_and_zero_property(h, w, fexp, seed):
    freq = 2**fexp
    f = generate_perlin(h, w, freq=freq, seed=seed)
    assert np.all(np.abs(f.values) <= 1.0)
    for y, x in lattice_pixels(f):
        assert f.values[y, x] == 0.0
