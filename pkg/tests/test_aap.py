import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pairhold.aap import InvalidGridError, adaptive_avg_pool, bin_edges, load_grid, save_grid

import oracles


def test_identity_bins():
    x = np.random.default_rng(0).normal(size=(5, 4, 2))
    np.testing.assert_array_equal(adaptive_avg_pool(x, 5, 4), x)


def test_constant_grid():
    out = adaptive_avg_pool(np.full((11, 3, 2), 2.5), 7, 7)
    assert out.shape == (7, 7, 2)
    assert np.all(out == 2.5)


def test_three_by_three_to_two_by_two():
    grid = np.array([[1, 2, 3], [4, 5, 6], [7, 8, 9]], dtype=float)
    np.testing.assert_array_equal(adaptive_avg_pool(grid, 2, 2)[..., 0], [[3, 4], [6, 7]])


def test_default_output_is_seven_by_seven():
    assert adaptive_avg_pool(np.ones((38, 50, 3))).shape == (7, 7, 3)


@pytest.mark.parametrize("bad", [np.zeros((0, 3, 1)), np.zeros((3, 0)), np.zeros(5)])
def test_empty_grid_rejected(bad):
    with pytest.raises(InvalidGridError):
        adaptive_avg_pool(bad, 2, 2)


def test_non_finite_rejected():
    with pytest.raises(InvalidGridError):
        adaptive_avg_pool(np.array([[1.0, np.nan]]), 1, 1)


@given(st.integers(1, 15), st.integers(1, 8))
def test_bins_cover_every_cell(size, out):
    edges = bin_edges(size, out)
    covered = set()
    for lo, hi in edges:
        assert 0 <= lo < hi <= size
        covered.update(range(lo, hi))
    assert covered == set(range(size))


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 9), st.integers(1, 9), st.integers(1, 7), st.integers(1, 7), st.integers(0, 2**31))
def test_bounded_and_channel_independent(h, w, oh, ow, seed):
    x = np.random.default_rng(seed).normal(size=(h, w, 3))
    out = adaptive_avg_pool(x, oh, ow)
    for c in range(3):
        assert out[..., c].min() >= x[..., c].min() - 1e-12
        assert out[..., c].max() <= x[..., c].max() + 1e-12
        np.testing.assert_array_equal(out[..., c], adaptive_avg_pool(x[..., c], oh, ow)[..., 0])


def test_matches_oracle_spot_check():
    x = np.random.default_rng(5).uniform(-3, 3, size=(10, 7, 2))
    np.testing.assert_array_equal(adaptive_avg_pool(x, 4, 3), oracles.pool_oracle(x, 4, 3))


def test_sidecar_round_trip(tmp_path):
    x = np.random.default_rng(1).normal(size=(6, 5, 4)).astype(np.float32)
    save_grid(x, tmp_path / "g.bin")
    raw = (tmp_path / "g.bin").read_bytes()
    assert raw[:12] == (6).to_bytes(4, "little") + (5).to_bytes(4, "little") + (4).to_bytes(4, "little")
    assert len(raw) == 12 + 4 * 6 * 5 * 4
    np.testing.assert_array_equal(load_grid(tmp_path / "g.bin"), x.astype(np.float64))


def test_sidecar_truncated(tmp_path):
    save_grid(np.ones((2, 2, 1)), tmp_path / "g.bin")
    (tmp_path / "h.bin").write_bytes((tmp_path / "g.bin").read_bytes()[:-4])
    with pytest.raises(InvalidGridError):
        load_grid(tmp_path / "h.bin")
