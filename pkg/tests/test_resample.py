import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from loadgen.errors import InsufficientDataError, LoadgenError
from loadgen.resample import (
    ContinuousConfig,
    choose_factor,
    downsample,
    make_windows,
    reconstruct,
    stitch_windows,
    window_starts,
)


def test_downsample_identity_at_factor_one():
    x = np.arange(10.0)
    s = downsample(x, 1)
    np.testing.assert_array_equal(s.values, x)
    assert s.factor == 1


def test_downsample_block_means():
    s = downsample(np.array([1.0, 3.0, 5.0, 7.0]), 2)
    np.testing.assert_array_equal(s.values, [2.0, 6.0])


def test_downsample_preserves_mean():
    rng = np.random.default_rng(0)
    for factor in (2, 3, 7):
        x = rng.random(100)
        s = downsample(x, factor)
        n = x.size // factor
        assert s.values.mean() == pytest.approx(x[: n * factor].mean(), abs=1e-12)


def test_downsample_errors():
    with pytest.raises(LoadgenError):
        downsample(np.arange(4.0), 0)
    with pytest.raises(InsufficientDataError):
        downsample(np.arange(4.0), 5)


def test_choose_factor_boundaries():
    assert choose_factor(1000, 1000) == 1
    assert choose_factor(10000, 1000) == 10
    assert choose_factor(10001, 1000) == 10  # floor(10001/10) = 1000 <= 1000


def test_choose_factor_minimality_property():
    rng = np.random.default_rng(1)
    for _ in range(200):
        t = int(rng.integers(1, 10**6))
        u = int(rng.integers(1, 5000))
        f = choose_factor(t, u)
        assert t // f <= u
        if f > 1:
            assert t // (f - 1) > u


def test_make_windows_short_series():
    v = np.arange(900.0)
    assert len(make_windows(v, 1000, 2000)) == 1
    v = np.arange(2000.0)
    assert len(make_windows(v, 1000, 2000)) == 1


def test_make_windows_overlap_and_alignment():
    v = np.arange(5000.0)
    wins = make_windows(v, 1000, 2000)
    starts = window_starts(5000, 1000, 2000)
    assert starts == [0, 1000, 2000, 3000]
    assert all(w.size == 2000 for w in wins)
    for w, s in zip(wins, starts):
        np.testing.assert_array_equal(w, v[s : s + 2000])


def test_stitch_windows_round_trip():
    v = np.arange(5000.0)
    wins = make_windows(v, 1000, 2000)
    starts = window_starts(5000, 1000, 2000)
    np.testing.assert_allclose(stitch_windows(wins, starts, 5000), v, atol=1e-12)


def test_reconstruct_basic_and_pad():
    np.testing.assert_array_equal(reconstruct([2.0, 6.0], 2, 4), [2, 2, 6, 6])
    np.testing.assert_array_equal(reconstruct([5.0], 3, 5), [5, 5, 5, 5, 5])


def test_reconstruct_round_trip_block_constant():
    rng = np.random.default_rng(2)
    for _ in range(100):
        factor = int(rng.integers(1, 9))
        blocks = int(rng.integers(1, 30))
        # integer-valued blocks keep the block mean exact in floating point
        x = np.repeat(rng.integers(0, 1000, blocks).astype(np.float64), factor)
        back = reconstruct(downsample(x, factor).values, factor, x.size)
        np.testing.assert_array_equal(back, x)


def test_reconstruct_length_exact():
    rng = np.random.default_rng(3)
    for _ in range(1000):
        m = int(rng.integers(1, 50))
        f = int(rng.integers(1, 20))
        t = int(rng.integers(1, 800))
        assert reconstruct(rng.random(m), f, t).size == t


def test_block_mean_preservation_after_round_trip():
    rng = np.random.default_rng(4)
    x = rng.random(999)
    factor = 7
    s = downsample(x, factor)
    y = reconstruct(s.values, factor, x.size)
    again = downsample(y, factor)
    np.testing.assert_allclose(again.values, s.values, atol=1e-12)


def test_continuous_config_validation():
    with pytest.raises(LoadgenError):
        ContinuousConfig(max_surrogate_len=0)
    with pytest.raises(LoadgenError):
        ContinuousConfig(max_surrogate_len=100, window_len=50)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 10**6), st.integers(1, 2000))
def test_choose_factor_property(t, u):
    f = choose_factor(t, u)
    assert f >= 1 and t // f <= u
    if f > 1:
        assert t // (f - 1) > u
