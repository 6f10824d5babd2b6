import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from loadgen.errors import InsufficientDataError
from loadgen.features import (
    FEATURE_DIM,
    FEATURE_NAMES,
    Segment,
    apply_scaler,
    count_extrema,
    dominant_frequency,
    extract_features,
    features_for_segments,
    fit_scaler,
    normalize_segment,
    segment,
)


def test_segment_counts_and_remainder():
    segs = segment(np.arange(1000.0), 436)
    assert len(segs) == 2
    assert all(s.values.size == 436 for s in segs)


def test_segment_exact_and_small():
    x = np.arange(10.0)
    segs = segment(x, 10)
    assert len(segs) == 1
    np.testing.assert_array_equal(segs[0].values, x)
    segs = segment(x, 3)
    assert [s.values.tolist() for s in segs] == [[0, 1, 2], [3, 4, 5], [6, 7, 8]]
    assert segment(np.arange(5.0), 10) == []


def test_normalize_basic():
    ns = normalize_segment(Segment(np.array([2.0, 4.0, 6.0])))
    assert ns.mean == 4.0
    assert abs(ns.values.mean()) < 1e-12
    assert abs(ns.values.std() - 1.0) < 1e-12


def test_normalize_constant_segment():
    ns = normalize_segment(Segment(np.full(8, 3.0)))
    assert ns.std == 0.0
    assert np.all(ns.values == 0.0)


def test_normalize_affine_invariance():
    rng = np.random.default_rng(1)
    v = rng.random(64)
    a = normalize_segment(Segment(v)).values
    b = normalize_segment(Segment(3.5 * v + 17.0)).values
    np.testing.assert_allclose(a, b, atol=1e-9)


def test_feature_vector_zero_input():
    fv = extract_features(normalize_segment(Segment(np.zeros(64))))
    assert fv.shape == (FEATURE_DIM,)
    assert np.all(fv == 0.0)


def test_feature_vector_sine_cycle():
    L = 436
    t = np.arange(L)
    v = np.sin(2 * np.pi * t / L)
    fv = extract_features(normalize_segment(Segment(v)))
    names = dict(zip(FEATURE_NAMES, fv))
    assert names["dominant_freq"] == 1.0
    assert names["peak_count"] == 1.0
    assert names["valley_count"] == 1.0
    # independent DFT check of the dominant bin
    mags = np.abs(np.fft.rfft(normalize_segment(Segment(v)).values))
    assert int(np.argmax(mags[1 : L // 2 + 1])) + 1 == 1


def test_feature_vector_ramp():
    fv = extract_features(normalize_segment(Segment(np.arange(64.0))))
    names = dict(zip(FEATURE_NAMES, fv))
    assert names["trend"] > 0.0
    assert names["peak_count"] == 0.0
    assert names["valley_count"] == 0.0


def test_features_affine_invariant():
    rng = np.random.default_rng(2)
    v = rng.random(100)
    f1 = extract_features(normalize_segment(Segment(v)))
    f2 = extract_features(normalize_segment(Segment(2.0 * v + 5.0)))
    np.testing.assert_allclose(f1, f2, atol=1e-9)


def test_dominant_frequency_ties_and_flat():
    assert dominant_frequency(np.zeros(32)) == 0
    # two equal-magnitude bins: the lower bin wins
    t = np.arange(64)
    v = np.sin(2 * np.pi * 2 * t / 64) + np.sin(2 * np.pi * 5 * t / 64)
    assert dominant_frequency(v) == 2


def test_count_extrema_plateaus_not_counted():
    peaks, valleys = count_extrema(np.array([0.0, 1.0, 1.0, 0.0, -1.0, 0.0]))
    assert peaks == 0  # plateau top is not a strict peak
    assert valleys == 1


def test_extract_features_min_length():
    with pytest.raises(InsufficientDataError):
        extract_features(normalize_segment(Segment(np.array([1.0, 2.0, 3.0]))))


def test_shape_sample_indices():
    # shape_k reads s at round((k-1)(L-1)/19); check against direct formula
    L = 436
    v = np.arange(L, dtype=np.float64)
    ns = normalize_segment(Segment(v))
    fv = extract_features(ns)
    for k in range(1, 21):
        idx = int(np.floor((k - 1) * (L - 1) / 19 + 0.5))
        assert fv[10 + k - 1] == ns.values[idx]


def test_scaler_two_point():
    scaled = apply_scaler(fit_scaler(np.array([[0.0], [2.0]])), np.array([[0.0], [2.0]]))
    np.testing.assert_allclose(scaled.ravel(), [-1.0, 1.0])


def test_scaler_degenerate_and_random():
    same = np.array([[3.0, 1.0], [3.0, 2.0]])
    out = apply_scaler(fit_scaler(same), same)
    assert np.all(out[:, 0] == 0.0)

    rng = np.random.default_rng(3)
    mat = rng.random((100, FEATURE_DIM))
    out = apply_scaler(fit_scaler(mat), mat)
    np.testing.assert_allclose(out.mean(axis=0), 0.0, atol=1e-9)
    np.testing.assert_allclose(out.std(axis=0), 1.0, atol=1e-9)


def test_fit_scaler_needs_two():
    with pytest.raises(InsufficientDataError):
        fit_scaler(np.ones((1, FEATURE_DIM)))


def test_features_for_segments_shape():
    rng = np.random.default_rng(4)
    segs = segment(rng.random(500), 50)
    assert features_for_segments(segs).shape == (10, FEATURE_DIM)


@settings(max_examples=30, deadline=None)
@given(
    st.lists(st.floats(-1e3, 1e3), min_size=8, max_size=64),
    st.floats(0.1, 100.0),
    st.floats(-50.0, 50.0),
)
def test_normalize_property_affine(values, a, b):
    v = np.asarray(values)
    n1 = normalize_segment(Segment(v)).values
    n2 = normalize_segment(Segment(a * v + b)).values
    np.testing.assert_allclose(n1, n2, atol=1e-6)
