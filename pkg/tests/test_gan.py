import numpy as np
import pytest

from loadgen.errors import InsufficientDataError, NoSpikesError, ShapeError
from loadgen.gan import (
    HybridConfig,
    TrainConfig,
    detect_square_wave,
    extract_spikes,
    interleave_spikes,
    load_model,
    minmax_denormalize,
    minmax_normalize,
    sample,
    sample_normalized,
    save_model,
    spike_threshold,
    train_cluster_gan,
    train_continuous_gan,
    train_spike_model,
)
from loadgen.nn import OptimConfig
from loadgen.traces import FixtureSpec, make_fixture

FAST = TrainConfig(epochs=3, batch_size=8, latent_dim=8, seed=0, conv_channels=(4, 8, 8),
                   lstm_hidden=8)
HCFG = HybridConfig()


def _segments(n=6, length=24, seed=0):
    rng = np.random.default_rng(seed)
    return rng.random((n, length)) * 50 + 10


def test_minmax_round_trip():
    data = _segments()
    norm, rng_pair = minmax_normalize(data)
    assert norm.min() >= -1.0 and norm.max() <= 1.0
    np.testing.assert_allclose(minmax_denormalize(norm, rng_pair), data, atol=1e-9)


def test_minmax_degenerate_range():
    data = np.full((3, 4), 7.0)
    norm, rng_pair = minmax_normalize(data)
    assert np.all(norm == 0.0)
    np.testing.assert_array_equal(minmax_denormalize(norm, rng_pair), data)


def test_train_cluster_gan_records_losses_and_range():
    data = _segments()
    model = train_cluster_gan(data, FAST)
    assert len(model.loss_history) == FAST.epochs
    assert all(np.isfinite(g) and np.isfinite(d) for g, d in model.loss_history)
    assert model.data_range == (float(data.min()), float(data.max()))
    assert model.branch == "cluster"


def test_train_cluster_gan_needs_two_segments():
    with pytest.raises(InsufficientDataError):
        train_cluster_gan(_segments(n=1), FAST)


def test_sample_shapes_and_bounds():
    model = train_cluster_gan(_segments(), FAST)
    assert sample(model, 0, 1).shape == (0, 24)
    out = sample_normalized(model, 5, 1)
    assert out.shape == (5, 24)
    assert np.all(np.abs(out) <= 1.0)


def test_sample_deterministic():
    model = train_cluster_gan(_segments(), FAST)
    np.testing.assert_array_equal(sample(model, 4, 7), sample(model, 4, 7))
    assert not np.array_equal(sample(model, 4, 7), sample(model, 4, 8))


def test_train_continuous_gan_ragged_windows():
    with pytest.raises(ShapeError):
        train_continuous_gan([np.zeros(8), np.zeros(9)], FAST)
    with pytest.raises(InsufficientDataError):
        train_continuous_gan([], FAST)


def test_train_continuous_gan_runs():
    rng = np.random.default_rng(1)
    windows = [50 + rng.standard_normal(16) for _ in range(4)]
    model = train_continuous_gan(windows, FAST)
    assert model.branch == "continuous"
    assert sample(model, 2, 0).shape == (2, 16)


def test_training_deterministic_for_seed():
    data = _segments()
    m1 = train_cluster_gan(data, FAST)
    m2 = train_cluster_gan(data, FAST)
    for p1, p2 in zip(m1.generator.params(), m2.generator.params()):
        np.testing.assert_array_equal(p1.values, p2.values)
    assert m1.loss_history == m2.loss_history


def test_detect_square_wave_on_fixture():
    t = make_fixture(FixtureSpec("square_wave", 1000, seed=1,
                                 params={"lo": 0, "hi": 100, "half_period": 25}))
    res = detect_square_wave(t.samples, HCFG)
    assert res.is_square
    # blocks straddling the level transitions pull the low center up a bit
    lo, hi = sorted(res.centers)
    assert lo < 25.0 and hi > 90.0
    assert res.cycle_len == pytest.approx(50.0, rel=0.1)

    # with aligned blocks the centers are exact
    t2 = make_fixture(FixtureSpec("square_wave", 1000, seed=1,
                                  params={"lo": 0, "hi": 100, "half_period": 50}))
    res2 = detect_square_wave(t2.samples, HCFG)
    assert res2.is_square
    assert sorted(res2.centers) == pytest.approx([0.0, 100.0], abs=1e-9)
    assert res2.cycle_len == pytest.approx(100.0, rel=0.1)


def test_detect_square_wave_constant_false():
    res = detect_square_wave(np.full(100, 42.0), HCFG)
    assert not res.is_square


def test_detect_square_wave_noise_false():
    rng = np.random.default_rng(2)
    res = detect_square_wave(rng.standard_normal(2000), HCFG)
    assert not res.is_square


def test_detect_square_wave_scale_invariant():
    t = make_fixture(FixtureSpec("square_wave", 600, seed=1))
    a = detect_square_wave(t.samples, HCFG).is_square
    b = detect_square_wave(t.samples * 37.0, HCFG).is_square
    assert a == b


def test_spike_threshold_linear_interpolation():
    x = np.concatenate([np.zeros(50), np.arange(1.0, 101.0)])
    assert spike_threshold(x, 0.9) == pytest.approx(90.1)
    assert spike_threshold(np.array([0.0, 5.0, 5.0]), 0.3) == 5.0
    assert spike_threshold(np.array([1.0, 2.0, 3.0]), 0.5) == 2.0


def test_spike_threshold_monotone_and_errors():
    rng = np.random.default_rng(3)
    x = rng.random(200)
    qs = [0.1, 0.3, 0.5, 0.7, 0.9]
    vals = [spike_threshold(x, q) for q in qs]
    assert vals == sorted(vals)
    with pytest.raises(NoSpikesError):
        spike_threshold(np.zeros(10), 0.5)


def test_extract_spikes_two_deltas():
    x = np.zeros(1000)
    x[200] = 10.0
    x[500] = 12.0
    ext = extract_spikes(x, 5.0, 64)
    assert ext.windows.shape == (2, 64)
    assert ext.gap_mean == 300.0
    assert ext.gap_std == 0.0
    # windows centered on the peaks
    assert ext.windows[0][32] == 10.0
    assert ext.windows[1][32] == 12.0


def test_extract_spikes_single_peak_convention():
    x = np.zeros(400)
    x[100] = 9.0
    ext = extract_spikes(x, 5.0, 64)
    assert ext.windows.shape[0] == 1
    assert ext.gap_mean == 400.0 and ext.gap_std == 0.0


def test_extract_spikes_min_separation():
    x = np.zeros(300)
    x[100] = 10.0
    x[110] = 8.0  # within 64 of the larger peak, suppressed
    x[200] = 9.0
    ext = extract_spikes(x, 5.0, 64)
    assert ext.peak_positions.tolist() == [100, 200]


def test_interleave_spikes_length_and_spacing():
    data = _segments(n=4, length=16)
    gan = train_cluster_gan(data, TrainConfig(epochs=2, batch_size=4, latent_dim=8,
                                              seed=0, conv_channels=(4, 8, 8)))
    from loadgen.gan import SpikeModel

    sm = SpikeModel(gan=gan, gap_mean=100.0, gap_std=0.0, threshold=5.0)
    y = interleave_spikes(sm, 1000, seed=0)
    assert y.size == 1000
    sm_short = SpikeModel(gan=gan, gap_mean=5000.0, gap_std=0.0, threshold=5.0)
    y2 = interleave_spikes(sm_short, 100, seed=0)
    assert y2.size == 100


def test_train_spike_model_end_to_end():
    t = make_fixture(FixtureSpec("spiky", 4000, seed=4, params={"mean_gap": 150}))
    sm = train_spike_model(t.samples, FAST, HybridConfig(spike_quantile=0.5))
    assert sm.gap_mean > 0.0
    assert sm.threshold > 0.0
    y = interleave_spikes(sm, 2000, seed=1)
    assert y.size == 2000


def test_checkpoint_round_trip_and_determinism(tmp_path):
    model = train_cluster_gan(_segments(), FAST)
    p1 = tmp_path / "a.ckpt"
    p2 = tmp_path / "b.ckpt"
    save_model(model, p1)
    save_model(model, p2)
    assert p1.read_bytes() == p2.read_bytes()

    back = load_model(p1)
    assert back.branch == model.branch
    assert back.data_range == model.data_range
    assert back.loss_history == model.loss_history
    np.testing.assert_array_equal(sample(back, 3, 5), sample(model, 3, 5))
    # optimizer state survives the round trip
    for a, b in zip(model.gen_opt.state_arrays(), back.gen_opt.state_arrays()):
        np.testing.assert_array_equal(a, b)


def test_paper_default_train_config():
    cfg = TrainConfig()
    assert cfg.epochs == 1500
    assert cfg.batch_size == 32
    assert cfg.latent_dim == 100
    assert cfg.optim == OptimConfig(2e-4, 0.5, 0.999, 1e-8)
