"""Branch-specific adversarial training and sampling.

Four model flavors share one training loop: per-cluster convolutional segment
models, the recurrent model for continuous surrogates, the square-wave
convolutional variant, and the spike-window model. Training data are min-max
normalized to [-1, 1]; the range is kept on the model for inversion.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DivergenceError,
    InsufficientDataError,
    LoadgenError,
    NoSpikesError,
    ShapeError,
)
from .nn import (
    Activation,
    Adam,
    Conv1D,
    Dense,
    ExpandDim,
    Flatten,
    LSTM,
    Network,
    OptimConfig,
    Repeat,
    Reshape,
    TimeDense,
    bce_fake,
    bce_real,
    gen_loss,
    network_from_spec,
)

_RANGE_EPS = 1e-12
CHECKPOINT_MAGIC = b"LOADGEN-CKPT-1\n"


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 1500
    batch_size: int = 32
    latent_dim: int = 100
    optim: OptimConfig = field(default_factory=OptimConfig)
    seed: int = 0
    d_steps_per_g: int = 1
    conv_channels: tuple[int, int, int] = (64, 128, 256)
    lstm_hidden: int = 64
    lstm_layers: int = 2

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise LoadgenError("epochs and batch_size must be >= 1")


@dataclass(frozen=True)
class HybridConfig:
    separation_factor: float = 1.0
    spike_quantile: float = 0.9
    spike_window: int = 64
    square_downsample: int = 10

    def __post_init__(self):
        if self.separation_factor <= 0.0:
            raise LoadgenError("separation_factor must be positive")
        if not 0.0 < self.spike_quantile < 1.0:
            raise LoadgenError("spike_quantile must lie in (0,1)")
        if self.spike_window < 2 or self.square_downsample < 1:
            raise LoadgenError("invalid spike_window or square_downsample")


@dataclass
class GanModel:
    generator: Network
    discriminator: Network
    data_range: tuple[float, float]
    branch: str  # cluster | continuous | square | spike
    out_len: int
    latent_dim: int
    seed: int
    loss_history: list = field(default_factory=list)  # (gen_loss, disc_loss) per epoch
    gen_opt: Adam | None = None
    disc_opt: Adam | None = None


# ---------------------------------------------------------------------------
# Normalization
# ---------------------------------------------------------------------------


def minmax_normalize(data: np.ndarray) -> tuple[np.ndarray, tuple[float, float]]:
    """Map an array into [-1, 1] using its global min/max."""
    lo = float(data.min())
    hi = float(data.max())
    if hi - lo < _RANGE_EPS:
        return np.zeros_like(data), (lo, hi)
    return 2.0 * (data - lo) / (hi - lo) - 1.0, (lo, hi)


def minmax_denormalize(norm: np.ndarray, data_range: tuple[float, float]) -> np.ndarray:
    lo, hi = data_range
    if hi - lo < _RANGE_EPS:
        return np.full_like(norm, lo)
    return lo + (norm + 1.0) / 2.0 * (hi - lo)


# ---------------------------------------------------------------------------
# Architectures
# ---------------------------------------------------------------------------


def build_conv_generator(out_len: int, latent_dim: int, channels, rng) -> Network:
    c0, c1, c2 = channels
    return Network(
        [
            Dense(latent_dim, c0 * out_len, rng, "g_bridge"),
            Activation("relu"),
            Reshape(c0, out_len),
            Conv1D(c0, c0, 3, rng, "g_conv1"),
            Activation("relu"),
            Conv1D(c0, c1, 5, rng, "g_conv2"),
            Activation("relu"),
            Conv1D(c1, c2, 5, rng, "g_conv3"),
            Activation("relu"),
            Flatten(),
            Dense(c2 * out_len, out_len, rng, "g_head"),
            Activation("tanh"),
        ]
    )


def build_conv_discriminator(in_len: int, channels, rng) -> Network:
    c0, c1 = channels[0], channels[1]
    return Network(
        [
            Reshape(1, in_len),
            Conv1D(1, c1, 5, rng, "d_conv1"),
            Activation("leaky_relu"),
            Conv1D(c1, c0, 3, rng, "d_conv2"),
            Activation("leaky_relu"),
            Flatten(),
            Dense(c0 * in_len, 1, rng, "d_head"),
            Activation("sigmoid"),
        ]
    )


def build_lstm_generator(out_len: int, latent_dim: int, hidden: int, n_layers: int, rng) -> Network:
    layers = [Dense(latent_dim, hidden, rng, "g_affine"), Repeat(out_len)]
    for i in range(n_layers):
        layers.append(LSTM(hidden, hidden, rng, return_sequences=True, name=f"g_lstm{i}"))
    layers += [TimeDense(hidden, rng, "g_head"), Activation("tanh")]
    return Network(layers)


def build_lstm_discriminator(in_len: int, hidden: int, n_layers: int, rng) -> Network:
    layers: list = [ExpandDim()]
    n_in = 1
    for i in range(n_layers):
        last = i == n_layers - 1
        layers.append(LSTM(n_in, hidden, rng, return_sequences=not last, name=f"d_lstm{i}"))
        n_in = hidden
    layers += [Dense(hidden, 1, rng, "d_head"), Activation("sigmoid")]
    return Network(layers)


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


def _train_adversarial(model: GanModel, data_norm: np.ndarray, cfg: TrainConfig) -> None:
    """Alternating D/G updates over minibatches; loss history per epoch."""
    g_net, d_net = model.generator, model.discriminator
    model.gen_opt = Adam(g_net.params(), cfg.optim)
    model.disc_opt = Adam(d_net.params(), cfg.optim)
    rng = np.random.default_rng(cfg.seed)
    n = data_norm.shape[0]
    batch = min(cfg.batch_size, n)
    for epoch in range(cfg.epochs):
        perm = rng.permutation(n)
        g_losses, d_losses = [], []
        for start in range(0, n, batch):
            idx = perm[start : start + batch]
            real = data_norm[idx]
            b = real.shape[0]
            for _ in range(cfg.d_steps_per_g):
                z = rng.standard_normal((b, cfg.latent_dim))
                fake = g_net.forward(z)
                loss_r, seed_r = bce_real(d_net.forward(real))
                d_net.backward(seed_r)
                loss_f, seed_f = bce_fake(d_net.forward(fake))
                d_net.backward(seed_f)
                model.disc_opt.step()
                d_losses.append(loss_r + loss_f)
            z = rng.standard_normal((b, cfg.latent_dim))
            fake = g_net.forward(z)
            if np.max(np.abs(fake)) > 1.0 + 1e-9:
                raise DivergenceError("generator output escaped [-1,1]")
            loss_g, seed_g = gen_loss(d_net.forward(fake))
            gin = d_net.backward(seed_g)
            d_net.zero_grads()  # G step must not move D
            g_net.backward(gin)
            model.gen_opt.step()
            g_losses.append(loss_g)
        ge, de = float(np.mean(g_losses)), float(np.mean(d_losses))
        if not (np.isfinite(ge) and np.isfinite(de)):
            raise DivergenceError(f"non-finite loss at epoch {epoch}")
        model.loss_history.append((ge, de))


def train_cluster_gan(segments, cfg: TrainConfig, branch: str = "cluster") -> GanModel:
    """Train the convolutional segment model on one cluster's segments."""
    data = np.array([np.asarray(getattr(s, "values", s), dtype=np.float64) for s in segments])
    if data.ndim != 2 or data.shape[0] < 2:
        raise InsufficientDataError("cluster training needs at least 2 segments")
    out_len = data.shape[1]
    norm, data_range = minmax_normalize(data)
    rng = np.random.default_rng(cfg.seed)
    model = GanModel(
        generator=build_conv_generator(out_len, cfg.latent_dim, cfg.conv_channels, rng),
        discriminator=build_conv_discriminator(out_len, cfg.conv_channels, rng),
        data_range=data_range,
        branch=branch,
        out_len=out_len,
        latent_dim=cfg.latent_dim,
        seed=cfg.seed,
    )
    _train_adversarial(model, norm, cfg)
    return model


def ablation_no_clusters(segments, cfg: TrainConfig) -> GanModel:
    """Pool every segment of a device into one training set (no clustering)."""
    return train_cluster_gan(segments, cfg, branch="cluster")


def train_continuous_gan(windows, cfg: TrainConfig) -> GanModel:
    """Train the recurrent model on equal-length surrogate windows."""
    if len(windows) < 1:
        raise InsufficientDataError("continuous training needs at least 1 window")
    lengths = {np.asarray(w).size for w in windows}
    if len(lengths) != 1:
        raise ShapeError(f"ragged continuous windows: lengths {sorted(lengths)}")
    data = np.array([np.asarray(w, dtype=np.float64) for w in windows])
    out_len = data.shape[1]
    norm, data_range = minmax_normalize(data)
    rng = np.random.default_rng(cfg.seed)
    model = GanModel(
        generator=build_lstm_generator(out_len, cfg.latent_dim, cfg.lstm_hidden,
                                       cfg.lstm_layers, rng),
        discriminator=build_lstm_discriminator(out_len, cfg.lstm_hidden, cfg.lstm_layers, rng),
        data_range=data_range,
        branch="continuous",
        out_len=out_len,
        latent_dim=cfg.latent_dim,
        seed=cfg.seed,
    )
    _train_adversarial(model, norm, cfg)
    return model


def sample(model: GanModel, n: int, seed: int) -> np.ndarray:
    """Draw n denormalized sequences; deterministic for a fixed seed."""
    if n == 0:
        return np.empty((0, model.out_len))
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n, model.latent_dim))
    out = model.generator.forward(z)
    if np.max(np.abs(out)) > 1.0 + 1e-9:
        raise DivergenceError("generator output escaped [-1,1]")
    return minmax_denormalize(out, model.data_range)


def sample_normalized(model: GanModel, n: int, seed: int) -> np.ndarray:
    """Like sample() but without the denormalization step."""
    if n == 0:
        return np.empty((0, model.out_len))
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n, model.latent_dim))
    return model.generator.forward(z)


def shared_discriminator_finetune(models, datasets_norm, cfg: TrainConfig, epochs: int) -> None:
    """Optional final phase: one discriminator judges every branch's output.

    The shared discriminator trains on the union of all normalized training
    sets; each generator then takes its updates against it.
    """
    if not models:
        return
    out_len = models[0].out_len
    for m in models:
        if m.out_len != out_len:
            raise ShapeError("shared discriminator needs equal-length branches")
    rng = np.random.default_rng(cfg.seed)
    shared_d = build_conv_discriminator(out_len, cfg.conv_channels, rng)
    d_opt = Adam(shared_d.params(), cfg.optim)
    for _ in range(epochs):
        for model, data in zip(models, datasets_norm):
            b = min(cfg.batch_size, data.shape[0])
            idx = rng.permutation(data.shape[0])[:b]
            real = data[idx]
            z = rng.standard_normal((b, cfg.latent_dim))
            fake = model.generator.forward(z)
            _, seed_r = bce_real(shared_d.forward(real))
            shared_d.backward(seed_r)
            _, seed_f = bce_fake(shared_d.forward(fake))
            shared_d.backward(seed_f)
            d_opt.step()
            z = rng.standard_normal((b, cfg.latent_dim))
            fake = model.generator.forward(z)
            _, seed_g = gen_loss(shared_d.forward(fake))
            gin = shared_d.backward(seed_g)
            shared_d.zero_grads()
            model.generator.backward(gin)
            if model.gen_opt is None:
                model.gen_opt = Adam(model.generator.params(), cfg.optim)
            model.gen_opt.step()


# ---------------------------------------------------------------------------
# Square-wave and spike handling
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SquareWaveResult:
    is_square: bool
    centers: tuple[float, float]
    cycle_len: float


def _two_means_1d(values: np.ndarray) -> tuple[float, float]:
    """Deterministic 2-means on scalars, seeded at (min, max)."""
    m1, m2 = float(values.min()), float(values.max())
    for _ in range(100):
        mid = (m1 + m2) / 2.0
        low = values[values <= mid]
        high = values[values > mid]
        n1 = float(low.mean()) if low.size else m1
        n2 = float(high.mean()) if high.size else m2
        if n1 == m1 and n2 == m2:
            break
        m1, m2 = n1, n2
    return m1, m2


def detect_square_wave(x, hcfg: HybridConfig) -> SquareWaveResult:
    """Two-level test: 2-means centers on a downsampled copy must separate by
    more than separation_factor * std(x)."""
    x = np.asarray(x, dtype=np.float64)
    if x.size < 4:
        raise InsufficientDataError("square-wave test needs at least 4 samples")
    std = float(x.std())
    factor = max(1, min(hcfg.square_downsample, x.size // 4))
    n = x.size // factor
    down = x[: n * factor].reshape(n, factor).mean(axis=1) if factor > 1 else x.copy()
    m1, m2 = _two_means_1d(down)
    if std == 0.0:
        return SquareWaveResult(False, (m1, m2), float(x.size))
    is_square = abs(m1 - m2) > hcfg.separation_factor * std

    mid = (m1 + m2) / 2.0
    above = x > mid
    crossings = np.flatnonzero(np.diff(above.astype(np.int8)) != 0) + 1
    if crossings.size >= 2:
        cycle = 2.0 * float(np.mean(np.diff(crossings)))
    else:
        cycle = float(x.size)
    return SquareWaveResult(bool(is_square), (m1, m2), cycle)


def spike_threshold(x, q: float) -> float:
    """q-quantile (linear interpolation) of the strictly positive samples."""
    x = np.asarray(x, dtype=np.float64)
    pos = x[x > 0.0]
    if pos.size == 0:
        raise NoSpikesError("no positive samples")
    return float(np.quantile(pos, q))


@dataclass(frozen=True)
class SpikeExtract:
    windows: np.ndarray  # (m, S)
    peak_positions: np.ndarray
    gap_mean: float
    gap_std: float


def extract_spikes(x, threshold: float, window_len: int) -> SpikeExtract:
    """Local maxima above threshold with minimum separation window_len;
    windows are centered on peaks and zero-padded at the edges."""
    x = np.asarray(x, dtype=np.float64)
    candidates = np.flatnonzero(x > threshold)
    if candidates.size == 0:
        raise NoSpikesError(f"no samples above threshold {threshold}")
    order = candidates[np.argsort(-x[candidates], kind="stable")]
    accepted: list[int] = []
    for idx in order:
        if all(abs(idx - a) >= window_len for a in accepted):
            accepted.append(int(idx))
    peaks = np.array(sorted(accepted))
    half = window_len // 2
    windows = np.zeros((peaks.size, window_len))
    for i, p in enumerate(peaks):
        lo = p - half
        for k in range(window_len):
            j = lo + k
            if 0 <= j < x.size:
                windows[i, k] = x[j]
    if peaks.size >= 2:
        gaps = np.diff(peaks).astype(np.float64)
        gap_mean, gap_std = float(gaps.mean()), float(gaps.std())
    else:
        gap_mean, gap_std = float(x.size), 0.0
    return SpikeExtract(windows, peaks, gap_mean, gap_std)


@dataclass
class SpikeModel:
    gan: GanModel
    gap_mean: float
    gap_std: float
    threshold: float

    def __post_init__(self):
        if self.gap_mean <= 0.0 or self.threshold <= 0.0:
            raise LoadgenError("gap_mean and threshold must be positive")


def interleave_spikes(spike_model: SpikeModel, length: int, seed: int) -> np.ndarray:
    """Zero baseline with generated spike windows placed at gaps drawn from
    N(gap_mean, gap_std), clipped to >= 1; overlaps resolve by max."""
    rng = np.random.default_rng(seed)
    y = np.zeros(length)
    window_len = spike_model.gan.out_len
    half = window_len // 2
    # upper bound on placements, +margin for gap variance
    est = max(1, int(length / max(spike_model.gap_mean, 1.0)) + 8)
    bank = sample(spike_model.gan, est, seed=int(rng.integers(2**63)))
    pos = 0
    placed = 0
    while True:
        gap = max(1, int(round(rng.normal(spike_model.gap_mean, spike_model.gap_std))))
        pos += gap
        if pos >= length:
            break
        if placed >= bank.shape[0]:
            bank = np.concatenate(
                [bank, sample(spike_model.gan, est, seed=int(rng.integers(2**63)))]
            )
        w = bank[placed]
        placed += 1
        lo = pos - half
        for k in range(window_len):
            j = lo + k
            if 0 <= j < length:
                y[j] = max(y[j], w[k])
    return y


def train_spike_model(x, cfg: TrainConfig, hcfg: HybridConfig) -> SpikeModel:
    """Full spike pipeline: threshold, window extraction, window GAN."""
    threshold = spike_threshold(x, hcfg.spike_quantile)
    ext = extract_spikes(x, threshold, hcfg.spike_window)
    if ext.windows.shape[0] < 2:
        raise InsufficientDataError("spike training needs at least 2 spike windows")
    gan = train_cluster_gan(ext.windows, cfg, branch="spike")
    return SpikeModel(gan=gan, gap_mean=ext.gap_mean, gap_std=ext.gap_std, threshold=threshold)


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------


def save_model(model: GanModel, path) -> None:
    """Versioned container: JSON header + concatenated float64 LE arrays.

    Array order: G params, D params, G Adam (m then v), D Adam (m then v).
    """
    arrays = [p.values for p in model.generator.params()]
    arrays += [p.values for p in model.discriminator.params()]
    gen_step = disc_step = 0
    if model.gen_opt is not None:
        arrays += model.gen_opt.state_arrays()
        gen_step = model.gen_opt.step_count
    if model.disc_opt is not None:
        arrays += model.disc_opt.state_arrays()
        disc_step = model.disc_opt.step_count
    header = {
        "format": "loadgen-gan-checkpoint",
        "version": 1,
        "branch": model.branch,
        "data_range": [model.data_range[0], model.data_range[1]],
        "out_len": model.out_len,
        "latent_dim": model.latent_dim,
        "seed": model.seed,
        "gen_spec": model.generator.spec(),
        "disc_spec": model.discriminator.spec(),
        "has_gen_opt": model.gen_opt is not None,
        "has_disc_opt": model.disc_opt is not None,
        "gen_step": gen_step,
        "disc_step": disc_step,
        "shapes": [list(a.shape) for a in arrays],
        "loss_history": [[g, d] for g, d in model.loss_history],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(len(blob).to_bytes(8, "big"))
        fh.write(blob)
        for a in arrays:
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def load_model(path) -> GanModel:
    with open(path, "rb") as fh:
        magic = fh.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise LoadgenError(f"{path}: not a loadgen checkpoint")
        hlen = int.from_bytes(fh.read(8), "big")
        header = json.loads(fh.read(hlen).decode("utf-8"))
        payload = fh.read()
    shapes = [tuple(s) for s in header["shapes"]]
    arrays = []
    offset = 0
    for shape in shapes:
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(payload, dtype="<f8", count=count, offset=offset).reshape(shape)
        arrays.append(arr.astype(np.float64))
        offset += count * 8
    g_net = network_from_spec(header["gen_spec"])
    d_net = network_from_spec(header["disc_spec"])
    model = GanModel(
        generator=g_net,
        discriminator=d_net,
        data_range=(header["data_range"][0], header["data_range"][1]),
        branch=header["branch"],
        out_len=header["out_len"],
        latent_dim=header["latent_dim"],
        seed=header["seed"],
        loss_history=[(g, d) for g, d in header["loss_history"]],
    )
    pos = 0
    for p in g_net.params() + d_net.params():
        p.values[...] = arrays[pos]
        pos += 1
    optim = OptimConfig()
    if header["has_gen_opt"]:
        model.gen_opt = Adam(g_net.params(), optim)
        model.gen_opt.step_count = header["gen_step"]
        n = len(model.gen_opt.params)
        for i in range(n):
            model.gen_opt.m[i][...] = arrays[pos + i]
            model.gen_opt.v[i][...] = arrays[pos + n + i]
        pos += 2 * n
    if header["has_disc_opt"]:
        model.disc_opt = Adam(d_net.params(), optim)
        model.disc_opt.step_count = header["disc_step"]
        n = len(model.disc_opt.params)
        for i in range(n):
            model.disc_opt.m[i][...] = arrays[pos + i]
            model.disc_opt.v[i][...] = arrays[pos + n + i]
        pos += 2 * n
    return model
