"""Minimal dense / 1-D convolution / LSTM layers with reverse-mode gradients,
logistic GAN losses, and the Adam update.

Only the layer kinds the two generator/discriminator architectures need are
implemented; there is no general autodiff graph. Array layouts:

    dense      (batch, features)
    conv1d     (batch, channels, length), same padding, stride 1
    lstm       (batch, time, features)
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DivergenceError, LoadgenError, ShapeError, StateError

LOGIT_CLAMP = 1e-7


class ParamTensor:
    """A named parameter array with an accumulated gradient."""

    def __init__(self, values: np.ndarray, name: str):
        self.values = np.asarray(values, dtype=np.float64)
        self.grad = np.zeros_like(self.values)
        self.name = name

    @property
    def shape(self):
        return self.values.shape


def _uniform_init(rng, shape, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class Dense:
    kind = "dense"

    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator, name: str = "dense"):
        self.n_in, self.n_out = n_in, n_out
        self.W = ParamTensor(_uniform_init(rng, (n_in, n_out), n_in, n_out), f"{name}.W")
        self.b = ParamTensor(np.zeros(n_out), f"{name}.b")
        self._x = None

    def forward(self, x):
        if x.ndim != 2 or x.shape[1] != self.n_in:
            raise ShapeError(f"dense expected (B,{self.n_in}), got {x.shape}")
        self._x = x
        return x @ self.W.values + self.b.values

    def backward(self, g):
        if self._x is None:
            raise StateError("dense backward before forward")
        self.W.grad += self._x.T @ g
        self.b.grad += g.sum(axis=0)
        return g @ self.W.values.T

    def params(self):
        return [self.W, self.b]

    def spec(self):
        return {"kind": "dense", "n_in": self.n_in, "n_out": self.n_out}


class Conv1D:
    """Same-length 1-D convolution, stride 1, odd kernel."""

    kind = "conv1d"

    def __init__(self, in_ch: int, out_ch: int, kernel: int, rng, name: str = "conv"):
        if kernel % 2 == 0 or kernel < 1:
            raise LoadgenError("conv1d kernel must be odd")
        self.in_ch, self.out_ch, self.kernel = in_ch, out_ch, kernel
        fan_in = in_ch * kernel
        self.W = ParamTensor(
            _uniform_init(rng, (out_ch, in_ch, kernel), fan_in, out_ch), f"{name}.W"
        )
        self.b = ParamTensor(np.zeros(out_ch), f"{name}.b")
        self._cols = None
        self._in_shape = None

    def _im2col(self, x):
        # x: (B, C, L) -> (B, L, C*k) of sliding windows with zero padding
        b, c, length = x.shape
        pad = self.kernel // 2
        xp = np.pad(x, ((0, 0), (0, 0), (pad, pad)))
        windows = np.lib.stride_tricks.sliding_window_view(xp, self.kernel, axis=2)
        # windows: (B, C, L, k) -> (B, L, C, k) -> (B, L, C*k)
        return windows.transpose(0, 2, 1, 3).reshape(b, length, c * self.kernel)

    def forward(self, x):
        if x.ndim != 3 or x.shape[1] != self.in_ch:
            raise ShapeError(f"conv1d expected (B,{self.in_ch},L), got {x.shape}")
        self._in_shape = x.shape
        cols = self._im2col(x)
        self._cols = cols
        wmat = self.W.values.reshape(self.out_ch, -1)
        out = cols @ wmat.T + self.b.values  # (B, L, out_ch)
        return out.transpose(0, 2, 1)

    def backward(self, g):
        if self._cols is None:
            raise StateError("conv1d backward before forward")
        b, _, length = self._in_shape
        gl = g.transpose(0, 2, 1)  # (B, L, out_ch)
        wmat = self.W.values.reshape(self.out_ch, -1)
        self.W.grad += (
            gl.reshape(-1, self.out_ch).T @ self._cols.reshape(-1, self.in_ch * self.kernel)
        ).reshape(self.W.values.shape)
        self.b.grad += gl.sum(axis=(0, 1))
        gcols = gl @ wmat  # (B, L, C*k)
        gcols = gcols.reshape(b, length, self.in_ch, self.kernel)
        pad = self.kernel // 2
        gx = np.zeros((b, self.in_ch, length + 2 * pad))
        for kk in range(self.kernel):
            gx[:, :, kk : kk + length] += gcols[:, :, :, kk].transpose(0, 2, 1)
        return gx[:, :, pad : pad + length]

    def params(self):
        return [self.W, self.b]

    def spec(self):
        return {
            "kind": "conv1d",
            "in_ch": self.in_ch,
            "out_ch": self.out_ch,
            "kernel": self.kernel,
        }


class Activation:
    kind = "activation"
    NAMES = ("tanh", "relu", "leaky_relu", "sigmoid")

    def __init__(self, name: str, slope: float = 0.2):
        if name not in self.NAMES:
            raise LoadgenError(f"unknown activation {name!r}")
        self.name = name
        self.slope = slope
        self._cache = None

    def forward(self, x):
        if self.name == "tanh":
            y = np.tanh(x)
        elif self.name == "relu":
            y = np.maximum(x, 0.0)
        elif self.name == "leaky_relu":
            y = np.where(x > 0.0, x, self.slope * x)
        else:
            y = 1.0 / (1.0 + np.exp(-x))
        self._cache = (x, y)
        return y

    def backward(self, g):
        if self._cache is None:
            raise StateError("activation backward before forward")
        x, y = self._cache
        if self.name == "tanh":
            return g * (1.0 - y**2)
        if self.name == "relu":
            return g * (x > 0.0)
        if self.name == "leaky_relu":
            return g * np.where(x > 0.0, 1.0, self.slope)
        return g * y * (1.0 - y)

    def params(self):
        return []

    def spec(self):
        return {"kind": "activation", "name": self.name, "slope": self.slope}


class Flatten:
    kind = "flatten"

    def __init__(self):
        self._shape = None

    def forward(self, x):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, g):
        if self._shape is None:
            raise StateError("flatten backward before forward")
        return g.reshape(self._shape)

    def params(self):
        return []

    def spec(self):
        return {"kind": "flatten"}


class Reshape:
    """(B, C*L) -> (B, C, L)."""

    kind = "reshape"

    def __init__(self, channels: int, length: int):
        self.channels, self.length = channels, length

    def forward(self, x):
        if x.shape[1] != self.channels * self.length:
            raise ShapeError(f"reshape expected {self.channels * self.length} features")
        return x.reshape(x.shape[0], self.channels, self.length)

    def backward(self, g):
        return g.reshape(g.shape[0], -1)

    def params(self):
        return []

    def spec(self):
        return {"kind": "reshape", "channels": self.channels, "length": self.length}


class Repeat:
    """(B, H) -> (B, T, H): feed the same vector at every timestep."""

    kind = "repeat"

    def __init__(self, steps: int):
        self.steps = steps

    def forward(self, x):
        return np.repeat(x[:, None, :], self.steps, axis=1)

    def backward(self, g):
        return g.sum(axis=1)

    def params(self):
        return []

    def spec(self):
        return {"kind": "repeat", "steps": self.steps}


class ExpandDim:
    """(B, T) -> (B, T, 1)."""

    kind = "expand"

    def forward(self, x):
        return x[:, :, None]

    def backward(self, g):
        return g[:, :, 0]

    def params(self):
        return []

    def spec(self):
        return {"kind": "expand"}


class TimeDense:
    """Shared dense projection applied per timestep: (B, T, H) -> (B, T)."""

    kind = "time_dense"

    def __init__(self, n_in: int, rng, name: str = "time_dense"):
        self.n_in = n_in
        self.W = ParamTensor(_uniform_init(rng, (n_in,), n_in, 1), f"{name}.W")
        self.b = ParamTensor(np.zeros(1), f"{name}.b")
        self._x = None

    def forward(self, x):
        if x.ndim != 3 or x.shape[2] != self.n_in:
            raise ShapeError(f"time_dense expected (B,T,{self.n_in}), got {x.shape}")
        self._x = x
        return x @ self.W.values + self.b.values[0]

    def backward(self, g):
        if self._x is None:
            raise StateError("time_dense backward before forward")
        self.W.grad += np.einsum("bt,bth->h", g, self._x)
        self.b.grad += np.array([g.sum()])
        return g[:, :, None] * self.W.values[None, None, :]

    def params(self):
        return [self.W, self.b]

    def spec(self):
        return {"kind": "time_dense", "n_in": self.n_in}


class LSTM:
    """Single LSTM layer, left-to-right, gate order (i, f, g, o).

    Forget-gate bias starts at +1. Returns the full hidden sequence or only
    the final hidden state.
    """

    kind = "lstm"

    def __init__(self, n_in: int, hidden: int, rng, return_sequences: bool = True,
                 name: str = "lstm"):
        if hidden < 1:
            raise LoadgenError("lstm hidden size must be >= 1")
        self.n_in, self.hidden = n_in, hidden
        self.return_sequences = return_sequences
        scale = 1.0 / np.sqrt(hidden)
        self.Wx = ParamTensor(rng.uniform(-scale, scale, (n_in, 4 * hidden)), f"{name}.Wx")
        self.Wh = ParamTensor(rng.uniform(-scale, scale, (hidden, 4 * hidden)), f"{name}.Wh")
        b = np.zeros(4 * hidden)
        b[hidden : 2 * hidden] = 1.0
        self.b = ParamTensor(b, f"{name}.b")
        self._cache = None

    def forward(self, x):
        if x.ndim != 3 or x.shape[2] != self.n_in:
            raise ShapeError(f"lstm expected (B,T,{self.n_in}), got {x.shape}")
        b, t, _ = x.shape
        h = np.zeros((b, self.hidden))
        c = np.zeros((b, self.hidden))
        hs = np.empty((b, t, self.hidden))
        steps = []
        hh = self.hidden
        for step in range(t):
            z = x[:, step, :] @ self.Wx.values + h @ self.Wh.values + self.b.values
            i = 1.0 / (1.0 + np.exp(-z[:, :hh]))
            f = 1.0 / (1.0 + np.exp(-z[:, hh : 2 * hh]))
            g = np.tanh(z[:, 2 * hh : 3 * hh])
            o = 1.0 / (1.0 + np.exp(-z[:, 3 * hh :]))
            c_prev = c
            c = f * c_prev + i * g
            tc = np.tanh(c)
            h_prev = h
            h = o * tc
            hs[:, step, :] = h
            steps.append((i, f, g, o, c_prev, c, tc, h_prev))
        self._cache = (x, steps)
        return hs if self.return_sequences else h

    def backward(self, gout):
        if self._cache is None:
            raise StateError("lstm backward before forward")
        x, steps = self._cache
        b, t, _ = x.shape
        hh = self.hidden
        gx = np.zeros_like(x)
        dh_next = np.zeros((b, hh))
        dc_next = np.zeros((b, hh))
        if not self.return_sequences:
            dh_next = gout.copy()
        for step in range(t - 1, -1, -1):
            i, f, g, o, c_prev, c, tc, h_prev = steps[step]
            dh = dh_next.copy()
            if self.return_sequences:
                dh += gout[:, step, :]
            do = dh * tc
            dc = dh * o * (1.0 - tc**2) + dc_next
            di = dc * g
            df = dc * c_prev
            dg = dc * i
            dc_next = dc * f
            dz = np.concatenate(
                [
                    di * i * (1.0 - i),
                    df * f * (1.0 - f),
                    dg * (1.0 - g**2),
                    do * o * (1.0 - o),
                ],
                axis=1,
            )
            self.Wx.grad += x[:, step, :].T @ dz
            self.Wh.grad += h_prev.T @ dz
            self.b.grad += dz.sum(axis=0)
            gx[:, step, :] = dz @ self.Wx.values.T
            dh_next = dz @ self.Wh.values.T
        return gx

    def params(self):
        return [self.Wx, self.Wh, self.b]

    def spec(self):
        return {
            "kind": "lstm",
            "n_in": self.n_in,
            "hidden": self.hidden,
            "return_sequences": self.return_sequences,
        }


class Network:
    """A plain layer stack with shared forward/backward plumbing."""

    def __init__(self, layers):
        self.layers = list(layers)

    def forward(self, x):
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def backward(self, g):
        for layer in reversed(self.layers):
            g = layer.backward(g)
        return g

    def params(self) -> list[ParamTensor]:
        out = []
        for layer in self.layers:
            out.extend(layer.params())
        return out

    def zero_grads(self):
        for p in self.params():
            p.grad[:] = 0.0

    def spec(self):
        return [layer.spec() for layer in self.layers]


def layer_from_spec(spec: dict, rng) -> object:
    kind = spec["kind"]
    if kind == "dense":
        return Dense(spec["n_in"], spec["n_out"], rng)
    if kind == "conv1d":
        return Conv1D(spec["in_ch"], spec["out_ch"], spec["kernel"], rng)
    if kind == "activation":
        return Activation(spec["name"], spec.get("slope", 0.2))
    if kind == "flatten":
        return Flatten()
    if kind == "reshape":
        return Reshape(spec["channels"], spec["length"])
    if kind == "repeat":
        return Repeat(spec["steps"])
    if kind == "expand":
        return ExpandDim()
    if kind == "time_dense":
        return TimeDense(spec["n_in"], rng)
    if kind == "lstm":
        return LSTM(spec["n_in"], spec["hidden"], rng, spec["return_sequences"])
    raise LoadgenError(f"unknown layer kind {kind!r}")


def network_from_spec(specs, rng=None) -> Network:
    rng = rng if rng is not None else np.random.default_rng(0)
    return Network([layer_from_spec(s, rng) for s in specs])


# ---------------------------------------------------------------------------
# Losses
# ---------------------------------------------------------------------------


def _clamped(d):
    d = np.asarray(d, dtype=np.float64)
    return np.clip(d, LOGIT_CLAMP, 1.0 - LOGIT_CLAMP)


def bce_real(d_out):
    """Half of the discriminator loss on real samples: 0.5 * mean(-log D(x)).

    Returns (loss, gradient seed w.r.t. d_out).
    """
    dc = _clamped(d_out)
    n = dc.size
    loss = 0.5 * float(np.mean(-np.log(dc)))
    grad = -0.5 / (n * dc)
    return loss, grad.reshape(np.shape(d_out))


def bce_fake(d_out):
    """Half of the discriminator loss on fakes: 0.5 * mean(-log(1 - D(G(z))))."""
    dc = _clamped(d_out)
    n = dc.size
    loss = 0.5 * float(np.mean(-np.log(1.0 - dc)))
    grad = 0.5 / (n * (1.0 - dc))
    return loss, grad.reshape(np.shape(d_out))


def gen_loss(d_out_on_fake):
    """Non-saturating generator loss: mean(-log D(G(z)))."""
    dc = _clamped(d_out_on_fake)
    n = dc.size
    loss = float(np.mean(-np.log(dc)))
    grad = -1.0 / (n * dc)
    return loss, grad.reshape(np.shape(d_out_on_fake))


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OptimConfig:
    learning_rate: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    epsilon: float = 1e-8

    def __post_init__(self):
        if self.learning_rate <= 0.0 or self.epsilon <= 0.0:
            raise LoadgenError("learning_rate and epsilon must be positive")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise LoadgenError("betas must lie in [0,1)")


class Adam:
    """Bias-corrected Adam over a fixed parameter list; zeroes grads after use."""

    def __init__(self, params: list[ParamTensor], cfg: OptimConfig):
        self.params = params
        self.cfg = cfg
        self.m = [np.zeros_like(p.values) for p in params]
        self.v = [np.zeros_like(p.values) for p in params]
        self.step_count = 0

    def step(self):
        for p in self.params:
            if not np.all(np.isfinite(p.grad)):
                raise DivergenceError(f"non-finite gradient in {p.name}")
        self.step_count += 1
        c = self.cfg
        bc1 = 1.0 - c.beta1**self.step_count
        bc2 = 1.0 - c.beta2**self.step_count
        for p, m, v in zip(self.params, self.m, self.v):
            m *= c.beta1
            m += (1.0 - c.beta1) * p.grad
            v *= c.beta2
            v += (1.0 - c.beta2) * p.grad**2
            p.values -= c.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + c.epsilon)
            p.grad[:] = 0.0

    def state_arrays(self):
        """Moment arrays in parameter order, for checkpointing."""
        return self.m + self.v
