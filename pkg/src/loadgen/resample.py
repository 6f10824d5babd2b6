"""Sequence compression by block averaging, windowing, and block-replication
reconstruction for the continuous branch."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InsufficientDataError, LoadgenError


@dataclass(frozen=True)
class ContinuousConfig:
    max_surrogate_len: int = 1000
    window_len: int = 2000

    def __post_init__(self):
        if self.max_surrogate_len < 1:
            raise LoadgenError("max_surrogate_len must be >= 1")
        if self.window_len < self.max_surrogate_len:
            raise LoadgenError("window_len must be >= max_surrogate_len")


@dataclass(frozen=True)
class Surrogate:
    values: np.ndarray
    factor: int
    original_length: int

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)


def downsample(x, factor: int) -> Surrogate:
    """Block means of length `factor`; the trailing partial block is dropped."""
    x = np.asarray(x, dtype=np.float64)
    if factor < 1:
        raise LoadgenError("factor must be >= 1")
    if x.size < factor:
        raise InsufficientDataError(f"series of length {x.size} shorter than factor {factor}")
    n = x.size // factor
    if factor == 1:
        return Surrogate(x.copy(), 1, x.size)
    blocks = x[: n * factor].reshape(n, factor)
    return Surrogate(blocks.mean(axis=1), factor, x.size)


def choose_factor(length: int, max_len: int) -> int:
    """Smallest F >= 1 with floor(length/F) <= max_len."""
    if length < 1:
        raise LoadgenError("length must be >= 1")
    if length <= max_len:
        return 1
    # floor(length/F) <= max_len  iff  F >= length/(max_len+1) strictly-ish;
    # start from the arithmetic bound and walk up to be safe.
    f = max(1, length // (max_len + 1))
    while length // f > max_len:
        f += 1
    return f


def make_windows(values, max_len: int, window_len: int, stride: int | None = None) -> list[np.ndarray]:
    """One window when the surrogate is short enough; otherwise half-
    overlapping windows of window_len with the last one right-aligned."""
    v = np.asarray(values, dtype=np.float64)
    if stride is None:
        stride = max(window_len // 2, 1)
    if stride < 1:
        raise LoadgenError("stride must be >= 1")
    if v.size <= max_len or v.size <= window_len:
        return [v.copy()]
    starts = list(range(0, v.size - window_len + 1, stride))
    last = v.size - window_len
    if starts[-1] != last:
        starts.append(last)
    return [v[s : s + window_len].copy() for s in starts]


def stitch_windows(windows, starts, total_len: int) -> np.ndarray:
    """Merge overlapping windows by averaging the overlap regions."""
    out = np.zeros(total_len)
    weight = np.zeros(total_len)
    for w, s in zip(windows, starts):
        w = np.asarray(w, dtype=np.float64)
        out[s : s + w.size] += w
        weight[s : s + w.size] += 1.0
    if np.any(weight == 0.0):
        raise LoadgenError("stitch_windows: uncovered samples")
    return out / weight


def window_starts(surrogate_len: int, max_len: int, window_len: int, stride: int | None = None) -> list[int]:
    """Start offsets matching make_windows, for stitching."""
    if stride is None:
        stride = max(window_len // 2, 1)
    if surrogate_len <= max_len or surrogate_len <= window_len:
        return [0]
    starts = list(range(0, surrogate_len - window_len + 1, stride))
    last = surrogate_len - window_len
    if starts[-1] != last:
        starts.append(last)
    return starts


def reconstruct(values, factor: int, length: int) -> np.ndarray:
    """Repeat each surrogate sample `factor` times, then crop to `length` or
    right-pad with the final value."""
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        raise LoadgenError("reconstruct needs a nonempty surrogate")
    if length < 1:
        raise LoadgenError("target length must be >= 1")
    expanded = np.repeat(v, factor)
    if expanded.size >= length:
        return expanded[:length].copy()
    pad = np.full(length - expanded.size, expanded[-1])
    return np.concatenate([expanded, pad])
