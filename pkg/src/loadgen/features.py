"""Segmentation, per-segment normalization, and the 30-dim shape feature map.

Feature order is frozen: [mean, std, skewness, kurtosis, trend, dominant_freq,
peak_count, valley_count, roughness, energy, shape_1..shape_20]. All features
are computed on the normalized segment, so they are invariant to positive
affine transforms of the raw segment.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InsufficientDataError, LoadgenError

N_SHAPE_SAMPLES = 20
FEATURE_DIM = 10 + N_SHAPE_SAMPLES

FEATURE_NAMES = [
    "mean",
    "std",
    "skewness",
    "kurtosis",
    "trend",
    "dominant_freq",
    "peak_count",
    "valley_count",
    "roughness",
    "energy",
] + [f"shape_{k}" for k in range(1, N_SHAPE_SAMPLES + 1)]

_EPS_STD = 1e-12
_EPS_DFT = 1e-9


@dataclass(frozen=True)
class Segment:
    """One fixed-length window of a device trace."""

    values: np.ndarray
    parent_device: str = ""
    index: int = 0

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)


@dataclass(frozen=True)
class NormSegment:
    """Z-scored segment plus the stats needed to invert the transform."""

    values: np.ndarray
    mean: float
    std: float

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)


@dataclass(frozen=True)
class FeatureScaler:
    """Per-component z-score statistics over a segment population."""

    means: np.ndarray
    stds: np.ndarray

    @property
    def degenerate(self) -> np.ndarray:
        """Boolean mask of zero-variance components."""
        return self.stds < _EPS_STD


def segment(x, length: int) -> list[Segment]:
    """Non-overlapping slicing; the trailing remainder is discarded."""
    if length < 2:
        raise LoadgenError("segment length must be >= 2")
    x = np.asarray(x, dtype=np.float64)
    n = x.size // length
    return [Segment(x[j * length : (j + 1) * length], index=j) for j in range(n)]


def segment_trace(trace, length: int) -> list[Segment]:
    segs = segment(trace.samples, length)
    return [Segment(s.values, parent_device=trace.device_id, index=s.index) for s in segs]


def normalize_segment(s: Segment) -> NormSegment:
    """Remove scale: (s - mean) / population std. Constant segments map to zeros."""
    v = s.values
    mu = float(v.mean())
    sigma = float(v.std())
    if sigma < _EPS_STD:
        return NormSegment(np.zeros_like(v), mean=mu, std=0.0)
    return NormSegment((v - mu) / sigma, mean=mu, std=sigma)


def _moments(v: np.ndarray) -> tuple[float, float, float, float]:
    mu = float(v.mean())
    sigma = float(v.std())
    if sigma < _EPS_STD:
        return mu, sigma, 0.0, 0.0
    z = (v - mu) / sigma
    return mu, sigma, float(np.mean(z**3)), float(np.mean(z**4))


def dominant_frequency(v: np.ndarray) -> int:
    """Index of the strongest DFT bin over 1..floor(L/2); 0 when flat."""
    mags = np.abs(np.fft.rfft(v))
    upper = v.size // 2
    band = mags[1 : upper + 1]
    if band.size == 0 or np.all(band < _EPS_DFT):
        return 0
    return int(np.argmax(band)) + 1  # argmax returns the lowest tied bin


def count_extrema(v: np.ndarray) -> tuple[int, int]:
    """Strict interior local maxima and minima (plateaus are not counted)."""
    left, mid, right = v[:-2], v[1:-1], v[2:]
    peaks = int(np.count_nonzero((mid > left) & (mid > right)))
    valleys = int(np.count_nonzero((mid < left) & (mid < right)))
    return peaks, valleys


def extract_features(ns: NormSegment) -> np.ndarray:
    """Map a normalized segment to the frozen 30-component feature vector."""
    v = ns.values
    L = v.size
    if L < 4:
        raise InsufficientDataError("feature extraction needs segments of length >= 4")
    mu, sigma, skew, kurt = _moments(v)
    t = np.arange(L, dtype=np.float64)
    trend = float(np.mean((t - t.mean()) * (v - v.mean())) / t.var())
    fstar = float(dominant_frequency(v))
    peaks, valleys = count_extrema(v)
    roughness = float(np.diff(v).var())
    energy = float(np.sum(v**2))
    idx = np.floor((np.arange(N_SHAPE_SAMPLES) * (L - 1)) / (N_SHAPE_SAMPLES - 1) + 0.5).astype(int)
    shape = v[idx]
    fv = np.concatenate(
        [[mu, sigma, skew, kurt, trend, fstar, peaks, valleys, roughness, energy], shape]
    )
    if not np.all(np.isfinite(fv)):
        raise LoadgenError("non-finite feature component")
    return fv


def features_for_segments(segments) -> np.ndarray:
    """Normalize and featurize a list of segments into an (N, 30) matrix."""
    return np.array([extract_features(normalize_segment(s)) for s in segments])


def fit_scaler(features) -> FeatureScaler:
    """Population z-score statistics per component."""
    mat = np.asarray(features, dtype=np.float64)
    if mat.ndim != 2 or mat.shape[0] < 2:
        raise InsufficientDataError("fit_scaler needs at least 2 feature vectors")
    return FeatureScaler(means=mat.mean(axis=0), stds=mat.std(axis=0))


def apply_scaler(scaler: FeatureScaler, fv) -> np.ndarray:
    """Z-score one vector or a matrix; zero-variance components map to 0."""
    fv = np.asarray(fv, dtype=np.float64)
    safe = np.where(scaler.degenerate, 1.0, scaler.stds)
    out = (fv - scaler.means) / safe
    if fv.ndim == 1:
        out[scaler.degenerate] = 0.0
    else:
        out[:, scaler.degenerate] = 0.0
    return out
