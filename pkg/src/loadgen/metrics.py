"""Realism and diversity metrics for comparing real and generated sequences.

Eight values per comparison: mean error, std error, fidelity RMSE, period MAE,
feature-space Fréchet distance, diversity RMSE, cluster coverage, and cluster
Jensen-Shannon divergence (log base 2, so it lives in [0, 1]).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .clustering import Clustering
from .errors import InsufficientDataError, NoDataError, ShapeError
from .features import Segment, apply_scaler, extract_features, normalize_segment

_DFT_EPS = 1e-9
DIVERSITY_CAP = 200

METRIC_COLUMNS = ["me", "std", "fid", "per", "feature_fid", "div", "cc", "cj"]


@dataclass(frozen=True)
class MetricsReport:
    me: float
    std_err: float
    fid_rmse: float
    period_mae: float
    feature_fid: float
    div_rmse: float
    cluster_coverage: float
    cluster_js: float
    div_subsampled: bool = False

    def row(self) -> list[float]:
        return [
            self.me,
            self.std_err,
            self.fid_rmse,
            self.period_mae,
            self.feature_fid,
            self.div_rmse,
            self.cluster_coverage,
            self.cluster_js,
        ]

    def to_json(self) -> str:
        payload = dict(zip(METRIC_COLUMNS, self.row()))
        payload["div_subsampled"] = self.div_subsampled
        return json.dumps(payload, sort_keys=True)


def _as_matrix(seqs) -> np.ndarray:
    mat = [np.asarray(s, dtype=np.float64).ravel() for s in seqs]
    if not mat:
        raise NoDataError("empty sequence set")
    lengths = {m.size for m in mat}
    if len(lengths) != 1:
        raise ShapeError(f"sequences must share one length, got {sorted(lengths)}")
    return np.array(mat)


def mean_error(real_seqs, gen_seqs) -> float:
    """|mean(generated pooled samples) - mean(real pooled samples)|."""
    r = np.concatenate([np.asarray(s, dtype=np.float64).ravel() for s in real_seqs] or [[]])
    g = np.concatenate([np.asarray(s, dtype=np.float64).ravel() for s in gen_seqs] or [[]])
    if r.size == 0 or g.size == 0:
        raise NoDataError("mean_error needs nonempty sets")
    return float(abs(g.mean() - r.mean()))


def std_error(real_seqs, gen_seqs) -> float:
    """|population std(gen pooled) - population std(real pooled)|."""
    r = np.concatenate([np.asarray(s, dtype=np.float64).ravel() for s in real_seqs] or [[]])
    g = np.concatenate([np.asarray(s, dtype=np.float64).ravel() for s in gen_seqs] or [[]])
    if r.size == 0 or g.size == 0:
        raise NoDataError("std_error needs nonempty sets")
    return float(abs(g.std() - r.std()))


def fidelity_rmse(real_seqs, gen_seqs) -> float:
    """Mean over generated sequences of the RMSE to the nearest real one."""
    r = _as_matrix(real_seqs)
    g = _as_matrix(gen_seqs)
    if r.shape[1] != g.shape[1]:
        raise ShapeError("real and generated sequence lengths differ")
    total = 0.0
    for row in g:
        rmse = np.sqrt(((r - row) ** 2).mean(axis=1))
        total += float(rmse.min())
    return total / g.shape[0]


def dominant_period(x) -> float:
    """len/bin of the strongest DFT bin; len when the spectrum is flat."""
    x = np.asarray(x, dtype=np.float64).ravel()
    n = x.size
    if n < 4:
        raise InsufficientDataError("dominant_period needs length >= 4")
    mags = np.abs(np.fft.rfft(x))
    band = mags[1 : n // 2 + 1]
    if band.size == 0 or np.all(band < _DFT_EPS):
        return float(n)
    return n / float(np.argmax(band) + 1)


def period_mae(real_seqs, gen_seqs) -> float:
    """Match each generated sequence to the real one with the nearest dominant
    period (ties break toward the earlier real sequence)."""
    r_periods = [dominant_period(s) for s in real_seqs]
    g_periods = [dominant_period(s) for s in gen_seqs]
    if not r_periods or not g_periods:
        raise NoDataError("period_mae needs nonempty sets")
    total = 0.0
    for tg in g_periods:
        diffs = [abs(tg - tr) for tr in r_periods]
        total += min(diffs)  # min() keeps the first (earliest) tie
    return total / len(g_periods)


def _psd_sqrt(mat: np.ndarray) -> np.ndarray:
    """Symmetric square root with negative eigenvalues clamped to zero."""
    sym = (mat + mat.T) / 2.0
    vals, vecs = np.linalg.eigh(sym)
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


def frechet_gaussian(m_r, c_r, m_g, c_g) -> float:
    """||m_r-m_g||^2 + Tr(C_r + C_g - 2 (C_r^1/2 C_g C_r^1/2)^1/2)."""
    m_r = np.atleast_1d(np.asarray(m_r, dtype=np.float64))
    m_g = np.atleast_1d(np.asarray(m_g, dtype=np.float64))
    c_r = np.atleast_2d(np.asarray(c_r, dtype=np.float64))
    c_g = np.atleast_2d(np.asarray(c_g, dtype=np.float64))
    root_r = _psd_sqrt(c_r)
    cross = _psd_sqrt(root_r @ c_g @ root_r)
    diff = m_r - m_g
    return float(diff @ diff + np.trace(c_r) + np.trace(c_g) - 2.0 * np.trace(cross))


def _feature_matrix(seqs) -> np.ndarray:
    return np.array(
        [extract_features(normalize_segment(Segment(np.asarray(s, dtype=np.float64)))) for s in seqs]
    )


def feature_fid(real_seqs, gen_seqs) -> float:
    """Fréchet distance between Gaussian fits of the 30-dim shape features."""
    fr = _feature_matrix(real_seqs)
    fg = _feature_matrix(gen_seqs)
    if fr.shape[0] < 2 or fg.shape[0] < 2:
        raise InsufficientDataError("feature_fid needs at least 2 sequences per set")
    c_r = np.cov(fr, rowvar=False, bias=False)
    c_g = np.cov(fg, rowvar=False, bias=False)
    return frechet_gaussian(fr.mean(axis=0), c_r, fg.mean(axis=0), c_g)


def diversity_rmse(gen_seqs, cap: int = DIVERSITY_CAP, seed: int = 0) -> tuple[float, bool]:
    """Mean pairwise RMSE over generated sequences.

    Sets larger than `cap` are subsampled with a seeded RNG; the flag in the
    return value discloses when that happened.
    """
    g = _as_matrix(gen_seqs)
    if g.shape[0] < 2:
        raise NoDataError("diversity_rmse needs at least 2 sequences")
    subsampled = False
    if g.shape[0] > cap:
        rng = np.random.default_rng(seed)
        g = g[np.sort(rng.choice(g.shape[0], size=cap, replace=False))]
        subsampled = True
    n = g.shape[0]
    total = 0.0
    for i in range(n - 1):
        rmse = np.sqrt(((g[i + 1 :] - g[i]) ** 2).mean(axis=1))
        total += float(rmse.sum())
    return total / (n * (n - 1) / 2), subsampled


def assign_to_clusters(gen_seqs, clustering: Clustering) -> np.ndarray:
    """Histogram of generated sequences over the real clustering.

    Each sequence is normalized, featurized, scaled with the REAL-data scaler,
    and assigned to the nearest centroid.
    """
    if clustering.scaler is None:
        raise NoDataError("clustering has no fitted feature scaler")
    feats = _feature_matrix(gen_seqs)
    scaled = apply_scaler(clustering.scaler, feats)
    d2 = ((scaled[:, None, :] - clustering.centroids[None, :, :]) ** 2).sum(axis=2)
    labels = np.argmin(d2, axis=1)
    return np.bincount(labels, minlength=clustering.k)


def cluster_coverage(hist, k: int) -> float:
    hist = np.asarray(hist)
    return float(np.count_nonzero(hist[:k] > 0)) / k


def cluster_js(p_real, p_gen) -> float:
    """Jensen-Shannon divergence of the normalized histograms, log base 2."""
    p = np.asarray(p_real, dtype=np.float64)
    q = np.asarray(p_gen, dtype=np.float64)
    if p.sum() <= 0.0 or q.sum() <= 0.0:
        raise NoDataError("cluster_js needs nonzero-total histograms")
    p = p / p.sum()
    q = q / q.sum()
    m = (p + q) / 2.0

    def _kl(a, b):
        mask = a > 0.0
        return float(np.sum(a[mask] * np.log2(a[mask] / b[mask])))

    return 0.5 * _kl(p, m) + 0.5 * _kl(q, m)


def evaluate_device(real_seqs, gen_seqs, clustering: Clustering, div_seed: int = 0) -> MetricsReport:
    """Compose all eight metrics for one real/generated sequence pair."""
    hist_gen = assign_to_clusters(gen_seqs, clustering)
    hist_real = np.bincount(np.asarray(clustering.assignments), minlength=clustering.k)
    div, subsampled = diversity_rmse(gen_seqs, seed=div_seed)
    return MetricsReport(
        me=mean_error(real_seqs, gen_seqs),
        std_err=std_error(real_seqs, gen_seqs),
        fid_rmse=fidelity_rmse(real_seqs, gen_seqs),
        period_mae=period_mae(real_seqs, gen_seqs),
        feature_fid=feature_fid(real_seqs, gen_seqs),
        div_rmse=div,
        cluster_coverage=cluster_coverage(hist_gen, clustering.k),
        cluster_js=cluster_js(hist_real, hist_gen),
        div_subsampled=subsampled,
    )


def evaluate_all(real_by_device: dict, gen_by_device: dict, clusterings: dict) -> tuple[dict, MetricsReport]:
    """Per-device reports plus the across-device average row.

    The three dicts are keyed by device id; every generated device needs a
    real counterpart and a fitted clustering.
    """
    if not gen_by_device:
        raise NoDataError("no devices to evaluate")
    reports = {}
    for device, gen_seqs in gen_by_device.items():
        reports[device] = evaluate_device(real_by_device[device], gen_seqs, clusterings[device])
    return reports, average_reports(reports.values())


def average_reports(reports) -> MetricsReport:
    """Across-device mean of each metric column."""
    reports = list(reports)
    if not reports:
        raise NoDataError("no reports to average")
    rows = np.array([r.row() for r in reports])
    mean = rows.mean(axis=0)
    return MetricsReport(
        me=float(mean[0]),
        std_err=float(mean[1]),
        fid_rmse=float(mean[2]),
        period_mae=float(mean[3]),
        feature_fid=float(mean[4]),
        div_rmse=float(mean[5]),
        cluster_coverage=float(mean[6]),
        cluster_js=float(mean[7]),
        div_subsampled=any(r.div_subsampled for r in reports),
    )


def reports_to_csv(named_reports) -> str:
    """Aggregate CSV shaped like the paper-style summary tables."""
    lines = ["device," + ",".join(METRIC_COLUMNS)]
    for name, rep in named_reports:
        lines.append(name + "," + ",".join(format(v, ".6g") for v in rep.row()))
    return "\n".join(lines) + "\n"
