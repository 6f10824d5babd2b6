"""Seeded k-means with k-means++ init, silhouette scoring, automatic K
selection, and the per-device strategy sweep."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InfeasibleKError, NoDataError, UndefinedSilhouetteError
from .features import FeatureScaler, apply_scaler, features_for_segments, fit_scaler
from .routing import RoutingConfig, classify_trace
from .seeding import derive_seed

DEFAULT_CANDIDATE_KS = (2, 3, 4, 5, 6, 8, 10)


@dataclass(frozen=True)
class ClusterConfig:
    candidate_ks: tuple[int, ...] = DEFAULT_CANDIDATE_KS
    max_k: int = 10
    max_iter: int = 300
    tol: float = 1e-4
    seed: int = 0


@dataclass
class Clustering:
    k: int
    centroids: np.ndarray  # (K, d)
    assignments: np.ndarray  # (N,) labels in 0..K-1
    inertia: float
    scaler: FeatureScaler | None = None
    inertia_history: list = field(default_factory=list)


def _assign(points: np.ndarray, centroids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    d2 = ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    labels = np.argmin(d2, axis=1)  # argmin ties break to the lowest index
    return labels, d2[np.arange(points.shape[0]), labels]


def _kmeanspp_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    centroids = np.empty((k, points.shape[1]))
    centroids[0] = points[rng.integers(n)]
    d2 = ((points - centroids[0]) ** 2).sum(axis=1)
    for i in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            centroids[i] = points[rng.integers(n)]
        else:
            centroids[i] = points[rng.choice(n, p=d2 / total)]
        d2 = np.minimum(d2, ((points - centroids[i]) ** 2).sum(axis=1))
    return centroids


def kmeans(points, k: int, cfg: ClusterConfig) -> Clustering:
    """Lloyd iterations from a k-means++ start; empty clusters are re-seeded
    with the point currently farthest from its centroid."""
    points = np.asarray(points, dtype=np.float64)
    n = points.shape[0]
    if n < k or k < 1:
        raise InfeasibleKError(f"cannot fit {k} clusters to {n} points")
    rng = np.random.default_rng(cfg.seed)
    centroids = _kmeanspp_init(points, k, rng)
    labels, dist2 = _assign(points, centroids)
    history = [float(dist2.sum())]
    for _ in range(cfg.max_iter):
        new_centroids = centroids.copy()
        for j in range(k):
            mask = labels == j
            if mask.any():
                new_centroids[j] = points[mask].mean(axis=0)
            else:
                new_centroids[j] = points[np.argmax(dist2)]
                # recompute so two empty clusters don't grab the same point
                _, dist2 = _assign(points, new_centroids)
        shift = float(np.max(np.linalg.norm(new_centroids - centroids, axis=1)))
        centroids = new_centroids
        labels, dist2 = _assign(points, centroids)
        history.append(float(dist2.sum()))
        if shift < cfg.tol:
            break
    return Clustering(
        k=k,
        centroids=centroids,
        assignments=labels,
        inertia=history[-1],
        inertia_history=history,
    )


def silhouette(points, assignments) -> tuple[float, np.ndarray]:
    """Mean and per-point silhouette via brute-force pairwise distances.

    Singletons and points with a == b == 0 score 0 by convention.
    """
    points = np.asarray(points, dtype=np.float64)
    labels = np.asarray(assignments)
    uniq = np.unique(labels)
    if uniq.size < 2:
        raise UndefinedSilhouetteError("silhouette needs at least 2 clusters")
    n = points.shape[0]
    dist = np.sqrt(np.maximum(((points[:, None, :] - points[None, :, :]) ** 2).sum(axis=2), 0.0))
    scores = np.zeros(n)
    for i in range(n):
        own = labels == labels[i]
        n_own = int(own.sum())
        if n_own <= 1:
            scores[i] = 0.0
            continue
        a = dist[i, own].sum() / (n_own - 1)
        b = min(dist[i, labels == c].mean() for c in uniq if c != labels[i])
        denom = max(a, b)
        scores[i] = 0.0 if denom <= 0.0 else (b - a) / denom
    return float(scores.mean()), scores


def select_k(points, cfg: ClusterConfig) -> tuple[int, dict, Clustering]:
    """Run kmeans over the surviving candidate Ks and keep the silhouette
    argmax (ties prefer smaller K). Candidates need at least 2K points.

    Returns (K*, {K: mean silhouette}, Clustering at K*). When no candidate
    survives, falls back to a single-cluster solution with no silhouette.
    """
    points = np.asarray(points, dtype=np.float64)
    n = points.shape[0]
    if n == 0:
        raise NoDataError("select_k on empty point set")
    candidates = [k for k in cfg.candidate_ks if k <= cfg.max_k and n >= 2 * k]
    per_k: dict[int, float] = {}
    results: dict[int, Clustering] = {}
    for k in sorted(candidates):
        sub_cfg = ClusterConfig(
            candidate_ks=cfg.candidate_ks,
            max_k=cfg.max_k,
            max_iter=cfg.max_iter,
            tol=cfg.tol,
            seed=derive_seed(cfg.seed, "kmeans", k),
        )
        clust = kmeans(points, k, sub_cfg)
        try:
            score, _ = silhouette(points, clust.assignments)
        except UndefinedSilhouetteError:
            # degenerate data collapsed every point into one cluster
            continue
        per_k[k] = score
        results[k] = clust
    if not per_k:
        centroid = points.mean(axis=0, keepdims=True)
        inertia = float(((points - centroid) ** 2).sum())
        fallback = Clustering(
            k=1,
            centroids=centroid,
            assignments=np.zeros(n, dtype=int),
            inertia=inertia,
            inertia_history=[inertia],
        )
        return 1, per_k, fallback
    best_k = max(sorted(per_k), key=lambda k: (per_k[k], -k))
    return best_k, per_k, results[best_k]


def clustering_to_json(clust: Clustering) -> str:
    import json

    payload = {
        "k": clust.k,
        "centroids": clust.centroids.tolist(),
        "assignments": np.asarray(clust.assignments).tolist(),
        "inertia": clust.inertia,
        "scaler_means": clust.scaler.means.tolist() if clust.scaler else None,
        "scaler_stds": clust.scaler.stds.tolist() if clust.scaler else None,
    }
    return json.dumps(payload, sort_keys=True)


def clustering_from_json(text: str) -> Clustering:
    import json

    payload = json.loads(text)
    scaler = None
    if payload["scaler_means"] is not None:
        scaler = FeatureScaler(
            means=np.asarray(payload["scaler_means"], dtype=np.float64),
            stds=np.asarray(payload["scaler_stds"], dtype=np.float64),
        )
    return Clustering(
        k=payload["k"],
        centroids=np.asarray(payload["centroids"], dtype=np.float64),
        assignments=np.asarray(payload["assignments"], dtype=int),
        inertia=payload["inertia"],
        scaler=scaler,
    )


def continuous_split(segments) -> np.ndarray:
    """Deterministic 2-way partition: all-zero segments vs the rest.

    Returned as labels {0: all-zero, 1: active} so it is comparable with
    k-means candidates under the silhouette score.
    """
    if not segments:
        raise NoDataError("continuous_split on empty segment list")
    return np.array([0 if np.all(s.values == 0.0) else 1 for s in segments])


@dataclass(frozen=True)
class SweepRow:
    device_id: str
    detected_type: str
    strategy: str
    best_k: int
    best_silhouette: float


@dataclass(frozen=True)
class SweepReport:
    rows: tuple[SweepRow, ...]

    def to_csv(self) -> str:
        lines = ["device,detected_type,strategy,K,silhouette"]
        for r in self.rows:
            lines.append(
                f"{r.device_id},{r.detected_type},{r.strategy},{r.best_k},"
                f"{r.best_silhouette:.6g}"
            )
        return "\n".join(lines) + "\n"


def strategy_sweep(
    trace_set,
    routing_cfg: RoutingConfig,
    cluster_cfg: ClusterConfig,
    segment_len: int = 436,
) -> SweepReport:
    """Per device: compare the zero/nonzero split against the k-means
    candidates by mean silhouette, keeping the winner."""
    from .features import segment_trace

    rows = []
    for trace in trace_set:
        _, device_class = classify_trace(trace.samples, routing_cfg)
        segs = segment_trace(trace, segment_len)
        if len(segs) < 4:
            rows.append(
                SweepRow(trace.device_id, device_class.value, "insufficient-data", 1, 0.0)
            )
            continue
        feats = features_for_segments(segs)
        scaler = fit_scaler(feats)
        scaled = apply_scaler(scaler, feats)

        best = ("none", 0, -2.0)
        split = continuous_split(segs)
        if np.unique(split).size == 2:
            score, _ = silhouette(scaled, split)
            best = ("continuous_split", 2, score)
        k_star, per_k, _ = select_k(scaled, cluster_cfg)
        if per_k and per_k[k_star] > best[2]:
            best = ("kmeans", k_star, per_k[k_star])
        if best[0] == "none":
            # degenerate features: neither strategy produced 2 usable clusters
            best = ("kmeans", 1, 0.0)
        rows.append(
            SweepRow(trace.device_id, device_class.value, best[0], best[1], best[2])
        )
    return SweepReport(tuple(rows))
