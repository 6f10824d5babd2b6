"""End-to-end orchestration: route, cluster, train, generate, evaluate.

Each device gets its own subdirectory under the run directory with
checkpoints, loss CSVs, generated traces, plots, and a metrics report. Seeds
are derived per (device, branch, cluster) from the global seed so results do
not depend on processing order. A failing device is recorded and skipped;
the rest of the run completes.
"""

from __future__ import annotations

import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .clustering import (
    ClusterConfig,
    Clustering,
    clustering_to_json,
    select_k,
    strategy_sweep,
)
from .errors import InsufficientDataError, LoadgenError
from .features import apply_scaler, features_for_segments, fit_scaler, segment_trace
from .gan import (
    GanModel,
    HybridConfig,
    TrainConfig,
    detect_square_wave,
    minmax_normalize,
    sample,
    save_model,
    shared_discriminator_finetune,
    train_cluster_gan,
    train_continuous_gan,
    train_spike_model,
    interleave_spikes,
)
from .metrics import average_reports, evaluate_device, reports_to_csv
from .resample import (
    ContinuousConfig,
    choose_factor,
    downsample,
    make_windows,
    reconstruct,
    stitch_windows,
    window_starts,
)
from .routing import RoutingConfig, classify_trace
from .seeding import derive_seed
from .svgplot import loss_curve_svg, overlay_svg
from .traces import DeviceTrace, DeviceTraceSet, format_cell, load_csv


@dataclass(frozen=True)
class RunConfig:
    input_path: str
    out_dir: str
    seed: int = 0
    segment_len: int = 436
    samples_per_cluster: int = 64
    missing_policy: str = "zero"
    routing: RoutingConfig = field(default_factory=RoutingConfig)
    cluster: ClusterConfig = field(default_factory=ClusterConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    continuous: ContinuousConfig = field(default_factory=ContinuousConfig)
    hybrid: HybridConfig = field(default_factory=HybridConfig)
    no_clusters: bool = False
    shared_discriminator: bool = False
    hybrid_continuous: bool = False

    def snapshot(self) -> dict:
        """JSON-serializable copy of every knob, for the run manifest."""

        def _plain(obj):
            if hasattr(obj, "__dataclass_fields__"):
                return {k: _plain(getattr(obj, k)) for k in obj.__dataclass_fields__}
            if isinstance(obj, tuple):
                return list(obj)
            return obj

        return _plain(self)


def _write_text(path: Path, text: str) -> None:
    path.write_text(text, encoding="utf-8")


def _loss_csv(history) -> str:
    lines = ["epoch,gen_loss,disc_loss"]
    for i, (g, d) in enumerate(history):
        lines.append(f"{i},{g!r},{d!r}")
    return "\n".join(lines) + "\n"


def _save_trained(model: GanModel, device_dir: Path, stem: str) -> dict:
    ckpt = device_dir / f"{stem}.ckpt"
    save_model(model, ckpt)
    loss = device_dir / f"{stem}_loss.csv"
    _write_text(loss, _loss_csv(model.loss_history))
    svg = device_dir / f"{stem}_loss.svg"
    if model.loss_history:
        g_l = [h[0] for h in model.loss_history]
        d_l = [h[1] for h in model.loss_history]
        _write_text(svg, loss_curve_svg(g_l, d_l, stem))
    return {"checkpoint": ckpt.name, "loss_csv": loss.name}


def _sequence_csv(seqs) -> str:
    """One generated sequence per row."""
    lines = []
    for s in seqs:
        lines.append(",".join(format_cell(v) for v in np.asarray(s).ravel()))
    return "\n".join(lines) + "\n"


def _trace_csv(device_id: str, values) -> str:
    lines = [device_id]
    lines += [format_cell(v) for v in np.asarray(values).ravel()]
    return "\n".join(lines) + "\n"


def _single_cluster(scaled: np.ndarray, scaler) -> Clustering:
    centroid = scaled.mean(axis=0, keepdims=True)
    return Clustering(
        k=1,
        centroids=centroid,
        assignments=np.zeros(scaled.shape[0], dtype=int),
        inertia=float(((scaled - centroid) ** 2).sum()),
        scaler=scaler,
    )


def _fit_clustering(segs, cfg: RunConfig, device_id: str, single: bool) -> Clustering:
    feats = features_for_segments(segs)
    scaler = fit_scaler(feats)
    scaled = apply_scaler(scaler, feats)
    if single:
        return _single_cluster(scaled, scaler)
    ccfg = ClusterConfig(
        candidate_ks=cfg.cluster.candidate_ks,
        max_k=cfg.cluster.max_k,
        max_iter=cfg.cluster.max_iter,
        tol=cfg.cluster.tol,
        seed=derive_seed(cfg.seed, device_id, "clustering"),
    )
    _, _, clust = select_k(scaled, ccfg)
    clust.scaler = scaler
    return clust


def _round_robin_counts(sizes: np.ndarray, total: int) -> list[int]:
    """Sample allocation proportional to real cluster sizes, each >= 1."""
    sizes = np.asarray(sizes, dtype=np.float64)
    raw = sizes / sizes.sum() * total
    counts = np.maximum(np.floor(raw).astype(int), 1)
    # distribute the remainder to the largest fractional parts, stable order
    while counts.sum() < total:
        frac = raw - counts
        counts[int(np.argmax(frac))] += 1
    return counts.tolist()


def _interleave(groups: list[list[np.ndarray]]) -> list[np.ndarray]:
    """Round-robin merge, cycling over clusters until all are exhausted."""
    out = []
    i = 0
    while any(groups):
        g = groups[i % len(groups)]
        if g:
            out.append(g.pop(0))
        i += 1
        if i > 10_000_000:  # pragma: no cover - defensive
            raise LoadgenError("interleave failed to terminate")
    return out


def _train_cfg(cfg: RunConfig, seed: int) -> TrainConfig:
    t = cfg.train
    return TrainConfig(
        epochs=t.epochs,
        batch_size=t.batch_size,
        latent_dim=t.latent_dim,
        optim=t.optim,
        seed=seed,
        d_steps_per_g=t.d_steps_per_g,
        conv_channels=t.conv_channels,
        lstm_hidden=t.lstm_hidden,
        lstm_layers=t.lstm_layers,
    )


def _ensure_min_segments(values: np.ndarray) -> np.ndarray:
    """Duplicate a singleton training set so adversarial batching works."""
    if values.shape[0] == 1:
        return np.vstack([values, values])
    return values


def _process_intermittent(trace: DeviceTrace, cfg: RunConfig, device_dir: Path) -> dict:
    segs = segment_trace(trace, cfg.segment_len)
    if len(segs) < 2:
        raise InsufficientDataError(
            f"{trace.device_id}: {len(segs)} segments at L={cfg.segment_len}"
        )
    clust = _fit_clustering(segs, cfg, trace.device_id, single=cfg.no_clusters)
    _write_text(device_dir / "clustering.json", clustering_to_json(clust))

    models = []
    datasets_norm = []
    artifacts = {}
    for k in range(clust.k):
        sub = np.array(
            [segs[i].values for i in range(len(segs)) if clust.assignments[i] == k]
        )
        sub = _ensure_min_segments(sub)
        tcfg = _train_cfg(cfg, derive_seed(cfg.seed, trace.device_id, "cluster", k))
        model = train_cluster_gan(sub, tcfg)
        models.append(model)
        datasets_norm.append(minmax_normalize(sub)[0])
        artifacts[f"cluster_{k}"] = _save_trained(model, device_dir, f"cluster_{k}")

    if cfg.shared_discriminator and models:
        shared_epochs = max(1, cfg.train.epochs // 10)
        scfg = _train_cfg(cfg, derive_seed(cfg.seed, trace.device_id, "shared_disc"))
        shared_discriminator_finetune(models, datasets_norm, scfg, shared_epochs)
        for k, model in enumerate(models):
            artifacts[f"cluster_{k}"] = _save_trained(model, device_dir, f"cluster_{k}")

    sizes = np.bincount(np.asarray(clust.assignments), minlength=clust.k)
    counts = _round_robin_counts(sizes, cfg.samples_per_cluster * clust.k)
    groups = []
    for k, (model, n_k) in enumerate(zip(models, counts)):
        drawn = sample(model, n_k, derive_seed(cfg.seed, trace.device_id, "sample", k))
        groups.append([drawn[i] for i in range(drawn.shape[0])])
    gen_segments = _interleave(groups)
    gen_trace = np.concatenate(gen_segments)

    report = evaluate_device(
        [s.values for s in segs],
        gen_segments,
        clust,
        div_seed=derive_seed(cfg.seed, trace.device_id, "div"),
    )
    return {
        "strategy": "no_clusters" if cfg.no_clusters else "kmeans",
        "k": clust.k,
        "models": artifacts,
        "gen_trace": gen_trace,
        "gen_segments": gen_segments,
        "report": report,
    }


def _process_continuous(trace: DeviceTrace, cfg: RunConfig, device_dir: Path) -> dict:
    x = trace.samples
    total = x.size

    if cfg.hybrid_continuous:
        square = detect_square_wave(x, cfg.hybrid)
        if square.is_square:
            seg_len = int(round(square.cycle_len))
            seg_len = max(4, min(seg_len, max(4, total // 2)))
            segs = segment_trace(trace, seg_len)
            data = _ensure_min_segments(np.array([s.values for s in segs]))
            tcfg = _train_cfg(cfg, derive_seed(cfg.seed, trace.device_id, "square"))
            model = train_cluster_gan(data, tcfg, branch="square")
            artifacts = {"square": _save_trained(model, device_dir, "square")}
            n = max(1, -(-total // seg_len))  # ceil division
            drawn = sample(model, n, derive_seed(cfg.seed, trace.device_id, "sample"))
            gen_trace = np.concatenate(list(drawn))[:total]
            return {
                "strategy": "square",
                "k": 1,
                "models": artifacts,
                "gen_trace": gen_trace,
                "cycle_len": square.cycle_len,
            }
        tcfg = _train_cfg(cfg, derive_seed(cfg.seed, trace.device_id, "spike"))
        spike_model = train_spike_model(x, tcfg, cfg.hybrid)
        artifacts = {"spike": _save_trained(spike_model.gan, device_dir, "spike")}
        gen_trace = interleave_spikes(
            spike_model, total, derive_seed(cfg.seed, trace.device_id, "sample")
        )
        return {
            "strategy": "spike",
            "k": 1,
            "models": artifacts,
            "gen_trace": gen_trace,
            "spike_threshold": spike_model.threshold,
            "gap_mean": spike_model.gap_mean,
        }

    factor = choose_factor(total, cfg.continuous.max_surrogate_len)
    surrogate = downsample(x, factor)
    windows = make_windows(
        surrogate.values, cfg.continuous.max_surrogate_len, cfg.continuous.window_len
    )
    tcfg = _train_cfg(cfg, derive_seed(cfg.seed, trace.device_id, "continuous"))
    model = train_continuous_gan(windows, tcfg)
    artifacts = {"continuous": _save_trained(model, device_dir, "continuous")}

    starts = window_starts(
        surrogate.values.size, cfg.continuous.max_surrogate_len, cfg.continuous.window_len
    )
    drawn = sample(model, len(starts), derive_seed(cfg.seed, trace.device_id, "sample"))
    if len(starts) == 1:
        gen_surrogate = drawn[0]
    else:
        gen_surrogate = stitch_windows(list(drawn), starts, surrogate.values.size)
    gen_trace = reconstruct(gen_surrogate, factor, total)
    return {
        "strategy": "lstm",
        "k": 1,
        "models": artifacts,
        "gen_trace": gen_trace,
        "downsample_factor": factor,
    }


def _continuous_metrics(trace: DeviceTrace, gen_trace: np.ndarray, cfg: RunConfig,
                        device_dir: Path) -> dict | None:
    """Segment both traces at L and evaluate against a clustering of the real
    segments; skipped (with a note) when the trace is too short."""
    segs = segment_trace(trace, cfg.segment_len)
    gen_segs = [
        s
        for s in np.array_split(
            gen_trace[: (gen_trace.size // cfg.segment_len) * cfg.segment_len],
            max(gen_trace.size // cfg.segment_len, 1),
        )
        if s.size == cfg.segment_len
    ]
    if len(segs) < 2 or len(gen_segs) < 2:
        return None
    clust = _fit_clustering(segs, cfg, trace.device_id, single=False)
    _write_text(device_dir / "clustering.json", clustering_to_json(clust))
    report = evaluate_device(
        [s.values for s in segs],
        gen_segs,
        clust,
        div_seed=derive_seed(cfg.seed, trace.device_id, "div"),
    )
    return report


def run_pipeline(cfg: RunConfig) -> dict:
    """Execute the full adaptive pipeline; returns the run manifest."""
    trace_set = load_csv(cfg.input_path, cfg.missing_policy)

    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_text(out / "config.json", json.dumps(cfg.snapshot(), sort_keys=True, indent=2))

    devices = {}
    failed = []
    reports = []
    for trace in trace_set:
        device_dir = out / trace.device_id
        device_dir.mkdir(exist_ok=True)
        entry = {}
        try:
            stats, device_class = classify_trace(trace.samples, cfg.routing)
            entry["class"] = device_class.value
            entry["routing"] = {
                "r0": stats.r0,
                "p_nz": stats.p_nz,
                "var_smoothed_diff": stats.var_smoothed_diff,
            }
            _write_text(device_dir / "real.csv", _trace_csv(trace.device_id, trace.samples))
            if device_class.value == "intermittent":
                result = _process_intermittent(trace, cfg, device_dir)
                report = result.pop("report")
            else:
                result = _process_continuous(trace, cfg, device_dir)
                report = _continuous_metrics(trace, result["gen_trace"], cfg, device_dir)
            gen_trace = result.pop("gen_trace")
            result.pop("gen_segments", None)
            _write_text(
                device_dir / "generated.csv", _trace_csv(trace.device_id, gen_trace)
            )
            head = min(trace.samples.size, gen_trace.size, 2000)
            _write_text(
                device_dir / "overlay.svg",
                overlay_svg(trace.samples[:head], gen_trace[:head], trace.device_id),
            )
            entry.update(result)
            if report is not None:
                _write_text(device_dir / "metrics.json", report.to_json())
                entry["metrics"] = "metrics.json"
                reports.append((trace.device_id, report))
            else:
                entry["metrics"] = None
        except LoadgenError as exc:
            entry["error"] = f"{type(exc).__name__}: {exc}"
            failed.append(trace.device_id)
        devices[trace.device_id] = entry

    if reports:
        _write_text(out / "metrics_aggregate.csv", reports_to_csv(
            reports + [("AVERAGE", average_reports([r for _, r in reports]))]
        ))
    sweep = strategy_sweep(trace_set, cfg.routing, cfg.cluster, cfg.segment_len)
    _write_text(out / "sweep.csv", sweep.to_csv())

    manifest = {
        "tool_version": __version__,
        "config": cfg.snapshot(),
        "devices": devices,
        "failed": failed,
    }
    _verify_manifest(out, manifest)
    _write_text(out / "manifest.json", json.dumps(manifest, sort_keys=True, indent=2))
    return manifest


def _verify_manifest(out: Path, manifest: dict) -> None:
    """Every file the manifest references must exist at write time."""
    for device, entry in manifest["devices"].items():
        device_dir = out / device
        for artifacts in (entry.get("models") or {}).values():
            for fname in artifacts.values():
                if not (device_dir / fname).exists():
                    raise LoadgenError(f"manifest references missing file {device}/{fname}")
        if entry.get("metrics") and not (device_dir / entry["metrics"]).exists():
            raise LoadgenError(f"manifest references missing metrics for {device}")


def emit_plots(run_dir) -> list[Path]:
    """Regenerate loss-curve and overlay SVGs from the CSVs in a run dir."""
    run = Path(run_dir)
    written = []
    for loss_csv in sorted(run.glob("*/*_loss.csv")):
        lines = loss_csv.read_text(encoding="utf-8").strip().splitlines()
        if len(lines) < 2:
            print(f"warning: {loss_csv} empty, skipped", file=sys.stderr)
            continue
        g_l, d_l = [], []
        for line in lines[1:]:
            _, g, d = line.split(",")
            g_l.append(float(g))
            d_l.append(float(d))
        svg = loss_csv.with_suffix(".svg")
        _write_text(svg, loss_curve_svg(g_l, d_l, loss_csv.stem))
        written.append(svg)
    for gen_csv in sorted(run.glob("*/generated.csv")):
        real_csv = gen_csv.parent / "real.csv"
        if not real_csv.exists():
            print(f"warning: {real_csv} missing, skipped", file=sys.stderr)
            continue
        real = _read_trace_csv(real_csv)
        gen = _read_trace_csv(gen_csv)
        head = min(real.size, gen.size, 2000)
        svg = gen_csv.parent / "overlay.svg"
        _write_text(svg, overlay_svg(real[:head], gen[:head], gen_csv.parent.name))
        written.append(svg)
    return written


def _read_trace_csv(path: Path) -> np.ndarray:
    lines = path.read_text(encoding="utf-8").strip().splitlines()
    return np.array([float(v) for v in lines[1:]])
