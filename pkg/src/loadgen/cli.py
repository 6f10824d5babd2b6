"""Command-line interface for routing, clustering, training, generation,
evaluation, and the full pipeline.

Options come from three layers: built-in defaults, an optional key=value
config file (``--config``), and explicit flags, with later layers winning.
Every subcommand supports ``--json`` for machine-readable output. Exit code 2
means a usage error (argparse), 1 means a stage failed, 0 means success.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .clustering import ClusterConfig, clustering_from_json, select_k, strategy_sweep
from .errors import LoadgenError
from .features import (
    FEATURE_NAMES,
    apply_scaler,
    features_for_segments,
    fit_scaler,
    segment_trace,
)
from .gan import HybridConfig, TrainConfig, load_model, sample
from .metrics import evaluate_device
from .pipeline import RunConfig, emit_plots, run_pipeline
from .resample import ContinuousConfig
from .routing import RoutingConfig, classify_trace
from .seeding import derive_seed
from .traces import format_cell, load_csv

RUN_ROOT_ENV = "LOADGEN_RUN_ROOT"


def _load_config_file(path: str) -> dict:
    """Plain key=value lines; '#' starts a comment; blank lines ignored."""
    opts = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise LoadgenError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, value = line.split("=", 1)
        opts[key.strip()] = value.strip()
    return opts


_BOOL_KEYS = {"no_clusters", "shared_discriminator", "hybrid_continuous"}
_INT_KEYS = {
    "segment_len",
    "samples_per_cluster",
    "epochs",
    "batch_size",
    "latent_dim",
    "lstm_hidden",
    "lstm_layers",
    "d_steps_per_g",
    "max_surrogate_len",
    "window_len",
    "spike_window",
    "square_downsample",
    "seed",
}
_FLOAT_KEYS = {"spike_quantile", "separation_factor"}
_STR_KEYS = {"missing_policy"}


def _coerce(key: str, value: str):
    if key in _BOOL_KEYS:
        if value.lower() in ("1", "true", "yes", "on"):
            return True
        if value.lower() in ("0", "false", "no", "off"):
            return False
        raise LoadgenError(f"config key {key!r}: not a boolean: {value!r}")
    if key in _INT_KEYS:
        return int(value)
    if key in _FLOAT_KEYS:
        return float(value)
    if key in _STR_KEYS:
        return value
    raise LoadgenError(f"unknown config key {key!r}")


def _merged_options(args) -> dict:
    """defaults < config file < explicit flags."""
    opts = {
        "segment_len": 436,
        "samples_per_cluster": 64,
        "epochs": 1500,
        "batch_size": 32,
        "latent_dim": 100,
        "lstm_hidden": 64,
        "lstm_layers": 2,
        "d_steps_per_g": 1,
        "max_surrogate_len": 1000,
        "window_len": 2000,
        "spike_quantile": 0.9,
        "spike_window": 64,
        "separation_factor": 1.0,
        "square_downsample": 10,
        "missing_policy": "zero",
        "no_clusters": False,
        "shared_discriminator": False,
        "hybrid_continuous": False,
        "seed": 0,
    }
    if getattr(args, "config", None):
        for key, value in _load_config_file(args.config).items():
            opts[key] = _coerce(key, value)
    for key in list(opts):
        flag = getattr(args, key, None)
        if flag is not None:
            opts[key] = flag
    return opts


def _run_config(args, out_dir: str) -> RunConfig:
    o = _merged_options(args)
    root = os.environ.get(RUN_ROOT_ENV)
    if root and not os.path.isabs(out_dir):
        out_dir = os.path.join(root, out_dir)
    return RunConfig(
        input_path=args.input,
        out_dir=out_dir,
        seed=o["seed"],
        segment_len=o["segment_len"],
        samples_per_cluster=o["samples_per_cluster"],
        missing_policy=o["missing_policy"],
        train=TrainConfig(
            epochs=o["epochs"],
            batch_size=o["batch_size"],
            latent_dim=o["latent_dim"],
            seed=o["seed"],
            d_steps_per_g=o["d_steps_per_g"],
            lstm_hidden=o["lstm_hidden"],
            lstm_layers=o["lstm_layers"],
        ),
        continuous=ContinuousConfig(
            max_surrogate_len=o["max_surrogate_len"], window_len=o["window_len"]
        ),
        hybrid=HybridConfig(
            separation_factor=o["separation_factor"],
            spike_quantile=o["spike_quantile"],
            spike_window=o["spike_window"],
            square_downsample=o["square_downsample"],
        ),
        no_clusters=o["no_clusters"],
        shared_discriminator=o["shared_discriminator"],
        hybrid_continuous=o["hybrid_continuous"],
    )


def _emit(payload, as_json: bool, text_fn) -> None:
    if as_json:
        print(json.dumps(payload, sort_keys=True))
    else:
        text_fn()


# ---------------------------------------------------------------------------
# Subcommand handlers
# ---------------------------------------------------------------------------


def _cmd_route(args) -> int:
    traces = load_csv(args.input, _merged_options(args)["missing_policy"])
    rows = []
    for t in traces:
        stats, cls = classify_trace(t.samples, RoutingConfig())
        rows.append(
            {
                "device": t.device_id,
                "class": cls.value,
                "r0": stats.r0,
                "p_nz": stats.p_nz,
                "var_smoothed_diff": stats.var_smoothed_diff,
            }
        )

    def text():
        print("device,class,r0,p_nz,var_smoothed_diff")
        for r in rows:
            print(
                f"{r['device']},{r['class']},{int(r['r0'])},"
                f"{r['p_nz']:.6g},{r['var_smoothed_diff']:.6g}"
            )

    _emit(rows, args.json, text)
    return 0


def _cmd_features(args) -> int:
    o = _merged_options(args)
    traces = load_csv(args.input, o["missing_policy"])
    out = {}
    for t in traces:
        segs = segment_trace(t, o["segment_len"])
        if not segs:
            out[t.device_id] = []
            continue
        out[t.device_id] = features_for_segments(segs).tolist()

    def text():
        print("device,segment," + ",".join(FEATURE_NAMES))
        for device, mat in out.items():
            for j, fv in enumerate(mat):
                print(f"{device},{j}," + ",".join(format(v, ".6g") for v in fv))

    _emit(out, args.json, text)
    return 0


def _cmd_cluster(args) -> int:
    o = _merged_options(args)
    traces = load_csv(args.input, o["missing_policy"])
    results = {}
    for t in traces:
        if args.device and t.device_id != args.device:
            continue
        segs = segment_trace(t, o["segment_len"])
        if len(segs) < 4:
            results[t.device_id] = {"error": f"only {len(segs)} segments"}
            continue
        feats = features_for_segments(segs)
        scaled = apply_scaler(fit_scaler(feats), feats)
        cfg = ClusterConfig(seed=derive_seed(o["seed"], t.device_id, "clustering"))
        k_star, per_k, clust = select_k(scaled, cfg)
        results[t.device_id] = {
            "k": k_star,
            "silhouette_by_k": {str(k): v for k, v in per_k.items()},
            "assignments": np.asarray(clust.assignments).tolist(),
        }

    def text():
        for device, res in results.items():
            if "error" in res:
                print(f"{device}: {res['error']}")
                continue
            scores = " ".join(
                f"K={k}:{v:.4f}" for k, v in sorted(res["silhouette_by_k"].items(), key=lambda kv: int(kv[0]))
            )
            print(f"{device}: K*={res['k']} ({scores})")

    _emit(results, args.json, text)
    return 0


def _cmd_sweep(args) -> int:
    o = _merged_options(args)
    traces = load_csv(args.input, o["missing_policy"])
    report = strategy_sweep(
        traces,
        RoutingConfig(),
        ClusterConfig(seed=o["seed"]),
        o["segment_len"],
    )

    def text():
        sys.stdout.write(report.to_csv())

    _emit(
        [
            {
                "device": r.device_id,
                "detected_type": r.detected_type,
                "strategy": r.strategy,
                "K": r.best_k,
                "silhouette": r.best_silhouette,
            }
            for r in report.rows
        ],
        args.json,
        text,
    )
    return 0


def _cmd_train(args) -> int:
    from .pipeline import _process_continuous, _process_intermittent

    cfg = _run_config(args, args.out)
    traces = load_csv(cfg.input_path, cfg.missing_policy)
    trace = traces.get(args.device)
    device_dir = Path(cfg.out_dir) / trace.device_id
    device_dir.mkdir(parents=True, exist_ok=True)
    _, cls = classify_trace(trace.samples, cfg.routing)
    if cls.value == "intermittent":
        result = _process_intermittent(trace, cfg, device_dir)
        result.pop("report", None)
    else:
        result = _process_continuous(trace, cfg, device_dir)
    result.pop("gen_trace", None)
    result.pop("gen_segments", None)
    payload = {"device": trace.device_id, "class": cls.value, **result}

    def text():
        print(f"{trace.device_id}: class={cls.value} strategy={result['strategy']} "
              f"k={result['k']} -> {device_dir}")

    _emit(payload, args.json, text)
    return 0


def _cmd_generate(args) -> int:
    model = load_model(args.checkpoint)
    drawn = sample(model, args.n, args.seed)

    def text():
        for row in drawn:
            print(",".join(format_cell(v) for v in row))

    _emit(drawn.tolist(), args.json, text)
    return 0


def _cmd_evaluate(args) -> int:
    o = _merged_options(args)
    real = load_csv(args.real, o["missing_policy"])
    gen = load_csv(args.gen, o["missing_policy"])
    clusters_path = Path(args.clusters)
    if clusters_path.is_dir():
        clusters_path = clusters_path / "clustering.json"
    clust = clustering_from_json(clusters_path.read_text(encoding="utf-8"))
    real_segs = [
        s.values for t in real for s in segment_trace(t, o["segment_len"])
    ]
    gen_segs = [s.values for t in gen for s in segment_trace(t, o["segment_len"])]
    report = evaluate_device(real_segs, gen_segs, clust, div_seed=o["seed"])

    def text():
        print(report.to_json())

    _emit(json.loads(report.to_json()), args.json, text)
    return 0


def _cmd_pipeline(args) -> int:
    cfg = _run_config(args, args.out)
    manifest = run_pipeline(cfg)

    def text():
        for device, entry in manifest["devices"].items():
            status = entry.get("error") or f"{entry.get('class')} ok"
            print(f"{device}: {status}")
        print(f"manifest: {Path(cfg.out_dir) / 'manifest.json'}")

    _emit(manifest, args.json, text)
    return 1 if manifest["failed"] else 0


def _cmd_plots(args) -> int:
    written = emit_plots(args.run)

    def text():
        for p in written:
            print(p)

    _emit([str(p) for p in written], args.json, text)
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _add_common(sp, seed_required: bool = False):
    sp.add_argument("--config", help="key=value options file")
    sp.add_argument("--json", action="store_true", help="machine-readable output")
    if seed_required:
        sp.add_argument("--seed", type=int, required=True)
    else:
        sp.add_argument("--seed", type=int, default=None)
    for key in sorted(_INT_KEYS - {"seed"}):
        sp.add_argument(f"--{key.replace('_', '-')}", dest=key, type=int, default=None)
    for key in sorted(_FLOAT_KEYS):
        sp.add_argument(f"--{key.replace('_', '-')}", dest=key, type=float, default=None)
    sp.add_argument("--missing-policy", dest="missing_policy",
                    choices=("zero", "drop_trailing"), default=None)
    for key in sorted(_BOOL_KEYS):
        sp.add_argument(f"--{key.replace('_', '-')}", dest=key,
                        action="store_const", const=True, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="loadgen",
        description="Behavior-routed adversarial generation of appliance load traces",
    )
    parser.add_argument("--version", action="version", version=f"loadgen {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("route", help="classify devices as continuous or intermittent")
    sp.add_argument("--input", required=True)
    _add_common(sp)
    sp.set_defaults(func=_cmd_route)

    sp = sub.add_parser("features", help="segment traces and print shape features")
    sp.add_argument("--input", required=True)
    _add_common(sp)
    sp.set_defaults(func=_cmd_features)

    sp = sub.add_parser("cluster", help="select K and cluster device segments")
    sp.add_argument("--input", required=True)
    sp.add_argument("--device", help="restrict to one device id")
    _add_common(sp)
    sp.set_defaults(func=_cmd_cluster)

    sp = sub.add_parser("sweep", help="per-device strategy comparison CSV")
    sp.add_argument("--input", required=True)
    _add_common(sp)
    sp.set_defaults(func=_cmd_sweep)

    sp = sub.add_parser("train", help="train the models for one device")
    sp.add_argument("--input", required=True)
    sp.add_argument("--device", required=True)
    sp.add_argument("--out", required=True)
    _add_common(sp, seed_required=True)
    sp.set_defaults(func=_cmd_train)

    sp = sub.add_parser("generate", help="sample sequences from a checkpoint")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--n", type=int, default=16)
    _add_common(sp, seed_required=True)
    sp.set_defaults(func=_cmd_generate)

    sp = sub.add_parser("evaluate", help="score generated traces against real ones")
    sp.add_argument("--real", required=True)
    sp.add_argument("--gen", required=True)
    sp.add_argument("--clusters", required=True,
                    help="device run directory or clustering.json path")
    _add_common(sp)
    sp.set_defaults(func=_cmd_evaluate)

    sp = sub.add_parser("pipeline", help="full end-to-end run")
    sp.add_argument("--input", required=True)
    sp.add_argument("--out", required=True)
    _add_common(sp, seed_required=True)
    sp.set_defaults(func=_cmd_pipeline)

    sp = sub.add_parser("plots", help="regenerate SVG plots from a run directory")
    sp.add_argument("--run", required=True)
    _add_common(sp)
    sp.set_defaults(func=_cmd_plots)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except LoadgenError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main(argv=sys.argv[1:]))
