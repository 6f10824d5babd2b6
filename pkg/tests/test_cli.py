import json

import numpy as np
import pytest

from loadgen.cli import main
from loadgen.traces import DeviceTrace, DeviceTraceSet, FixtureSpec, make_fixture, write_csv

FAST = ["--epochs", "3", "--batch-size", "16", "--latent-dim", "12",
        "--lstm-hidden", "8", "--segment-len", "60", "--samples-per-cluster", "4",
        "--max-surrogate-len", "60", "--window-len", "60"]


@pytest.fixture
def input_csv(tmp_path):
    sine = make_fixture(FixtureSpec("noisy_sine", 720, seed=2, params={"period": 60}))
    flat = make_fixture(FixtureSpec("constant", 720, seed=3))
    ts = DeviceTraceSet(
        (DeviceTrace("wobble", sine.samples), DeviceTrace("steady", flat.samples))
    )
    path = tmp_path / "in.csv"
    write_csv(ts, path)
    return str(path)


def test_route_csv_output(input_csv, capsys):
    assert main(["route", "--input", input_csv]) == 0
    out = capsys.readouterr().out.strip().splitlines()
    assert out[0] == "device,class,r0,p_nz,var_smoothed_diff"
    assert len(out) == 3


def test_route_json_output(input_csv, capsys):
    assert main(["route", "--input", input_csv, "--json"]) == 0
    rows = json.loads(capsys.readouterr().out)
    assert {r["device"] for r in rows} == {"wobble", "steady"}
    assert all(r["class"] in ("continuous", "intermittent") for r in rows)


def test_features_header(input_csv, capsys):
    assert main(["features", "--input", input_csv, "--segment-len", "60"]) == 0
    header = capsys.readouterr().out.splitlines()[0]
    assert header.startswith("device,segment,mean,std,")
    assert len(header.split(",")) == 32


def test_sweep_csv(input_csv, capsys):
    assert main(["sweep", "--input", input_csv, "--segment-len", "60"]) == 0
    out = capsys.readouterr().out.strip().splitlines()
    assert out[0] == "device,detected_type,strategy,K,silhouette"


def test_cluster_json(input_csv, capsys):
    assert main(["cluster", "--input", input_csv, "--segment-len", "60", "--json"]) == 0
    res = json.loads(capsys.readouterr().out)
    assert res["wobble"]["k"] >= 1


def test_train_requires_seed(input_csv, tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["train", "--input", input_csv, "--device", "wobble",
              "--out", str(tmp_path / "run")])
    assert exc.value.code == 2


def test_unknown_flag_exit_2(input_csv):
    with pytest.raises(SystemExit) as exc:
        main(["route", "--input", input_csv, "--bogus"])
    assert exc.value.code == 2


def test_missing_input_exit_1(tmp_path, capsys):
    assert main(["route", "--input", str(tmp_path / "nope.csv")]) == 1
    assert "error" in capsys.readouterr().err


def test_train_generate_evaluate_round_trip(input_csv, tmp_path, capsys):
    run_dir = tmp_path / "run"
    assert main(["train", "--input", input_csv, "--device", "wobble",
                 "--out", str(run_dir), "--seed", "5", *FAST]) == 0
    capsys.readouterr()

    ckpt = run_dir / "wobble" / "cluster_0.ckpt"
    assert ckpt.exists()
    assert main(["generate", "--checkpoint", str(ckpt), "--n", "4", "--seed", "1"]) == 0
    rows = capsys.readouterr().out.strip().splitlines()
    assert len(rows) == 4
    values = [float(v) for r in rows for v in r.split(",")]
    assert all(np.isfinite(values))

    gen_csv = tmp_path / "gen.csv"
    gen_csv.write_text("wobble\n" + "\n".join(str(v) for v in values) + "\n")
    assert main(["evaluate", "--real", input_csv, "--gen", str(gen_csv),
                 "--clusters", str(run_dir / "wobble"), "--segment-len", "60",
                 "--json"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert set(report) >= {"me", "std", "fid", "per", "feature_fid", "div", "cc", "cj"}


def test_generate_deterministic(input_csv, tmp_path, capsys):
    run_dir = tmp_path / "run"
    main(["train", "--input", input_csv, "--device", "wobble",
          "--out", str(run_dir), "--seed", "5", *FAST])
    capsys.readouterr()
    ckpt = str(run_dir / "wobble" / "cluster_0.ckpt")
    main(["generate", "--checkpoint", ckpt, "--n", "2", "--seed", "9"])
    first = capsys.readouterr().out
    main(["generate", "--checkpoint", ckpt, "--n", "2", "--seed", "9"])
    assert capsys.readouterr().out == first


def test_pipeline_and_plots(input_csv, tmp_path, capsys):
    run_dir = tmp_path / "run"
    assert main(["pipeline", "--input", input_csv, "--out", str(run_dir),
                 "--seed", "3", *FAST]) == 0
    out = capsys.readouterr().out
    assert "manifest" in out
    assert (run_dir / "manifest.json").exists()
    assert main(["plots", "--run", str(run_dir)]) == 0
    assert ".svg" in capsys.readouterr().out


def test_config_file_and_flag_override(input_csv, tmp_path, capsys):
    cfg = tmp_path / "opts.cfg"
    cfg.write_text(
        "segment_len = 60  # window size\n"
        "epochs = 3\n"
        "batch_size = 16\n"
        "latent_dim = 12\n"
        "lstm_hidden = 8\n"
        "max_surrogate_len = 60\n"
        "window_len = 60\n"
        "samples_per_cluster = 4\n"
        "no_clusters = true\n"
    )
    run_dir = tmp_path / "run"
    assert main(["pipeline", "--input", input_csv, "--out", str(run_dir),
                 "--seed", "3", "--config", str(cfg), "--json"]) == 0
    manifest = json.loads(capsys.readouterr().out)
    assert manifest["devices"]["wobble"]["strategy"] == "no_clusters"
    assert manifest["config"]["segment_len"] == 60

    # an explicit flag overrides the file
    run2 = tmp_path / "run2"
    assert main(["pipeline", "--input", input_csv, "--out", str(run2),
                 "--seed", "3", "--config", str(cfg), "--samples-per-cluster", "2",
                 "--json"]) == 0
    manifest2 = json.loads(capsys.readouterr().out)
    assert manifest2["config"]["samples_per_cluster"] == 2


def test_bad_config_file(input_csv, tmp_path, capsys):
    cfg = tmp_path / "opts.cfg"
    cfg.write_text("not a pair\n")
    assert main(["route", "--input", input_csv, "--config", str(cfg)]) == 1
    assert "key=value" in capsys.readouterr().err


def test_run_root_env_var(input_csv, tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("LOADGEN_RUN_ROOT", str(tmp_path / "root"))
    assert main(["pipeline", "--input", input_csv, "--out", "rel_run",
                 "--seed", "3", *FAST]) == 0
    assert (tmp_path / "root" / "rel_run" / "manifest.json").exists()
