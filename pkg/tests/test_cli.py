import json
from pathlib import Path

import numpy as np
import pytest

from lkreg import bench
from lkreg.cli import main, parse_args
from lkreg.io import save_points
from lkreg.cloud import PointCloud
from lkreg.dataset import load_manifest


@pytest.fixture(scope="module")
def dataset_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("ds")
    rc = main([
        "gen", "--out", str(root), "--mesh", "sphere", "--n-pairs", "8",
        "--resolution", "32", "--mesh-res", "10", "--points", "48",
        "--noise-sigma", "0.002", "--seed", "3",
    ])
    assert rc == 0
    return root


def test_gen_writes_pairs_and_manifest(dataset_dir):
    manifest = load_manifest(dataset_dir)
    assert manifest["n_pairs"] == 8
    for name in manifest["pairs"]:
        assert (dataset_dir / name / "gt_pose.json").exists()


def test_gen_deterministic_manifest(tmp_path):
    args = ["gen", "--mesh", "sphere", "--n-pairs", "3", "--resolution", "32",
            "--mesh-res", "10", "--points", "48", "--seed", "5"]
    main(args + ["--out", str(tmp_path / "a")])
    main(args + ["--out", str(tmp_path / "b")])
    a = (tmp_path / "a" / "manifest.json").read_bytes()
    b = (tmp_path / "b" / "manifest.json").read_bytes()
    assert a == b


def test_validate_passes(dataset_dir, capsys):
    rc = main(["validate", "--data", str(dataset_dir)])
    out = capsys.readouterr().out
    assert rc == 0
    assert "0 failures" in out


def test_register_icp_identical_files(tmp_path, capsys):
    rng = np.random.default_rng(0)
    pts = rng.normal(size=(64, 3))
    path = tmp_path / "cloud.ply"
    save_points(PointCloud(pts), path)
    rc = main(["register", str(path), str(path), "--method", "icp"])
    assert rc == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["converged"]
    assert payload["cd_after"] <= payload["cd_before"] + 1e-12
    from lkreg.se3 import RigidTransform, rotation_error_deg

    pose = RigidTransform.from_flat(payload["pose"])
    assert rotation_error_deg(pose, RigidTransform.identity()) < 1e-6


def test_register_with_gt_reports_errors(dataset_dir, capsys):
    manifest = load_manifest(dataset_dir)
    pair = dataset_dir / manifest["pairs"][0]
    rc = main([
        "register", str(pair / "source.ply"), str(pair / "target.ply"),
        "--method", "icp", "--gt", str(pair / "gt_pose.json"), "--no-normalize",
    ])
    assert rc == 0
    payload = json.loads(capsys.readouterr().out)
    assert "rot_error_deg" in payload and "trans_error" in payload
    assert payload["rot_error_deg"] < 5.0  # small perturbations, easy case


def test_train_epoch_zero_checkpoint_equals_init(dataset_dir, tmp_path, capsys):
    rc = main([
        "train", "--data", str(dataset_dir), "--method", "iclk-mlp",
        "--epochs", "0", "--out", str(tmp_path), "--k-out", "8", "--seed", "4",
    ])
    assert rc == 0
    from lkreg.encoders import EncoderConfig, init_encoder, load_encoder

    loaded = load_encoder(tmp_path / "encoder-iclk-mlp")
    fresh = init_encoder(loaded.config, seed=4)
    for name, p in fresh.params.items():
        np.testing.assert_array_equal(p.data, loaded.params[name].data)


def test_train_writes_loss_csv_and_is_deterministic(dataset_dir, tmp_path):
    args = [
        "train", "--data", str(dataset_dir), "--method", "iclk-mlp",
        "--epochs", "2", "--batch-size", "4", "--lr", "1e-3",
        "--k-out", "8", "--lk-iters", "2", "--seed", "4",
    ]
    main(args + ["--out", str(tmp_path / "r1")])
    main(args + ["--out", str(tmp_path / "r2")])
    a = (tmp_path / "r1" / "loss-iclk-mlp.csv").read_bytes()
    b = (tmp_path / "r2" / "loss-iclk-mlp.csv").read_bytes()
    assert a == b
    header = a.decode().splitlines()[0]
    assert header == "epoch,train_loss,val_loss"
    assert len(a.decode().splitlines()) == 3


def test_sweep_outputs(dataset_dir, tmp_path, capsys):
    rc = main([
        "sweep", "--data", str(dataset_dir), "--methods", "icp",
        "--angles", "0,20", "--out", str(tmp_path), "--seed", "3",
        "--no-timing",
    ])
    assert rc == 0
    csv_text = (tmp_path / "results.csv").read_text()
    lines = csv_text.splitlines()
    assert lines[0] == bench.CSV_HEADER
    assert len(lines) == 1 + 2  # |methods| x |angles|
    assert (tmp_path / "results.md").exists()
    records = bench.read_jsonl(tmp_path / "pairs.jsonl")
    rows = bench.aggregate(records)
    bench.write_csv(rows, tmp_path / "recomputed.csv")
    assert (tmp_path / "recomputed.csv").read_bytes() == (tmp_path / "results.csv").read_bytes()


def test_sweep_deterministic_with_no_timing(dataset_dir, tmp_path):
    args = [
        "sweep", "--data", str(dataset_dir), "--methods", "icp",
        "--angles", "10", "--seed", "3", "--no-timing",
    ]
    main(args + ["--out", str(tmp_path / "s1")])
    main(args + ["--out", str(tmp_path / "s2")])
    assert (tmp_path / "s1" / "results.csv").read_bytes() == (
        tmp_path / "s2" / "results.csv"
    ).read_bytes()


def test_config_file_defaults(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"n-pairs": 3, "mesh": "sphere"}))
    args = parse_args(["gen", "--config", str(cfg), "--out", str(tmp_path)])
    assert args.n_pairs == 3 and args.mesh == "sphere"
    # explicit flag wins over config
    args = parse_args(["gen", "--config", str(cfg), "--n-pairs", "7", "--out", str(tmp_path)])
    assert args.n_pairs == 7


def test_extended_csv_columns(dataset_dir, tmp_path):
    rc = main([
        "sweep", "--data", str(dataset_dir), "--methods", "icp",
        "--angles", "10", "--out", str(tmp_path), "--seed", "3",
        "--extended", "--no-timing",
    ])
    assert rc == 0
    header = (tmp_path / "results.csv").read_text().splitlines()[0]
    assert header == bench.CSV_HEADER_EXTENDED
    assert header.endswith("rot_mean_deg,trans_mean")
