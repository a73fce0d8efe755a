"""Command-line harness: dataset generation, training, registration,
perturbation sweeps, and dataset validation.

Subcommands: gen, train, register, sweep, validate.  Global flags --seed,
--config (JSON file of flag defaults), --out, --threads.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import bench
from . import dataset as ds
from . import encoders as enc
from . import training as tr
from .cloud import PointCloud, chamfer_distance, hausdorff_distance, normalize
from .io import load_points
from .registration import LkSettings, icp_register, iclk_register
from .se3 import (
    RigidTransform,
    rotation_error_deg,
    transform_points,
    translation_error,
)

METHOD_KINDS = {"iclk-mlp": "mlp", "iclk-mamba": "mamba"}


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0, help="master RNG seed")
    p.add_argument("--config", type=str, default=None, help="JSON file of flag defaults")
    p.add_argument("--out", type=str, default=None, help="output directory")
    p.add_argument("--threads", type=int, default=1, help="worker pool size")


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    parser = argparse.ArgumentParser(prog="lkreg", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a perturbed-pair dataset")
    _add_common(g)
    g.add_argument("--mesh", default="bent-tube", help="sphere | torus | bent-tube | mesh file")
    g.add_argument("--n-pairs", type=int, default=100)
    g.add_argument("--resolution", type=int, default=96, help="render resolution (pixels)")
    g.add_argument("--mesh-res", type=int, default=16)
    g.add_argument("--points", type=int, default=512, help="points per stored cloud")
    g.add_argument("--noise-sigma", type=float, default=0.005)
    g.add_argument("--max-angle", type=float, default=90.0, help="perturbation angle bound (deg)")
    g.add_argument("--max-trans", type=float, default=0.1)
    g.add_argument("--fov", type=float, default=60.0)
    g.add_argument("--trajectory", default=None,
                   help="camera trajectory JSON (default: procedural orbit)")

    t = sub.add_parser("train", help="train an encoder on a dataset")
    _add_common(t)
    t.add_argument("--data", required=True, help="dataset directory from `gen`")
    t.add_argument("--method", choices=sorted(METHOD_KINDS), required=True)
    t.add_argument("--epochs", type=int, default=200)
    t.add_argument("--batch-size", type=int, default=16)
    t.add_argument("--lr", type=float, default=1e-4)
    t.add_argument("--split", type=float, default=0.2, help="held-out test fraction")
    t.add_argument("--lk-iters", type=int, default=5, help="LK iterations inside training")
    t.add_argument("--augment-max-angle", type=float, default=None,
                   help="re-perturb samples each step up to this angle (deg)")
    t.add_argument("--augment-max-trans", type=float, default=0.05)
    t.add_argument("--d-model", type=int, default=64)
    t.add_argument("--n-blocks", type=int, default=2)
    t.add_argument("--d-state", type=int, default=8)
    t.add_argument("--k-out", type=int, default=256)
    t.add_argument("--ordering", choices=("morton", "input"), default="morton")

    r = sub.add_parser("register", help="register one cloud pair")
    _add_common(r)
    r.add_argument("source", help="source cloud file (.ply/.off/.csv)")
    r.add_argument("target", help="target cloud file")
    r.add_argument("--method", choices=bench.METHODS, default="icp")
    r.add_argument("--checkpoint", default=None, help="encoder checkpoint prefix")
    r.add_argument("--gt", default=None, help="gt_pose.json for error reporting")
    r.add_argument("--no-normalize", action="store_true",
                   help="skip joint normalization of the input clouds")
    r.add_argument("--max-iters", type=int, default=None)

    s = sub.add_parser("sweep", help="perturbation-sweep benchmark on the test split")
    _add_common(s)
    s.add_argument("--data", required=True)
    s.add_argument("--methods", default="icp", help="comma list: icp,iclk-mlp,iclk-mamba")
    s.add_argument("--checkpoint-mlp", default=None)
    s.add_argument("--checkpoint-mamba", default=None)
    s.add_argument("--angles", default="0,10,20,30,40,50,60,70,80,90")
    s.add_argument("--max-trans", type=float, default=0.1)
    s.add_argument("--split", type=float, default=0.2)
    s.add_argument("--lk-iters", type=int, default=10)
    s.add_argument("--extended", action="store_true", help="add mean error columns")
    s.add_argument("--no-timing", action="store_true",
                   help="report 0 for wall times (byte-reproducible output)")

    v = sub.add_parser("validate", help="check dataset consistency")
    _add_common(v)
    v.add_argument("--data", required=True)
    return parser, {"gen": g, "train": t, "register": r, "sweep": s, "validate": v}


def parse_args(argv: list[str]) -> argparse.Namespace:
    """Parse argv; values from --config act as defaults, explicit flags win."""
    parser, subparsers = build_parser()
    pre, _ = parser.parse_known_args(argv)
    if getattr(pre, "config", None):
        overrides = json.loads(Path(pre.config).read_text())
        mapped = {k.replace("-", "_"): v for k, v in overrides.items()}
        subparsers[pre.command].set_defaults(**mapped)
    return parser.parse_args(argv)


def _out_dir(args) -> Path:
    out = Path(args.out) if args.out else Path(".")
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_gen(args) -> int:
    out = _out_dir(args)
    config = ds.GenConfig(
        mesh=args.mesh,
        n_pairs=args.n_pairs,
        resolution=args.resolution,
        mesh_res=args.mesh_res,
        m_points=args.points,
        noise_sigma=args.noise_sigma,
        max_angle_deg=args.max_angle,
        max_trans=args.max_trans,
        fov_deg=args.fov,
        seed=args.seed,
        trajectory=args.trajectory,
    )
    manifest = ds.generate_dataset(out, config)
    print(f"wrote {manifest['n_pairs']} pairs to {out}")
    return 0


def _checkpoint_prefix(out: Path, method: str) -> Path:
    return out / f"encoder-{method}"


def cmd_train(args) -> int:
    out = _out_dir(args)
    data_dir = Path(args.data)
    manifest = ds.load_manifest(data_dir)
    pairs = ds.load_dataset(data_dir)
    train_idx, test_idx = ds.split_indices(len(pairs), args.split, manifest["seed"])
    train_pairs = [pairs[i] for i in train_idx]
    val_pairs = [pairs[i] for i in test_idx]
    config = enc.EncoderConfig(
        kind=METHOD_KINDS[args.method],
        d_model=args.d_model,
        n_blocks=args.n_blocks,
        d_state=args.d_state,
        k_out=args.k_out,
        m_max=max(len(p[0]) for p in pairs),
        ordering=args.ordering,
    )
    model = enc.init_encoder(config, seed=args.seed)
    settings = tr.TrainSettings(
        epochs=args.epochs,
        batch_size=args.batch_size,
        lr=args.lr,
        seed=args.seed,
        lk=LkSettings(max_iters=args.lk_iters),
        augment_max_angle_deg=args.augment_max_angle,
        augment_max_trans=args.augment_max_trans,
    )
    model, report = tr.train(model, train_pairs, settings, val_dataset=val_pairs)
    prefix = _checkpoint_prefix(out, args.method)
    enc.save_encoder(model, prefix)
    loss_csv = out / f"loss-{args.method}.csv"
    lines = ["epoch,train_loss,val_loss"]
    for e, (tl, vl) in enumerate(zip(report.epoch_train_loss, report.epoch_val_loss)):
        lines.append(f"{e},{tl!r},{vl!r}")
    loss_csv.write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"checkpoint: {prefix}.json/.bin   loss curve: {loss_csv}")
    return 0


def _denormalize_pose(g: RigidTransform, centroid, scale: float) -> RigidTransform:
    t = scale * g.t + centroid - g.r @ centroid
    return RigidTransform(r=g.r, t=t)


def cmd_register(args) -> int:
    source = load_points(args.source)
    target = load_points(args.target)
    record = None
    if not args.no_normalize:
        target, record = normalize(target)
        source = PointCloud(record.to_normalized(source.points))
    if args.method == "icp":
        kwargs = {} if args.max_iters is None else {"max_iters": args.max_iters}
        result = icp_register(source, target, **kwargs)
    else:
        if args.checkpoint is None:
            print("error: --checkpoint is required for iclk methods", file=sys.stderr)
            return 2
        model = enc.load_encoder(args.checkpoint)
        settings = LkSettings() if args.max_iters is None else LkSettings(max_iters=args.max_iters)
        result = iclk_register(model, source, target, settings)
    registered = PointCloud(transform_points(result.g_est, source.points))
    pose_out = result.g_est
    if record is not None:
        pose_out = _denormalize_pose(result.g_est, record.centroid, record.scale)
    payload = {
        "method": args.method,
        "pose": pose_out.to_flat(),
        "converged": result.converged,
        "iterations": result.iterations,
        "residual_history": result.residual_history,
        "wall_time_s": result.wall_time,
        "cd_before": chamfer_distance(source, target),
        "cd_after": chamfer_distance(registered, target),
        "hd_before": hausdorff_distance(source, target),
        "hd_after": hausdorff_distance(registered, target),
    }
    if args.gt:
        gt_payload = json.loads(Path(args.gt).read_text())
        gt = RigidTransform.from_flat(gt_payload["matrix"])
        payload["rot_error_deg"] = rotation_error_deg(result.g_est, gt)
        payload["trans_error"] = translation_error(result.g_est, gt)
    text = json.dumps(payload, indent=1, sort_keys=True)
    if args.out:
        out = _out_dir(args) / "register.json"
        out.write_text(text + "\n")
    print(text)
    return 0


def cmd_sweep(args) -> int:
    out = _out_dir(args)
    data_dir = Path(args.data)
    manifest = ds.load_manifest(data_dir)
    pairs = ds.load_dataset(data_dir)
    _, test_idx = ds.split_indices(len(pairs), args.split, manifest["seed"])
    test_pairs = [pairs[i] for i in test_idx]
    methods = tuple(m.strip() for m in args.methods.split(",") if m.strip())
    models: dict[str, enc.EncoderModel] = {}
    for method, flag in (("iclk-mlp", args.checkpoint_mlp), ("iclk-mamba", args.checkpoint_mamba)):
        if method in methods:
            if flag is None:
                print(f"error: {method} requires --checkpoint-{method.split('-')[1]}", file=sys.stderr)
                return 2
            models[method] = enc.load_encoder(flag)
    cfg = bench.SweepConfig(
        methods=methods,
        angles=tuple(float(a) for a in args.angles.split(",")),
        max_trans=args.max_trans,
        seed=args.seed,
        threads=args.threads,
        lk=LkSettings(max_iters=args.lk_iters),
        extended=args.extended,
        timing=not args.no_timing,
    )
    rows, records = bench.run_sweep(test_pairs, models, cfg, pair_indices=[int(i) for i in test_idx])
    bench.write_jsonl(records, out / "pairs.jsonl")
    bench.write_csv(rows, out / "results.csv", extended=args.extended)
    bench.write_markdown(rows, out / "results.md")
    print(f"evaluated {len(records)} cases -> {out / 'results.csv'}")
    return 0


def cmd_validate(args) -> int:
    data_dir = Path(args.data)
    manifest = ds.load_manifest(data_dir)
    sigma = manifest["config"]["noise_sigma"]
    n_bad = 0
    for name in manifest["pairs"]:
        p_s, p_t, g_gt = ds.load_pair(data_dir / name)
        ortho = np.abs(g_gt.r.T @ g_gt.r - np.eye(3)).max()
        aligned = PointCloud(transform_points(g_gt, p_s.points))
        cd = chamfer_distance(aligned, p_t)
        bound = max(3.0 * sigma, 1e-9)
        ok = ortho < 1e-9 and cd <= bound and len(p_s) == len(p_t)
        if not ok:
            n_bad += 1
            print(f"FAIL {name}: ortho={ortho:.2e} cd={cd:.6f} bound={bound:.6f}")
    n = len(manifest["pairs"])
    print(f"validated {n} pairs, {n_bad} failures")
    return 1 if n_bad else 0


def main(argv: list[str] | None = None) -> int:
    args = parse_args(sys.argv[1:] if argv is None else argv)
    handlers = {
        "gen": cmd_gen,
        "train": cmd_train,
        "register": cmd_register,
        "sweep": cmd_sweep,
        "validate": cmd_validate,
    }
    return handlers[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
