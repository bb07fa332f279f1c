"""Command line interface.

Subcommands: synth, train, evaluate, render, sweep, info.  Exit codes:
0 success, 2 usage error, 3 invalid config key/value, 4 missing file,
1 anything else.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .config import (
    InvalidConfigError,
    RunConfig,
    config_from_dict,
    load_run_config,
    load_volume_from_config,
    parse_override,
)
from .metrics import gaussian_nll, jaccard_spatial_tolerance, pearson_correlation, psnr
from .models import UnsupportedModelError, reconstruct_fields, train_model
from .render import default_step, raymarch_mean, raymarch_statistical, render_scalar_overlay
from .volume import VolumeGrid, save_raw_volume, synthetic_field, vertex_coordinates

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_MISSING = 4
EXIT_ERROR = 1


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="usrn",
        description="Train, evaluate and render uncertainty-aware scene "
        "representation networks on scalar volumes.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config(p, required=True):
        p.add_argument("--config", required=required, help="TOML run config")
        p.add_argument(
            "--set",
            dest="overrides",
            action="append",
            default=[],
            metavar="SECTION.KEY=VALUE",
            help="override a config key (repeatable)",
        )

    p = sub.add_parser("synth", help="generate a synthetic raw volume")
    add_config(p)
    p.add_argument("--out", required=True, help="output .raw path")

    p = sub.add_parser("train", help="train a model and write a checkpoint")
    add_config(p)
    p.add_argument("--out", required=True, help="output checkpoint path")
    p.add_argument(
        "--loss-csv",
        default=None,
        help="loss history CSV (default: checkpoint path with .loss.csv)",
    )

    p = sub.add_parser("evaluate", help="compute metrics for a checkpoint")
    add_config(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True, help="output metrics CSV")

    p = sub.add_parser("render", help="render mean/statistical/overlay images")
    add_config(p, required=False)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser(
        "sweep", help="train/evaluate a grid of lambda_max and member counts"
    )
    add_config(p)
    p.add_argument("--out", required=True, help="output metrics CSV")
    p.add_argument(
        "--lambda-max", nargs="+", type=float, default=None, metavar="L"
    )
    p.add_argument("--members", nargs="+", type=int, default=None, metavar="M")
    p.add_argument(
        "--checkpoint-dir", default=None, help="also save one checkpoint per cell"
    )

    p = sub.add_parser("info", help="print checkpoint metadata")
    p.add_argument("checkpoint")

    return parser


def _load_config(args) -> RunConfig:
    if getattr(args, "config", None) is None:
        data = {}
        for text in getattr(args, "overrides", []):
            section, key, value = parse_override(text)
            data.setdefault(section, {})[key] = value
        return config_from_dict(data)
    return load_run_config(args.config, args.overrides)


def _jist_label(p: float) -> str:
    return f"jist_{p * 100:g}pct"


def _metric_row(model, grid: VolumeGrid, metrics) -> dict:
    mean3d, var3d = reconstruct_fields(model, grid.dims, chunk=metrics.chunk)
    gt3d = grid.to_3d()
    err3d = (mean3d - gt3d) ** 2
    row = {
        "model": model.kind,
        "psnr_db": psnr(mean3d, gt3d),
        "corr": pearson_correlation(var3d, err3d),
    }
    for p in metrics.top_fractions:
        row[_jist_label(p)] = jaccard_spatial_tolerance(
            var3d, err3d, p, radius=metrics.radius
        )
    row["nll"] = gaussian_nll(mean3d, var3d, gt3d, floor=metrics.nll_floor)
    return row


def _write_csv(path, header, rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([row[h] for h in header])


def _train_meta(rc: RunConfig, grid: VolumeGrid) -> dict:
    return {
        "steps": rc.train.steps,
        "seed": rc.train.seed,
        "volume_dims": list(grid.dims),
        "volume_name": grid.name,
        "config": rc.raw,
    }


def _cmd_synth(args) -> int:
    rc = _load_config(args)
    if rc.synthetic is None:
        raise InvalidConfigError("synth needs a [volume] section with a kind")
    spec = rc.synthetic
    field = synthetic_field(spec, vertex_coordinates(spec.dims))
    grid = VolumeGrid(
        dims=spec.dims,
        values=field,
        raw_range=(float(field.min()), float(field.max())),
        normalized=False,
        name=spec.kind,
    )
    save_raw_volume(args.out, grid)
    print(f"wrote {args.out} ({spec.kind}, dims {spec.dims})")
    return EXIT_OK


def _cmd_train(args) -> int:
    rc = _load_config(args)
    grid = load_volume_from_config(rc)
    model, history = train_model(grid, rc.train)
    save_checkpoint(model, args.out, meta=_train_meta(rc, grid))
    loss_csv = args.loss_csv
    if loss_csv is None:
        loss_csv = str(Path(args.out).with_suffix(".loss.csv"))
    _write_csv(
        loss_csv,
        ["step", "lr", "lambda", "L_member", "L_var", "total"],
        [
            {
                "step": r.step,
                "lr": r.lr,
                "lambda": r.lam,
                "L_member": r.member,
                "L_var": r.var,
                "total": r.total,
            }
            for r in history
        ],
    )
    last = history[-1] if history else None
    tail = f", final loss {last.total:.6g}" if last else ""
    print(f"trained {rc.train.kind} for {rc.train.steps} steps{tail}")
    print(f"wrote {args.out} and {loss_csv}")
    return EXIT_OK


def _dims_mismatch_warning(meta: dict, grid: VolumeGrid) -> None:
    dims = meta.get("volume_dims")
    if dims is not None and tuple(dims) != grid.dims:
        print(
            f"warning: checkpoint was trained on dims {tuple(dims)}, "
            f"evaluating against dims {grid.dims}",
            file=sys.stderr,
        )


def _cmd_evaluate(args) -> int:
    model, meta = load_checkpoint(args.checkpoint)
    rc = _load_config(args)
    grid = load_volume_from_config(rc)
    _dims_mismatch_warning(meta, grid)
    row = _metric_row(model, grid, rc.metrics)
    header = list(row.keys())
    _write_csv(args.out, header, [row])
    print(",".join(header))
    print(",".join(str(row[h]) for h in header))
    return EXIT_OK


def _variance_grid(var3d: np.ndarray, dims) -> VolumeGrid:
    flat = var3d.transpose(2, 1, 0).reshape(-1)
    lo, hi = float(flat.min()), float(flat.max())
    scaled = (flat - lo) / (hi - lo) if hi > lo else np.zeros_like(flat)
    return VolumeGrid(
        dims=dims, values=scaled, raw_range=(lo, hi), normalized=True, name="variance"
    )


def _cmd_render(args) -> int:
    model, meta = load_checkpoint(args.checkpoint)
    rc = _load_config(args)
    cam = rc.render.camera()
    tf = rc.render.transfer_function()
    cfg = rc.render.render_config()
    dims = meta.get("volume_dims")
    dims = tuple(int(d) for d in dims) if dims is not None else None
    if cfg.step is None and dims is not None:
        cfg = dataclasses.replace(cfg, step=default_step(dims))
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    raymarch_mean(model, cam, tf, cfg).to_png(out_dir / "mean.png")
    written = ["mean.png"]
    try:
        raymarch_statistical(model, cam, tf, cfg).to_png(out_dir / "statistical.png")
        written.append("statistical.png")
    except UnsupportedModelError as exc:
        print(f"warning: skipping statistical render: {exc}", file=sys.stderr)
    if dims is not None:
        _, var3d = reconstruct_fields(model, dims, chunk=rc.metrics.chunk)
        vgrid = _variance_grid(var3d, dims)
        img = render_scalar_overlay(vgrid, rc.render.overlay_fraction, cam, tf, cfg)
        img.to_png(out_dir / "overlay.png")
        written.append("overlay.png")
    else:
        print(
            "warning: checkpoint lacks volume dims; skipping variance overlay",
            file=sys.stderr,
        )
    print(f"wrote {', '.join(written)} to {out_dir}")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    rc = _load_config(args)
    grid = load_volume_from_config(rc)
    lam_values = args.lambda_max or [rc.train.lambda_max]
    member_values = args.members or [rc.train.members]
    rows = []
    header = None
    for lam in lam_values:
        for m in member_values:
            cfg = dataclasses.replace(rc.train, lambda_max=float(lam), members=int(m))
            model, _ = train_model(grid, cfg)
            row = _metric_row(model, grid, rc.metrics)
            row = {"model": row.pop("model"), "lambda_max": lam, "members": m, **row}
            if header is None:
                header = list(row.keys())
            rows.append(row)
            print(
                f"lambda_max={lam:g} members={m}: "
                f"psnr={row['psnr_db']:.3f} corr={row['corr']:.4f}"
            )
            if args.checkpoint_dir is not None:
                ckpt_dir = Path(args.checkpoint_dir)
                ckpt_dir.mkdir(parents=True, exist_ok=True)
                name = f"{cfg.kind}_lam{lam:g}_m{m}.usrn"
                save_checkpoint(model, ckpt_dir / name, meta=_train_meta(rc, grid))
    _write_csv(args.out, header, rows)
    print(f"wrote {len(rows)} rows to {args.out}")
    return EXIT_OK


def _cmd_info(args) -> int:
    model, meta = load_checkpoint(args.checkpoint)
    n_params = sum(p.values.size for p in model.params())
    print(json.dumps({"arch": model.arch(), "n_params": n_params, "meta": meta}, indent=2))
    return EXIT_OK


_COMMANDS = {
    "synth": _cmd_synth,
    "train": _cmd_train,
    "evaluate": _cmd_evaluate,
    "render": _cmd_render,
    "sweep": _cmd_sweep,
    "info": _cmd_info,
}


def run_command(argv=None) -> int:
    """Parse argv and run one subcommand; returns the process exit code."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse uses 2 for usage errors
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except InvalidConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


def main(argv=None) -> int:
    return run_command(argv)


if __name__ == "__main__":
    sys.exit(main())
