"""Command-line pipeline: dataset building, synthesis, training, evaluation.

Every artifact-producing subcommand writes an ``<command>_config.json``
next to its outputs with the fully resolved arguments; re-running the same
subcommand with ``--config <that file>`` reproduces the outputs bit for
bit.  Exit codes: 0 success, 1 runtime failure, 2 usage error.  Set
PARCELDELIN_LOG to control log verbosity.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np
from PIL import Image

from . import dataset as ds
from . import metrics as mt
from . import synth as sy
from .errors import CapacityError, ParcelDelinError
from .geodata import (
    GeoPoint,
    LambertPoint,
    filter_parcels,
    lambert93_to_wgs84,
    parse_geojson_polygons,
    parse_shapefile,
    sample_tile_centers,
    wgs84_to_lambert93,
)
from .model import UNetConfig, build, default_config, load_weights
from .raster import render_area_mask, render_boundary_mask, save_mask_png
from .train import TrainConfig, load_checkpoint, train
from .variants import ModelVariant, Task

log = logging.getLogger("parceldelin")

PROFILES = {
    "desk": {"size_px": 96, "base_filters": 8, "epochs": 30},
    "paper": {"size_px": 224, "base_filters": 64, "epochs": 200},
}


def _write_effective_config(out_dir: Path, command: str, args: argparse.Namespace) -> None:
    drop = {"config", "func", "command"}
    payload = {k: v for k, v in sorted(vars(args).items()) if k not in drop}
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / f"{command}_config.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------- build-dataset


def _render_tile_worker(payload):
    tile, parcels, size_px, out_dir = payload
    boundary = render_boundary_mask(tile, parcels, size_px)
    area = render_area_mask(tile, parcels, size_px)
    save_mask_png(boundary, Path(out_dir) / f"{tile.tile_id}_boundary.png")
    save_mask_png(area, Path(out_dir) / f"{tile.tile_id}_area.png")
    return tile.tile_id


def cmd_build_dataset(args: argparse.Namespace) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if bool(args.shapefile) == bool(args.geojson):
        raise ParcelDelinError("exactly one of --shapefile or --geojson is required")
    if args.shapefile:
        parcels = parse_shapefile(Path(args.shapefile).read_bytes())
    else:
        parcels = parse_geojson_polygons(Path(args.geojson).read_text())
    log.info("parsed %d parcel records", len(parcels))

    try:
        tiles = sample_tile_centers(parcels, args.n_tiles, args.seed, args.max_attempts)
    except CapacityError as exc:
        raise ParcelDelinError(
            f"{exc} -- try fewer --n-tiles, a larger vector dataset, or more --max-attempts"
        ) from exc

    images_dir = Path(args.images_dir)
    rows: list[ds.TileEntry] = []
    skipped = 0
    payloads = []
    for tile in tiles:
        slot_names = [f"{tile.tile_id}_{s}.png" for s in range(3)]
        present = [(images_dir / n).exists() for n in slot_names]
        if not present[1]:
            log.warning("tile %d: slot-1 image missing, skipping tile", tile.tile_id)
            skipped += 1
            continue
        payloads.append((tile, filter_parcels(parcels, tile), args.size_px, str(out)))
        rel = [os.path.relpath(images_dir / n, out) if ok else None for n, ok in zip(slot_names, present)]
        rows.append(
            ds.TileEntry(
                tile.tile_id,
                rel,
                f"{tile.tile_id}_boundary.png",
                f"{tile.tile_id}_area.png",
                "train",
            )
        )
    if args.jobs > 1:
        from multiprocessing import Pool

        with Pool(args.jobs) as pool:
            pool.map(_render_tile_worker, payloads)
    else:
        for p in payloads:
            _render_tile_worker(p)

    manifest = ds.DatasetManifest(args.size_px, args.seed, rows)
    if len(rows) >= 10:
        manifest = ds.split_dataset(manifest, args.seed)
    ds.save_manifest(manifest, out / "manifest.json")
    _write_effective_config(out, "build-dataset", args)
    print(f"accepted {len(tiles)} tiles, kept {len(rows)}, skipped {skipped} (missing slot-1 image)")
    print(f"manifest: {out / 'manifest.json'}")
    return 0


# ------------------------------------------------------------------------ synth


def cmd_synth(args: argparse.Namespace) -> int:
    config = sy.SynthConfig(
        n_tiles=args.n_tiles,
        size_px=args.size_px,
        sites_range=tuple(args.sites),
        seasonal_drift=tuple(args.drift),
        noise_sigma=args.noise_sigma,
        cloud=sy.CloudConfig(args.cloud_prob, tuple(args.cloud_radius), args.cloud_slot1),
        farm_fraction=args.farm_fraction,
        palette_size=args.palette_size,
        seed=args.seed,
    )
    manifest = sy.generate(config, args.out, split=False if args.no_split else None, jobs=args.jobs)
    _write_effective_config(Path(args.out), "synth", args)
    by_split = {s: len(ds.split_tiles(manifest, s)) for s in ds.SPLITS}
    print(f"generated {config.n_tiles} tiles in {args.out} (splits: {by_split})")
    return 0


# ------------------------------------------------------------------------ train


def cmd_train(args: argparse.Namespace) -> int:
    manifest = ds.load_manifest(args.data)
    base_dir = Path(args.data).parent
    out = Path(args.out)
    profile = PROFILES[args.profile]
    base_filters = args.base_filters if args.base_filters is not None else profile["base_filters"]
    epochs = args.epochs if args.epochs is not None else profile["epochs"]

    variant = ModelVariant(args.variant)
    task = Task(args.task)
    model_config = default_config(variant, size_px=manifest.size_px, depth=args.depth, base_filters=base_filters)
    model = build(variant, model_config, init_seed=args.seed)
    if args.pretrained_weights:
        report = load_weights(model, args.pretrained_weights, allow_partial=True)
        print(
            f"imported {len(report.loaded)} entries from {args.pretrained_weights}; "
            f"{len(report.missing)} model entries left at init"
        )
        log.info("entries not found in weight file: %s", report.missing)

    train_samples = ds.load_split(manifest, base_dir, "train")
    val_samples = ds.load_split(manifest, base_dir, "val")
    config = TrainConfig(
        learning_rate=args.lr,
        batch_size=args.batch,
        epochs=epochs,
        loss=args.loss,
        seed=args.seed,
        checkpoint_every=args.checkpoint_every,
        eval_train=args.eval_train,
    )
    state = None
    start_epoch = 0
    history = None
    if args.resume:
        model, state, last_epoch, history, task = load_checkpoint(args.resume)
        start_epoch = last_epoch + 1
        print(f"resuming from {args.resume} at epoch {start_epoch}")
    result = train(
        model,
        train_samples,
        val_samples,
        task,
        config,
        out_dir=out,
        state=state,
        start_epoch=start_epoch,
        history=history,
    )
    _write_effective_config(out, "train", args)
    final = result.history[-1]
    print(
        f"trained {variant.value}/{task.value} for {epochs} epochs: "
        f"final train loss {final['train_loss']:.4f}, "
        f"best val dice {result.best_val_dice:.4f} (epoch {result.best_epoch})"
    )
    print(f"checkpoints: {result.best_path}.pswt / {result.last_path}.pswt")
    return 0


# ------------------------------------------------------------------------- eval


def _overlay(sample: ds.Sample, prob: np.ndarray, gt: np.ndarray, tau: float) -> np.ndarray:
    """Side-by-side input | prediction | ground truth, uint8 RGB."""
    rgb = (sample.images[ds.TimeSlot.SLOT1] * 255).astype(np.uint8)
    pred = (mt.threshold(prob, tau) * 255).astype(np.uint8)
    pred_rgb = np.stack([pred] * 3, axis=-1)
    gt_rgb = np.stack([gt * 255] * 3, axis=-1).astype(np.uint8)
    bar = np.full((rgb.shape[0], 2, 3), 128, dtype=np.uint8)
    return np.concatenate([rgb, bar, pred_rgb, bar, gt_rgb], axis=1)


def cmd_eval(args: argparse.Namespace) -> int:
    model, _state, _epoch, _history, task = load_checkpoint(args.checkpoint)
    manifest = ds.load_manifest(args.data)
    samples = ds.load_split(manifest, Path(args.data).parent, args.split)
    if not samples:
        raise ParcelDelinError(f"split {args.split!r} is empty in {args.data}")
    report = mt.evaluate(model, samples, task, tau=args.tau, aggregation=args.aggregation, batch_size=args.batch)
    table = mt.format_table(report)
    print(table)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "metrics.json").write_text(report.to_json() + "\n")
        (out / "table.txt").write_text(table + "\n")
        for sample in samples[: args.overlays]:
            prob = model.forward(ds.to_input_tensor(sample, model.variant)[None], train=False).data[0, 0]
            gt = sample.boundary_mask if task is Task.BOUNDARY else sample.area_mask
            img = _overlay(sample, prob, gt, args.tau)
            Image.fromarray(img, mode="RGB").save(out / f"{sample.tile_id}_{task.value}_overlay.png")
        _write_effective_config(out, "eval", args)
    return 0


# ---------------------------------------------------------------------- predict


def cmd_predict(args: argparse.Namespace) -> int:
    model, _state, _epoch, _history, task = load_checkpoint(args.checkpoint)
    manifest = ds.load_manifest(args.data)
    row = next((t for t in manifest.tiles if t.tile_id == args.tile), None)
    if row is None:
        raise ParcelDelinError(f"tile {args.tile} not found in {args.data}")
    sample = ds.assemble_sample(row, Path(args.data).parent)
    prob = model.forward(ds.to_input_tensor(sample, model.variant)[None], train=False).data[0, 0]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    np.save(out / f"{args.tile}_{task.value}_prob.npy", prob.astype(np.float32))
    Image.fromarray(np.clip(np.rint(prob * 255), 0, 255).astype(np.uint8), mode="L").save(
        out / f"{args.tile}_{task.value}_prob.png"
    )
    save_mask_png(mt.threshold(prob, args.tau), out / f"{args.tile}_{task.value}_pred.png")
    _write_effective_config(out, "predict", args)
    print(f"wrote probability map and thresholded mask for tile {args.tile} to {out}")
    return 0


# ---------------------------------------------------------------------- project


def cmd_project(args: argparse.Namespace) -> int:
    a, b = args.coords
    if args.src == "lambert93" and args.dst == "wgs84":
        g = lambert93_to_wgs84(LambertPoint(a, b))
        print(f"{g.lon_deg:.6f} {g.lat_deg:.6f}")
    elif args.src == "wgs84" and args.dst == "lambert93":
        p = wgs84_to_lambert93(GeoPoint(a, b))
        print(f"{p.easting_m:.3f} {p.northing_m:.3f}")
    else:
        raise ParcelDelinError(f"cannot project from {args.src} to {args.dst}")
    return 0


# ------------------------------------------------------------------------ main


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="parceldelin", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-dataset", help="rasterize vector parcels into a mask dataset")
    p.add_argument("--config", help="JSON file of stored arguments (from a previous run)")
    p.add_argument("--shapefile", help="path to a .shp main file (Lambert-93 polygons)")
    p.add_argument("--geojson", help="path to a GeoJSON FeatureCollection (geographic)")
    p.add_argument("--images-dir", required=True, help="directory of {tile_id}_{slot}.png images")
    p.add_argument("--out", required=True)
    p.add_argument("--n-tiles", type=int, default=2000)
    p.add_argument("--size-px", type=int, default=224)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-attempts", type=int, default=None)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_build_dataset)

    p = sub.add_parser("synth", help="generate a synthetic parcel dataset")
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.add_argument("--n-tiles", type=int, default=20)
    p.add_argument("--size-px", type=int, default=96)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sites", type=int, nargs=2, default=[6, 14], metavar=("MIN", "MAX"))
    p.add_argument("--farm-fraction", type=float, default=0.85)
    p.add_argument("--cloud-prob", type=float, default=0.0)
    p.add_argument("--cloud-radius", type=float, nargs=2, default=[0.2, 0.45], metavar=("LO", "HI"))
    p.add_argument("--cloud-slot1", action="store_true", help="allow clouds on the mid-year slot")
    p.add_argument("--noise-sigma", type=float, default=0.015)
    p.add_argument("--drift", type=float, nargs=3, default=[0.25, 0.0, 0.25], metavar=("D0", "D1", "D2"))
    p.add_argument("--palette-size", type=int, default=4)
    p.add_argument("--no-split", action="store_true")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train one U-Net variant on one task")
    p.add_argument("--config")
    p.add_argument("--data", required=True, help="manifest.json of the dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--variant", choices=[v.value for v in ModelVariant], default="spatial")
    p.add_argument("--task", choices=[t.value for t in Task], default="boundary")
    p.add_argument("--loss", choices=["bce", "dice"], default="bce")
    p.add_argument("--profile", choices=list(PROFILES), default="paper")
    p.add_argument("--epochs", type=int, default=None, help="default from --profile")
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--batch", type=int, default=6)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--depth", type=int, default=4)
    p.add_argument("--base-filters", type=int, default=None, help="default from --profile")
    p.add_argument("--pretrained-weights", help="weight file for (partial) encoder import")
    p.add_argument("--resume", help="checkpoint stem to resume from")
    p.add_argument("--checkpoint-every", type=int, default=0)
    p.add_argument("--eval-train", action="store_true", help="track Dice on the train split too")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset split")
    p.add_argument("--config")
    p.add_argument("--checkpoint", required=True, help="checkpoint stem (no extension)")
    p.add_argument("--data", required=True)
    p.add_argument("--split", choices=list(ds.SPLITS), default="test")
    p.add_argument("--tau", type=float, default=0.5)
    p.add_argument("--aggregation", choices=["micro", "macro"], default="micro")
    p.add_argument("--batch", type=int, default=6)
    p.add_argument("--out", help="directory for metrics.json, table.txt, overlays")
    p.add_argument("--overlays", type=int, default=0, help="write N side-by-side overlay PNGs")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="run one tile through a checkpoint")
    p.add_argument("--config")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--tile", type=int, required=True)
    p.add_argument("--tau", type=float, default=0.5)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("project", help="convert coordinates between lambert93 and wgs84")
    p.add_argument("--from", dest="src", choices=["lambert93", "wgs84"], required=True)
    p.add_argument("--to", dest="dst", choices=["lambert93", "wgs84"], required=True)
    p.add_argument("coords", type=float, nargs=2, metavar="COORD")
    p.set_defaults(func=cmd_project)

    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=os.environ.get("PARCELDELIN_LOG", "WARNING").upper())
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    # allow --config files to predefine defaults for the chosen subcommand
    if argv and argv[0] in {"build-dataset", "synth", "train", "eval", "predict"} and "--config" in argv:
        idx = argv.index("--config")
        stored = json.loads(Path(argv[idx + 1]).read_text())
        rest = [a for i, a in enumerate(argv) if i not in (idx, idx + 1)]
        args = parser.parse_args(rest + _config_to_flags(stored, set(rest)))
    else:
        args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ParcelDelinError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def _config_to_flags(stored: dict, explicit: set[str]) -> list[str]:
    """Turn a stored config dict back into CLI flags, skipping explicit ones."""
    flags: list[str] = []
    for key, value in stored.items():
        if value is None:
            continue
        flag = "--" + key.replace("_", "-")
        if flag in explicit:
            continue
        if isinstance(value, bool):
            if value:
                flags.append(flag)
        elif isinstance(value, list):
            flags.append(flag)
            flags += [str(v) for v in value]
        else:
            flags += [flag, str(value)]
    return flags


if __name__ == "__main__":
    sys.exit(main())
