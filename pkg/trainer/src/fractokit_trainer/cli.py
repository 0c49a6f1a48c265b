"""Command line for fold training and attribution overlays."""

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .config import ModelConfig, TrainConfig
from .data import eval_transform
from .formats import read_folds, read_manifest, read_weights, write_epoch_log, write_predictions
from .gradcam import gradcam
from .model import SmallViT
from .train import train_fold

log = logging.getLogger("fractokit_trainer")


def build_parser():
    parser = argparse.ArgumentParser(prog="fractokit-trainer")
    parser.add_argument("--quiet", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one fold and emit predictions")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--folds", type=Path, required=True)
    p.add_argument("--weights", type=Path, required=True)
    p.add_argument("--fold", type=int, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--samples-per-epoch", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("gradcam", help="write attribution overlays")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--ids", type=str, required=True, help="comma-separated image ids")
    p.add_argument("--out", type=Path, required=True)
    return parser


def _cmd_train(args) -> int:
    overrides = {"seed": args.seed}
    for name in ("epochs", "batch_size", "samples_per_epoch"):
        value = getattr(args, name)
        if value is not None:
            overrides[name] = value
    cfg = dataclasses.replace(TrainConfig(), **overrides)

    records = read_manifest(args.manifest)
    assignment = read_folds(args.folds)
    weights = read_weights(args.weights)
    result = train_fold(records, assignment, weights, args.fold, cfg)

    args.out.mkdir(parents=True, exist_ok=True)
    write_predictions(args.out / f"predictions_fold{args.fold}.jsonl", result.prediction_rows(args.fold))
    write_epoch_log(
        args.out / f"epochs_fold{args.fold}.csv",
        [(args.fold, epoch, train_f1, val_f1) for epoch, train_f1, val_f1 in result.epoch_log],
    )
    torch.save(
        {"state_dict": result.model.state_dict(), "config": dataclasses.asdict(cfg), "best_epoch": result.best_epoch},
        args.out / f"model_fold{args.fold}.pt",
    )
    log.info("fold %d best epoch %d", args.fold, result.best_epoch)
    return 0


def _cmd_gradcam(args) -> int:
    payload = torch.load(args.model, map_location="cpu", weights_only=False)
    cfg = TrainConfig(**payload["config"])
    model = SmallViT(ModelConfig(image_size=cfg.image_size))
    model.load_state_dict(payload["state_dict"])
    records = {r.image_id: r for r in read_manifest(args.manifest)}
    transform = eval_transform(cfg)
    args.out.mkdir(parents=True, exist_ok=True)
    meta = []
    for image_id in args.ids.split(","):
        rec = records[image_id]
        with Image.open(rec.path) as im:
            src = im.convert("RGB")
            overlay = gradcam(model, transform(src), image_id, (src.height, src.width))
        heat_img = (overlay.heat * 255).astype(np.uint8)
        Image.fromarray(heat_img, mode="L").save(args.out / f"{image_id}_cam.png")
        meta.append(
            {"image_id": image_id, "predicted": overlay.predicted, "confidence": overlay.confidence}
        )
    with open(args.out / "cam_meta.jsonl", "w", encoding="utf-8") as fh:
        for row in meta:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    return 0


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(format="%(levelname)s %(message)s", level=logging.WARNING if args.quiet else logging.INFO)
    if args.command == "train":
        return _cmd_train(args)
    return _cmd_gradcam(args)


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
