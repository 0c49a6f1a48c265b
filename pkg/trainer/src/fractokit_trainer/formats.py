"""Readers and writers for the curation toolkit's file formats.

The trainer talks to the toolkit exclusively through these files:
manifest JSONL (image_id, path, foan, serial, instance_tag,
fracture_class, magnification, fold), folds CSV (image_id,fold), weights
CSV (image_id,weight), predictions JSONL (image_id, fold, probs[3],
predicted) and the per-epoch log CSV (fold,epoch,train_f1,val_f1).
"""

import json
from dataclasses import dataclass
from pathlib import Path

#: Trainable class tokens in canonical order (prediction probs use it).
CLASS_TOKENS = ("green_body", "hard_machining", "material")


@dataclass(frozen=True)
class ManifestRecord:
    image_id: str
    path: str
    fracture_class: str
    magnification: str


def read_manifest(path):
    records = []
    root = Path(path).parent
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            row = json.loads(line)
            img_path = Path(row["path"])
            if not img_path.is_absolute():
                img_path = root / img_path
            records.append(
                ManifestRecord(
                    image_id=str(row["image_id"]),
                    path=str(img_path),
                    fracture_class=str(row["fracture_class"]),
                    magnification=str(row["magnification"]),
                )
            )
    return records


def read_folds(path):
    assignment = {}
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "image_id,fold":
            raise ValueError(f"{path}: unexpected folds header {header!r}")
        for line in fh:
            line = line.strip()
            if not line:
                continue
            image_id, fold = line.rsplit(",", 1)
            assignment[image_id] = int(fold)
    return assignment


def read_weights(path):
    weights = {}
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "image_id,weight":
            raise ValueError(f"{path}: unexpected weights header {header!r}")
        for line in fh:
            line = line.strip()
            if not line:
                continue
            image_id, weight = line.rsplit(",", 1)
            weights[image_id] = float(weight)
    return weights


def write_predictions(path, rows):
    """rows: iterable of (image_id, fold, probs, predicted_token)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for image_id, fold, probs, predicted in rows:
            fh.write(
                json.dumps(
                    {
                        "image_id": image_id,
                        "fold": fold,
                        "probs": [float(p) for p in probs],
                        "predicted": predicted,
                    },
                    sort_keys=True,
                )
            )
            fh.write("\n")


def write_epoch_log(path, rows):
    """rows: iterable of (fold, epoch, train_f1, val_f1)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("fold,epoch,train_f1,val_f1\n")
        for fold, epoch, train_f1, val_f1 in rows:
            fh.write(f"{fold},{epoch},{train_f1:.10f},{val_f1:.10f}\n")


def read_truth_defects(path):
    """truth_defects.jsonl from the corpus generator: id -> bbox/origin."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            row = json.loads(line)
            out[row["image_id"]] = {
                "origin_xy": tuple(row["origin_xy"]),
                "defect_bbox": tuple(row["defect_bbox"]),
            }
    return out
