"""Single command-line entry point wiring the pipeline stages together.

Exit codes: 0 success, 1 validation/violation findings present, 2 bad
arguments or precondition failures, 3 I/O failure. All outputs are written
atomically (temp file + rename), so reruns with identical inputs produce
byte-identical files.
"""

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .errors import FractokitError
from .fileio import read_csv
from .images import load_gray, save_gray
from .imghash import (
    RetrievalConfig,
    knn_probabilities,
    phash,
    read_hash_cache,
    write_hash_cache,
)
from .manifest import (
    crop_overlay,
    read_manifest,
    validate_manifest,
    write_manifest,
)
from .matcher import MatchConfig, match_files, read_report_table, write_match_log
from .metrics import (
    PredictionRecord,
    evaluate_predictions,
    read_predictions,
    write_metrics_json,
    write_predictions,
)
from .splitsample import (
    Grouping,
    SplitConfig,
    read_folds,
    sampler_weights,
    stratified_kfold,
    write_folds,
    write_weights,
)
from .ssimaudit import AuditConfig, SsimConfig, audit_folds, write_audit_csv, write_evidence
from .syndata import write_corpus

log = logging.getLogger("fractokit")

EXIT_OK = 0
EXIT_FINDINGS = 1
EXIT_BAD_ARGS = 2
EXIT_IO = 3


def load_config(path) -> dict:
    """Flat ``section.key = value`` config file; values are JSON literals
    (numbers, booleans, lists) with bare strings allowed."""
    cfg = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key = value, got {raw.rstrip()!r}")
            key, _, value = line.partition("=")
            key = key.strip()
            value = value.strip()
            try:
                cfg[key] = json.loads(value)
            except json.JSONDecodeError:
                cfg[key] = value.strip("\"'")
    return cfg


def _cfg(config: dict, key: str, default):
    value = config.get(key, default)
    if isinstance(default, tuple) and isinstance(value, list):
        return tuple(value)
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fractokit", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"fractokit {__version__}")
    parser.add_argument("--seed", type=int, default=0, help="global RNG seed")
    parser.add_argument("--config", type=Path, default=None, help="key = value config file")
    parser.add_argument("--jobs", type=int, default=1, help="parallel worker cap")
    parser.add_argument("--quiet", action="store_true", help="suppress progress logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic fractography corpus")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--n-per-class-per-mag", type=int, default=25)
    p.add_argument("--dup-fraction", type=float, default=0.0)
    p.add_argument("--corrupt-fraction", type=float, default=0.0)
    p.add_argument("--size", type=int, default=512)

    p = sub.add_parser("match", help="link image files to report entries")
    p.add_argument("--images", type=Path, required=True, help="directory of PNG files")
    p.add_argument("--report", type=Path, required=True, help="report table JSONL")
    p.add_argument("--manifest-out", type=Path, required=True)
    p.add_argument("--log-out", type=Path, required=True)
    p.add_argument("--threshold", type=float, default=None)

    p = sub.add_parser("crop", help="remove instrument overlay strips")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--out-dir", type=Path, required=True)
    p.add_argument("--manifest-out", type=Path, required=True)
    p.add_argument("--fraction", type=float, default=None)

    p = sub.add_parser("hash", help="compute the perceptual hash cache")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("split", help="assign stratified cross-validation folds")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--grouping", choices=["image", "foan"], default=None)

    p = sub.add_parser("weights", help="inverse-frequency sampler weights")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--folds", type=Path, required=True)
    p.add_argument("--fold", type=int, default=None, help="emit weights for this fold's training split")
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("audit", help="two-stage near-duplicate leakage audit")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--folds", type=Path, required=True)
    p.add_argument("--report-out", type=Path, required=True)
    p.add_argument("--evidence-out", type=Path, required=True)

    p = sub.add_parser("baseline", help="hash-feature k-NN baseline predictions")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--folds", type=Path, required=True)
    p.add_argument("--hashes", type=Path, default=None, help="hash cache CSV (computed if omitted)")
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("evaluate", help="score predictions against a manifest")
    p.add_argument("--predictions", type=Path, required=True)
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--epoch-log", type=Path, default=None, help="trainer CSV fold,epoch,train_f1,val_f1")

    p = sub.add_parser("validate", help="check manifest invariants")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--check-paths", action="store_true")

    return parser


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_BAD_ARGS if exc.code not in (0, None) else 0

    logging.basicConfig(format="%(levelname)s %(message)s", level=logging.WARNING if args.quiet else logging.INFO)
    config = {}
    try:
        if args.config is not None:
            config = load_config(args.config)
    except OSError as exc:
        log.error("cannot read config: %s", exc)
        return EXIT_IO
    except ValueError as exc:
        log.error("%s", exc)
        return EXIT_BAD_ARGS

    handler = _HANDLERS[args.command]
    try:
        return handler(args, config)
    except (FractokitError, ValueError) as exc:
        log.error("%s", exc)
        return EXIT_BAD_ARGS
    except OSError as exc:
        log.error("%s", exc)
        return EXIT_IO


def main() -> None:
    sys.exit(run())


# --- subcommand handlers ----------------------------------------------------

def _cmd_synth(args, config) -> int:
    plan = write_corpus(
        args.out,
        n_per_class_per_mag=args.n_per_class_per_mag,
        dup_fraction=args.dup_fraction,
        corrupt_fraction=args.corrupt_fraction,
        seed=args.seed,
        size=_cfg(config, "synth.size", args.size),
    )
    log.info("wrote %d images to %s", len(plan.images), args.out)
    return EXIT_OK


def _match_config(args, config) -> MatchConfig:
    threshold = args.threshold if args.threshold is not None else _cfg(config, "match.similarity_threshold", 0.9)
    return MatchConfig(similarity_threshold=threshold, normalize=bool(_cfg(config, "match.normalize", True)))


def _cmd_match(args, config) -> int:
    table = read_report_table(args.report)
    files = sorted((p.name, str(p)) for p in args.images.glob("*.png"))
    if not files:
        log.error("no PNG files under %s", args.images)
        return EXIT_BAD_ARGS
    results, records = match_files(files, table, _match_config(args, config))
    violations = validate_manifest(records)
    if violations:
        for v in violations:
            log.error("%s", v.message)
        return EXIT_FINDINGS
    write_manifest(args.manifest_out, records)
    write_match_log(args.log_out, results)
    unmatched = sum(1 for r in results if r.entry is None)
    log.info("matched %d/%d files (%d unmatched)", len(results) - unmatched, len(results), unmatched)
    return EXIT_OK


def _cmd_crop(args, config) -> int:
    fraction = args.fraction if args.fraction is not None else _cfg(config, "crop.bottom_fraction", 0.10)
    records = read_manifest(args.manifest)
    root = args.manifest.parent
    out_records = []
    for rec in records:
        src = Path(rec.path)
        if not src.is_absolute():
            src = root / src
        img = crop_overlay(load_gray(src), fraction)
        dst = args.out_dir / Path(rec.path).name
        save_gray(dst, img)
        out_records.append(dataclasses.replace(rec, path=str(dst)))
    write_manifest(args.manifest_out, out_records)
    log.info("cropped %d images into %s", len(out_records), args.out_dir)
    return EXIT_OK


def _resolve_paths(records, manifest_path):
    root = Path(manifest_path).parent
    out = []
    for rec in records:
        p = Path(rec.path)
        out.append(rec if p.is_absolute() else dataclasses.replace(rec, path=str(root / p)))
    return out


def _cmd_hash(args, config) -> int:
    records = _resolve_paths(read_manifest(args.manifest), args.manifest)
    entries = []
    for rec in records:
        entries.append((rec.image_id, phash(load_gray(rec.path))))
    write_hash_cache(args.out, entries)
    log.info("hashed %d images", len(entries))
    return EXIT_OK


def _cmd_split(args, config) -> int:
    records = read_manifest(args.manifest)
    k = args.k if args.k is not None else int(_cfg(config, "split.k", 5))
    grouping_token = args.grouping if args.grouping is not None else _cfg(config, "split.grouping", "image")
    cfg = SplitConfig(k=k, seed=args.seed, grouping=Grouping(grouping_token))
    assignment = stratified_kfold(records, cfg)
    write_folds(args.out, assignment)
    log.info("assigned %d images to %d folds", len(assignment), k)
    return EXIT_OK


def _apply_folds(records, assignment):
    with_folds = []
    for rec in records:
        fold = assignment.get(rec.image_id)
        with_folds.append(rec.with_fold(fold) if fold is not None else rec)
    return with_folds


def _cmd_weights(args, config) -> int:
    records = read_manifest(args.manifest)
    assignment = read_folds(args.folds)
    missing = sorted(set(assignment) - {r.image_id for r in records})
    if missing:
        raise ValueError(f"fold file references unknown image_id {missing[0]!r}")
    train = [r for r in records if r.image_id in assignment]
    if args.fold is not None:
        train = [r for r in train if assignment[r.image_id] != args.fold]
    write_weights(args.out, sampler_weights(train))
    log.info("wrote weights for %d records", len(train))
    return EXIT_OK


def _audit_configs(config):
    retrieval = RetrievalConfig(
        k=int(_cfg(config, "retrieval.k", 50)),
        max_hamming=int(_cfg(config, "retrieval.max_hamming", 64)),
    )
    acfg = AuditConfig(thresholds=tuple(_cfg(config, "audit.thresholds", (0.50, 0.60, 0.70, 0.80, 0.85, 0.90, 0.95))), retrieval=retrieval)
    scfg = SsimConfig(
        max_side=int(_cfg(config, "ssim.max_side", 128)),
        data_range=float(_cfg(config, "ssim.data_range", 255.0)),
    )
    return acfg, scfg


def _cmd_audit(args, config) -> int:
    records = _resolve_paths(read_manifest(args.manifest), args.manifest)
    assignment = read_folds(args.folds)
    folded = _apply_folds(records, assignment)
    acfg, scfg = _audit_configs(config)
    report = audit_folds(folded, acfg, scfg, jobs=max(1, args.jobs))
    write_audit_csv(args.report_out, report)
    write_evidence(args.evidence_out, report)
    log.info("audited %d folds", len(report.folds))
    return EXIT_OK


def _cmd_baseline(args, config) -> int:
    records = _resolve_paths(read_manifest(args.manifest), args.manifest)
    assignment = read_folds(args.folds)
    folded = [r.with_fold(assignment[r.image_id]) for r in records if r.image_id in assignment]
    if args.hashes is not None:
        hashes = dict(read_hash_cache(args.hashes))
    else:
        hashes = {r.image_id: phash(load_gray(r.path)) for r in folded}
    missing = [r.image_id for r in folded if r.image_id not in hashes]
    if missing:
        raise ValueError(f"hash cache is missing {missing[0]!r}")
    preds = []
    for fold in sorted({r.fold for r in folded}):
        train = [(hashes[r.image_id], r.fracture_class) for r in folded if r.fold != fold]
        k = min(args.k, len(train))
        for rec in (r for r in folded if r.fold == fold):
            probs, winner = knn_probabilities(train, hashes[rec.image_id], k)
            preds.append(PredictionRecord(rec.image_id, fold, probs, winner))
    write_predictions(args.out, preds)
    log.info("wrote %d baseline predictions", len(preds))
    return EXIT_OK


def _read_epoch_log(path, folds):
    _, rows = read_csv(path, expected_header=("fold", "epoch", "train_f1", "val_f1"))
    best = {}
    for row in rows:
        fold, epoch, train_f1, val_f1 = int(row[0]), int(row[1]), float(row[2]), float(row[3])
        cur = best.get(fold)
        if cur is None or val_f1 > cur[0] or (val_f1 == cur[0] and epoch < cur[1]):
            best[fold] = (val_f1, epoch, train_f1)
    missing = [f for f in folds if f not in best]
    if missing:
        raise ValueError(f"epoch log has no rows for fold {missing[0]}")
    return [best[f][2] for f in folds]


def _cmd_evaluate(args, config) -> int:
    records = read_manifest(args.manifest)
    truth = {r.image_id: r.fracture_class for r in records if r.fracture_class.trainable}
    mags = {r.image_id: r.magnification for r in records}
    preds, rejected = read_predictions(args.predictions)
    for lineno, reason in rejected:
        log.error("rejected prediction at line %d: %s", lineno, reason)
    if not preds:
        log.error("no valid predictions in %s", args.predictions)
        return EXIT_BAD_ARGS
    folds = sorted({p.fold for p in preds})
    train_f1 = _read_epoch_log(args.epoch_log, folds) if args.epoch_log is not None else None
    summary = evaluate_predictions(preds, truth, mags, train_f1=train_f1)
    write_metrics_json(args.out, summary)
    log.info(
        "accuracy %.3f, macro-F1 %.3f over %d folds",
        summary.accuracy.mean,
        summary.macro_f1_val.mean,
        len(folds),
    )
    return EXIT_FINDINGS if rejected else EXIT_OK


def _cmd_validate(args, config) -> int:
    records = read_manifest(args.manifest)
    violations = validate_manifest(records, check_paths=args.check_paths, root=args.manifest.parent)
    for v in violations:
        log.error("%s", v.message)
    log.info("%d records, %d violations", len(records), len(violations))
    return EXIT_FINDINGS if violations else EXIT_OK


_HANDLERS = {
    "synth": _cmd_synth,
    "match": _cmd_match,
    "crop": _cmd_crop,
    "hash": _cmd_hash,
    "split": _cmd_split,
    "weights": _cmd_weights,
    "audit": _cmd_audit,
    "baseline": _cmd_baseline,
    "evaluate": _cmd_evaluate,
    "validate": _cmd_validate,
}


if __name__ == "__main__":
    main()
