"""Acceptance suite: one test per criterion, each printing a PASS line
with its measured values (run pytest -s to see them)."""

import json
import math
import time

import numpy as np
import pytest

from fractokit.cli import EXIT_OK, run
from fractokit.fileio import read_jsonl
from fractokit.imghash import HashIndex, RetrievalConfig, query_topk
from fractokit.manifest import (
    ImageRecord,
    Magnification,
    TRAINABLE_CLASSES,
    read_manifest,
    write_manifest,
)
from fractokit.matcher import MatchConfig, MatchOutcome, match_files
from fractokit.metrics import (
    FocalConfig,
    confusion,
    f1_score,
    focal_loss,
    fold_summary,
    per_class_prf,
    row_normalised,
)
from fractokit.splitsample import SplitConfig, sampler_weights, stratified_kfold
from fractokit.ssimaudit import AuditConfig, SsimConfig, audit_folds, ssim
from fractokit.syndata import plan_corpus, write_corpus
from fractokit.matcher import levenshtein
from oracles import dct2_naive, levenshtein_full_matrix, ssim_naive, topk_full_scan

G, H, M = TRAINABLE_CLASSES


def report(name, detail):
    print(f"\nACCEPTANCE PASS {name}: {detail}")


def five_values(mean, sd):
    """Five numbers whose mean and sample SD (n-1) are exact."""
    return [mean - sd, mean - sd, mean, mean + sd, mean + sd]


def test_ci_reproduction():
    started = time.perf_counter()
    table = {
        "accuracy": (0.907, 0.008, 0.897, 0.917),
        "macro_f1_val": (0.888, 0.017, 0.867, 0.909),
        "macro_f1_train": (0.998, 0.001, 0.997, 0.999),
        "delta_f1": (0.090, 0.012, 0.075, 0.105),
    }
    for name, (mean, sd, lo, hi) in table.items():
        s = fold_summary(five_values(mean, sd))
        assert abs(s.ci_lo - lo) <= 1e-3, (name, s.ci_lo, lo)
        assert abs(s.ci_hi - hi) <= 1e-3, (name, s.ci_hi, hi)
    elapsed = time.perf_counter() - started
    assert elapsed < 1.0
    report("CI reproduction", f"four intervals within ±0.001 in {elapsed * 1000:.0f} ms")


def test_per_class_f1_consistency():
    rows = [(0.903, 0.898, 0.901), (0.907, 0.924, 0.916), (0.939, 0.777, 0.851)]
    for precision, recall, expected in rows:
        assert abs(f1_score(precision, recall) - expected) <= 1e-3
    report("Per-class F1 consistency", "three reference F1 values within ±0.001")


def test_confusion_structure_reproduction():
    # row-normalised rates with class masses chosen so the rare-class
    # column precision lands at the reference 0.94
    counts = np.array(
        [
            [1796, 200, 4],  # 2000 green-body rows at (0.898, 0.100, 0.002)
            [140, 1848, 12],  # 2000 hard-machining rows at (0.070, 0.924, 0.006)
            [36, 36, 251],  # 323 material rows at (0.111, 0.112, 0.777)
        ],
        dtype=np.int64,
    )
    rn = row_normalised(counts)
    assert abs(rn[0, 0] - 0.898) <= 1e-3
    assert abs(rn[1, 1] - 0.924) <= 1e-3
    assert abs(rn[2, 2] - 0.777) <= 1e-3
    prf = per_class_prf(counts)
    recalls = [prf.values[c]["recall"] for c in TRAINABLE_CLASSES]
    for got, want in zip(recalls, (0.898, 0.924, 0.777)):
        assert abs(got - want) <= 1e-3
    material_precision = prf.values[M]["precision"]
    assert abs(material_precision - 0.94) <= 5e-3
    report(
        "Confusion structure",
        f"recalls {['%.3f' % r for r in recalls]}, material precision {material_precision:.4f}",
    )


@pytest.fixture(scope="module")
def audit_corpus(tmp_path_factory):
    """~1000 images with planted mild near-duplicates, folds assigned."""
    root = tmp_path_factory.mktemp("audit_corpus")
    plan = write_corpus(root, 41, dup_fraction=0.02, seed=20, size=256)
    records = read_manifest(root / "manifest.jsonl")
    assignment = stratified_kfold(records, SplitConfig(k=5, seed=6))
    records = [r.with_fold(assignment[r.image_id]) for r in records]
    # plant exact copies: duplicate five images under new ids in other folds
    import shutil

    exact_pairs = []
    sources = [r for r in records if r.fold == 0][:5]
    for i, src in enumerate(sources):
        copy_id = f"exactcopy{i}"
        dst = root / "images" / f"{copy_id}.png"
        shutil.copyfile(root / src.path, dst)
        records.append(
            ImageRecord(copy_id, f"images/{copy_id}.png", src.foan, src.serial, "f3",
                        src.fracture_class, src.magnification, fold=(i % 4) + 1)
        )
        exact_pairs.append((src.image_id, copy_id))
    write_manifest(root / "manifest.jsonl", records)
    return root, records, plan, exact_pairs


def test_leakage_audit_soundness(audit_corpus):
    root, records, plan, exact_pairs = audit_corpus
    resolved = [
        ImageRecord(r.image_id, str(root / r.path), r.foan, r.serial, r.instance_tag,
                    r.fracture_class, r.magnification, r.fold)
        for r in records
    ]
    n_images = len(resolved)
    assert n_images >= 1000

    started = time.perf_counter()
    audit = audit_folds(resolved, AuditConfig(), SsimConfig(), jobs=2)
    elapsed = time.perf_counter() - started
    assert elapsed < 120.0, f"audit took {elapsed:.1f} s"

    # thresholds are non-increasing on every fold
    for fa in audit.folds:
        rates = [fa.rates[t] for t in sorted(fa.rates)]
        assert all(a >= b for a, b in zip(rates, rates[1:])), (fa.fold, rates)

    fold_of = {r.image_id: r.fold for r in resolved}
    evidence = {(p.val_id, p.train_id): p for fa in audit.folds for p in fa.evidence}

    # every exact copy is flagged at all thresholds (SSIM of a copy is 1)
    for orig, copy in exact_pairs:
        assert fold_of[orig] != fold_of[copy]
        for val_id, train_id in ((orig, copy), (copy, orig)):
            pair = evidence[(val_id, train_id)]
            assert pair.ssim >= 0.95

    # planted mild duplicates crossing folds are all flagged at 0.80
    crossing = [(a, b) for a, b in plan.duplicate_pairs if fold_of[a] != fold_of[b]]
    assert crossing, "no fold-crossing planted duplicates"
    for a, b in crossing:
        found = evidence.get((a, b)) or evidence.get((b, a))
        assert found is not None, (a, b)
        assert found.ssim >= 0.80, (a, b, found.ssim)

    report(
        "Leakage audit soundness",
        f"{n_images} images in {elapsed:.1f} s, {len(exact_pairs)} exact copies and "
        f"{len(crossing)} crossing mild duplicates all flagged",
    )


def test_oracle_equivalence_ssim():
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(4):
        a = rng.uniform(0, 255, (16, 16))
        b = rng.uniform(0, 255, (16, 16))
        worst = max(worst, abs(ssim(a, b) - ssim_naive(a, b)))
    assert worst < 1e-9
    report("Oracle equivalence (SSIM)", f"max deviation {worst:.2e} on random 16x16 pairs")


def test_oracle_equivalence_dct2():
    from fractokit.imghash import dct2

    rng = np.random.default_rng(8)
    block = rng.normal(0, 60, (32, 32))
    worst = float(np.max(np.abs(dct2(block) - dct2_naive(block))))
    assert worst < 1e-9
    report("Oracle equivalence (DCT)", f"max deviation {worst:.2e} vs O(N^4) definition")


def test_oracle_equivalence_topk():
    rng = np.random.default_rng(9)
    entries = [(f"img{i:05d}", int(rng.integers(0, 2**64, dtype=np.uint64))) for i in range(5000)]
    index = HashIndex(entries)
    for k, max_h in ((50, 64), (10, 28)):
        cfg = RetrievalConfig(k=k, max_hamming=max_h)
        for probe in (entries[17][1], int(rng.integers(0, 2**64, dtype=np.uint64))):
            assert query_topk(index, probe, cfg) == topk_full_scan(entries, probe, k, max_h)
    report("Oracle equivalence (top-K)", "full-scan agreement on a 5000-entry index")


def test_oracle_equivalence_levenshtein():
    rng = np.random.default_rng(10)
    alphabet = "FOAN-0123456789abc"
    for _ in range(10_000):
        a = "".join(rng.choice(list(alphabet), size=rng.integers(0, 12)))
        b = "".join(rng.choice(list(alphabet), size=rng.integers(0, 12)))
        assert levenshtein(a, b) == levenshtein_full_matrix(a, b)
    report("Oracle equivalence (Levenshtein)", "10000 random pairs match the DP oracle")


def test_splitter_and_sampler():
    records = []
    i = 0
    for klass, n in ((G, 3787), (H, 4351), (M, 355)):
        for _ in range(n):
            i += 1
            records.append(
                ImageRecord(f"img{i:06d}", "x.png", f"FOAN-2021-{i:05d}", "1", "f1", klass, Magnification.X50)
            )
    assignment = stratified_kfold(records, SplitConfig(k=5, seed=13))
    assert len(assignment) == len(records)
    truth = {r.image_id: r.fracture_class for r in records}
    per_class_fold = {}
    for image_id, fold in assignment.items():
        per_class_fold.setdefault((truth[image_id], fold), 0)
        per_class_fold[(truth[image_id], fold)] += 1
    for klass, n in ((G, 3787), (H, 4351), (M, 355)):
        for fold in range(5):
            assert abs(per_class_fold[(klass, fold)] - n / 5) < 1.0

    weights = sampler_weights(records)
    assert abs(sum(weights.values()) - 1.0) <= 1e-12
    for klass in TRAINABLE_CLASSES:
        mass = sum(w for image_id, w in weights.items() if truth[image_id] is klass)
        assert abs(mass - 1 / 3) <= 1e-12
    report("Splitter/sampler", "fold counts within ±1 of n/5; class mass exactly 1/3")


def test_focal_loss_gradient_and_reduction():
    rng = np.random.default_rng(11)
    h = 1e-5
    worst = 0.0
    for _ in range(1000):
        z = rng.normal(0, 2, 3)
        klass = TRAINABLE_CLASSES[rng.integers(3)]
        cfg = FocalConfig(gamma=2.0)
        _, grad = focal_loss(z, klass, cfg)
        for k in range(3):
            zp, zm = z.copy(), z.copy()
            zp[k] += h
            zm[k] -= h
            num = (focal_loss(zp, klass, cfg)[0] - focal_loss(zm, klass, cfg)[0]) / (2 * h)
            rel = abs(grad[k] - num) / max(abs(num), abs(grad[k]), 1e-8)
            worst = max(worst, rel)
    assert worst <= 1e-6

    for _ in range(200):
        z = rng.normal(0, 3, 3)
        klass = TRAINABLE_CLASSES[rng.integers(3)]
        loss, _ = focal_loss(z, klass, FocalConfig(gamma=0.0))
        p = np.exp(z - z.max())
        p /= p.sum()
        ce = -math.log(p[TRAINABLE_CLASSES.index(klass)])
        assert abs(loss - ce) <= 1e-12
    report("Focal loss", f"worst gradient rel. error {worst:.2e}; gamma=0 equals CE to 1e-12")


def test_matcher_corruption_rate():
    plan = plan_corpus(14, corrupt_fraction=0.23, seed=17)
    table = plan.report
    files = [(p.filename, p.filename) for p in plan.images]
    results, _ = match_files(files, table, MatchConfig())
    n = len(results)
    unmatched = sum(1 for r in results if r.outcome is MatchOutcome.UNMATCHED)
    expected = round(0.23 * n)
    assert abs(unmatched - expected) <= 1
    corrupted_ids = {p.image_id for p in plan.images if p.corrupted}
    for r in results:
        if r.outcome is MatchOutcome.UNMATCHED:
            assert r.image_id in corrupted_ids
        if r.outcome in (MatchOutcome.FUZZY, MatchOutcome.TIE_BROKEN):
            assert r.similarity > 0.9
    report(
        "Matcher corruption rate",
        f"{unmatched}/{n} unmatched vs expected {expected}; no fuzzy match at or below 0.9",
    )


def test_end_to_end_smoke(tmp_path):
    started = time.perf_counter()
    root = tmp_path / "pipeline"
    steps = [
        ["--quiet", "--seed", "5", "synth", "--out", str(root), "--n-per-class-per-mag", "25", "--size", "256"],
        ["--quiet", "match", "--images", str(root / "images"), "--report", str(root / "report.jsonl"),
         "--manifest-out", str(root / "matched.jsonl"), "--log-out", str(root / "matches.jsonl")],
        ["--quiet", "--seed", "5", "split", "--manifest", str(root / "matched.jsonl"),
         "--out", str(root / "folds.csv"), "--k", "5"],
        ["--quiet", "--jobs", "2", "audit", "--manifest", str(root / "matched.jsonl"),
         "--folds", str(root / "folds.csv"), "--report-out", str(root / "audit.csv"),
         "--evidence-out", str(root / "evidence.jsonl")],
        ["--quiet", "baseline", "--manifest", str(root / "matched.jsonl"), "--folds", str(root / "folds.csv"),
         "--k", "5", "--out", str(root / "preds.jsonl")],
        ["--quiet", "evaluate", "--predictions", str(root / "preds.jsonl"),
         "--manifest", str(root / "matched.jsonl"), "--out", str(root / "metrics.json")],
    ]
    for argv in steps:
        assert run(argv) == EXIT_OK, argv
    elapsed = time.perf_counter() - started
    assert elapsed < 180.0, f"pipeline took {elapsed:.1f} s"

    doc = json.loads((root / "metrics.json").read_text())
    macro = doc["macro_f1_val"]["mean"]
    assert macro > 0.5
    assert (root / "audit.csv").exists() and (root / "evidence.jsonl").exists()
    assert len(read_jsonl(root / "preds.jsonl")) == 600
    report("End-to-end smoke", f"600 images through the pipeline in {elapsed:.0f} s, baseline macro-F1 {macro:.3f}")
