import numpy as np
import pytest

from fractokit.errors import ImageTooSmall
from fractokit.imghash import hamming, phash
from fractokit.manifest import (
    KNOWN_MAGNIFICATIONS,
    FractureClass,
    Magnification,
    TRAINABLE_CLASSES,
    read_manifest,
    validate_manifest,
)
from fractokit.matcher import MatchConfig, match_files, read_report_table
from fractokit.ssimaudit import SsimConfig, preprocess_for_ssim, ssim
from fractokit.syndata import (
    STRONG_JITTER,
    JitterSpec,
    SynthSpec,
    generate_corpus,
    generate_image,
    make_near_duplicate,
    plan_corpus,
    write_corpus,
)

G, H, M = TRAINABLE_CLASSES


class TestGenerateImage:
    def test_deterministic(self):
        spec = SynthSpec(M, Magnification.X2K, seed=4, size=128)
        img1, t1 = generate_image(spec)
        img2, t2 = generate_image(spec)
        assert np.array_equal(img1, img2)
        assert t1 == t2

    def test_seeds_differ(self):
        a, _ = generate_image(SynthSpec(G, Magnification.X500, seed=0, size=128))
        b, _ = generate_image(SynthSpec(G, Magnification.X500, seed=1, size=128))
        assert not np.array_equal(a, b)

    def test_truth_inside_image(self):
        for seed in range(3):
            for mag in (Magnification.X50, Magnification.X10K):
                img, t = generate_image(SynthSpec(M, mag, seed=seed, size=128))
                x, y = t.origin_xy
                assert 0 <= x < 128 and 0 <= y < 128
                x0, y0, x1, y1 = t.defect_bbox
                assert 0 <= x0 < x1 <= 128 and 0 <= y0 < y1 <= 128

    def test_material_pore_is_dark_at_10k(self):
        for seed in range(4):
            img, t = generate_image(SynthSpec(M, Magnification.X10K, seed=seed))
            x0, y0, x1, y1 = t.defect_bbox
            inner = img[y0:y1, x0:x1].mean()
            assert img.mean() - inner >= 30.0

    def test_origin_constant_across_magnifications(self):
        for klass in TRAINABLE_CLASSES:
            origins = {
                generate_image(SynthSpec(klass, mag, seed=9, size=256))[1].origin_xy
                for mag in KNOWN_MAGNIFICATIONS
            }
            assert len(origins) == 1

    def test_seed_separation_in_hash_space(self):
        # reduced deterministic sample; the full >=1000-pair bound runs in
        # the acceptance suite
        for klass in TRAINABLE_CLASSES:
            for mag in (Magnification.X100, Magnification.X2K):
                hashes = [
                    phash(generate_image(SynthSpec(klass, mag, seed=s, size=256))[0]) for s in range(5)
                ]
                for i in range(len(hashes)):
                    for j in range(i + 1, len(hashes)):
                        assert hamming(hashes[i], hashes[j]) >= 16

    def test_size_validation(self):
        with pytest.raises(ValueError):
            SynthSpec(G, Magnification.X50, seed=0, size=32)
        with pytest.raises(ValueError):
            SynthSpec(FractureClass.UNMATCHABLE, Magnification.X50, seed=0)


class TestNearDuplicate:
    def test_identity_jitter(self):
        img, _ = generate_image(SynthSpec(G, Magnification.X1K, seed=2, size=128))
        out = make_near_duplicate(img, JitterSpec(gamma=1.0, crop_px=0, noise_sigma=0.0), seed=5)
        assert np.array_equal(out, img)

    def test_deterministic_in_seed(self):
        img, _ = generate_image(SynthSpec(G, Magnification.X1K, seed=2, size=128))
        a = make_near_duplicate(img, JitterSpec(), seed=7)
        b = make_near_duplicate(img, JitterSpec(), seed=7)
        c = make_near_duplicate(img, JitterSpec(), seed=8)
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_mild_band(self):
        scfg = SsimConfig()
        for seed in range(3):
            for mag in (Magnification.X50, Magnification.X4K):
                img, _ = generate_image(SynthSpec(H, mag, seed=seed))
                dup = make_near_duplicate(img, JitterSpec(), seed=seed)
                score = ssim(preprocess_for_ssim(img, scfg), preprocess_for_ssim(dup, scfg), scfg)
                assert score >= 0.80

    def test_strong_band(self):
        scfg = SsimConfig()
        below = 0
        total = 0
        for seed in range(3):
            for mag in (Magnification.X50, Magnification.X1K, Magnification.X10K):
                img, _ = generate_image(SynthSpec(M, mag, seed=seed))
                dup = make_near_duplicate(img, STRONG_JITTER, seed=seed)
                score = ssim(preprocess_for_ssim(img, scfg), preprocess_for_ssim(dup, scfg), scfg)
                total += 1
                below += score < 0.80
        assert below / total >= 0.9

    def test_too_small(self):
        img = np.zeros((70, 70), dtype=np.uint8)
        with pytest.raises(ImageTooSmall):
            make_near_duplicate(img, JitterSpec(gamma=1.0, crop_px=4, noise_sigma=0.0), seed=0)

    def test_jitter_ranges_enforced(self):
        with pytest.raises(ValueError):
            JitterSpec(gamma=1.5)
        with pytest.raises(ValueError):
            JitterSpec(crop_px=9)
        with pytest.raises(ValueError):
            JitterSpec(noise_sigma=5.0)


class TestCorpusPlan:
    def test_counts(self):
        plan = plan_corpus(5)
        assert len(plan.images) == 120
        assert len(plan.report) == 15
        assert not plan.duplicate_pairs

    def test_foan_grouping_eight_mags(self):
        plan = plan_corpus(2)
        by_foan = {}
        for p in plan.images:
            by_foan.setdefault(p.foan, []).append(p.spec.magnification)
        for mags in by_foan.values():
            assert sorted(m.value for m in mags) == sorted(m.value for m in KNOWN_MAGNIFICATIONS)

    def test_duplicate_fraction(self):
        plan = plan_corpus(4, dup_fraction=0.1, seed=3)
        n_base = 96
        assert len(plan.duplicate_pairs) == round(0.1 * n_base)
        assert len(plan.images) == n_base + len(plan.duplicate_pairs)
        dup_ids = {d for _, d in plan.duplicate_pairs}
        for p in plan.images:
            if p.image_id in dup_ids:
                assert p.instance_tag == "f2"

    def test_corruption_marks_files(self):
        plan = plan_corpus(4, corrupt_fraction=0.25, seed=3)
        corrupted = [p for p in plan.images if p.corrupted]
        assert len(corrupted) == round(0.25 * 96)
        for p in corrupted:
            assert p.foan not in p.filename  # year digits rewritten
            assert p.filename.startswith("FOAN-")

    def test_deterministic(self):
        assert plan_corpus(3, 0.1, 0.2, seed=5) == plan_corpus(3, 0.1, 0.2, seed=5)


class TestWriteCorpus:
    def test_tree_and_matchability(self, tmp_path):
        write_corpus(tmp_path, 1, seed=2, size=64)
        records = read_manifest(tmp_path / "manifest.jsonl")
        assert len(records) == 24
        assert validate_manifest(records, check_paths=True, root=tmp_path) == []
        table = read_report_table(tmp_path / "report.jsonl")
        files = sorted((p.name, str(p)) for p in (tmp_path / "images").glob("*.png"))
        results, matched = match_files(files, table, MatchConfig())
        assert all(r.entry is not None for r in results)
        truth = {r.image_id: r.fracture_class for r in records}
        for rec in matched:
            assert rec.fracture_class is truth[rec.image_id]

    def test_corrupted_files_unmatchable(self, tmp_path):
        write_corpus(tmp_path, 2, corrupt_fraction=0.25, seed=2, size=64)
        table = read_report_table(tmp_path / "report.jsonl")
        files = sorted((p.name, str(p)) for p in (tmp_path / "images").glob("*.png"))
        results, _ = match_files(files, table, MatchConfig())
        unmatched = sum(1 for r in results if r.entry is None)
        assert unmatched == round(0.25 * 48)

    def test_in_memory_generation_matches_plan(self):
        records, report, images, truths, pairs = generate_corpus(1, dup_fraction=0.1, seed=4, size=128)
        assert set(images) == {r.image_id for r in records}
        assert len(pairs) == round(0.1 * 24)
        for orig, dup in pairs:
            assert images[orig].shape == images[dup].shape


class TestHashJitterBound:
    def test_hash_jitter_within_ten_bits(self):
        # derived over 1008 default-size images (max observed 10); this
        # regression re-checks a deterministic subsample
        worst = 0
        for klass in TRAINABLE_CLASSES:
            for mag in KNOWN_MAGNIFICATIONS:
                for seed in (0, 1):
                    img, _ = generate_image(SynthSpec(klass, mag, seed=seed, size=512))
                    jit = make_near_duplicate(img, JitterSpec(gamma=1.05, crop_px=2, noise_sigma=0.0), seed=0)
                    worst = max(worst, hamming(phash(img), phash(jit)))
        assert worst <= 10


class TestRetrievalRecall:
    def test_planted_near_duplicates_always_retrieved(self):
        from fractokit.imghash import HashIndex, RetrievalConfig, query_topk

        entries = []
        planted = []
        idx = 0
        for klass in TRAINABLE_CLASSES:
            for mag in (Magnification.X100, Magnification.X1K, Magnification.X10K):
                for seed in range(4):
                    img, _ = generate_image(SynthSpec(klass, mag, seed=seed, size=256))
                    dup = make_near_duplicate(img, JitterSpec(), seed=seed + 50)
                    h_img, h_dup = phash(img), phash(dup)
                    entries.append((f"train{idx}", h_img))
                    if hamming(h_img, h_dup) <= 10:
                        planted.append((f"train{idx}", h_dup))
                    idx += 1
        index = HashIndex(entries)
        assert len(planted) >= 20  # the mild band keeps pairs within 10 bits
        cfg = RetrievalConfig(k=50, max_hamming=64)
        for partner_id, probe in planted:
            hits = [image_id for image_id, _ in query_topk(index, probe, cfg)]
            assert partner_id in hits
