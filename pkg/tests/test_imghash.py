import io

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from PIL import Image

from fractokit.errors import EmptyTrainingSet, WrongShape
from fractokit.imghash import (
    BKTree,
    HashIndex,
    RetrievalConfig,
    dct2,
    hamming,
    knn_predict,
    knn_probabilities,
    phash,
    phash_hex,
    query_topk,
    read_hash_cache,
    write_hash_cache,
)
from fractokit.manifest import FractureClass
from oracles import dct2_naive, topk_full_scan

rng = np.random.default_rng(1234)
hash64 = st.integers(0, 2**64 - 1)


class TestDct2:
    def test_zero_block(self):
        assert np.allclose(dct2(np.zeros((32, 32))), 0.0)

    def test_constant_block_dc_only(self):
        out = dct2(np.full((32, 32), 7.0))
        assert out[0, 0] == pytest.approx(32 * 7.0, abs=1e-9)
        out[0, 0] = 0.0
        assert np.max(np.abs(out)) < 1e-9

    def test_matches_naive_definition(self):
        block = rng.normal(0, 50, (32, 32))
        assert np.max(np.abs(dct2(block) - dct2_naive(block))) < 1e-9

    def test_wrong_shape(self):
        with pytest.raises(WrongShape):
            dct2(np.zeros((16, 16)))


class TestPhash:
    def test_deterministic(self):
        img = rng.integers(0, 256, (64, 80), dtype=np.uint8)
        assert phash(img) == phash(img)

    def test_constant_image_single_bit(self):
        img = np.full((50, 50), 130, dtype=np.uint8)
        h = phash(img)
        assert bin(h).count("1") == 1
        # the set bit is the DC coefficient: first scanned, most significant
        assert h == 1 << 63

    def test_png_reencode_invariant(self, tmp_path):
        img = rng.integers(0, 256, (120, 90), dtype=np.uint8)
        h0 = phash(img)
        buf = io.BytesIO()
        Image.fromarray(img, mode="L").save(buf, format="PNG")
        buf.seek(0)
        reloaded = np.asarray(Image.open(buf), dtype=np.uint8)
        assert phash(reloaded) == h0

    def test_hex_form(self):
        assert phash_hex(0) == "0" * 16
        assert phash_hex(2**64 - 1) == "f" * 16


class TestHamming:
    def test_identity(self):
        assert hamming(0xDEAD, 0xDEAD) == 0

    def test_complement(self):
        h = 0x0123456789ABCDEF
        assert hamming(h, ~h) == 64

    def test_popcount(self):
        assert hamming(0x0F, 0x00) == 4

    @given(a=hash64, b=hash64, c=hash64)
    @settings(max_examples=200)
    def test_metric(self, a, b, c):
        assert hamming(a, b) == hamming(b, a)
        assert (hamming(a, b) == 0) == (a == b)
        assert hamming(a, c) <= hamming(a, b) + hamming(b, c)


class TestQueryTopk:
    def test_exact_probe(self):
        index = HashIndex([("a", 5), ("b", 6)])
        assert query_topk(index, 5, RetrievalConfig(k=1)) == [("a", 0)]

    def test_sorted_by_distance_then_id(self):
        entries = [("b", 0b111), ("a", 0b111), ("c", 0b1)]
        index = HashIndex(entries)
        out = query_topk(index, 0, RetrievalConfig(k=3))
        assert out == [("c", 1), ("a", 3), ("b", 3)]

    def test_small_index_returned_whole(self):
        entries = [(f"i{i}", i) for i in range(5)]
        index = HashIndex(entries)
        assert len(query_topk(index, 0, RetrievalConfig(k=50))) == 5

    def test_max_hamming_filter(self):
        index = HashIndex([("near", 0b11), ("far", (1 << 40) - 1)])
        out = query_topk(index, 0, RetrievalConfig(k=10, max_hamming=10))
        assert out == [("near", 2)]

    def test_duplicate_ids_rejected(self):
        with pytest.raises(ValueError):
            HashIndex([("a", 1), ("a", 2)])

    @pytest.mark.parametrize("n", [10, 500, 5000])
    def test_matches_full_scan_oracle(self, n):
        local = np.random.default_rng(n)
        entries = [(f"img{i:05d}", int(local.integers(0, 2**63))) for i in range(n)]
        index = HashIndex(entries)
        for probe in (0, int(local.integers(0, 2**63)), entries[0][1]):
            cfg = RetrievalConfig(k=50, max_hamming=64)
            assert query_topk(index, probe, cfg) == topk_full_scan(entries, probe, 50, 64)
        tight = RetrievalConfig(k=7, max_hamming=20)
        probe = entries[3][1]
        assert query_topk(index, probe, tight) == topk_full_scan(entries, probe, 7, 20)

    def test_bktree_agrees_with_linear_scan(self):
        local = np.random.default_rng(77)
        entries = [(f"img{i:04d}", int(local.integers(0, 2**64, dtype=np.uint64))) for i in range(800)]
        index = HashIndex(entries)
        tree = BKTree(entries)
        for probe in (entries[0][1], 0, int(local.integers(0, 2**64, dtype=np.uint64))):
            for cfg in (RetrievalConfig(k=10, max_hamming=64), RetrievalConfig(k=5, max_hamming=24)):
                assert tree.topk(probe, cfg) == query_topk(index, probe, cfg)


class TestKnn:
    G, H, M = FractureClass.GREEN_BODY, FractureClass.HARD_MACHINING, FractureClass.MATERIAL

    def test_exact_match_k1(self):
        train = [(0b1111, self.M), (0, self.G)]
        assert knn_predict(train, 0b1111, 1) is self.M

    def test_majority(self):
        train = [(0b1, self.G), (0b11, self.G), (0b111, self.M)]
        assert knn_predict(train, 0, 3) is self.G

    def test_tie_broken_by_mean_distance(self):
        # two classes, one vote each at k=2: closer neighbour wins
        train = [(0b1, self.M), (0b1111111, self.G)]
        assert knn_predict(train, 0, 2) is self.M

    def test_tie_fallback_class_order(self):
        train = [(0b11, self.M), (0b11, self.G)]
        assert knn_predict(train, 0, 2) is self.G

    def test_empty_training_set(self):
        with pytest.raises(EmptyTrainingSet):
            knn_predict([], 0, 1)

    def test_k_bounds(self):
        with pytest.raises(ValueError):
            knn_predict([(0, self.G)], 0, 2)

    def test_probabilities_sum_to_one(self):
        train = [(0b1, self.G), (0b11, self.G), (0b111, self.M), (0b1111, self.H)]
        probs, winner = knn_probabilities(train, 0, 4)
        assert sum(probs) == pytest.approx(1.0)
        assert probs[0] == 0.5 and winner is self.G


class TestHashCache:
    def test_round_trip(self, tmp_path):
        entries = [("a", 0), ("b", 2**64 - 1), ("c", 0x0123456789ABCDEF)]
        path = tmp_path / "hashes.csv"
        write_hash_cache(path, entries)
        assert read_hash_cache(path) == entries
        lines = path.read_text().splitlines()
        assert lines[0] == "image_id,phash_hex"
        assert lines[2] == "b," + "f" * 16
