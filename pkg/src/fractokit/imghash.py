"""64-bit DCT perceptual hashes, Hamming retrieval and a k-NN baseline.

The hash pipeline is the classical DCT pHash pinned to one convention so
hashes are reproducible bit-exactly: bilinear resize to 32x32 with
pixel-center alignment, orthonormal DCT-II, top-left 8x8 coefficient block
(DC included), median threshold, row-major bit scan with the first scanned
bit in the most significant position.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import EmptyTrainingSet, WrongShape
from .fileio import atomic_write, read_csv
from .images import ensure_gray
from .manifest import FractureClass, TRAINABLE_CLASSES

#: A perceptual hash is a plain 64-bit unsigned integer.
PHash64 = int


def dct2(block: np.ndarray) -> np.ndarray:
    """Orthonormal 2-D DCT-II of a 32x32 block."""
    block = np.asarray(block, dtype=np.float64)
    if block.shape != (32, 32):
        raise WrongShape(f"dct2 expects 32x32, got {block.shape}")
    return kernels.dct2_32(block)


#: Bits must clear the median by this margin. It sits far above the float
#: residue of analytically-zero coefficients (~1e-12 for constant images)
#: and far below any meaningful coefficient, making degenerate blocks
#: hash reproducibly.
MEDIAN_GUARD = 1e-6


def phash(img: np.ndarray) -> PHash64:
    """Perceptual hash of a grayscale image."""
    ensure_gray(img)
    small = kernels.bilinear_resize(img.astype(np.float64), 32, 32)
    coeffs = kernels.dct2_32(small)
    block = coeffs[:8, :8]
    median = float(np.median(block))
    h = 0
    for value in block.ravel():
        h = (h << 1) | (1 if value > median + MEDIAN_GUARD else 0)
    return h


def hamming(a: PHash64, b: PHash64) -> int:
    """Number of differing bits between two 64-bit hashes."""
    return ((a ^ b) & 0xFFFFFFFFFFFFFFFF).bit_count()


def phash_hex(h: PHash64) -> str:
    return f"{h:016x}"


@dataclass(frozen=True)
class RetrievalConfig:
    k: int = 50
    max_hamming: int = 64

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if not (0 <= self.max_hamming <= 64):
            raise ValueError("max_hamming must be in [0, 64]")


class HashIndex:
    """Immutable id -> hash index backed by a linear popcount scan."""

    def __init__(self, entries):
        ids = []
        hashes = []
        seen = set()
        for image_id, h in entries:
            if image_id in seen:
                raise ValueError(f"duplicate image_id in index: {image_id!r}")
            seen.add(image_id)
            ids.append(image_id)
            hashes.append(h)
        self._ids = tuple(ids)
        self._hashes = np.array(hashes, dtype=np.uint64)

    def __len__(self) -> int:
        return len(self._ids)

    @property
    def ids(self):
        return self._ids

    def distances(self, probe: PHash64) -> np.ndarray:
        return kernels.hamming_distances(self._hashes, probe)


def query_topk(index: HashIndex, probe: PHash64, cfg: RetrievalConfig = RetrievalConfig()):
    """Up to k entries within max_hamming, sorted by (distance, image_id)."""
    if len(index) == 0:
        return []
    dists = index.distances(probe)
    hits = [(int(d), index.ids[i]) for i, d in enumerate(dists) if d <= cfg.max_hamming]
    hits.sort()
    return [(image_id, d) for d, image_id in hits[: cfg.k]]


class BKTreeNode:
    __slots__ = ("image_id", "hash", "children")

    def __init__(self, image_id, h):
        self.image_id = image_id
        self.hash = h
        self.children: dict[int, BKTreeNode] = {}


class BKTree:
    """Metric-tree alternative to the linear scan, same query contract."""

    def __init__(self, entries=()):
        self._root = None
        self._count = 0
        for image_id, h in entries:
            self.add(image_id, h)

    def __len__(self) -> int:
        return self._count

    def add(self, image_id, h) -> None:
        self._count += 1
        if self._root is None:
            self._root = BKTreeNode(image_id, h)
            return
        node = self._root
        while True:
            d = hamming(h, node.hash)
            child = node.children.get(d)
            if child is None:
                node.children[d] = BKTreeNode(image_id, h)
                return
            node = child

    def query(self, probe: PHash64, max_hamming: int):
        """All (image_id, distance) within max_hamming, unsorted."""
        out = []
        if self._root is None:
            return out
        stack = [self._root]
        while stack:
            node = stack.pop()
            d = hamming(probe, node.hash)
            if d <= max_hamming:
                out.append((node.image_id, d))
            lo, hi = d - max_hamming, d + max_hamming
            for dist, child in node.children.items():
                if lo <= dist <= hi:
                    stack.append(child)
        return out

    def topk(self, probe: PHash64, cfg: RetrievalConfig = RetrievalConfig()):
        hits = [(d, image_id) for image_id, d in self.query(probe, cfg.max_hamming)]
        hits.sort()
        return [(image_id, d) for d, image_id in hits[: cfg.k]]


def _vote(train, probe: PHash64, k: int):
    """k-NN vote counts plus the tie-broken winning class."""
    if not train:
        raise EmptyTrainingSet("k-NN requires a non-empty training set")
    if k < 1 or k > len(train):
        raise ValueError(f"k={k} outside [1, {len(train)}]")
    ranked = sorted((hamming(h, probe), i) for i, (h, _) in enumerate(train))[:k]
    votes: dict[FractureClass, int] = {}
    dist_sum: dict[FractureClass, int] = {}
    for d, i in ranked:
        klass = train[i][1]
        votes[klass] = votes.get(klass, 0) + 1
        dist_sum[klass] = dist_sum.get(klass, 0) + d
    top = max(votes.values())
    tied = [c for c, v in votes.items() if v == top]
    if len(tied) > 1:
        best_mean = min(dist_sum[c] / votes[c] for c in tied)
        tied = [c for c in tied if dist_sum[c] / votes[c] - best_mean <= 1e-12]
    winner = min(tied, key=lambda c: TRAINABLE_CLASSES.index(c))
    return votes, winner


def knn_predict(train, probe: PHash64, k: int) -> FractureClass:
    """Majority class among the k nearest training hashes.

    Ties break by smaller mean distance, then by class declaration order.
    """
    _, winner = _vote(train, probe, k)
    return winner


def knn_probabilities(train, probe: PHash64, k: int):
    """Vote fractions over the trainable classes plus the predicted class."""
    votes, winner = _vote(train, probe, k)
    probs = tuple(votes.get(c, 0) / k for c in TRAINABLE_CLASSES)
    return probs, winner


# --- hash cache file ------------------------------------------------------

def write_hash_cache(path, entries) -> None:
    """CSV with columns image_id,phash_hex."""
    with atomic_write(path) as fh:
        fh.write("image_id,phash_hex\n")
        for image_id, h in entries:
            fh.write(f"{image_id},{phash_hex(h)}\n")


def read_hash_cache(path):
    _, rows = read_csv(path, expected_header=("image_id", "phash_hex"))
    out = []
    for row in rows:
        if len(row) != 2 or len(row[1]) != 16:
            raise ValueError(f"{path}: bad hash cache row {row!r}")
        out.append((row[0], int(row[1], 16)))
    return out
