"""Two-stage near-duplicate leakage audit.

Stage 1 retrieves hash candidates per validation image; stage 2 verifies
them with SSIM (Gaussian 11x11 window, sigma 1.5, valid mode) after both
images are shrunk so their longer side is at most ``max_side``. A
validation image counts as leaked at threshold t when any confirmed
training candidate reaches SSIM >= t.
"""

import logging
from collections import OrderedDict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import ShapeMismatch, TooSmall
from .fileio import atomic_write, write_jsonl
from .images import load_gray, quantize
from .imghash import HashIndex, RetrievalConfig, phash, query_topk

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SsimConfig:
    max_side: int = 128
    data_range: float = 255.0
    window_size: int = 11
    sigma: float = 1.5
    k1: float = 0.01
    k2: float = 0.03

    def __post_init__(self):
        if self.max_side < 8:
            raise ValueError("max_side must be >= 8")
        if self.data_range <= 0:
            raise ValueError("data_range must be positive")


DEFAULT_THRESHOLDS = (0.50, 0.60, 0.70, 0.80, 0.85, 0.90, 0.95)


@dataclass(frozen=True)
class AuditConfig:
    thresholds: tuple = DEFAULT_THRESHOLDS
    retrieval: RetrievalConfig = field(default_factory=RetrievalConfig)

    def __post_init__(self):
        ts = tuple(self.thresholds)
        if not ts or any(not (0.0 < t < 1.0) for t in ts):
            raise ValueError("thresholds must lie in (0, 1)")
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError("thresholds must be strictly ascending")
        object.__setattr__(self, "thresholds", ts)


def preprocess_for_ssim(img: np.ndarray, cfg: SsimConfig = SsimConfig()) -> np.ndarray:
    """Shrink so the longer side equals max_side; never upscales."""
    h, w = img.shape
    longest = max(h, w)
    if longest <= cfg.max_side:
        return img
    scale = cfg.max_side / longest
    if h >= w:
        out_h = cfg.max_side
        out_w = max(1, int(w * scale + 0.5))
    else:
        out_w = cfg.max_side
        out_h = max(1, int(h * scale + 0.5))
    return quantize(kernels.bilinear_resize(img.astype(np.float64), out_h, out_w))


def ssim(a: np.ndarray, b: np.ndarray, cfg: SsimConfig = SsimConfig()) -> float:
    """Mean SSIM over valid window positions."""
    if a.shape != b.shape:
        raise ShapeMismatch(f"shapes differ: {a.shape} vs {b.shape}")
    if min(a.shape) < cfg.window_size:
        raise TooSmall(f"sides must be >= {cfg.window_size}, got {a.shape}")
    win = kernels.gaussian_kernel(cfg.window_size, cfg.sigma)
    c1 = (cfg.k1 * cfg.data_range) ** 2
    c2 = (cfg.k2 * cfg.data_range) ** 2
    return float(np.mean(kernels.ssim_map(np.asarray(a, np.float64), np.asarray(b, np.float64), win, c1, c2)))


@dataclass(frozen=True)
class EvidencePair:
    fold: int
    val_id: str
    train_id: str
    hamming: int
    ssim: float


@dataclass(frozen=True)
class FoldAudit:
    fold: int
    n_val: int
    rates: dict  # threshold -> leakage percentage
    evidence: list  # EvidencePair, ordered by (val order, distance, train_id)


@dataclass(frozen=True)
class AuditReport:
    thresholds: tuple
    folds: list  # FoldAudit, ascending fold index


class SsimStats:
    """Float image plus its window mean and smoothed square; computing
    these once per image leaves one convolution per candidate pair."""

    __slots__ = ("img", "mu", "sq")

    def __init__(self, img: np.ndarray, win: np.ndarray):
        self.img = np.ascontiguousarray(img, dtype=np.float64)
        self.mu = kernels.blur_valid(self.img, win)
        self.sq = kernels.blur_valid(self.img * self.img, win)


class ImageStore:
    """Lazy per-image cache of hashes, preprocessed SSIM inputs and their
    window statistics. Bounded to keep large corpora under control; a
    recompute after eviction is bit-identical (pure functions)."""

    def __init__(self, records, scfg: SsimConfig, loader=load_gray, max_stats: int = 512):
        self._paths = {}
        for rec in records:
            self._paths[rec.image_id] = rec.path
        self._scfg = scfg
        self._win = kernels.gaussian_kernel(scfg.window_size, scfg.sigma)
        self._loader = loader
        self._hashes = {}
        self._small = {}
        self._stats = OrderedDict()
        self._max_stats = max_stats

    def _load(self, image_id):
        path = self._paths[image_id]
        try:
            img = self._loader(path)
        except OSError as exc:
            raise OSError(f"cannot load image {image_id!r} from {path}: {exc}") from exc
        self._hashes[image_id] = phash(img)
        self._small[image_id] = preprocess_for_ssim(img, self._scfg)

    def hash_of(self, image_id):
        if image_id not in self._hashes:
            self._load(image_id)
        return self._hashes[image_id]

    def small_of(self, image_id):
        if image_id not in self._small:
            self._load(image_id)
        return self._small[image_id]

    def stats_for(self, image_id, shape) -> SsimStats:
        """Window statistics of the image resized to the probe shape."""
        key = (image_id, shape)
        cached = self._stats.get(key)
        if cached is not None:
            self._stats.move_to_end(key)
            return cached
        img = self.small_of(image_id)
        if img.shape != shape:
            img = quantize(kernels.bilinear_resize(img.astype(np.float64), shape[0], shape[1]))
        stats = SsimStats(img, self._win)
        self._stats[key] = stats
        if len(self._stats) > self._max_stats:
            self._stats.popitem(last=False)
        return stats


def audit(train, val, acfg: AuditConfig, scfg: SsimConfig, fold: int = 0, store: ImageStore | None = None, jobs: int = 1) -> FoldAudit:
    """Audit one train/validation split for near-duplicate leakage."""
    train_ids = {r.image_id for r in train}
    for rec in val:
        if rec.image_id in train_ids:
            raise ValueError(f"image_id {rec.image_id!r} appears in both train and val")
    if store is None:
        store = ImageStore(list(train) + list(val), scfg)

    index = HashIndex((rec.image_id, store.hash_of(rec.image_id)) for rec in train)
    t_min = min(acfg.thresholds)
    win = kernels.gaussian_kernel(scfg.window_size, scfg.sigma)
    c1 = (scfg.k1 * scfg.data_range) ** 2
    c2 = (scfg.k2 * scfg.data_range) ** 2

    def scan(rec):
        candidates = query_topk(index, store.hash_of(rec.image_id), acfg.retrieval)
        shape = store.small_of(rec.image_id).shape
        if min(shape) < scfg.window_size:
            raise TooSmall(f"{rec.image_id!r}: preprocessed size {shape} below the SSIM window")
        probe = store.stats_for(rec.image_id, shape)
        pairs = []
        best = -1.0
        for train_id, dist in candidates:
            other = store.stats_for(train_id, shape)
            score = float(
                np.mean(
                    kernels.ssim_map_from_stats(
                        probe.img, probe.mu, probe.sq, other.img, other.mu, other.sq, win, c1, c2
                    )
                )
            )
            best = max(best, score)
            if score >= t_min:
                pairs.append(EvidencePair(fold, rec.image_id, train_id, dist, score))
        return best, pairs

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            scanned = list(pool.map(scan, val))
    else:
        scanned = [scan(rec) for rec in val]

    evidence = [pair for _, pairs in scanned for pair in pairs]
    best_scores = [best for best, _ in scanned]
    rates = {}
    for t in acfg.thresholds:
        leaked = sum(1 for s in best_scores if s >= t)
        rates[t] = 100.0 * leaked / len(val) if val else 0.0
    return FoldAudit(fold=fold, n_val=len(val), rates=rates, evidence=evidence)


def audit_folds(records, acfg: AuditConfig = AuditConfig(), scfg: SsimConfig = SsimConfig(), jobs: int = 1, loader=load_gray) -> AuditReport:
    """Per-fold audit over a manifest whose trainable records carry folds."""
    folded = [r for r in records if r.fold is not None]
    if not folded:
        raise ValueError("no records with fold assignments")
    store = ImageStore(folded, scfg, loader=loader)
    fold_ids = sorted({r.fold for r in folded})
    audits = []
    for f in fold_ids:
        val = [r for r in folded if r.fold == f]
        train = [r for r in folded if r.fold != f]
        log.info("auditing fold %d: %d val vs %d train", f, len(val), len(train))
        audits.append(audit(train, val, acfg, scfg, fold=f, store=store, jobs=jobs))
    return AuditReport(thresholds=acfg.thresholds, folds=audits)


def write_audit_csv(path, report: AuditReport) -> None:
    """Table-shaped CSV: one row per fold, percentages with two decimals."""
    with atomic_write(path) as fh:
        fh.write("fold," + ",".join(f"{t:.2f}" for t in report.thresholds) + "\n")
        for fa in report.folds:
            fh.write(str(fa.fold) + "," + ",".join(f"{fa.rates[t]:.2f}" for t in report.thresholds) + "\n")


def write_evidence(path, report: AuditReport) -> None:
    write_jsonl(
        path,
        (
            {
                "fold": p.fold,
                "val_id": p.val_id,
                "train_id": p.train_id,
                "hamming": p.hamming,
                "ssim": round(p.ssim, 9),
            }
            for fa in report.folds
            for p in fa.evidence
        ),
    )
