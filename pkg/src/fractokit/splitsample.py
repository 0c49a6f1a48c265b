"""Stratified k-fold assignment and inverse-frequency sampler weights.

Shuffling uses the package's pinned splitmix64 + Fisher-Yates combination
(see prng module) so fold assignments reproduce from a seed across
platforms and implementations. Records are ordered by image_id before
shuffling, making the assignment independent of input order.
"""

from collections import Counter, defaultdict
from dataclasses import dataclass
from enum import Enum

from .errors import EmptyTrainingSet, TooFewSamples
from .fileio import atomic_write, read_csv
from .manifest import TRAINABLE_CLASSES
from .prng import SplitMix64, mix


class Grouping(Enum):
    IMAGE_LEVEL = "image"
    FOAN_GROUPED = "foan"


@dataclass(frozen=True)
class SplitConfig:
    k: int = 5
    seed: int = 0
    grouping: Grouping = Grouping.IMAGE_LEVEL

    def __post_init__(self):
        if self.k < 2:
            raise ValueError("k must be >= 2")


def stratified_kfold(records, cfg: SplitConfig = SplitConfig()) -> dict:
    """Fold index per trainable image_id; excluded classes get no fold.

    Image level: per class, deterministic shuffle then round-robin deal, so
    per-class fold counts differ by at most one. FOAN-grouped: whole FOANs
    are dealt instead (stratified by each group's majority class), so no
    FOAN ever spans two folds; image-level balance is then best-effort.
    """
    trainable = [r for r in records if r.fracture_class.trainable]
    if cfg.grouping is Grouping.IMAGE_LEVEL:
        return _image_level(trainable, cfg)
    return _foan_grouped(trainable, cfg)


def _image_level(trainable, cfg) -> dict:
    assignment = {}
    for ci, klass in enumerate(TRAINABLE_CLASSES):
        ids = sorted(r.image_id for r in trainable if r.fracture_class is klass)
        if not ids:
            continue
        if len(ids) < cfg.k:
            raise TooFewSamples(f"class {klass.value} has {len(ids)} records, needs >= {cfg.k}")
        rng = SplitMix64(mix(cfg.seed, 1, ci))
        rng.shuffle(ids)
        for i, image_id in enumerate(ids):
            assignment[image_id] = i % cfg.k
    return assignment


def _foan_grouped(trainable, cfg) -> dict:
    groups = defaultdict(list)
    for r in trainable:
        groups[r.foan or r.image_id].append(r)

    by_class = defaultdict(list)
    for key in sorted(groups):
        members = groups[key]
        counts = Counter(r.fracture_class for r in members)
        top = max(counts.values())
        majority = min(
            (c for c, n in counts.items() if n == top),
            key=lambda c: TRAINABLE_CLASSES.index(c),
        )
        by_class[majority].append(key)

    assignment = {}
    for ci, klass in enumerate(TRAINABLE_CLASSES):
        keys = by_class.get(klass, [])
        if not keys:
            continue
        if len(keys) < cfg.k:
            raise TooFewSamples(f"class {klass.value} has {len(keys)} FOAN groups, needs >= {cfg.k}")
        rng = SplitMix64(mix(cfg.seed, 2, ci))
        rng.shuffle(keys)
        for i, key in enumerate(keys):
            for r in groups[key]:
                assignment[r.image_id] = i % cfg.k
    return assignment


def sampler_weights(train) -> dict:
    """Per-image weights proportional to inverse class frequency.

    Each class receives total mass 1/C (C = classes present), so sampling
    with replacement yields balanced expected class proportions; weights
    sum to one over the training split.
    """
    train = list(train)
    if not train:
        raise EmptyTrainingSet("sampler weights need at least one record")
    bad = [r.image_id for r in train if not r.fracture_class.trainable]
    if bad:
        raise ValueError(f"non-trainable records in training split: {bad[:3]}")
    counts = Counter(r.fracture_class for r in train)
    c = len(counts)
    return {r.image_id: 1.0 / (counts[r.fracture_class] * c) for r in train}


# --- file formats ---------------------------------------------------------

def write_folds(path, assignment: dict) -> None:
    with atomic_write(path) as fh:
        fh.write("image_id,fold\n")
        for image_id in sorted(assignment):
            fh.write(f"{image_id},{assignment[image_id]}\n")


def read_folds(path) -> dict:
    _, rows = read_csv(path, expected_header=("image_id", "fold"))
    assignment = {}
    for row in rows:
        if len(row) != 2:
            raise ValueError(f"{path}: bad fold row {row!r}")
        image_id, fold = row
        if image_id in assignment:
            raise ValueError(f"{path}: duplicate image_id {image_id!r}")
        assignment[image_id] = int(fold)
    return assignment


def write_weights(path, weights: dict) -> None:
    with atomic_write(path) as fh:
        fh.write("image_id,weight\n")
        for image_id in sorted(weights):
            fh.write(f"{image_id},{weights[image_id]:.17g}\n")


def read_weights(path) -> dict:
    _, rows = read_csv(path, expected_header=("image_id", "weight"))
    return {row[0]: float(row[1]) for row in rows}
