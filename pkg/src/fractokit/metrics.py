"""Cross-validation metrics: confusion matrices, per-class P/R/F1,
fold aggregation with Student-t confidence intervals, per-magnification
F1 and the focal-loss reference kernel."""

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import (
    LengthMismatch,
    MissingTruth,
    NonFiniteInput,
    TooFewFolds,
)
from .fileio import atomic_write, read_jsonl, write_jsonl
from .manifest import FractureClass, Magnification, TRAINABLE_CLASSES

N_CLASSES = len(TRAINABLE_CLASSES)
_CLASS_INDEX = {c: i for i, c in enumerate(TRAINABLE_CLASSES)}

#: Tolerance on a probability row summing to one.
PROB_SUM_TOL = 1e-6

#: Floor applied inside log() so saturated inputs cannot produce -inf.
PROB_FLOOR = 1e-12


@dataclass(frozen=True)
class PredictionRecord:
    image_id: str
    fold: int
    probs: tuple
    predicted: FractureClass


def validate_prediction(row: dict, where: str = "") -> PredictionRecord:
    """Parse and validate one predictions row; raises ValueError on defects."""
    for key in ("image_id", "fold", "probs", "predicted"):
        if key not in row:
            raise ValueError(f"{where}: missing field {key!r}")
    probs = row["probs"]
    if not isinstance(probs, (list, tuple)) or len(probs) != N_CLASSES:
        raise ValueError(f"{where}: probs must have {N_CLASSES} entries")
    probs = tuple(float(p) for p in probs)
    if any(not (0.0 <= p <= 1.0) for p in probs):
        raise ValueError(f"{where}: probs outside [0, 1]: {probs}")
    if abs(sum(probs) - 1.0) > PROB_SUM_TOL:
        raise ValueError(f"{where}: probs sum to {sum(probs):.6f}, not 1")
    predicted = FractureClass(row["predicted"])
    if not predicted.trainable:
        raise ValueError(f"{where}: predicted class {predicted.value} is not trainable")
    if probs[_CLASS_INDEX[predicted]] < max(probs):
        raise ValueError(f"{where}: predicted {predicted.value} is not an argmax of probs")
    fold = row["fold"]
    if not isinstance(fold, int) or isinstance(fold, bool) or fold < 0:
        raise ValueError(f"{where}: fold must be a non-negative integer")
    return PredictionRecord(str(row["image_id"]), fold, probs, predicted)


def read_predictions(path):
    """Load predictions, returning (accepted, rejected) where rejected is a
    list of (line_number, reason) strings."""
    accepted, rejected = [], []
    for i, row in enumerate(read_jsonl(path)):
        try:
            accepted.append(validate_prediction(row, where=f"{path}:{i + 1}"))
        except ValueError as exc:
            rejected.append((i + 1, str(exc)))
    return accepted, rejected


def write_predictions(path, preds) -> None:
    write_jsonl(
        path,
        (
            {
                "image_id": p.image_id,
                "fold": p.fold,
                "probs": list(p.probs),
                "predicted": p.predicted.value,
            }
            for p in preds
        ),
    )


# --- confusion matrix -----------------------------------------------------

def confusion(preds, truth: dict) -> np.ndarray:
    """3x3 count matrix, rows = true class, columns = predicted class."""
    cm = np.zeros((N_CLASSES, N_CLASSES), dtype=np.int64)
    for p in preds:
        if p.image_id not in truth:
            raise MissingTruth(f"no truth entry for {p.image_id!r}")
        true_class = truth[p.image_id]
        if not true_class.trainable:
            raise ValueError(f"truth class for {p.image_id!r} is not trainable: {true_class.value}")
        cm[_CLASS_INDEX[true_class], _CLASS_INDEX[p.predicted]] += 1
    return cm


def row_normalised(cm: np.ndarray) -> np.ndarray:
    sums = cm.sum(axis=1, keepdims=True)
    out = np.zeros_like(cm, dtype=np.float64)
    np.divide(cm, sums, out=out, where=sums > 0)
    return out


def accuracy(cm: np.ndarray) -> float:
    total = int(cm.sum())
    return float(np.trace(cm)) / total if total else float("nan")


def f1_score(precision: float, recall: float) -> float:
    """Harmonic mean; zero when both components are zero."""
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


@dataclass(frozen=True)
class PerClassMetrics:
    values: dict  # class -> {"recall": r, "precision": p, "f1": f} (nan when undefined)
    undefined: tuple  # (class, metric) pairs with empty denominators


def per_class_prf(cm: np.ndarray) -> PerClassMetrics:
    """Per-class recall, precision and F1 from a confusion matrix.

    Empty rows/columns make a metric undefined: the value is NaN and the
    (class, metric) pair is flagged rather than raising.
    """
    values = {}
    undefined = []
    for i, klass in enumerate(TRAINABLE_CLASSES):
        rowsum = int(cm[i, :].sum())
        colsum = int(cm[:, i].sum())
        diag = int(cm[i, i])
        recall = diag / rowsum if rowsum else float("nan")
        precision = diag / colsum if colsum else float("nan")
        if not rowsum:
            undefined.append((klass, "recall"))
        if not colsum:
            undefined.append((klass, "precision"))
        if rowsum and colsum:
            f1 = f1_score(precision, recall)
        else:
            f1 = float("nan")
            undefined.append((klass, "f1"))
        values[klass] = {"recall": recall, "precision": precision, "f1": f1}
    return PerClassMetrics(values=values, undefined=tuple(undefined))


def macro_f1(cm: np.ndarray):
    """Unweighted mean of per-class F1; undefined classes count as 0.

    Returns (value, flagged) where flagged is True when any class F1 was
    undefined and substituted with zero.
    """
    prf = per_class_prf(cm)
    f1s = [prf.values[c]["f1"] for c in TRAINABLE_CLASSES]
    flagged = any(math.isnan(v) for v in f1s)
    return float(np.mean([0.0 if math.isnan(v) else v for v in f1s])), flagged


# --- fold aggregation -----------------------------------------------------

@dataclass(frozen=True)
class FoldSummary:
    per_fold: tuple
    mean: float
    sd: float
    ci_lo: float
    ci_hi: float


def fold_summary(values, confidence: float = 0.95) -> FoldSummary:
    """Mean, sample SD and two-sided Student-t confidence interval."""
    values = [float(v) for v in values]
    n = len(values)
    if n < 2:
        raise TooFewFolds(f"need >= 2 fold values, got {n}")
    mean = float(np.mean(values))
    sd = float(np.std(values, ddof=1))
    t = float(stats.t.ppf(0.5 + confidence / 2.0, n - 1))
    half = t * sd / math.sqrt(n)
    return FoldSummary(tuple(values), mean, sd, mean - half, mean + half)


def generalisation_gap(train_f1, val_f1, confidence: float = 0.95) -> FoldSummary:
    """Summary of per-fold train minus validation macro-F1."""
    train_f1, val_f1 = list(train_f1), list(val_f1)
    if len(train_f1) != len(val_f1):
        raise LengthMismatch(f"{len(train_f1)} train values vs {len(val_f1)} val values")
    return fold_summary([t - v for t, v in zip(train_f1, val_f1)], confidence)


# --- per-magnification F1 -------------------------------------------------

@dataclass(frozen=True)
class BucketSummary:
    mean: float
    sd: float
    n_folds: int
    missing_folds: tuple  # folds with no scored record in this bucket


def per_magnification_f1(preds, truth: dict, mags: dict) -> dict:
    """Across-fold mean/SD of per-bucket macro-F1.

    Buckets with no support in some folds are summarised over the folds
    that do have support and flagged, never zero-filled. Records with
    unknown magnification are excluded.
    """
    folds = sorted({p.fold for p in preds})
    by_bucket = {}
    for p in preds:
        mag = mags.get(p.image_id, Magnification.UNKNOWN)
        if mag is Magnification.UNKNOWN:
            continue
        by_bucket.setdefault(mag, []).append(p)

    out = {}
    for mag in sorted(by_bucket, key=lambda m: m.numeric):
        bucket_preds = by_bucket[mag]
        per_fold = []
        missing = []
        for f in folds:
            fold_preds = [p for p in bucket_preds if p.fold == f]
            if not fold_preds:
                missing.append(f)
                continue
            value, _ = macro_f1(confusion(fold_preds, truth))
            per_fold.append(value)
        mean = float(np.mean(per_fold))
        sd = float(np.std(per_fold, ddof=1)) if len(per_fold) > 1 else 0.0
        out[mag] = BucketSummary(mean, sd, len(per_fold), tuple(missing))
    return out


# --- focal loss -----------------------------------------------------------

@dataclass(frozen=True)
class FocalConfig:
    gamma: float = 2.0
    label_smoothing: float = 0.0

    def __post_init__(self):
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")
        if not (0.0 <= self.label_smoothing < 1.0):
            raise ValueError("label_smoothing must be in [0, 1)")


def focal_loss(logits, true_class: FractureClass, cfg: FocalConfig = FocalConfig()):
    """Focal loss and its analytic gradient w.r.t. the logits.

    loss = -sum_c q_c (1 - p_c)^gamma log p_c with p = softmax(logits) and
    q the (optionally smoothed) one-hot target. log p is floored at 1e-12,
    which caps the loss on saturated inputs.
    """
    z = np.asarray(logits, dtype=np.float64)
    if z.shape != (N_CLASSES,):
        raise ValueError(f"expected {N_CLASSES} logits, got shape {z.shape}")
    if not np.all(np.isfinite(z)):
        raise NonFiniteInput(f"logits must be finite, got {z}")
    if not true_class.trainable:
        raise ValueError(f"true class must be trainable, got {true_class.value}")

    e = np.exp(z - z.max())
    p = e / e.sum()
    s = cfg.label_smoothing
    q = np.full(N_CLASSES, s / N_CLASSES)
    q[_CLASS_INDEX[true_class]] += 1.0 - s

    logp = np.log(np.maximum(p, PROB_FLOOR))
    one_minus = 1.0 - p
    focal = one_minus**cfg.gamma
    loss = float(-(q * focal * logp).sum())

    # g_c = q_c [ (1-p_c)^g - g * p_c * (1-p_c)^(g-1) * log p_c ];
    # grad_k = -(g_k - p_k * sum(g)). The second term vanishes at gamma=0
    # and in the p_c -> 1 limit.
    if cfg.gamma == 0.0:
        g = q.copy()
    else:
        with np.errstate(divide="ignore", invalid="ignore"):
            pow_gm1 = np.where(one_minus > 0.0, one_minus ** (cfg.gamma - 1.0), 0.0)
        g = q * (focal - cfg.gamma * p * pow_gm1 * logp)
    grad = -(g - p * g.sum())
    return loss, grad


# --- assembled report -----------------------------------------------------

@dataclass(frozen=True)
class MetricsSummary:
    accuracy: FoldSummary
    macro_f1_val: FoldSummary
    macro_f1_train: FoldSummary | None
    delta_f1: FoldSummary | None
    per_class: PerClassMetrics
    per_magnification: dict
    cm: np.ndarray
    macro_f1_flagged: bool


def evaluate_predictions(preds, truth: dict, mags: dict | None = None, train_f1: list | None = None, confidence: float = 0.95) -> MetricsSummary:
    """Full metric battery over validated prediction records."""
    folds = sorted({p.fold for p in preds})
    if len(folds) < 2:
        raise TooFewFolds(f"need predictions from >= 2 folds, got {folds}")
    acc_pf, f1_pf = [], []
    flagged = False
    for f in folds:
        cm_f = confusion([p for p in preds if p.fold == f], truth)
        acc_pf.append(accuracy(cm_f))
        value, flag = macro_f1(cm_f)
        f1_pf.append(value)
        flagged = flagged or flag

    cm = confusion(preds, truth)
    summary_train = None
    summary_gap = None
    if train_f1 is not None:
        if len(train_f1) != len(folds):
            raise LengthMismatch(f"{len(train_f1)} train F1 values for {len(folds)} folds")
        summary_train = fold_summary(train_f1, confidence)
        summary_gap = generalisation_gap(train_f1, f1_pf, confidence)

    return MetricsSummary(
        accuracy=fold_summary(acc_pf, confidence),
        macro_f1_val=fold_summary(f1_pf, confidence),
        macro_f1_train=summary_train,
        delta_f1=summary_gap,
        per_class=per_class_prf(cm),
        per_magnification=per_magnification_f1(preds, truth, mags or {}),
        cm=cm,
        macro_f1_flagged=flagged,
    )


def _summary_dict(s: FoldSummary | None):
    if s is None:
        return None
    return {
        "per_fold": list(s.per_fold),
        "mean": s.mean,
        "sd": s.sd,
        "ci": [s.ci_lo, s.ci_hi],
    }


def summary_to_dict(ms: MetricsSummary) -> dict:
    def _clean(v):
        return None if math.isnan(v) else v

    return {
        "accuracy": _summary_dict(ms.accuracy),
        "macro_f1_val": _summary_dict(ms.macro_f1_val),
        "macro_f1_train": _summary_dict(ms.macro_f1_train),
        "delta_f1": _summary_dict(ms.delta_f1),
        "per_class": {
            c.value: {k: _clean(v) for k, v in ms.per_class.values[c].items()}
            for c in TRAINABLE_CLASSES
        },
        "per_class_undefined": [[c.value, metric] for c, metric in ms.per_class.undefined],
        "per_magnification": {
            mag.value: {
                "mean": b.mean,
                "sd": b.sd,
                "n_folds": b.n_folds,
                "missing_folds": list(b.missing_folds),
            }
            for mag, b in ms.per_magnification.items()
        },
        "confusion": {
            "counts": ms.cm.tolist(),
            "row_normalised": row_normalised(ms.cm).tolist(),
        },
        "macro_f1_flagged": ms.macro_f1_flagged,
    }


def write_metrics_json(path, ms: MetricsSummary) -> None:
    with atomic_write(path) as fh:
        json.dump(summary_to_dict(ms), fh, indent=2, sort_keys=True)
        fh.write("\n")
