"""Fold training loop: AdamW with layer-wise learning-rate decay and
cosine annealing, focal loss, weighted sampling, best-epoch selection by
validation macro-F1."""

import logging
import math

import numpy as np
import torch
import torch.nn.functional as F

from .config import ModelConfig, TrainConfig
from .data import eval_loader, split_records, train_loader
from .formats import CLASS_TOKENS
from .model import SmallViT

log = logging.getLogger(__name__)


def focal_loss(logits, targets, gamma: float, label_smoothing: float = 0.0):
    """Cross entropy scaled by (1 - p_t)^gamma."""
    ce = F.cross_entropy(logits, targets, reduction="none", label_smoothing=label_smoothing)
    pt = torch.exp(-ce)
    return ((1.0 - pt) ** gamma * ce).mean()


def macro_f1_from_confusion(cm: np.ndarray) -> float:
    """Unweighted mean of per-class F1; undefined classes count as zero.

    Mirrors the evaluator's definition so logged values re-score
    identically from the emitted predictions.
    """
    f1s = []
    for i in range(cm.shape[0]):
        rowsum = cm[i, :].sum()
        colsum = cm[:, i].sum()
        if rowsum == 0 or colsum == 0:
            f1s.append(0.0)
            continue
        recall = cm[i, i] / rowsum
        precision = cm[i, i] / colsum
        f1s.append(0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall))
    return float(np.mean(f1s))


@torch.no_grad()
def evaluate_split(model, loader, device):
    """(macro_f1, probs per record in loader order)."""
    model.eval()
    cm = np.zeros((len(CLASS_TOKENS), len(CLASS_TOKENS)), dtype=np.int64)
    all_probs = []
    for images, targets in loader:
        logits = model(images.to(device))
        probs = torch.softmax(logits, dim=1).cpu().numpy()
        all_probs.append(probs)
        for t, p in zip(targets.numpy(), probs.argmax(axis=1)):
            cm[t, p] += 1
    return macro_f1_from_confusion(cm), np.concatenate(all_probs) if all_probs else np.zeros((0, 3))


class FoldResult:
    def __init__(self, model, epoch_log, best_epoch, val_records, val_probs):
        self.model = model
        self.epoch_log = epoch_log  # list of (epoch, train_f1, val_f1)
        self.best_epoch = best_epoch
        self.val_records = val_records
        self.val_probs = val_probs  # probs from the best epoch, record order

    def prediction_rows(self, fold: int):
        rows = []
        for rec, probs in zip(self.val_records, self.val_probs):
            predicted = CLASS_TOKENS[int(np.argmax(probs))]
            rows.append((rec.image_id, fold, [float(p) for p in probs], predicted))
        return rows


def train_fold(records, assignment, weights, fold: int, cfg: TrainConfig, device: str = "cpu") -> FoldResult:
    torch.manual_seed(cfg.seed)
    np.random.seed(cfg.seed & 0xFFFFFFFF)

    train_records, val_records = split_records(records, assignment, fold)
    loader = train_loader(train_records, weights, cfg)
    train_eval = eval_loader(train_records, cfg)
    val_eval = eval_loader(val_records, cfg)

    model = SmallViT(
        ModelConfig(image_size=cfg.image_size),
        stochastic_depth=cfg.stochastic_depth,
        patch_drop=cfg.patch_drop,
    ).to(device)
    groups = model.parameter_groups(cfg.base_lr, cfg.layerwise_lr_decay, cfg.weight_decay)
    optimizer = torch.optim.AdamW(groups)
    total_steps = cfg.epochs * math.ceil(cfg.samples_per_epoch / cfg.batch_size)
    scheduler = torch.optim.lr_scheduler.CosineAnnealingLR(optimizer, T_max=total_steps)

    epoch_log = []
    best = None
    for epoch in range(cfg.epochs):
        model.train()
        running = 0.0
        batches = 0
        for images, targets in loader:
            optimizer.zero_grad()
            logits = model(images.to(device))
            loss = focal_loss(logits, targets.to(device), cfg.focal_gamma, cfg.label_smoothing)
            loss.backward()
            optimizer.step()
            scheduler.step()
            running += loss.detach().item()
            batches += 1
        train_f1, _ = evaluate_split(model, train_eval, device)
        val_f1, val_probs = evaluate_split(model, val_eval, device)
        epoch_log.append((epoch, train_f1, val_f1))
        log.info("fold %d epoch %d: loss %.4f train F1 %.3f val F1 %.3f", fold, epoch, running / max(batches, 1), train_f1, val_f1)
        if best is None or val_f1 > best[0]:
            best = (val_f1, epoch, val_probs, {k: v.detach().clone() for k, v in model.state_dict().items()})

    model.load_state_dict(best[3])
    return FoldResult(model, epoch_log, best_epoch=best[1], val_records=val_records, val_probs=best[2])
