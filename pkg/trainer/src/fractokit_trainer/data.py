"""Dataset plumbing: manifest-backed image folder with fold filtering."""

import torch
from PIL import Image
from torch.utils.data import DataLoader, Dataset, WeightedRandomSampler
from torchvision import transforms

from .config import TrainConfig
from .formats import CLASS_TOKENS


def train_transform(cfg: TrainConfig):
    return transforms.Compose(
        [
            transforms.Resize((cfg.image_size, cfg.image_size)),
            transforms.RandAugment(num_ops=cfg.randaugment_ops, magnitude=cfg.randaugment_magnitude),
            transforms.ToTensor(),
            transforms.Normalize([0.5] * 3, [0.5] * 3),
        ]
    )


def eval_transform(cfg: TrainConfig):
    return transforms.Compose(
        [
            transforms.Resize((cfg.image_size, cfg.image_size)),
            transforms.ToTensor(),
            transforms.Normalize([0.5] * 3, [0.5] * 3),
        ]
    )


class FractureDataset(Dataset):
    def __init__(self, records, transform):
        self.records = list(records)
        self.transform = transform

    def __len__(self):
        return len(self.records)

    def __getitem__(self, idx):
        rec = self.records[idx]
        with Image.open(rec.path) as im:
            img = im.convert("RGB")
        return self.transform(img), CLASS_TOKENS.index(rec.fracture_class)


def split_records(records, assignment, fold):
    """(train, val) record lists for one fold; only assigned ids count."""
    train, val = [], []
    for rec in records:
        f = assignment.get(rec.image_id)
        if f is None:
            continue
        (val if f == fold else train).append(rec)
    if not train or not val:
        raise ValueError(f"fold {fold} leaves an empty split")
    return train, val


def train_loader(train_records, weights, cfg: TrainConfig):
    """Weighted-with-replacement loader; weights come from the toolkit's
    sampler weights file and are aligned to the record order."""
    missing = [r.image_id for r in train_records if r.image_id not in weights]
    if missing:
        raise ValueError(f"sampler weights missing for {missing[0]!r}")
    w = torch.tensor([weights[r.image_id] for r in train_records], dtype=torch.double)
    generator = torch.Generator().manual_seed(cfg.seed)
    sampler = WeightedRandomSampler(w, num_samples=cfg.samples_per_epoch, replacement=True, generator=generator)
    dataset = FractureDataset(train_records, train_transform(cfg))
    return DataLoader(dataset, batch_size=cfg.batch_size, sampler=sampler, num_workers=0)


def eval_loader(records, cfg: TrainConfig, batch_size=None):
    dataset = FractureDataset(records, eval_transform(cfg))
    return DataLoader(dataset, batch_size=batch_size or cfg.batch_size, shuffle=False, num_workers=0)
