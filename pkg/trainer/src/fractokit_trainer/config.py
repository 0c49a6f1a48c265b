"""Training configuration with the recorded best-run hyperparameters."""

from dataclasses import dataclass


@dataclass(frozen=True)
class TrainConfig:
    base_lr: float = 7.3e-5
    weight_decay: float = 0.14
    layerwise_lr_decay: float = 0.843
    randaugment_ops: int = 2
    randaugment_magnitude: int = 12
    label_smoothing: float = 0.0
    focal_gamma: float = 2.0
    epochs: int = 10
    batch_size: int = 16
    seed: int = 0
    # epoch length when sampling with replacement from the weighted sampler
    samples_per_epoch: int = 2048
    image_size: int = 224
    # regularisers explored but off by default
    stochastic_depth: float = 0.0
    patch_drop: float = 0.0

    def __post_init__(self):
        for name in ("base_lr", "weight_decay", "layerwise_lr_decay", "epochs", "batch_size", "samples_per_epoch"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.focal_gamma < 0 or not (0.0 <= self.label_smoothing < 1.0):
            raise ValueError("bad loss configuration")
        if not (0.0 <= self.stochastic_depth < 1.0) or not (0.0 <= self.patch_drop < 1.0):
            raise ValueError("drop rates must be in [0, 1)")


@dataclass(frozen=True)
class ModelConfig:
    # small transformer: same patch/input convention as the full-size
    # model but reduced depth and width for desk-scale runs
    image_size: int = 224
    patch_size: int = 16
    dim: int = 128
    depth: int = 4
    heads: int = 4
    mlp_ratio: float = 2.0
    n_classes: int = 3
