"""Small vision transformer with hooks for attribution maps."""

import torch
import torch.nn as nn

from .config import ModelConfig


class Block(nn.Module):
    def __init__(self, dim, heads, mlp_ratio, drop_path=0.0):
        super().__init__()
        self.norm1 = nn.LayerNorm(dim)
        self.attn = nn.MultiheadAttention(dim, heads, batch_first=True)
        self.norm2 = nn.LayerNorm(dim)
        hidden = int(dim * mlp_ratio)
        self.mlp = nn.Sequential(nn.Linear(dim, hidden), nn.GELU(), nn.Linear(hidden, dim))
        self.drop_path = drop_path

    def _maybe_drop(self, residual):
        if self.training and self.drop_path > 0.0 and torch.rand(()) < self.drop_path:
            return torch.zeros_like(residual)
        return residual

    def forward(self, x):
        y = self.norm1(x)
        attn_out, _ = self.attn(y, y, y, need_weights=False)
        x = x + self._maybe_drop(attn_out)
        x = x + self._maybe_drop(self.mlp(self.norm2(x)))
        return x


class SmallViT(nn.Module):
    def __init__(self, cfg: ModelConfig = ModelConfig(), stochastic_depth: float = 0.0, patch_drop: float = 0.0):
        super().__init__()
        self.cfg = cfg
        assert cfg.image_size % cfg.patch_size == 0
        self.grid = cfg.image_size // cfg.patch_size
        n_patches = self.grid * self.grid
        self.patch_embed = nn.Conv2d(3, cfg.dim, kernel_size=cfg.patch_size, stride=cfg.patch_size)
        self.pos_embed = nn.Parameter(torch.zeros(1, n_patches, cfg.dim))
        self.patch_drop = patch_drop
        self.blocks = nn.ModuleList(
            Block(cfg.dim, cfg.heads, cfg.mlp_ratio, drop_path=stochastic_depth) for _ in range(cfg.depth)
        )
        self.norm = nn.LayerNorm(cfg.dim)
        self.head = nn.Linear(cfg.dim, cfg.n_classes)
        nn.init.trunc_normal_(self.pos_embed, std=0.02)
        #: tokens entering the final norm, kept when cam_mode is on
        self.last_tokens = None
        self.cam_mode = False

    def forward(self, x):
        tokens = self.patch_embed(x).flatten(2).transpose(1, 2)
        tokens = tokens + self.pos_embed
        if self.training and self.patch_drop > 0.0:
            n = tokens.shape[1]
            keep = max(1, int(round(n * (1.0 - self.patch_drop))))
            idx, _ = torch.sort(torch.randperm(n, device=tokens.device)[:keep])
            tokens = tokens[:, idx]
        for block in self.blocks:
            tokens = block(tokens)
        if self.cam_mode:
            tokens.retain_grad()
            self.last_tokens = tokens
        # mean pooling keeps every patch token on the gradient path, which
        # is what makes last-layer attribution maps informative
        return self.head(self.norm(tokens).mean(dim=1))

    def parameter_groups(self, base_lr: float, decay: float, weight_decay: float):
        """Layer-wise learning-rate decay: the head keeps base_lr and each
        step toward the embedding multiplies the rate by ``decay``."""
        layers = [
            [self.head, self.norm],
            *[[block] for block in reversed(self.blocks)],
            [self.patch_embed],
        ]
        groups = []
        for i, modules in enumerate(layers):
            params = [p for m in modules for p in m.parameters() if p.requires_grad]
            groups.append({"params": params, "lr": base_lr * decay**i, "weight_decay": weight_decay})
        groups.append(
            {"params": [self.pos_embed], "lr": base_lr * decay ** len(layers), "weight_decay": 0.0}
        )
        return groups
