"""Channel-embedding fusion of the two cross-attended branches and the
hierarchical segmentation head.

The fusion block is deliberately cheap: concat -> 1x1 -> depth-wise 3x3
-> 1x1 on the main path, plus a 1x1 skip, summed. At D=768 this is
exactly 2,959,104 parameters.
"""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F

from .blocks import ModelConfig, init_weights


def tokens_to_grid(tokens: torch.Tensor, grid: int) -> torch.Tensor:
    b, n, d = tokens.shape
    if n != grid * grid:
        raise ValueError(f"{n} tokens do not form a {grid}x{grid} grid")
    return tokens.transpose(1, 2).reshape(b, d, grid, grid)


def grid_to_tokens(x: torch.Tensor) -> torch.Tensor:
    b, d, h, w = x.shape
    return x.reshape(b, d, h * w).transpose(1, 2)


class ChannelFusion(nn.Module):
    def __init__(self, embed_dim: int):
        super().__init__()
        d = embed_dim
        self.reduce = nn.Conv2d(2 * d, d, 1)
        self.depthwise = nn.Conv2d(d, d, 3, padding=1, groups=d)
        self.mix = nn.Conv2d(d, d, 1)
        self.skip = nn.Conv2d(2 * d, d, 1)
        init_weights(self)

    def forward(self, f_e: torch.Tensor, f_r: torch.Tensor) -> torch.Tensor:
        # f_e, f_r: (B, N, D) token grids of equal shape
        if f_e.shape != f_r.shape:
            raise ValueError(f"fusion input shapes differ: {f_e.shape} vs {f_r.shape}")
        grid = int(f_e.shape[1] ** 0.5)
        x = torch.cat(
            [tokens_to_grid(f_e, grid), tokens_to_grid(f_r, grid)], dim=1
        )
        main = self.mix(self.depthwise(self.reduce(x)))
        return grid_to_tokens(main + self.skip(x))


class SegmentationHead(nn.Module):
    """Per-level channel unification, learned x2 upsampling to a shared
    quarter-resolution grid, concat, 1x1 mixing to one channel, bilinear
    upsampling to the target size, sigmoid."""

    def __init__(self, config: ModelConfig, num_levels: int = 2):
        super().__init__()
        self.config = config
        d = config.embed_dim
        c = max(16, d // 4)
        self.unify = nn.ModuleList(nn.Linear(d, c) for _ in range(num_levels))
        self.upsample = nn.ModuleList(
            nn.ConvTranspose2d(c, c, 2, stride=2) for _ in range(num_levels)
        )
        self.mixer = nn.Conv2d(c * num_levels, 1, 1)
        init_weights(self)

    def forward(
        self, features: list[torch.Tensor], target_size: tuple[int, int]
    ) -> torch.Tensor:
        if len(features) == 0:
            raise ValueError("segmentation head needs at least one feature level")
        if len(features) != len(self.unify):
            raise ValueError(
                f"expected {len(self.unify)} feature levels, got {len(features)}"
            )
        quarter = (target_size[0] // 4, target_size[1] // 4)
        grid = self.config.grid_size
        levels = []
        for feat, unify, up in zip(features, self.unify, self.upsample):
            x = tokens_to_grid(unify(feat), grid)
            x = up(x)
            if x.shape[-2:] != quarter:
                x = F.interpolate(x, size=quarter, mode="bilinear", align_corners=False)
            levels.append(x)
        logits = self.mixer(torch.cat(levels, dim=1))
        logits = F.interpolate(
            logits, size=target_size, mode="bilinear", align_corners=False
        )
        return torch.sigmoid(logits).squeeze(1)
