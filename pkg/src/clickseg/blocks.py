"""Transformer primitives: patch embedding, pre-norm self-attention
blocks (the S1/S2 groups), scaled dot-product cross-attention, and the
two-step cross-modality block used by the single-object network.

All blocks are pre-norm with a ReLU FFN (expansion 4) and dropout.
Weights are truncated-normal (sigma 0.02), biases zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import torch
import torch.nn as nn
import torch.nn.functional as F


@dataclass
class ModelConfig:
    image_size: int = 64
    patch_size: int = 8
    embed_dim: int = 128
    num_heads: int = 4
    s1_depth: int = 4
    s2_depth: int = 2
    cross_depth: int = 2
    dropout_rate: float = 0.0
    profile: str = "desk"
    # exemplar-informed module settings
    eim_channels: int = 64
    eim_proj_channels: int = 64
    eim_crop_size: int = 32
    eim_scales: tuple = (0.8, 1.0, 1.2)

    def __post_init__(self):
        if self.image_size % self.patch_size != 0:
            raise ValueError(
                f"image_size {self.image_size} not divisible by patch_size "
                f"{self.patch_size}"
            )
        if self.embed_dim % self.num_heads != 0:
            raise ValueError("embed_dim must be divisible by num_heads")

    @property
    def grid_size(self) -> int:
        return self.image_size // self.patch_size

    @property
    def num_tokens(self) -> int:
        return self.grid_size**2

    @classmethod
    def desk(cls, **overrides) -> "ModelConfig":
        return cls(**overrides)

    @classmethod
    def full_scale(cls, **overrides) -> "ModelConfig":
        # ViT-B split: first six blocks S1, last six S2, three cross blocks
        base = dict(
            image_size=448,
            patch_size=16,
            embed_dim=768,
            num_heads=12,
            s1_depth=6,
            s2_depth=6,
            cross_depth=3,
            profile="full_scale",
            eim_channels=512,
            eim_proj_channels=256,
            eim_crop_size=224,
        )
        base.update(overrides)
        return cls(**base)

    def to_json(self) -> dict:
        d = dict(self.__dict__)
        d["eim_scales"] = list(self.eim_scales)
        return d

    @staticmethod
    def from_json(d: dict) -> "ModelConfig":
        d = dict(d)
        d["eim_scales"] = tuple(d.get("eim_scales", (0.8, 1.0, 1.2)))
        return ModelConfig(**d)


def init_weights(module: nn.Module) -> None:
    for m in module.modules():
        if isinstance(m, (nn.Linear, nn.Conv2d, nn.ConvTranspose2d)):
            nn.init.trunc_normal_(m.weight, std=0.02)
            if m.bias is not None:
                nn.init.zeros_(m.bias)


def _check_finite(x: torch.Tensor, name: str) -> None:
    if not torch.isfinite(x).all():
        raise ValueError(f"non-finite values in {name}")


class PatchEmbed(nn.Module):
    """Non-overlapping patches, linear projection, learned positional
    embedding added after projection."""

    def __init__(self, config: ModelConfig, in_channels: int):
        super().__init__()
        self.config = config
        self.in_channels = in_channels
        self.proj = nn.Conv2d(
            in_channels,
            config.embed_dim,
            kernel_size=config.patch_size,
            stride=config.patch_size,
        )
        self.pos_embed = nn.Parameter(
            torch.zeros(1, config.num_tokens, config.embed_dim)
        )
        init_weights(self)
        nn.init.trunc_normal_(self.pos_embed, std=0.02)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        # x: (B, C, H, W)
        if x.shape[1] != self.in_channels:
            raise ValueError(
                f"expected {self.in_channels} channels, got {x.shape[1]}"
            )
        if x.shape[2] != self.config.image_size or x.shape[3] != self.config.image_size:
            raise ValueError(
                f"expected spatial size {self.config.image_size}, got "
                f"{tuple(x.shape[2:])}"
            )
        tokens = self.proj(x).flatten(2).transpose(1, 2)  # (B, N, D)
        return tokens + self.pos_embed


class MultiHeadAttention(nn.Module):
    def __init__(self, dim: int, num_heads: int, dropout: float = 0.0):
        super().__init__()
        self.num_heads = num_heads
        self.head_dim = dim // num_heads
        self.q_proj = nn.Linear(dim, dim)
        self.k_proj = nn.Linear(dim, dim)
        self.v_proj = nn.Linear(dim, dim)
        self.out_proj = nn.Linear(dim, dim)
        self.dropout = nn.Dropout(dropout)
        init_weights(self)

    def forward(self, q_src, kv_src, return_weights: bool = False):
        b, nq, d = q_src.shape
        nk = kv_src.shape[1]
        h = self.num_heads
        q = self.q_proj(q_src).view(b, nq, h, self.head_dim).transpose(1, 2)
        k = self.k_proj(kv_src).view(b, nk, h, self.head_dim).transpose(1, 2)
        v = self.v_proj(kv_src).view(b, nk, h, self.head_dim).transpose(1, 2)
        scores = q @ k.transpose(-1, -2) / self.head_dim**0.5
        weights = scores.softmax(dim=-1)
        out = self.dropout(weights) @ v
        out = out.transpose(1, 2).reshape(b, nq, d)
        out = self.out_proj(out)
        if return_weights:
            return out, weights
        return out


class FeedForward(nn.Module):
    def __init__(self, dim: int, dropout: float = 0.0, expansion: int = 4):
        super().__init__()
        self.fc1 = nn.Linear(dim, dim * expansion)
        self.fc2 = nn.Linear(dim * expansion, dim)
        self.dropout = nn.Dropout(dropout)
        init_weights(self)

    def forward(self, x):
        return self.fc2(self.dropout(F.relu(self.fc1(x))))


class SelfAttentionBlock(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        d = config.embed_dim
        self.norm1 = nn.LayerNorm(d)
        self.attn = MultiHeadAttention(d, config.num_heads, config.dropout_rate)
        self.norm2 = nn.LayerNorm(d)
        self.ffn = FeedForward(d, config.dropout_rate)

    def forward(self, x: torch.Tensor, return_weights: bool = False):
        _check_finite(x, "self_attention input")
        y = self.norm1(x)
        if return_weights:
            attn, weights = self.attn(y, y, return_weights=True)
        else:
            attn = self.attn(y, y)
        x = x + attn
        x = x + self.ffn(self.norm2(x))
        if return_weights:
            return x, weights
        return x


class CrossAttentionBlock(nn.Module):
    """Queries from one token stream, keys/values from the other, then FFN."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        d = config.embed_dim
        self.norm_q = nn.LayerNorm(d)
        self.norm_kv = nn.LayerNorm(d)
        self.attn = MultiHeadAttention(d, config.num_heads, config.dropout_rate)
        self.norm2 = nn.LayerNorm(d)
        self.ffn = FeedForward(d, config.dropout_rate)

    def forward(self, q_src, kv_src, return_weights: bool = False):
        _check_finite(q_src, "cross_attention queries")
        _check_finite(kv_src, "cross_attention keys/values")
        if q_src.shape[-1] != kv_src.shape[-1]:
            raise ValueError("query/key embedding dims differ")
        if return_weights:
            attn, weights = self.attn(
                self.norm_q(q_src), self.norm_kv(kv_src), return_weights=True
            )
        else:
            attn = self.attn(self.norm_q(q_src), self.norm_kv(kv_src))
        x = q_src + attn
        x = x + self.ffn(self.norm2(x))
        if return_weights:
            return x, weights
        return x


class CrossModalityBlock(nn.Module):
    """Two MHA steps: self-attention over click tokens, then cross-attention
    with queries from image tokens and keys/values from the attended clicks.
    Returns (updated image tokens, updated click tokens)."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.click_self = SelfAttentionBlock(config)
        self.cross = CrossAttentionBlock(config)

    def forward(self, image_tokens, click_tokens):
        clicks = self.click_self(click_tokens)
        fused = self.cross(image_tokens, clicks)
        return fused, clicks
