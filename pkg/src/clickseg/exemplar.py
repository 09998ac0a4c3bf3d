"""Exemplar-informed guidance: crop the exemplar region, extract and
project convolutional features for both the exemplar and the whole image,
correlate exemplar kernels against the image features, softmax-normalize
the response, and turn it into an additive query offset for the recall
branch.

Feature maps are (B, C, H, W) tensors; the raw response is (B, K, H, W)
with one channel per exemplar spatial position (K = H_e * W_e).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .blocks import ModelConfig, init_weights
from .geometry import GeometryError, validate_mask


@dataclass(frozen=True)
class ExemplarCrop:
    crop: np.ndarray  # HxWx3 image region
    scale: float
    source_bbox: tuple[int, int, int, int]  # (row0, col0, row1, col1), end-exclusive


def _scaled_bbox(r0, c0, r1, c1, scale, height, width):
    h, w = r1 - r0, c1 - c0
    dh = int(round(h * scale)) - h
    dw = int(round(w * scale)) - w
    nr0 = r0 - dh // 2
    nr1 = r1 + (dh - dh // 2)
    nc0 = c0 - dw // 2
    nc1 = c1 + (dw - dw // 2)
    return (max(0, nr0), max(0, nc0), min(height, nr1), min(width, nc1))


def crop_exemplar(
    image: np.ndarray,
    mask: np.ndarray,
    scales: tuple[float, ...] = (0.8, 1.0, 1.2),
) -> list[ExemplarCrop]:
    """One crop per scale factor, from the mask's tight bounding box
    expanded about its center and clipped to the image."""
    mask = validate_mask(mask, image.shape[:2])
    if not mask.any():
        raise GeometryError("crop_exemplar requires a nonempty mask")
    rows = np.any(mask, axis=1)
    cols = np.any(mask, axis=0)
    r0, r1 = int(np.argmax(rows)), int(len(rows) - np.argmax(rows[::-1]))
    c0, c1 = int(np.argmax(cols)), int(len(cols) - np.argmax(cols[::-1]))
    out = []
    for s in scales:
        br0, bc0, br1, bc1 = _scaled_bbox(
            r0, c0, r1, c1, s, image.shape[0], image.shape[1]
        )
        out.append(
            ExemplarCrop(
                crop=np.ascontiguousarray(image[br0:br1, bc0:bc1]),
                scale=float(s),
                source_bbox=(br0, bc0, br1, bc1),
            )
        )
    return out


class FeatureExtractor(nn.Module):
    """Three strided conv stages -> 1/8 resolution features, trained
    jointly with the rest of the network."""

    def __init__(self, out_channels: int = 64, in_channels: int = 3):
        super().__init__()
        mid = max(8, out_channels // 4)
        mid2 = max(8, out_channels // 2)
        self.stages = nn.Sequential(
            nn.Conv2d(in_channels, mid, 3, stride=2, padding=1),
            nn.ReLU(),
            nn.Conv2d(mid, mid2, 3, stride=2, padding=1),
            nn.ReLU(),
            nn.Conv2d(mid2, out_channels, 3, stride=2, padding=1),
        )
        # conv stack: kaiming init (the transformer-style 0.02 normal makes
        # the features collapse to the bias and the correlation degenerate)
        for m in self.stages:
            if isinstance(m, nn.Conv2d):
                nn.init.kaiming_normal_(m.weight, nonlinearity="relu")
                nn.init.zeros_(m.bias)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[-1] < 8 or x.shape[-2] < 8:
            raise ValueError(f"input too small for 1/8 extraction: {tuple(x.shape)}")
        return self.stages(x)


def correlate(feat_o_p: torch.Tensor, feat_e_p: torch.Tensor) -> torch.Tensor:
    """Each exemplar position is a 1x1 kernel; R_f[b, k, r, c] is the inner
    product of the image feature at (r, c) with kernel k."""
    if feat_o_p.shape[1] != feat_e_p.shape[1]:
        raise ValueError(
            f"channel mismatch: {feat_o_p.shape[1]} vs {feat_e_p.shape[1]}"
        )
    b, c, he, we = feat_e_p.shape
    kernels = feat_e_p.reshape(b, c, he * we)  # (B, C, K)
    return torch.einsum("bchw,bck->bkhw", feat_o_p, kernels)


def normalize_response(
    r_f: torch.Tensor, h_e: int, w_e: int, c_e: int
) -> torch.Tensor:
    """Scale by 1/sqrt(H_e*W_e*C_e) and softmax along the kernel axis."""
    if not torch.isfinite(r_f).all():
        raise ValueError("non-finite raw response")
    return torch.softmax(r_f / math.sqrt(h_e * w_e * c_e), dim=1)


class ExemplarInformedModule(nn.Module):
    """Full chain: extract -> project -> correlate -> normalize -> guided
    query offset for the recall branch."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        c, cp = config.eim_channels, config.eim_proj_channels
        self.extractor = FeatureExtractor(out_channels=c)
        self.project_image = nn.Conv2d(c, cp, 1)
        self.project_exemplar = nn.Conv2d(c, cp, 1)
        for m in (self.project_image, self.project_exemplar):
            nn.init.kaiming_normal_(m.weight, nonlinearity="linear")
            nn.init.zeros_(m.bias)
        # zero-initialized so the guided query starts as a no-op
        self.query_proj = nn.Linear(1, config.embed_dim)
        nn.init.zeros_(self.query_proj.weight)
        nn.init.zeros_(self.query_proj.bias)

    def exemplar_features(
        self, image: np.ndarray, mask: np.ndarray, device, dtype
    ) -> torch.Tensor:
        """Multi-scale crop features resized to the unit-scale grid and
        averaged, then projected. Returns (1, C_p, H_e, W_e)."""
        crops = crop_exemplar(image, mask, self.config.eim_scales)
        side = self.config.eim_crop_size
        feats = []
        for crop in crops:
            t = torch.as_tensor(crop.crop, device=device, dtype=dtype)
            t = t.permute(2, 0, 1).unsqueeze(0)
            t = F.interpolate(t, size=(side, side), mode="bilinear", align_corners=False)
            feats.append(self.extractor(t))
        base = feats[min(range(len(crops)), key=lambda i: abs(crops[i].scale - 1.0))]
        resized = [
            f if f.shape[-2:] == base.shape[-2:]
            else F.interpolate(f, size=base.shape[-2:], mode="bilinear", align_corners=False)
            for f in feats
        ]
        merged = torch.stack(resized, dim=0).mean(dim=0)
        return self.project_exemplar(merged)

    def response(
        self, image_tensor: torch.Tensor, exemplar_images, exemplar_masks
    ) -> torch.Tensor:
        """Normalized response (B, K, H_o, W_o) for a batch; exemplar
        crops are processed per item (crop shapes differ)."""
        feat_o = self.project_image(self.extractor(image_tensor))
        parts = []
        for i in range(image_tensor.shape[0]):
            feat_e = self.exemplar_features(
                exemplar_images[i], exemplar_masks[i],
                image_tensor.device, image_tensor.dtype,
            )
            r_f = correlate(feat_o[i : i + 1], feat_e)
            parts.append(
                normalize_response(
                    r_f, feat_e.shape[2], feat_e.shape[3], self.config.eim_channels
                )
            )
        return torch.cat(parts, dim=0)

    def guided_query_offset(self, rnf: torch.Tensor) -> torch.Tensor:
        """Reduce over kernels, resample to the token grid, project to the
        embedding dim. Returns (B, N, D) to add to recall queries.

        The reduction is the per-location peak response: the normalized
        response sums to one over kernels, so its mean is constant and
        only the maximum carries matching strength."""
        g = self.config.grid_size
        pooled = rnf.amax(dim=1, keepdim=True)  # (B, 1, H_o, W_o)
        pooled = F.interpolate(
            pooled, size=(g, g), mode="bilinear", align_corners=False
        )
        flat = pooled.flatten(2).transpose(1, 2)  # (B, N, 1)
        return self.query_proj(flat)

    def forward(self, image_tensor, exemplar_images, exemplar_masks):
        rnf = self.response(image_tensor, exemplar_images, exemplar_masks)
        return rnf, self.guided_query_offset(rnf)
