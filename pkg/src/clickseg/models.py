"""The two networks and the automatic refinement loop.

SingleObjectNet: image and click-guidance streams through a shared S1
self-attention stack, cross-modality blocks (queries from the image,
keys/values from the clicks), element-wise stream sum, an S2 stack, and
the hierarchical head.

ExemplarPropagationNet: 6-channel exemplar and recall branches through
the shared S1 stack, exemplar-informed query guidance, paired
cross-attention blocks in both directions, channel fusion instead of S2,
and the same head. Its output covers all same-category objects,
including the exemplar's.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import torch
import torch.nn as nn

from .blocks import CrossAttentionBlock, CrossModalityBlock, ModelConfig, PatchEmbed, SelfAttentionBlock
from .exemplar import ExemplarInformedModule
from .fusion import ChannelFusion, SegmentationHead
from .geometry import ClickSet, binarize, compose_guidance, encode_clicks, iou
from .simulate import NoErrorRegion, first_click, next_click


class ProtocolError(ValueError):
    """An interaction-protocol violation (e.g. no positive click)."""


@dataclass(frozen=True)
class ExemplarTarget:
    """A finished object's mask and clicks; immutable once frozen."""

    mask: np.ndarray
    clicks: ClickSet
    frozen: bool = False

    def freeze(self) -> "ExemplarTarget":
        m = np.asarray(self.mask, dtype=bool).copy()
        m.setflags(write=False)
        return replace(self, mask=m, frozen=True)


def _to_tensor(arr: np.ndarray, device, dtype) -> torch.Tensor:
    t = torch.as_tensor(np.ascontiguousarray(arr), device=device, dtype=dtype)
    if t.ndim == 3:  # HxWxC -> 1xCxHxW
        t = t.permute(2, 0, 1).unsqueeze(0)
    return t


class SingleObjectNet(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        self.patch_embed = PatchEmbed(config, in_channels=3)
        self.s1 = nn.ModuleList(
            SelfAttentionBlock(config) for _ in range(config.s1_depth)
        )
        self.cross_modality = nn.ModuleList(
            CrossModalityBlock(config) for _ in range(config.cross_depth)
        )
        self.s2 = nn.ModuleList(
            SelfAttentionBlock(config) for _ in range(config.s2_depth)
        )
        self.head = SegmentationHead(config, num_levels=2)

    def forward(
        self,
        image: torch.Tensor,
        guidance: torch.Tensor,
        trace: dict | None = None,
    ) -> torch.Tensor:
        if not guidance[:, 0].any():
            raise ProtocolError("guidance contains no positive click")
        img_tokens = self.patch_embed(image)
        click_tokens = self.patch_embed(guidance)
        for block in self.s1:  # shared S1 weights across both streams
            img_tokens = block(img_tokens)
            click_tokens = block(click_tokens)
        mid_tap = img_tokens
        fused = img_tokens
        for block in self.cross_modality:
            fused, click_tokens = block(fused, click_tokens)
        merged = fused + click_tokens
        for block in self.s2:
            merged = block(merged)
        if trace is not None:
            trace.update(s1_image=mid_tap, merged=merged)
        size = (image.shape[2], image.shape[3])
        return self.head([merged, mid_tap], size)

    def predict(
        self,
        image: np.ndarray,
        clicks: ClickSet,
        prev_mask: np.ndarray | None = None,
    ) -> np.ndarray:
        """Single-image inference; returns an HxW probability map."""
        device = next(self.parameters()).device
        dtype = next(self.parameters()).dtype
        shape = image.shape[:2]
        pos, neg = encode_clicks(clicks, shape)
        prev = np.zeros(shape, dtype=np.float32) if prev_mask is None else prev_mask
        guidance = compose_guidance(pos, neg, prev)
        with torch.no_grad():
            probs = self.forward(
                _to_tensor(image, device, dtype), _to_tensor(guidance, device, dtype)
            )
        return probs[0].cpu().numpy()


class ExemplarPropagationNet(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        self.patch_embed = PatchEmbed(config, in_channels=6)
        self.s1 = nn.ModuleList(
            SelfAttentionBlock(config) for _ in range(config.s1_depth)
        )
        self.eim = ExemplarInformedModule(config)
        self.cross_recall = nn.ModuleList(
            CrossAttentionBlock(config) for _ in range(config.cross_depth)
        )
        self.cross_exemplar = nn.ModuleList(
            CrossAttentionBlock(config) for _ in range(config.cross_depth)
        )
        self.fusion = ChannelFusion(config.embed_dim)
        self.head = SegmentationHead(config, num_levels=2)

    def forward(
        self,
        image: torch.Tensor,
        recall_guidance: torch.Tensor,
        exemplar_guidance: torch.Tensor,
        exemplar_images: list[np.ndarray],
        exemplar_masks: list[np.ndarray],
        zero_exemplar: bool = False,
        trace: dict | None = None,
    ) -> torch.Tensor:
        if zero_exemplar:
            exemplar_guidance = torch.zeros_like(exemplar_guidance)
        exemplar_in = torch.cat([image, exemplar_guidance], dim=1)
        recall_in = torch.cat([image, recall_guidance], dim=1)
        e_tokens = self.patch_embed(exemplar_in)
        r_tokens = self.patch_embed(recall_in)
        for block in self.s1:
            e_tokens = block(e_tokens)
            r_tokens = block(r_tokens)
        mid_tap = r_tokens
        if zero_exemplar:
            rnf = None
        else:
            rnf, offset = self.eim(image, exemplar_images, exemplar_masks)
            r_tokens = r_tokens + offset
        f_r, f_e = r_tokens, e_tokens
        for block_r, block_e in zip(self.cross_recall, self.cross_exemplar):
            f_r, f_e = block_r(f_r, f_e), block_e(f_e, f_r)
        f_f = self.fusion(f_e, f_r)
        if trace is not None:
            trace.update(
                s1_recall=mid_tap, f_r=f_r, f_e=f_e, f_f=f_f, response=rnf
            )
        size = (image.shape[2], image.shape[3])
        return self.head([f_f, mid_tap], size)

    def predict(
        self,
        image: np.ndarray,
        recall_clicks: ClickSet,
        exemplar: ExemplarTarget,
        prev_mask: np.ndarray | None = None,
        zero_exemplar: bool = False,
    ) -> np.ndarray:
        """Single-image inference against a frozen exemplar; recall clicks
        may be empty (pure propagation). An exemplar with an empty mask
        carries no propagation signal, so it degrades to the zeroed-branch
        path instead of failing."""
        if not exemplar.frozen:
            raise ProtocolError("exemplar must be frozen before propagation")
        if not np.asarray(exemplar.mask, dtype=bool).any():
            zero_exemplar = True
        device = next(self.parameters()).device
        dtype = next(self.parameters()).dtype
        shape = image.shape[:2]
        pos, neg = encode_clicks(recall_clicks, shape)
        prev = np.zeros(shape, dtype=np.float32) if prev_mask is None else prev_mask
        recall_g = compose_guidance(pos, neg, prev)
        epos, eneg = encode_clicks(exemplar.clicks, shape)
        exemplar_g = compose_guidance(
            epos, eneg, np.asarray(exemplar.mask, dtype=np.float32)
        )
        with torch.no_grad():
            probs = self.forward(
                _to_tensor(image, device, dtype),
                _to_tensor(recall_g, device, dtype),
                _to_tensor(exemplar_g, device, dtype),
                [image],
                [np.asarray(exemplar.mask, dtype=bool)],
                zero_exemplar=zero_exemplar,
            )
        return probs[0].cpu().numpy()


@dataclass
class RefinementResult:
    clicks: ClickSet
    iou_per_round: list[float]
    success: bool
    final_mask: np.ndarray

    @property
    def clicks_used(self) -> int:
        return len(self.iou_per_round)

    @property
    def best_so_far(self) -> list[float]:
        out, best = [], 0.0
        for v in self.iou_per_round:
            best = max(best, v)
            out.append(best)
        return out


def predict_with_refinement(
    predict_fn,
    image: np.ndarray,
    gt: np.ndarray,
    max_clicks: int = 20,
    target_iou: float = 0.85,
    rng_seed: int = 0,
    initial_clicks: ClickSet | None = None,
) -> RefinementResult:
    """Automatic evaluation loop: center first click, then error-driven
    clicks until the target IoU or the click budget is reached.

    `predict_fn(image, clicks, prev_mask)` returns a probability map.
    When `initial_clicks` is given it seeds the loop (its prediction is
    round len(initial_clicks)).
    """
    gt = np.asarray(gt, dtype=bool)
    if initial_clicks is not None and len(initial_clicks) > 0:
        clicks = initial_clicks
    else:
        clicks = ClickSet([first_click(gt)])
    prev = None
    ious: list[float] = []
    pred = np.zeros_like(gt)
    while True:
        probs = predict_fn(image, clicks, prev)
        pred = binarize(probs)
        ious.append(iou(pred, gt))
        if ious[-1] >= target_iou or len(clicks) >= max_clicks:
            break
        try:
            clk = next_click(pred, gt, clicks, rng_seed=rng_seed + len(clicks))
        except NoErrorRegion:
            break
        clicks = clicks.appended(clk.row, clk.col, clk.polarity)
        prev = pred.astype(np.float32)
    return RefinementResult(
        clicks=clicks,
        iou_per_round=ious,
        success=ious[-1] >= target_iou,
        final_mask=pred,
    )
