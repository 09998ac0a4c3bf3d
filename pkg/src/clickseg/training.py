"""Loss, augmentation, and the iterative-click training loop.

The loss is a normalized focal loss reconstructed from its usual
convention: per image, -sum((1-p_t)^g * log(p_t)) / sum((1-p_t)^g).
Intermediate iterative-click forward passes run without gradients; only
the final pass backpropagates.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import torch
from scipy import ndimage

from .geometry import (
    NEGATIVE,
    POSITIVE,
    Click,
    ClickSet,
    binarize,
    compose_guidance,
    encode_clicks,
    iou,
)
from .models import ExemplarPropagationNet, ExemplarTarget, SingleObjectNet, _to_tensor
from .simulate import (
    NoErrorRegion,
    SimulationConstraints,
    classify_negative_clicks,
    first_click,
    next_click,
    random_click_simulation,
)


@dataclass
class TrainConfig:
    batch_size: int = 8
    beta1: float = 0.9
    beta2: float = 0.99
    lr: float = 5e-5
    lr_drop_epoch: int = 50
    lr_drop_factor: float = 0.1
    epochs: int = 20
    iterative_clicks_max: int = 3
    focal_gamma: float = 2.0
    flip: bool = True
    rotate: bool = True
    rescale: bool = True
    max_rotation_deg: float = 15.0
    scale_range: tuple = (0.75, 1.25)
    seed: int = 0

    def __post_init__(self):
        if min(self.batch_size, self.epochs, self.lr) <= 0:
            raise ValueError("batch_size, epochs, and lr must be positive")
        if not (0 < self.lr_drop_factor <= 1):
            raise ValueError("lr schedule must be non-increasing")

    def lr_at(self, epoch: int) -> float:
        """Learning rate for a 1-based epoch index."""
        return self.lr * (self.lr_drop_factor if epoch > self.lr_drop_epoch else 1.0)


@dataclass
class TrainSample:
    image: np.ndarray
    gt: np.ndarray  # target mask (union of same-category masks for MOIS)
    exemplar: ExemplarTarget | None = None
    same_category_masks: list = field(default_factory=list)
    category: int | None = None


def nfl_loss(pred: torch.Tensor, gt: torch.Tensor, gamma: float = 2.0) -> torch.Tensor:
    """Normalized focal loss over pixels, normalized per image."""
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {gt.shape}")
    if pred.ndim == 2:
        pred, gt = pred.unsqueeze(0), gt.unsqueeze(0)
    gt = gt.to(pred.dtype)
    p_t = torch.where(gt > 0.5, pred, 1.0 - pred)
    p_t = p_t.clamp(1e-7, 1.0 - 1e-7)
    w = (1.0 - p_t) ** gamma
    num = -(w * torch.log(p_t)).sum(dim=(-2, -1))
    den = w.sum(dim=(-2, -1))
    per_image = torch.where(
        den > 1e-12, num / den.clamp_min(1e-12), torch.zeros_like(num)
    )
    return per_image.mean()


def _transform_clicks(clicks, fn, shape, gt):
    """Apply a coordinate map to clicks, dropping ones that leave the image
    or whose polarity no longer matches the transformed mask."""
    pts = []
    for c in clicks:
        r, col = fn(c.row, c.col)
        if not (0 <= r < shape[0] and 0 <= col < shape[1]):
            continue
        inside = bool(gt[r, col])
        if c.is_positive != inside:
            continue
        pts.append((r, col, c.polarity))
    return pts


def augment(sample: TrainSample, clicks: ClickSet, config: TrainConfig, rng_seed: int):
    """Random flip / rotation / rescale-crop applied consistently to the
    image, every mask, and the click coordinates. Returns (sample, clicks).
    Clicks invalidated by the transform are dropped; if no positive click
    survives, a center click on the transformed target is substituted.
    """
    rng = np.random.default_rng(rng_seed)
    image = sample.image
    masks = [sample.gt] + list(sample.same_category_masks)
    exemplar_mask = sample.exemplar.mask if sample.exemplar else None
    if exemplar_mask is not None:
        masks.append(exemplar_mask)
    masks = [np.asarray(m, dtype=bool) for m in masks]
    h, w = image.shape[:2]
    maps = []  # composed (row, col) -> (row, col) integer maps

    if config.flip and rng.random() < 0.5:
        image = image[:, ::-1].copy()
        masks = [m[:, ::-1].copy() for m in masks]
        maps.append(lambda r, c: (r, w - 1 - c))

    if config.rotate:
        angle = float(rng.uniform(-config.max_rotation_deg, config.max_rotation_deg))
        image = np.clip(
            ndimage.rotate(image, angle, reshape=False, order=1, mode="constant"),
            0.0,
            1.0,
        )
        masks = [
            ndimage.rotate(m, angle, reshape=False, order=0, mode="constant")
            for m in masks
        ]
        cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
        a = math.radians(angle)
        cos_a, sin_a = math.cos(a), math.sin(a)

        def rot(r, c, cos_a=cos_a, sin_a=sin_a, cy=cy, cx=cx):
            dr, dc = r - cy, c - cx
            return (
                int(round(cos_a * dr - sin_a * dc + cy)),
                int(round(sin_a * dr + cos_a * dc + cx)),
            )

        maps.append(rot)

    if config.rescale:
        s = float(rng.uniform(*config.scale_range))
        zi = ndimage.zoom(image, (s, s, 1.0), order=1)
        zm = [ndimage.zoom(m, (s, s), order=0) for m in masks]
        nh, nw = zi.shape[:2]
        if nh >= h:
            r_off = int(rng.integers(0, nh - h + 1))
            c_off = int(rng.integers(0, nw - w + 1))
            image = np.clip(zi[r_off : r_off + h, c_off : c_off + w], 0.0, 1.0)
            masks = [m[r_off : r_off + h, c_off : c_off + w] for m in zm]
            maps.append(lambda r, c, s=s, ro=r_off, co=c_off: (
                int(round(r * s)) - ro, int(round(c * s)) - co))
        else:
            r_off = int(rng.integers(0, h - nh + 1))
            c_off = int(rng.integers(0, w - nw + 1))
            image = np.zeros((h, w, 3), dtype=image.dtype)
            image[r_off : r_off + nh, c_off : c_off + nw] = np.clip(zi, 0.0, 1.0)
            padded = []
            for m in zm:
                full = np.zeros((h, w), dtype=bool)
                full[r_off : r_off + nh, c_off : c_off + nw] = m
                padded.append(full)
            masks = padded
            maps.append(lambda r, c, s=s, ro=r_off, co=c_off: (
                int(round(r * s)) + ro, int(round(c * s)) + co))

    def composed(r, c):
        for fn in maps:
            r, c = fn(r, c)
        return r, c

    gt = masks[0]
    pts = _transform_clicks(clicks, composed, (h, w), gt)
    if gt.any() and not any(p[2] == POSITIVE for p in pts):
        fc = first_click(gt)
        pts.insert(0, (fc.row, fc.col, POSITIVE))
    new_clicks = ClickSet.from_points(pts)

    others = masks[1 : 1 + len(sample.same_category_masks)]
    exemplar = sample.exemplar
    if exemplar is not None:
        e_pts = _transform_clicks(
            exemplar.clicks, composed, (h, w), masks[-1]
        )
        e_mask = masks[-1]
        if e_mask.any() and not any(p[2] == POSITIVE for p in e_pts):
            fc = first_click(e_mask)
            e_pts.insert(0, (fc.row, fc.col, POSITIVE))
        exemplar = ExemplarTarget(
            mask=e_mask, clicks=ClickSet.from_points(e_pts)
        ).freeze()
    new_sample = replace(
        sample,
        image=np.ascontiguousarray(image, dtype=np.float32),
        gt=gt,
        same_category_masks=others,
        exemplar=exemplar,
    )
    return new_sample, new_clicks


def merged_recall_clicks(
    recall_clicks: ClickSet, exemplar: ExemplarTarget, other_masks: list
) -> ClickSet:
    """Recall guidance clicks for the multi-object net: the new clicks plus
    the exemplar's true negatives. Pseudo negatives (exemplar negatives
    landing inside other same-category objects) are excluded."""
    part = classify_negative_clicks(
        ClickSet.from_points(
            [(c.row, c.col, NEGATIVE) for c in exemplar.clicks.negatives]
        ),
        exemplar.mask,
        other_masks,
    )
    pts = [(c.row, c.col, c.polarity) for c in recall_clicks]
    pts += [(c.row, c.col, NEGATIVE) for c in part.true]
    return ClickSet.from_points(pts)


def _forward_single(net: SingleObjectNet, sample, clicks, prev):
    device = next(net.parameters()).device
    dtype = next(net.parameters()).dtype
    shape = sample.image.shape[:2]
    pos, neg = encode_clicks(clicks, shape)
    prev = np.zeros(shape, dtype=np.float32) if prev is None else prev
    g = compose_guidance(pos, neg, prev)
    return net(
        _to_tensor(sample.image, device, dtype), _to_tensor(g, device, dtype)
    )[0]


def _forward_multi(net: ExemplarPropagationNet, sample, clicks, prev):
    device = next(net.parameters()).device
    dtype = next(net.parameters()).dtype
    shape = sample.image.shape[:2]
    other_masks = [
        m
        for m in sample.same_category_masks
        if not np.array_equal(np.asarray(m, dtype=bool), sample.exemplar.mask)
    ]
    guidance_clicks = merged_recall_clicks(clicks, sample.exemplar, other_masks)
    pos, neg = encode_clicks(guidance_clicks, shape)
    prev = np.zeros(shape, dtype=np.float32) if prev is None else prev
    recall_g = compose_guidance(pos, neg, prev)
    epos, eneg = encode_clicks(sample.exemplar.clicks, shape)
    exemplar_g = compose_guidance(
        epos, eneg, np.asarray(sample.exemplar.mask, dtype=np.float32)
    )
    return net(
        _to_tensor(sample.image, device, dtype),
        _to_tensor(recall_g, device, dtype),
        _to_tensor(exemplar_g, device, dtype),
        [sample.image],
        [np.asarray(sample.exemplar.mask, dtype=bool)],
    )[0]


def iterative_training_step(
    model, sample: TrainSample, config: TrainConfig, rng_seed: int
) -> torch.Tensor | None:
    """One sample's loss under the iterative-click scheme: simulate the
    starting clicks, add up to iterative_clicks_max corrective clicks from
    gradient-free passes, then one final pass with gradients.

    Returns None for degenerate samples (empty target)."""
    gt = np.asarray(sample.gt, dtype=bool)
    if not gt.any():
        return None
    rng = np.random.default_rng(rng_seed)
    is_multi = isinstance(model, ExemplarPropagationNet)
    forward = _forward_multi if is_multi else _forward_single
    if is_multi:
        clicks = ClickSet()  # recall clicks start empty (pure propagation)
    else:
        clicks = ClickSet([first_click(gt)])
        if rng.random() < 0.5:
            sim = random_click_simulation(
                gt,
                int(rng.integers(1, 4)),
                SimulationConstraints(),
                rng_seed=int(rng.integers(2**31)),
            )
            clicks = ClickSet.from_points(
                [(c.row, c.col, c.polarity) for c in clicks]
                + [(c.row, c.col, c.polarity) for c in sim.negatives]
            )
    n_iter = int(rng.integers(0, config.iterative_clicks_max + 1))
    prev = None
    for _ in range(n_iter):
        with torch.no_grad():
            probs = forward(model, sample, clicks, prev)
        pred = binarize(probs.cpu().numpy())
        try:
            clk = next_click(pred, gt, clicks, rng_seed=int(rng.integers(2**31)))
        except NoErrorRegion:
            break
        clicks = clicks.appended(clk.row, clk.col, clk.polarity)
        prev = pred.astype(np.float32)
    probs = forward(model, sample, clicks, prev)
    device = probs.device
    target = torch.as_tensor(gt, device=device, dtype=probs.dtype)
    return nfl_loss(probs, target, gamma=config.focal_gamma)


def _validation_miou(model, val_samples) -> float:
    vals = []
    with torch.no_grad():
        for s in val_samples:
            gt = np.asarray(s.gt, dtype=bool)
            if not gt.any():
                continue
            if isinstance(model, ExemplarPropagationNet):
                probs = model.predict(s.image, ClickSet(), s.exemplar)
            else:
                probs = model.predict(s.image, ClickSet([first_click(gt)]))
            vals.append(iou(binarize(probs), gt))
    return float(np.mean(vals)) if vals else 0.0


def train(
    model,
    dataset: list[TrainSample],
    config: TrainConfig,
    val_samples: list[TrainSample] | None = None,
    out_dir=None,
    log_every: int = 10,
):
    """Epoch loop with the step lr schedule; returns (model, metrics list).

    When out_dir is given, writes metrics.jsonl there and keeps the best
    checkpoint (by validation mIoU after one click) as best.npz.
    """
    from .io import save_model  # local import to avoid a cycle

    torch.manual_seed(config.seed)
    opt = torch.optim.Adam(
        model.parameters(), lr=config.lr, betas=(config.beta1, config.beta2)
    )
    rng = np.random.default_rng(config.seed)
    metrics: list[dict] = []
    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
    log_path = out_dir / "metrics.jsonl" if out_dir is not None else None
    model_type = "multi" if isinstance(model, ExemplarPropagationNet) else "single"
    best_miou = -1.0
    step = 0
    skipped = 0
    for epoch in range(1, config.epochs + 1):
        lr = config.lr_at(epoch)
        for group in opt.param_groups:
            group["lr"] = lr
        order = rng.permutation(len(dataset))
        model.train()
        for start in range(0, len(dataset), config.batch_size):
            batch = [dataset[i] for i in order[start : start + config.batch_size]]
            losses = []
            for sample in batch:
                seed = int(rng.integers(2**31))
                aug_sample, _ = augment(sample, ClickSet(), config, seed)
                loss = iterative_training_step(model, aug_sample, config, seed)
                if loss is None:
                    skipped += 1
                    continue
                losses.append(loss)
            if not losses:
                continue
            loss = torch.stack(losses).mean()
            if not torch.isfinite(loss):
                if out_dir is not None:
                    save_model(out_dir / "diverged.npz", model, model_type)
                raise RuntimeError(f"non-finite loss at epoch {epoch} step {step}")
            opt.zero_grad()
            loss.backward()
            opt.step()
            step += 1
            if step % log_every == 0 or start + config.batch_size >= len(dataset):
                entry = {
                    "epoch": epoch,
                    "step": step,
                    "loss": float(loss.detach()),
                    "lr": lr,
                    "val_miou": None,
                }
                metrics.append(entry)
        if val_samples:
            model.eval()
            miou = _validation_miou(model, val_samples)
            metrics.append(
                {"epoch": epoch, "step": step, "loss": None, "lr": lr, "val_miou": miou}
            )
            if out_dir is not None and miou > best_miou:
                best_miou = miou
                save_model(out_dir / "best.npz", model, model_type, seed=config.seed)
        if out_dir is not None:
            # checkpoint every epoch so an interrupted run can resume
            save_model(out_dir / "last.npz", model, model_type, seed=config.seed,
                       extra={"epochs_completed": epoch})
        if log_path is not None:
            log_path.write_text(
                "\n".join(json.dumps(m) for m in metrics) + "\n"
            )
    model.eval()
    if out_dir is not None:
        save_model(out_dir / "last.npz", model, model_type, seed=config.seed,
                   extra={"epochs_completed": config.epochs})
    return model, metrics
