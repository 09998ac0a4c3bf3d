"""Automatic click generation for training and evaluation.

Three strategies live here:
  * random exemplar clicks (DIOS-style spacing/border constraints, plus a
    k-medoids placement for positives used by the dataset builder);
  * iterative error-driven clicks (largest wrong region after erosion,
    mixing its center with a random near-border point);
  * the pseudo/true partition of exemplar negative clicks for the
    multi-object regime.

Everything is deterministic given an explicit seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .geometry import NEGATIVE, POSITIVE, Click, ClickSet, GeometryError, validate_mask

FOUR_CONNECTED = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)
ERODE_KERNEL = np.ones((3, 3), dtype=bool)
BORDER_BAND_PX = 3  # near-border sampling band for iterative clicks
NEGATIVE_BAND_PX = 40  # width of the background band negatives are drawn from


class NoErrorRegion(Exception):
    """Prediction equals ground truth: there is nothing left to click."""


@dataclass(frozen=True)
class SimulationConstraints:
    min_pair_distance: float = 40.0
    border_margin: float = 20.0
    max_total_clicks: int = 20

    def __post_init__(self):
        if self.min_pair_distance <= 0 or self.border_margin <= 0:
            raise ValueError("distances must be strictly positive")
        if self.max_total_clicks < 1:
            raise ValueError("max_total_clicks must be >= 1")


@dataclass(frozen=True)
class NegativePartition:
    pseudo: ClickSet
    true: ClickSet


class SimulatedClicks(ClickSet):
    """ClickSet annotated with the constraint relaxation that was needed."""

    def __init__(self, clicks, relaxation_factor: float = 1.0):
        super().__init__(clicks)
        self.relaxation_factor = relaxation_factor


def _boundary_distance(mask: np.ndarray) -> np.ndarray:
    """Euclidean distance to the mask boundary; the image border counts
    as boundary (mask is padded with background before the transform)."""
    padded = np.pad(mask, 1)
    dist = ndimage.distance_transform_edt(padded)
    return dist[1:-1, 1:-1]


def first_click(gt: np.ndarray) -> Click:
    """Positive click at the interior point farthest from the boundary,
    ties broken by smallest (row, col)."""
    gt = validate_mask(gt)
    if not gt.any():
        raise GeometryError("first_click requires a nonempty mask")
    dist = _boundary_distance(gt)
    idx = int(np.argmax(dist))  # row-major argmax == lexicographic tie-break
    r, c = np.unravel_index(idx, dist.shape)
    return Click(int(r), int(c), POSITIVE, 0)


def _place_spaced(candidates, chosen, min_dist, rng, forbidden=()):
    """Pick one candidate at pairwise distance >= min_dist from `chosen`."""
    if len(candidates) == 0:
        return None
    cand = candidates
    if chosen:
        pts = np.array(chosen, dtype=np.float64)
        d2 = ((cand[:, None, :] - pts[None, :, :]) ** 2).sum(-1)
        ok = (d2 >= min_dist**2).all(axis=1)
        cand = cand[ok]
    if forbidden:
        bad = np.array(
            [any((p[0] == f[0] and p[1] == f[1]) for f in forbidden) for p in cand]
        )
        cand = cand[~bad]
    if len(cand) == 0:
        return None
    i = int(rng.integers(len(cand)))
    return int(cand[i][0]), int(cand[i][1])


def random_click_simulation(
    gt: np.ndarray,
    n_total: int,
    constraints: SimulationConstraints = SimulationConstraints(),
    rng_seed: int = 0,
) -> SimulatedClicks:
    """Random exemplar clicks: first one positive inside gt, further
    positives inside gt, negatives in a background band near the object.

    When the spacing constraints are infeasible on small masks, the
    pair distance (then the border margin) is halved until placement
    succeeds; the relaxation factor is recorded on the result.
    """
    gt = validate_mask(gt)
    if not gt.any():
        raise GeometryError("random_click_simulation requires a nonempty mask")
    if not (1 <= n_total <= constraints.max_total_clicks):
        raise ValueError(
            f"n_total={n_total} outside [1, {constraints.max_total_clicks}]"
        )
    rng = np.random.default_rng(rng_seed)
    n_pos = int(rng.integers(1, n_total + 1))
    n_neg = n_total - n_pos

    inside = np.argwhere(gt)
    dist_out = ndimage.distance_transform_edt(~gt)  # distance to object

    factor = 1.0
    while True:
        pair_d = constraints.min_pair_distance * factor
        margin = max(1.0, constraints.border_margin * factor)
        band = (dist_out >= margin) & (dist_out <= margin + NEGATIVE_BAND_PX)
        outside = np.argwhere(band)
        if len(outside) == 0:
            outside = np.argwhere(~gt)  # no band fits: anywhere off-object
        attempt_rng = np.random.default_rng(rng_seed + 1)
        chosen: list[tuple[int, int, str]] = []
        pts: list[tuple[int, int]] = []
        ok = True
        for _ in range(n_pos):
            p = _place_spaced(inside, pts, pair_d, attempt_rng)
            if p is None:
                ok = False
                break
            pts.append(p)
            chosen.append((p[0], p[1], POSITIVE))
        if ok:
            for _ in range(n_neg):
                p = _place_spaced(outside, pts, pair_d, attempt_rng)
                if p is None:
                    ok = False
                    break
                pts.append(p)
                chosen.append((p[0], p[1], NEGATIVE))
        if ok:
            clicks = [
                Click(r, c, pol, i) for i, (r, c, pol) in enumerate(chosen)
            ]
            return SimulatedClicks(clicks, relaxation_factor=factor)
        factor /= 2.0
        if factor < 1e-4:
            # pair distance effectively zero; place whatever fits
            clicks = [Click(r, c, pol, i) for i, (r, c, pol) in enumerate(chosen)]
            return SimulatedClicks(clicks, relaxation_factor=factor)


def kmedoids_positive_clicks(gt: np.ndarray, k: int, rng_seed: int = 0) -> ClickSet:
    """k positive clicks at Lloyd-style medoids of the mask pixels."""
    gt = validate_mask(gt)
    pixels = np.argwhere(gt)
    if len(pixels) == 0:
        raise GeometryError("empty mask")
    k = min(k, len(pixels))
    rng = np.random.default_rng(rng_seed)
    medoids = pixels[rng.choice(len(pixels), size=k, replace=False)]
    for _ in range(10):
        d2 = ((pixels[:, None, :] - medoids[None, :, :]) ** 2).sum(-1)
        assign = d2.argmin(axis=1)
        new = medoids.copy()
        for j in range(k):
            members = pixels[assign == j]
            if len(members) == 0:
                continue
            mean = members.mean(axis=0)
            new[j] = members[((members - mean) ** 2).sum(-1).argmin()]
        if (new == medoids).all():
            break
        medoids = new
    order = np.lexsort((medoids[:, 1], medoids[:, 0]))
    return ClickSet(
        Click(int(m[0]), int(m[1]), POSITIVE, i)
        for i, m in enumerate(medoids[order])
    )


def next_click(
    pred: np.ndarray,
    gt: np.ndarray,
    existing: ClickSet = ClickSet(),
    rng_seed: int = 0,
) -> Click:
    """Error-driven click in the largest wrong region.

    The largest 4-connected component of pred XOR gt is eroded (3x3, with
    a 1-pixel survival floor); with probability 1/2 the click is the
    eroded region's deepest interior point, otherwise a random eroded
    point within 3 px of the component border. Positive if the region is
    a false negative, negative if a false positive.
    """
    pred = validate_mask(pred)
    gt = validate_mask(gt, pred.shape)
    error = pred ^ gt
    if not error.any():
        raise NoErrorRegion()
    labels, n = ndimage.label(error, structure=FOUR_CONNECTED)
    areas = ndimage.sum_labels(error, labels, index=np.arange(1, n + 1))
    biggest = int(np.argmax(areas)) + 1  # ties -> lowest label id
    region = labels == biggest
    eroded = ndimage.binary_erosion(region, structure=ERODE_KERNEL)
    if not eroded.any():
        eroded = region
    rng = np.random.default_rng(rng_seed)
    existing_pts = {(c.row, c.col) for c in existing}
    if rng.random() < 0.5:
        dist = _boundary_distance(region)
        dist = np.where(eroded, dist, -1.0)
        idx = int(np.argmax(dist))
        r, c = np.unravel_index(idx, dist.shape)
    else:
        dist = _boundary_distance(region)
        near = eroded & (dist <= BORDER_BAND_PX)
        cands = np.argwhere(near if near.any() else eroded)
        fresh = [p for p in cands if (int(p[0]), int(p[1])) not in existing_pts]
        if fresh:
            cands = np.array(fresh)
        r, c = cands[int(rng.integers(len(cands)))]
    polarity = POSITIVE if gt[r, c] else NEGATIVE
    return Click(int(r), int(c), polarity, len(existing))


def classify_negative_clicks(
    negatives: ClickSet,
    exemplar_mask: np.ndarray,
    same_category_masks: list[np.ndarray],
) -> NegativePartition:
    """Split exemplar negatives into pseudo (inside another same-category
    object) and true (genuine background) clicks."""
    exemplar_mask = validate_mask(exemplar_mask)
    others = [validate_mask(m, exemplar_mask.shape) for m in same_category_masks]
    for c in negatives:
        if c.is_positive:
            raise GeometryError(f"positive click in negative set: {c}")
    pseudo_pts, true_pts = [], []
    for c in negatives:
        if any(m[c.row, c.col] for m in others):
            pseudo_pts.append((c.row, c.col, NEGATIVE))
        else:
            true_pts.append((c.row, c.col, NEGATIVE))
    return NegativePartition(
        pseudo=ClickSet.from_points(pseudo_pts),
        true=ClickSet.from_points(true_pts),
    )
