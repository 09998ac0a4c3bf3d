"""Evaluation protocol: NoC85/NoC90, NoF, NoFI, mIoU@k and mIoU@k+ for
single-object and both multi-object regimes.

Conventions:
  * a failed object contributes max_clicks to NoC;
  * NoC90 dominance (NoC90 >= NoC85) follows from the trajectory rule;
  * per-object scoring in the multi-object regimes uses a nearest-object
    partition of the frame: object o's IoU is computed between its mask
    and the prediction restricted to the pixels nearest to o;
  * collective accounting: exemplar clicks are attributed to the exemplar
    object only; each recall click counts against every recall object
    that has not yet reached the target;
  * the headline mIoU@k+ variant is recall-only; the all-objects variant
    (exemplar included) is reported alongside.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .data import MoisSample
from .geometry import ClickSet, binarize, iou
from .models import ExemplarTarget, predict_with_refinement
from .simulate import NoErrorRegion, first_click, next_click

REPORT_SCHEMA_VERSION = 1


@dataclass
class EvalRecord:
    object_id: str
    image_id: int
    regime: str  # sois | mois_collective | mois_additional
    rounds: list  # [(clicks_used, iou), ...] in click order
    max_clicks: int
    exemplar_clicks_spent: int = 0

    def noc(self, target: float) -> int:
        for clicks, value in self.rounds:
            if value >= target:
                return min(clicks, self.max_clicks)
        return self.max_clicks

    def success(self, target: float) -> bool:
        return any(v >= target for c, v in self.rounds if c <= self.max_clicks)

    def iou_at(self, clicks: int) -> float:
        """IoU after `clicks` clicks, carrying the last round forward."""
        value = 0.0
        for c, v in self.rounds:
            if c <= clicks:
                value = v
            else:
                break
        return value


@dataclass
class EvalSummary:
    regime: str
    max_clicks: int
    targets: tuple
    noc: dict
    nof: dict
    nofi: dict
    n_objects: int
    n_images: int
    miou_curve: list  # mean IoU after k clicks, k = 1..max_clicks
    miou_plus_recall: list = field(default_factory=list)  # k = 0..max-1
    miou_plus_all: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "schema_version": REPORT_SCHEMA_VERSION,
            "regime": self.regime,
            "max_clicks": self.max_clicks,
            "targets": list(self.targets),
            "noc": self.noc,
            "nof": self.nof,
            "nofi": self.nofi,
            "n_objects": self.n_objects,
            "n_images": self.n_images,
            "miou_curve": self.miou_curve,
            "miou_plus_recall": self.miou_plus_recall,
            "miou_plus_all": self.miou_plus_all,
            "metadata": self.metadata,
        }

    @staticmethod
    def from_json(d: dict) -> "EvalSummary":
        return EvalSummary(
            regime=d["regime"],
            max_clicks=d["max_clicks"],
            targets=tuple(d["targets"]),
            noc=d["noc"],
            nof=d["nof"],
            nofi=d["nofi"],
            n_objects=d["n_objects"],
            n_images=d["n_images"],
            miou_curve=d["miou_curve"],
            miou_plus_recall=d["miou_plus_recall"],
            miou_plus_all=d["miou_plus_all"],
            metadata=d["metadata"],
        )


def _summarize(records, regime, targets, max_clicks, extra_meta=None):
    noc, nof, nofi = {}, {}, {}
    for t in targets:
        key = f"{int(round(t * 100))}"
        values = [r.noc(t) for r in records]
        noc[key] = float(np.mean(values)) if values else 0.0
        nof[key] = sum(1 for r in records if not r.success(t))
        failed_images = {r.image_id for r in records if not r.success(t)}
        nofi[key] = len(failed_images)
    curve = [
        float(np.mean([r.iou_at(k) for r in records])) if records else 0.0
        for k in range(1, max_clicks + 1)
    ]
    return EvalSummary(
        regime=regime,
        max_clicks=max_clicks,
        targets=tuple(targets),
        noc=noc,
        nof=nof,
        nofi=nofi,
        n_objects=len(records),
        n_images=len({r.image_id for r in records}),
        miou_curve=curve,
        metadata=dict(extra_meta or {}),
    )


@dataclass
class SoisInstance:
    image: np.ndarray
    gt: np.ndarray
    image_id: int
    object_id: str


def evaluate_sois(
    predict_fn,
    instances: list[SoisInstance],
    targets=(0.85, 0.90),
    max_clicks: int = 20,
    rng_seed: int = 0,
) -> EvalSummary:
    """predict_fn(image, clicks, prev_mask) -> probability map."""
    records = []
    for i, inst in enumerate(instances):
        result = predict_with_refinement(
            predict_fn,
            inst.image,
            inst.gt,
            max_clicks=max_clicks,
            target_iou=max(targets),
            rng_seed=rng_seed + 7919 * i,
        )
        rounds = [(k + 1, v) for k, v in enumerate(result.iou_per_round)]
        records.append(
            EvalRecord(
                object_id=inst.object_id,
                image_id=inst.image_id,
                regime="sois",
                rounds=rounds,
                max_clicks=max_clicks,
            )
        )
    return _summarize(records, "sois", targets, max_clicks)


def object_support_partition(masks: list[np.ndarray]) -> np.ndarray:
    """Label each pixel with the index of the nearest object mask
    (ties -> lowest index)."""
    dists = np.stack(
        [ndimage.distance_transform_edt(~np.asarray(m, dtype=bool)) for m in masks]
    )
    return np.argmin(dists, axis=0)


def per_object_ious(pred: np.ndarray, masks: list[np.ndarray], support=None):
    if support is None:
        support = object_support_partition(masks)
    return [
        iou(pred & (support == i), masks[i]) for i in range(len(masks))
    ]


def _refine_multi(
    multi_predict,
    image,
    exemplar,
    masks,
    exemplar_idx,
    max_clicks,
    targets,
    rng_seed,
):
    """Shared recall refinement against the union of same-category masks.

    Returns (per-object trajectories, exemplar-object trajectory), where a
    trajectory is a list of (recall clicks used, per-object IoU)."""
    union = np.zeros_like(np.asarray(masks[0], dtype=bool))
    for m in masks:
        union = union | np.asarray(m, dtype=bool)
    support = object_support_partition(masks)
    target = max(targets)
    clicks = ClickSet()
    prev = None
    trajectories = [[] for _ in masks]
    for n_clicks in range(0, max_clicks + 1):
        probs = multi_predict(image, clicks, exemplar, prev)
        pred = binarize(probs)
        ious = per_object_ious(pred, masks, support)
        for i, v in enumerate(ious):
            trajectories[i].append((n_clicks, v))
        recall_done = all(
            v >= target for i, v in enumerate(ious) if i != exemplar_idx
        )
        if recall_done or n_clicks == max_clicks:
            break
        try:
            clk = next_click(pred, union, clicks, rng_seed=rng_seed + n_clicks)
        except NoErrorRegion:
            break
        clicks = clicks.appended(clk.row, clk.col, clk.polarity)
        prev = pred.astype(np.float32)
    return trajectories


def evaluate_mois_additional(
    multi_predict,
    samples: list[MoisSample],
    images: dict,
    targets=(0.85, 0.90),
    max_clicks: int = 20,
    rng_seed: int = 0,
) -> EvalSummary:
    """Golden-exemplar regime: the exemplar costs zero clicks; additional
    clicks refine the recall objects. multi_predict(image, clicks,
    exemplar, prev_mask) -> probability map."""
    records = []
    plus_recall = []
    plus_all = []
    for si, sample in enumerate(samples):
        exemplar = sample.exemplar_target()
        if exemplar.mask is None or not exemplar.mask.any():
            raise ValueError(f"sample {sample.image_id} lacks a golden exemplar")
        image = images[sample.image_id]
        masks = [np.asarray(m, dtype=bool) for m in sample.all_masks]
        exemplar_idx = next(
            i for i, m in enumerate(masks) if np.array_equal(m, exemplar.mask)
        )
        trajectories = _refine_multi(
            multi_predict,
            image,
            exemplar,
            masks,
            exemplar_idx,
            max_clicks,
            targets,
            rng_seed + 104729 * si,
        )
        for i, rounds in enumerate(trajectories):
            if i == exemplar_idx:
                continue
            records.append(
                EvalRecord(
                    object_id=f"{sample.image_id}/{sample.category_id}/{i}",
                    image_id=sample.image_id,
                    regime="mois_additional",
                    rounds=rounds,
                    max_clicks=max_clicks,
                )
            )
        recall_curves, all_curves = [], []
        for i, rounds in enumerate(trajectories):
            rec = EvalRecord("", sample.image_id, "", rounds, max_clicks)
            curve = [rec.iou_at(k) for k in range(0, max_clicks)]
            all_curves.append(curve)
            if i != exemplar_idx:
                recall_curves.append(curve)
        if recall_curves:
            plus_recall.append(np.mean(recall_curves, axis=0))
        plus_all.append(np.mean(all_curves, axis=0))
    summary = _summarize(
        records,
        "mois_additional",
        targets,
        max_clicks,
        extra_meta={"accounting": "per-object mean; exemplar excluded from NoC"},
    )
    summary.miou_plus_recall = [float(v) for v in np.mean(plus_recall, axis=0)] if plus_recall else []
    summary.miou_plus_all = [float(v) for v in np.mean(plus_all, axis=0)] if plus_all else []
    return summary


def evaluate_mois_collective(
    single_predict,
    multi_predict,
    samples: list[MoisSample],
    images: dict,
    targets=(0.85, 0.90),
    max_clicks: int = 20,
    exemplar_budget: int = 5,
    min_gain: float = 0.01,
    rng_seed: int = 0,
) -> EvalSummary:
    """End-to-end regime: a random object is first segmented with the
    single-object model (at most `exemplar_budget` clicks, stopping when a
    click improves IoU by less than `min_gain`), frozen as the exemplar,
    then the multi-object model refines the rest."""
    records = []
    for si, sample in enumerate(samples):
        rng = np.random.default_rng(rng_seed + 15485863 * si)
        image = images[sample.image_id]
        masks = [np.asarray(m, dtype=bool) for m in sample.all_masks]
        exemplar_idx = int(rng.integers(len(masks)))
        exemplar_gt = masks[exemplar_idx]

        # phase 1: single-object interaction under the budget rule
        clicks = ClickSet([first_click(exemplar_gt)])
        prev = None
        rounds = []
        pred = np.zeros_like(exemplar_gt)
        while True:
            probs = single_predict(image, clicks, prev)
            pred = binarize(probs)
            value = iou(pred, exemplar_gt)
            rounds.append((len(clicks), value))
            if value >= max(targets) or len(clicks) >= exemplar_budget:
                break
            if len(rounds) >= 2 and rounds[-1][1] - rounds[-2][1] < min_gain:
                break
            try:
                clk = next_click(
                    pred, exemplar_gt, clicks, rng_seed=int(rng.integers(2**31))
                )
            except NoErrorRegion:
                break
            clicks = clicks.appended(clk.row, clk.col, clk.polarity)
            prev = pred.astype(np.float32)
        exemplar = ExemplarTarget(mask=pred, clicks=clicks).freeze()
        below_target = rounds[-1][1] < min(targets)

        records.append(
            EvalRecord(
                object_id=f"{sample.image_id}/{sample.category_id}/{exemplar_idx}",
                image_id=sample.image_id,
                regime="mois_collective",
                rounds=rounds,
                max_clicks=max_clicks,
                exemplar_clicks_spent=len(clicks),
            )
        )

        # phase 2: recall refinement with the frozen (possibly imperfect) exemplar
        trajectories = _refine_multi(
            multi_predict,
            image,
            exemplar,
            masks,
            exemplar_idx,
            max_clicks,
            targets,
            int(rng.integers(2**31)),
        )
        for i, obj_rounds in enumerate(trajectories):
            if i == exemplar_idx:
                continue
            records.append(
                EvalRecord(
                    object_id=f"{sample.image_id}/{sample.category_id}/{i}",
                    image_id=sample.image_id,
                    regime="mois_collective",
                    rounds=obj_rounds,
                    max_clicks=max_clicks,
                    exemplar_clicks_spent=len(clicks),
                )
            )
        _ = below_target  # recorded via the exemplar record's trajectory
    return _summarize(
        records,
        "mois_collective",
        targets,
        max_clicks,
        extra_meta={
            "accounting": (
                "exemplar clicks attributed to the exemplar object only; "
                "recall clicks shared across unsolved recall objects; "
                "NoC normalized per object"
            ),
            "exemplar_budget": exemplar_budget,
            "min_gain": min_gain,
        },
    )


def emit_report(summary: EvalSummary, out_dir) -> dict:
    """Write report.json and miou_curve.csv; returns the file paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    json_path = out_dir / "report.json"
    json_path.write_text(json.dumps(summary.to_json(), indent=2))
    csv_path = out_dir / "miou_curve.csv"
    with open(csv_path, "w", newline="") as f:
        writer = csv.writer(f)
        header = ["clicks", "miou"]
        has_plus = bool(summary.miou_plus_recall)
        if has_plus:
            header += ["extra_clicks", "miou_plus_recall", "miou_plus_all"]
        writer.writerow(header)
        for k in range(summary.max_clicks):
            row = [k + 1, summary.miou_curve[k] if k < len(summary.miou_curve) else ""]
            if has_plus:
                row += [
                    k,
                    summary.miou_plus_recall[k] if k < len(summary.miou_plus_recall) else "",
                    summary.miou_plus_all[k] if k < len(summary.miou_plus_all) else "",
                ]
            writer.writerow(row)
    return {"json": str(json_path), "csv": str(csv_path)}
