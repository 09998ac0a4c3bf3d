"""Dataset construction.

build_mois turns any COCO-format annotation file into multi-object
samples: one sample per (image, category) pair with at least two masks
surviving the area filter (area < min_area is dropped), an exemplar mask
chosen uniformly at random, and simulated exemplar clicks (k-medoids
positives, band-sampled negatives).

synth_shapes generates a desk-scale corpus of colored shapes (disk,
square, triangle) with exact masks, emitted in the same COCO format so
build_mois consumes it unchanged.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image as PILImage
from PIL import ImageDraw

from .geometry import NEGATIVE, Click, ClickSet, GeometryError, rle_decode, rle_encode
from .models import ExemplarTarget
from .simulate import (
    NEGATIVE_BAND_PX,
    SimulationConstraints,
    _place_spaced,
    kmedoids_positive_clicks,
)
from .training import TrainSample

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
DEFAULT_MIN_AREA = 400
CATEGORY_NAMES = {1: "disk", 2: "square", 3: "triangle"}


@dataclass
class MoisSample:
    image_id: int
    category_id: int
    height: int
    width: int
    exemplar_mask: np.ndarray
    exemplar_clicks: ClickSet
    all_masks: list  # includes the exemplar's mask
    file_name: str | None = None

    @property
    def object_count(self) -> int:
        return len(self.all_masks)

    def union_mask(self) -> np.ndarray:
        out = np.zeros((self.height, self.width), dtype=bool)
        for m in self.all_masks:
            out |= m
        return out

    def exemplar_target(self) -> ExemplarTarget:
        return ExemplarTarget(
            mask=self.exemplar_mask, clicks=self.exemplar_clicks
        ).freeze()

    def to_json(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "image_id": self.image_id,
            "category_id": self.category_id,
            "height": self.height,
            "width": self.width,
            "file_name": self.file_name,
            "exemplar_mask": rle_encode(self.exemplar_mask),
            "exemplar_clicks": self.exemplar_clicks.to_json(),
            "all_masks": [rle_encode(m) for m in self.all_masks],
        }

    @staticmethod
    def from_json(d: dict) -> "MoisSample":
        return MoisSample(
            image_id=d["image_id"],
            category_id=d["category_id"],
            height=d["height"],
            width=d["width"],
            file_name=d.get("file_name"),
            exemplar_mask=rle_decode(d["exemplar_mask"]),
            exemplar_clicks=ClickSet.from_json(d["exemplar_clicks"]),
            all_masks=[rle_decode(m) for m in d["all_masks"]],
        )


def _rasterize_polygons(polygons, height, width) -> np.ndarray:
    img = PILImage.new("1", (width, height), 0)
    draw = ImageDraw.Draw(img)
    for poly in polygons:
        if len(poly) < 6:
            continue
        draw.polygon([(poly[i], poly[i + 1]) for i in range(0, len(poly), 2)], fill=1)
    return np.asarray(img, dtype=bool)


def decode_segmentation(segmentation, height, width) -> np.ndarray:
    if isinstance(segmentation, dict):
        if not isinstance(segmentation.get("counts"), list):
            raise GeometryError("compressed RLE counts are not supported")
        return rle_decode(segmentation)
    if isinstance(segmentation, list):
        return _rasterize_polygons(segmentation, height, width)
    raise GeometryError(f"unrecognized segmentation: {type(segmentation)}")


def _sample_negatives(mask, n_neg, constraints, rng, taken):
    from scipy import ndimage

    dist_out = ndimage.distance_transform_edt(~mask)
    factor = 1.0
    while True:
        margin = max(1.0, constraints.border_margin * factor)
        band = (dist_out >= margin) & (dist_out <= margin + NEGATIVE_BAND_PX)
        cands = np.argwhere(band if band.any() else ~mask)
        pts = list(taken)
        out = []
        ok = True
        for _ in range(n_neg):
            p = _place_spaced(
                cands, pts, constraints.min_pair_distance * factor, rng
            )
            if p is None:
                ok = False
                break
            pts.append(p)
            out.append(p)
        if ok or factor < 1e-4:
            return out
        factor /= 2.0


def simulate_exemplar_clicks(
    mask: np.ndarray,
    n_total: int,
    constraints: SimulationConstraints = SimulationConstraints(),
    rng_seed: int = 0,
) -> ClickSet:
    """Exemplar clicks: positives at k-medoids of the mask, negatives in
    a background band around the object."""
    rng = np.random.default_rng(rng_seed)
    n_pos = int(rng.integers(1, n_total + 1))
    positives = kmedoids_positive_clicks(mask, n_pos, rng_seed=int(rng.integers(2**31)))
    taken = [(c.row, c.col) for c in positives]
    negatives = _sample_negatives(mask, n_total - n_pos, constraints, rng, taken)
    pts = [(c.row, c.col, c.polarity) for c in positives]
    pts += [(r, c, NEGATIVE) for r, c in negatives]
    return ClickSet.from_points(pts)


def build_mois(
    annotations,
    rng_seed: int = 0,
    min_area: int = DEFAULT_MIN_AREA,
    constraints: SimulationConstraints = SimulationConstraints(),
) -> list[MoisSample]:
    """One sample per (image, category) pair with >= 2 masks after the
    area filter. Accepts a COCO-format dict or a path to one."""
    if not isinstance(annotations, dict):
        path = Path(annotations)
        try:
            annotations = json.loads(path.read_text())
        except json.JSONDecodeError as e:
            raise GeometryError(f"malformed annotation file {path}: {e}") from e
    for key in ("images", "annotations", "categories"):
        if key not in annotations:
            raise GeometryError(f"annotation file missing {key!r} section")
    images = {img["id"]: img for img in annotations["images"]}

    grouped: dict[tuple[int, int], list] = {}
    for ann in annotations["annotations"]:
        img = images.get(ann["image_id"])
        if img is None:
            raise GeometryError(f"annotation {ann.get('id')} references unknown image")
        grouped.setdefault((ann["image_id"], ann["category_id"]), []).append(ann)

    samples = []
    for (image_id, category_id) in sorted(grouped):
        img = images[image_id]
        h, w = img["height"], img["width"]
        masks = []
        for ann in sorted(grouped[(image_id, category_id)], key=lambda a: a.get("id", 0)):
            try:
                mask = decode_segmentation(ann["segmentation"], h, w)
            except GeometryError as e:
                log.warning(
                    "skipping annotation %s in image %s: %s", ann.get("id"), image_id, e
                )
                continue
            if int(mask.sum()) < min_area:  # strict: area == min_area is kept
                continue
            masks.append(mask)
        if len(masks) < 2:
            continue
        seed = (rng_seed * 1_000_003 + image_id * 1_009 + category_id) % (2**31)
        rng = np.random.default_rng(seed)
        exemplar_idx = int(rng.integers(len(masks)))
        n_total = int(rng.integers(1, 21))
        clicks = simulate_exemplar_clicks(
            masks[exemplar_idx],
            n_total,
            constraints,
            rng_seed=int(rng.integers(2**31)),
        )
        samples.append(
            MoisSample(
                image_id=image_id,
                category_id=category_id,
                height=h,
                width=w,
                exemplar_mask=masks[exemplar_idx],
                exemplar_clicks=clicks,
                all_masks=masks,
                file_name=img.get("file_name"),
            )
        )
    return samples


def dataset_stats(samples: list[MoisSample]) -> dict:
    if not samples:
        return {"n_samples": 0, "n_images": 0, "mean_objects": 0}
    return {
        "n_samples": len(samples),
        "n_images": len({s.image_id for s in samples}),
        "mean_objects": float(np.mean([s.object_count for s in samples])),
    }


def write_mois_jsonl(samples: list[MoisSample], path) -> None:
    Path(path).write_text(
        "".join(json.dumps(s.to_json()) + "\n" for s in samples)
    )


def read_mois_jsonl(path) -> list[MoisSample]:
    out = []
    for line in Path(path).read_text().splitlines():
        if line.strip():
            out.append(MoisSample.from_json(json.loads(line)))
    return out


# ---------------------------------------------------------------------------
# synthetic shapes corpus


def _shape_mask(kind, size, cy, cx, r):
    rr, cc = np.mgrid[0:size, 0:size]
    if kind == "disk":
        return (rr - cy) ** 2 + (cc - cx) ** 2 <= r * r
    if kind == "square":
        s = int(round(r * 0.85))
        return (np.abs(rr - cy) <= s) & (np.abs(cc - cx) <= s)
    if kind == "triangle":
        # upright triangle with apex at (cy - r, cx)
        v = [(cy - r, cx), (cy + r, cx - r), (cy + r, cx + r)]
        inside = np.ones((size, size), dtype=bool)
        for i in range(3):
            (r1, c1), (r2, c2) = v[i], v[(i + 1) % 3]
            cross = (c2 - c1) * (rr - r1) - (r2 - r1) * (cc - c1)
            inside &= cross <= 0
        return inside
    raise ValueError(kind)


def synth_shapes(
    n_images: int,
    image_size: int = 64,
    rng_seed: int = 0,
    min_instances: int = 2,
    max_instances: int = 6,
    min_area: int | None = None,
    id_offset: int = 0,
):
    """Generate shape images with exact masks.

    Returns (coco, images): a COCO-format annotation dict and a mapping
    image_id -> HxWx3 float image. Shapes of the same category share a
    color within an image, and at least one category appears twice so
    build_mois always finds a sample. min_area defaults to the standard
    400 px scaled by (image_size / 448)^2.
    """
    if n_images < 1:
        raise ValueError("n_images must be >= 1")
    if min_area is None:
        min_area = max(8, int(round(DEFAULT_MIN_AREA * (image_size / 448) ** 2)))
    rng = np.random.default_rng(rng_seed)
    coco = {
        "images": [],
        "annotations": [],
        "categories": [
            {"id": cid, "name": name} for cid, name in CATEGORY_NAMES.items()
        ],
    }
    pixel_images = {}
    ann_id = 1
    r_lo = max(6, int(image_size * 0.14))
    r_hi = max(r_lo + 2, int(image_size * 0.26))
    for i in range(n_images):
        image_id = id_offset + i + 1
        for n_inst in range(int(rng.integers(min_instances, max_instances + 1)), 1, -1):
            # category assignment with a guaranteed repeat
            cats = list(rng.integers(1, 4, size=n_inst))
            cats[1] = cats[0]
            rng.shuffle(cats)
            placed = []
            occupied = np.zeros((image_size, image_size), dtype=bool)
            ok = True
            for cid in cats:
                success = False
                for _ in range(60):
                    r = int(rng.integers(r_lo, r_hi + 1))
                    cy = int(rng.integers(r + 1, image_size - r - 1))
                    cx = int(rng.integers(r + 1, image_size - r - 1))
                    mask = _shape_mask(CATEGORY_NAMES[int(cid)], image_size, cy, cx, r)
                    if int(mask.sum()) < min_area:
                        continue
                    grown = np.zeros_like(mask)
                    pad = 2
                    grown[
                        max(0, cy - r - pad) : cy + r + pad,
                        max(0, cx - r - pad) : cx + r + pad,
                    ] = True
                    if (occupied & grown).any():
                        continue
                    occupied |= grown
                    placed.append((int(cid), mask))
                    success = True
                    break
                if not success:
                    ok = False
                    break
            if ok:
                break
        counts = {}
        for cid, _ in placed:
            counts[cid] = counts.get(cid, 0) + 1
        if len(placed) < 2 or max(counts.values()) < 2:
            # fallback: two disks in opposite quadrants always fit
            r = r_lo
            q = image_size // 4
            placed = [
                (1, _shape_mask("disk", image_size, q, q, r)),
                (1, _shape_mask("disk", image_size, 3 * q, 3 * q, r)),
            ]
        # colors: per-image, shared within a category, separated pairwise
        colors = {}
        for cid in sorted({c for c, _ in placed}):
            for _ in range(50):
                col = rng.uniform(0.15, 1.0, size=3)
                if all(
                    np.abs(col - other).sum() > 0.6 for other in colors.values()
                ):
                    colors[cid] = col
                    break
            else:
                colors[cid] = rng.uniform(0.15, 1.0, size=3)
        bg = rng.uniform(0.0, 0.25, size=3)
        image = np.clip(
            bg[None, None, :]
            + rng.normal(0.0, 0.02, size=(image_size, image_size, 3)),
            0.0,
            1.0,
        ).astype(np.float32)
        for cid, mask in placed:
            noise = rng.normal(0.0, 0.02, size=(int(mask.sum()), 3))
            image[mask] = np.clip(colors[cid][None, :] + noise, 0.0, 1.0)
        pixel_images[image_id] = image
        coco["images"].append(
            {
                "id": image_id,
                "height": image_size,
                "width": image_size,
                "file_name": f"synth_{image_id:05d}.png",
            }
        )
        for cid, mask in placed:
            coco["annotations"].append(
                {
                    "id": ann_id,
                    "image_id": image_id,
                    "category_id": int(cid),
                    "segmentation": rle_encode(mask),
                    "area": int(mask.sum()),
                }
            )
            ann_id += 1
    return coco, pixel_images


def save_synth_dataset(coco, images, out_dir) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for img_meta in coco["images"]:
        arr = (images[img_meta["id"]] * 255).round().astype(np.uint8)
        PILImage.fromarray(arr).save(out_dir / img_meta["file_name"])
    (out_dir / "annotations.json").write_text(json.dumps(coco))


def load_image(path) -> np.ndarray:
    with PILImage.open(path) as img:
        return np.asarray(img.convert("RGB"), dtype=np.float32) / 255.0


def sois_train_samples(coco: dict, images: dict, min_area: int = 1) -> list[TrainSample]:
    """One single-object training sample per annotation."""
    meta = {m["id"]: m for m in coco["images"]}
    out = []
    for ann in coco["annotations"]:
        m = meta[ann["image_id"]]
        mask = decode_segmentation(ann["segmentation"], m["height"], m["width"])
        if int(mask.sum()) < min_area:
            continue
        out.append(TrainSample(image=images[ann["image_id"]], gt=mask))
    return out


def mois_train_samples(
    samples: list[MoisSample], images: dict
) -> list[TrainSample]:
    """Multi-object training samples: target is the union of all
    same-category masks; the golden exemplar rides along frozen."""
    out = []
    for s in samples:
        out.append(
            TrainSample(
                image=images[s.image_id],
                gt=s.union_mask(),
                exemplar=s.exemplar_target(),
                same_category_masks=list(s.all_masks),
                category=s.category_id,
            )
        )
    return out
