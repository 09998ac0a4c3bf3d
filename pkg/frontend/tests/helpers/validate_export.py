"""Parse an exported COCO document (stdin) through the dataset builder
and report what survived. Used by the end-to-end client test."""

import json
import sys

from clickseg.data import build_mois

coco = json.load(sys.stdin)
samples = build_mois(coco, rng_seed=0, min_area=1)
print(
    json.dumps(
        {
            "ok": True,
            "n_annotations": len(coco["annotations"]),
            "n_samples": len(samples),
            "object_counts": [s.object_count for s in samples],
        }
    )
)
