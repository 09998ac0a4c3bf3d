"""Boot the annotation service with small deterministic models for the
browser-client end-to-end test.

Writes a 32x32 sample PNG into the session directory, then serves on the
given port until killed.
"""

import argparse
from pathlib import Path

import numpy as np
import torch
import uvicorn
from PIL import Image

from clickseg.blocks import ModelConfig
from clickseg.models import ExemplarPropagationNet, SingleObjectNet
from clickseg.service import SessionStore, create_app

SIZE = 32


def main() -> None:
    parser = argparse.ArgumentParser()
    parser.add_argument("--port", type=int, required=True)
    parser.add_argument("--dir", required=True)
    args = parser.parse_args()

    session_dir = Path(args.dir)
    session_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(7)
    arr = (rng.random((SIZE, SIZE, 3)) * 255).astype(np.uint8)
    Image.fromarray(arr).save(session_dir / "sample.png")

    config = ModelConfig(
        image_size=SIZE,
        patch_size=8,
        embed_dim=16,
        num_heads=2,
        s1_depth=1,
        s2_depth=1,
        cross_depth=1,
        eim_channels=8,
        eim_proj_channels=8,
        eim_crop_size=16,
    )
    torch.manual_seed(0)
    single = SingleObjectNet(config).eval()
    multi = ExemplarPropagationNet(config).eval()
    store = SessionStore(session_dir, single, multi)
    app = create_app(store)
    uvicorn.run(app, host="127.0.0.1", port=args.port, log_level="warning")


if __name__ == "__main__":
    main()
