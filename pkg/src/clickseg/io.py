"""Checkpoint container and model card.

A checkpoint is a .npz archive mapping canonical parameter paths (the
torch state-dict keys) to arrays, with a JSON model card alongside
(<stem>.json) recording the config, model type, profile, and seed.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import torch

from .blocks import ModelConfig
from .models import ExemplarPropagationNet, SingleObjectNet

MODEL_TYPES = {
    "single": SingleObjectNet,
    "multi": ExemplarPropagationNet,
}


def save_model(path, net, model_type: str, seed: int | None = None, extra: dict | None = None) -> None:
    path = Path(path)
    if model_type not in MODEL_TYPES:
        raise ValueError(f"unknown model type {model_type!r}")
    arrays = {k: v.detach().cpu().numpy() for k, v in net.state_dict().items()}
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savez(path, **arrays)
    card = {
        "model_type": model_type,
        "config": net.config.to_json(),
        "profile": net.config.profile,
        "seed": seed,
    }
    if extra:
        card.update(extra)
    card_path = path.with_suffix(".json")
    card_path.write_text(json.dumps(card, indent=2))


def load_model(path):
    """Returns (net, card). The card's config rebuilds the architecture."""
    path = Path(path)
    card = json.loads(path.with_suffix(".json").read_text())
    config = ModelConfig.from_json(card["config"])
    net = MODEL_TYPES[card["model_type"]](config)
    with np.load(path if path.suffix == ".npz" else path.with_suffix(".npz")) as data:
        state = {k: torch.as_tensor(data[k]) for k in data.files}
    net.load_state_dict(state)
    net.eval()
    return net, card
