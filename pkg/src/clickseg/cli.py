"""Command-line entry points: dataset generation, MOIS construction,
training, evaluation, the annotation service, and the kernel benchmark."""

from __future__ import annotations

import argparse
import json
from pathlib import Path

import numpy as np


def _cmd_synth(args):
    from .data import save_synth_dataset, synth_shapes

    coco, images = synth_shapes(
        args.n, image_size=args.size, rng_seed=args.seed
    )
    save_synth_dataset(coco, images, args.out)
    print(f"wrote {args.n} images to {args.out}")


def _cmd_build_mois(args):
    from .data import build_mois, dataset_stats, write_mois_jsonl

    samples = build_mois(args.annotations, rng_seed=args.seed, min_area=args.min_area)
    write_mois_jsonl(samples, args.out)
    print(json.dumps(dataset_stats(samples)))


def _load_dataset_dir(data_dir):
    from .data import load_image

    data_dir = Path(data_dir)
    coco = json.loads((data_dir / "annotations.json").read_text())
    images = {
        m["id"]: load_image(data_dir / m["file_name"]) for m in coco["images"]
    }
    return coco, images


def _cmd_train(args):
    import torch

    from .blocks import ModelConfig
    from .data import build_mois, mois_train_samples, sois_train_samples
    from .models import ExemplarPropagationNet, SingleObjectNet
    from .training import TrainConfig, train

    torch.manual_seed(args.seed)
    coco, images = _load_dataset_dir(args.data)
    config = ModelConfig(image_size=args.image_size)
    tcfg = TrainConfig(
        batch_size=args.batch_size,
        lr=args.lr,
        epochs=args.epochs,
        seed=args.seed,
        iterative_clicks_max=args.iterative_clicks,
    )
    if args.model == "single":
        net = SingleObjectNet(config)
        samples = sois_train_samples(coco, images)
    else:
        net = ExemplarPropagationNet(config)
        mois = build_mois(coco, rng_seed=args.seed, min_area=args.min_area)
        samples = mois_train_samples(mois, images)
    n_val = max(1, len(samples) // 10)
    train(
        net,
        samples[n_val:],
        tcfg,
        val_samples=samples[:n_val],
        out_dir=args.out,
    )
    print(f"checkpoints and metrics written to {args.out}")


def _cmd_eval(args):
    from .data import build_mois, decode_segmentation
    from .evaluation import (
        SoisInstance,
        emit_report,
        evaluate_mois_additional,
        evaluate_mois_collective,
        evaluate_sois,
    )
    from .io import load_model

    targets = tuple(float(t) for t in args.targets.split(","))
    coco, images = _load_dataset_dir(args.data)
    net, _card = load_model(args.model)
    if args.regime == "sois":
        meta = {m["id"]: m for m in coco["images"]}
        instances = [
            SoisInstance(
                image=images[a["image_id"]],
                gt=decode_segmentation(
                    a["segmentation"],
                    meta[a["image_id"]]["height"],
                    meta[a["image_id"]]["width"],
                ),
                image_id=a["image_id"],
                object_id=str(a["id"]),
            )
            for a in coco["annotations"]
        ]
        summary = evaluate_sois(
            net.predict, instances, targets, args.max_clicks, args.seed
        )
    else:
        samples = build_mois(coco, rng_seed=args.seed, min_area=args.min_area)

        def multi_predict(image, clicks, exemplar, prev):
            return net.predict(image, clicks, exemplar, prev)

        if args.regime == "mois-additional":
            summary = evaluate_mois_additional(
                multi_predict, samples, images, targets, args.max_clicks, args.seed
            )
        else:
            if not args.single_model:
                raise SystemExit("--single-model is required for mois-collective")
            single_net, _ = load_model(args.single_model)
            summary = evaluate_mois_collective(
                single_net.predict,
                multi_predict,
                samples,
                images,
                targets,
                args.max_clicks,
                rng_seed=args.seed,
            )
    paths = emit_report(summary, args.out)
    print(json.dumps({"noc": summary.noc, "nof": summary.nof, **paths}))


def _cmd_serve(args):
    import uvicorn

    from .io import load_model
    from .service import SessionStore, create_app

    single_net, _ = load_model(args.single_model)
    multi_net, _ = load_model(args.multi_model)
    store = SessionStore(
        args.session_dir, single_net, multi_net, max_image_side=args.max_image_side
    )
    app = create_app(store, static_dir=args.static_dir)
    uvicorn.run(app, host=args.host, port=args.port)


def _cmd_bench(args):
    from .benchmark import format_benchmark, run_benchmark

    print(format_benchmark(run_benchmark(size=args.size, n_clicks=args.clicks)))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="clickseg")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic shapes dataset")
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("build-mois", help="build multi-object samples from COCO annotations")
    p.add_argument("--annotations", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--min-area", type=int, default=400)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_build_mois)

    p = sub.add_parser("train", help="train a model on a dataset directory")
    p.add_argument("--model", choices=["single", "multi"], required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--image-size", type=int, default=64)
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--lr", type=float, default=4e-4)
    p.add_argument("--iterative-clicks", type=int, default=3)
    p.add_argument("--min-area", type=int, default=9)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="run the evaluation protocol")
    p.add_argument("--model", required=True, help="checkpoint (.npz)")
    p.add_argument("--single-model", help="single-object checkpoint (collective regime)")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument(
        "--regime",
        choices=["sois", "mois-collective", "mois-additional"],
        default="sois",
    )
    p.add_argument("--max-clicks", type=int, default=20)
    p.add_argument("--targets", default="0.85,0.90")
    p.add_argument("--min-area", type=int, default=9)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("serve", help="run the annotation service")
    p.add_argument("--single-model", required=True)
    p.add_argument("--multi-model", required=True)
    p.add_argument("--session-dir", default="sessions")
    p.add_argument("--static-dir", default=None)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--max-image-side", type=int, default=256)
    p.set_defaults(func=_cmd_serve)

    p = sub.add_parser("bench", help="compare raster kernel backends")
    p.add_argument("--size", type=int, default=512)
    p.add_argument("--clicks", type=int, default=50)
    p.set_defaults(func=_cmd_bench)

    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    args.func(args)


if __name__ == "__main__":
    main()
