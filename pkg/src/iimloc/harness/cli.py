"""Command line entry point: ``iimloc {synth,genlabels,train,eval,localize,render}``.

Every subcommand accepts ``--config FILE`` with flat ``key=value`` lines;
explicit flags win over the file. Failures print one JSON line to stderr,
``{"error": <type>, "message": <text>}``, and exit with status 1.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from .. import evalx
from ..instances import MIN_AREA, LocalizationResult, read_records, write_json, write_records
from ..labels import generate
from . import io
from .model import ModelState
from .pipeline import evaluate_dataset, localize_image, render_overlay, score_results
from .scenes import SceneSpec
from .train import TrainConfig, train

log = logging.getLogger("iimloc")


def _merged(args, keys) -> dict:
    values = io.read_config(args.config) if getattr(args, "config", None) else {}
    for k in keys:
        v = getattr(args, k, None)
        if v is not None:
            values[k] = v
    return values


def cmd_synth(args) -> None:
    values = _merged(args, ["train", "val", "test"] + [f.name for f in dataclasses.fields(SceneSpec)])
    spec = io.build(SceneSpec, values)
    counts = {"train": int(values.get("train", 200)), "val": int(values.get("val", 50)),
              "test": int(values.get("test", 50))}
    manifest = io.synth_dataset(args.out, spec, counts)
    print(json.dumps(manifest["splits"]))


def cmd_genlabels(args) -> None:
    ann_dir, out = Path(args.annotations), Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    n = 0
    for path in sorted(ann_dir.glob("*.json")):
        ann = io.read_annotation(path)
        if args.images:
            h, w = io.read_gray8(Path(args.images) / f"{ann.image_id}.png").shape
        elif args.size:
            h, w = args.size
        else:
            raise ValueError("genlabels needs --images or --size to know the map size")
        labels, count = generate(ann, h, w, args.source)
        io.write_label_map(out, ann.image_id, labels, count)
        n += 1
    print(json.dumps({"labels": n}))


def cmd_train(args) -> None:
    values = _merged(args, ["epochs", "batch_size", "lr_confidence", "lr_threshold", "lr_layer",
                            "decay", "l1_weight", "augment", "seed"])
    config = io.build(TrainConfig, values)
    mode = args.mode or values.get("mode", "pbm")
    routing = args.routing or values.get("routing", "te+cp")
    threshold = float(args.threshold if args.threshold is not None else values.get("threshold", 0.5))
    channels = int(args.channels if args.channels is not None else values.get("channels", 8))
    images, anns, maps = io.load_split(args.data, "train")
    pairs = io.training_pairs(images, anns, maps)
    val = None
    if (Path(args.data) / "val.txt").exists():
        vi, va, _ = io.load_split(args.data, "val", with_labels=False)
        val = (vi, va)
    state = ModelState.create(mode, threshold, routing, channels, seed=config.seed)
    best, history = train(state, pairs, config, val, args.min_area)
    best.save(args.out)
    if args.log:
        with open(args.log, "w") as f:
            for rec in history:
                f.write(json.dumps(rec, sort_keys=True) + "\n")
    print(json.dumps({"model": str(args.out), "best_epoch": best.meta.get("best_epoch"),
                      "epochs": len(history)}))


def cmd_eval(args) -> None:
    images, anns, _ = io.load_split(args.data, args.split, with_labels=False)
    if args.predictions:
        by_id = {r.image_id: r for r in read_records(args.predictions)}
        missing = [a.image_id for a in anns if a.image_id not in by_id]
        if missing:
            raise ValueError(f"predictions missing for {len(missing)} images, e.g. {missing[0]}")
        results = [by_id[a.image_id] for a in anns]
        metrics, _ = score_results(results, anns)
    else:
        if not args.model:
            raise ValueError("eval needs --model or --predictions")
        model = ModelState.load(args.model)
        metrics, results, _ = evaluate_dataset(images, anns, model, args.min_area)
        if args.records:
            write_records(results, args.records)
    print(evalx.format_report(metrics))
    if args.out:
        evalx.write_report(metrics, args.out)


def _image_paths(inputs) -> list[Path]:
    paths = []
    for p in map(Path, inputs):
        paths.extend(sorted(p.glob("*.png")) if p.is_dir() else [p])
    if not paths:
        raise FileNotFoundError("no input images found")
    return paths


def cmd_localize(args) -> None:
    model = ModelState.load(args.model)
    results = [localize_image(io.read_gray8(p), model, p.stem, args.min_area)
               for p in _image_paths(args.images)]
    if args.out:
        write_records(results, args.out)
    else:
        for r in results:
            print(r.to_record())
    if args.json:
        write_json(results, args.json)


def cmd_render(args) -> None:
    image = io.read_gray8(args.image)
    ann = io.read_annotation(args.annotation)
    if args.model:
        result = localize_image(image, ModelState.load(args.model), ann.image_id, args.min_area)
    elif args.result:
        matches = [r for r in read_records(args.result) if r.image_id == ann.image_id]
        if not matches:
            raise ValueError(f"no record for {ann.image_id} in {args.result}")
        result = matches[0]
    else:
        result = LocalizationResult(ann.image_id, [])
    counts = render_overlay(image, result, ann, args.out, args.scale)
    print(json.dumps(counts))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="iimloc", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="render a synthetic dataset")
    s.add_argument("--out", required=True)
    s.add_argument("--config")
    for name in ("train", "val", "test", "size", "seed"):
        s.add_argument(f"--{name}", type=int)
    for name in ("noise", "clutter", "illumination", "roundness", "crowding", "negative-fraction"):
        s.add_argument(f"--{name}", type=float, dest=name.replace("-", "_"))
    for name in ("heads", "radius", "contrast", "clusters", "background", "peak"):
        s.add_argument(f"--{name}", help="two values, e.g. 2,9")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("genlabels", help="instance maps from annotation files")
    s.add_argument("--annotations", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--images")
    s.add_argument("--size", type=int, nargs=2, metavar=("H", "W"))
    s.add_argument("--source", choices=("auto", "boxes", "points"), default="auto")
    s.set_defaults(func=cmd_genlabels)

    s = sub.add_parser("train", help="train a model on a dataset")
    s.add_argument("--data", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--config")
    s.add_argument("--log")
    s.add_argument("--mode", choices=("fixed", "layer", "ibm", "pbm"))
    s.add_argument("--routing", choices=("te", "te+cp"))
    s.add_argument("--threshold", type=float)
    s.add_argument("--channels", type=int)
    s.add_argument("--min-area", type=int, default=MIN_AREA)
    for name in ("epochs", "batch-size", "seed"):
        s.add_argument(f"--{name}", type=int, dest=name.replace("-", "_"))
    for name in ("lr-confidence", "lr-threshold", "lr-layer", "decay", "l1-weight"):
        s.add_argument(f"--{name}", type=float, dest=name.replace("-", "_"))
    s.add_argument("--augment", choices=("true", "false"))
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", help="score a model or a predictions file on a split")
    s.add_argument("--data", required=True)
    s.add_argument("--split", default="test")
    s.add_argument("--model")
    s.add_argument("--predictions")
    s.add_argument("--records")
    s.add_argument("--out")
    s.add_argument("--min-area", type=int, default=MIN_AREA)
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("localize", help="localize heads in images")
    s.add_argument("--model", required=True)
    s.add_argument("images", nargs="+")
    s.add_argument("--out")
    s.add_argument("--json")
    s.add_argument("--min-area", type=int, default=MIN_AREA)
    s.set_defaults(func=cmd_localize)

    s = sub.add_parser("render", help="draw TP/FN/FP overlay for one image")
    s.add_argument("--image", required=True)
    s.add_argument("--annotation", required=True)
    s.add_argument("--model")
    s.add_argument("--result")
    s.add_argument("--out", required=True)
    s.add_argument("--scale", type=int, default=4)
    s.add_argument("--min-area", type=int, default=MIN_AREA)
    s.set_defaults(func=cmd_render)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except Exception as exc:  # noqa: BLE001 - single machine-readable line for any failure
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
