"""On-disk formats: images, label maps, annotations, datasets and config files.

Dataset layout::

    root/manifest.json
    root/<split>.txt                    one image id per line
    root/<split>/images/<id>.png        8-bit grayscale
    root/<split>/annotations/<id>.json  {"id", "points", "boxes"}
    root/<split>/labels/<id>.png        16-bit instance map
    root/<split>/labels/<id>.txt        instance count
"""

from __future__ import annotations

import dataclasses
import json
from pathlib import Path

import numpy as np
from PIL import Image

from ..labels import Annotation, generate
from .scenes import SceneSpec, synth_scene

SPLITS = ("train", "val", "test")


def write_gray8(path, grid) -> None:
    a = np.clip(np.round(np.asarray(grid, dtype=float) * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(a, mode="L").save(path)


def read_gray8(path) -> np.ndarray:
    with Image.open(path) as im:
        if im.mode != "L":
            im = im.convert("L")
        return np.asarray(im, dtype=np.float64) / 255.0


def write_labels16(path, labels) -> None:
    labels = np.asarray(labels)
    if labels.min(initial=0) < 0 or labels.max(initial=0) > 65535:
        raise ValueError(f"{path}: label values do not fit in 16 bits")
    Image.fromarray(labels.astype(np.uint16)).save(path)


def read_labels16(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im).astype(np.int32)


def write_annotation(path, ann: Annotation) -> None:
    with open(path, "w") as f:
        json.dump(ann.to_json(), f)


def read_annotation(path) -> Annotation:
    with open(path) as f:
        return Annotation.from_json(json.load(f))


def write_label_map(directory, image_id: str, labels, count: int) -> None:
    directory = Path(directory)
    write_labels16(directory / f"{image_id}.png", labels)
    (directory / f"{image_id}.txt").write_text(f"{count}\n")


# --- config files -----------------------------------------------------------------

def read_config(path) -> dict[str, str]:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for n, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{n}: expected key=value, got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def _convert(value: str, default):
    if isinstance(default, bool):
        if value.lower() in ("1", "true", "yes", "on"):
            return True
        if value.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {value!r}")
    if isinstance(default, tuple):
        parts = value.replace(",", " ").split()
        return tuple(type(d)(p) for d, p in zip(default, parts))
    return type(default)(value)


def build(cls, values: dict):
    """Instantiate a config dataclass from string values; unknown keys are ignored."""
    base = cls()
    kwargs = {}
    for f in dataclasses.fields(cls):
        if f.name in values and values[f.name] is not None:
            v = values[f.name]
            kwargs[f.name] = _convert(v, getattr(base, f.name)) if isinstance(v, str) else v
    return cls(**kwargs)


# --- datasets ---------------------------------------------------------------------

def scene_rng(seed: int, split: str, index: int) -> np.random.Generator:
    return np.random.default_rng([seed, SPLITS.index(split) if split in SPLITS else 99, index])


def synth_dataset(root, spec: SceneSpec, counts: dict[str, int], seed: int | None = None) -> dict:
    """Render every split to ``root``. Deterministic for a given spec and seed."""
    seed = spec.seed if seed is None else seed
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    summary = {}
    for split, n in counts.items():
        d = root / split
        for sub in ("images", "annotations", "labels"):
            (d / sub).mkdir(parents=True, exist_ok=True)
        ids = []
        for i in range(n):
            image_id = f"{split}_{i:04d}"
            scene = synth_scene(spec, scene_rng(seed, split, i), image_id)
            write_gray8(d / "images" / f"{image_id}.png", scene.image)
            write_annotation(d / "annotations" / f"{image_id}.json", scene.annotation)
            write_label_map(d / "labels", image_id, scene.gt, scene.count)
            ids.append(image_id)
        (root / f"{split}.txt").write_text("".join(f"{i}\n" for i in ids))
        summary[split] = n
    manifest = {"spec": dataclasses.asdict(spec), "seed": seed, "splits": summary}
    (root / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def split_ids(root, split: str) -> list[str]:
    path = Path(root) / f"{split}.txt"
    if not path.exists():
        raise FileNotFoundError(f"no split manifest {path}")
    return [line.strip() for line in path.read_text().splitlines() if line.strip()]


def load_split(root, split: str, with_labels: bool = True):
    """Return ``(images, annotations, label_maps)``; label maps may be ``None``."""
    d = Path(root) / split
    images, anns, maps = [], [], []
    for image_id in split_ids(root, split):
        images.append(read_gray8(d / "images" / f"{image_id}.png"))
        ann_path = d / "annotations" / f"{image_id}.json"
        if not ann_path.exists():
            raise FileNotFoundError(f"missing annotation {ann_path}")
        anns.append(read_annotation(ann_path))
        lab = d / "labels" / f"{image_id}.png"
        maps.append(read_labels16(lab) if with_labels and lab.exists() else None)
    return images, anns, maps


def training_pairs(images, anns, maps):
    """``(image, binary target)`` pairs; label maps are generated when absent."""
    pairs = []
    for img, ann, lab in zip(images, anns, maps):
        if lab is None:
            lab, _ = generate(ann, *img.shape)
        pairs.append((img, (lab > 0).astype(np.float64)))
    return pairs
