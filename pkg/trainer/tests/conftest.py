"""Trainer test fixtures.

The separable dataset is built with the data-plane toolkit (dev dependency):
imagery is literally the decoded label colors, so a model that learns the
color-to-class mapping can hit near-perfect scores.  The handmade manifest
exercises the wire format without any toolkit involvement.
"""

import json
from pathlib import Path

import numpy as np
import pytest
from PIL import Image


def blocky_labels(rng, width, height, block):
    bw = -(-width // block)
    bh = -(-height // block)
    coarse = rng.integers(0, 5, size=(bh, bw), dtype=np.uint8)
    full = np.repeat(np.repeat(coarse, block, axis=0), block, axis=1)
    return full[:height, :width]


PALETTE = {
    0: (0, 0, 0),
    1: (255, 0, 0),
    2: (255, 255, 0),
    3: (0, 255, 255),
    4: (0, 0, 255),
}


def decode(classes):
    lut = np.zeros((5, 3), dtype=np.uint8)
    for idx, color in PALETTE.items():
        lut[idx] = color
    return lut[classes]


@pytest.fixture(scope="session")
def separable_dataset(tmp_path_factory):
    """Pipeline-built 513x1710 dataset: 6 train tiles, 1 test tile."""
    from urbanform.pipeline import build_dataset
    from urbanform.raster import GeoRaster, LabelRaster, decode_labels

    rng = np.random.default_rng(7)
    labels = LabelRaster(blocky_labels(rng, 513, 1710, block=171))
    image = GeoRaster(decode_labels(labels).data)
    ds = tmp_path_factory.mktemp("separable") / "ds"
    manifest = build_dataset(image, labels, ds)
    return manifest, ds


@pytest.fixture(scope="session")
def trained_checkpoint(separable_dataset, tmp_path_factory):
    """One shared short training run (5 epochs, elevated learning rate)."""
    import time

    from trainer.train import train

    _, ds = separable_dataset
    out = tmp_path_factory.mktemp("ckpt")
    start = time.monotonic()
    ckpt, log = train(
        ds / "manifest.json",
        out / "model.pt",
        overrides={"epochs": 5, "learning_rate": 0.05},
        batch_size=2,
        seed=0,
        log_path=out / "loss_log.json",
    )
    elapsed = time.monotonic() - start
    return ckpt, log, elapsed


@pytest.fixture(scope="session")
def wire_manifest(tmp_path_factory):
    """Handmade 10-train/2-test manifest, no toolkit involved."""
    rng = np.random.default_rng(11)
    root = tmp_path_factory.mktemp("wire")
    tiles = []
    for role, count in (("train", 10), ("test", 2)):
        (root / role).mkdir()
        for k in range(count):
            classes = blocky_labels(rng, 513, 513, block=57)
            oy, ox = k * 513, 0
            img_rel = f"{role}/{oy}_{ox}_img.png"
            lbl_rel = f"{role}/{oy}_{ox}_lbl.png"
            Image.fromarray(decode(classes)).save(root / img_rel)
            Image.fromarray(classes, mode="L").save(root / lbl_rel)
            tiles.append({"role": role, "origin": [ox, oy],
                          "image": img_rel, "labels": lbl_rel})
    doc = {
        "schema_version": 1,
        "raster": {"width": 513, "height": 513 * 12},
        "split": {"train_fraction": 10 / 12, "orientation": "top-for-train",
                  "train_rows": 513 * 10, "test_rows": 513 * 2},
        "windows": {"train": {"size": 513, "overlap": 0.0, "stride": 513},
                    "test": {"size": 513, "overlap": 0.0, "stride": 513}},
        "classes": [{"index": i, "name": str(i), "color": list(PALETTE[i])}
                    for i in range(5)],
        "class_weights": {"1": 1.6, "2": 0.8, "3": 0.8, "4": 0.8},
        "hyperparameters": {"optimizer": "SGD", "learning_rate": 0.007,
                            "epochs": 26, "num_classes": 5, "crop": 513,
                            "backbone": "resnet", "output_stride": 16},
        "tiles": tiles,
    }
    (root / "manifest.json").write_text(json.dumps(doc, indent=2))
    return root / "manifest.json"
