"""End-to-end orchestration: dataset build, inference dispatch, evaluation.

The chain mirrors the data plane used for training and testing: split the
mosaic and ground truth 70/30 by rows, grid the training region with 70%
overlap and the test region with none, mask imagery with the unrecognized
region, run a backend over the test tiles, stitch the predictions back to
the test region's size and score them against the ground truth with the
ignore class excluded.
"""

import json
from pathlib import Path

import numpy as np
from PIL import Image

from .backends import BackendError, ExternalBackend
from .manifest import (
    DatasetManifest,
    HyperparameterRecord,
    TileEntry,
    export_manifest,
)
from .metrics import MetricsReport, confusion
from .raster import (
    GeoRaster,
    LabelRaster,
    NUM_CLASSES,
    class_histogram,
    class_weights,
    decode_labels,
    load_raster,
    save_raster,
)
from .windowing import (
    CoverageError,
    SplitSpec,
    WindowSpec,
    extract_tiles,
    grid_windows,
    split_train_test,
    stitch,
)


def _tile_name(origin, suffix):
    ox, oy = origin
    return f"{oy}_{ox}_{suffix}.png"


def build_dataset(
    image: GeoRaster,
    labels: LabelRaster,
    out_dir,
    split: SplitSpec | None = None,
    train_window: WindowSpec | None = None,
    test_window: WindowSpec | None = None,
    weighting: str = "inverse_freq",
    hyperparameters: HyperparameterRecord | None = None,
) -> DatasetManifest:
    """Split, grid and write a training/test tile dataset plus its manifest."""
    if (image.height, image.width) != (labels.height, labels.width):
        raise ValueError("image and labels must have equal dimensions")
    split = split or SplitSpec()
    train_window = train_window or WindowSpec()
    test_window = test_window or WindowSpec(overlap=0.0)
    hyperparameters = hyperparameters or HyperparameterRecord()
    out_dir = Path(out_dir)

    train_img, test_img = split_train_test(image, split)
    train_lbl, test_lbl = split_train_test(labels, split)

    entries = []
    for role, img, lbl, window in (
        ("train", train_img, train_lbl, train_window),
        ("test", test_img, test_lbl, test_window),
    ):
        grid = grid_windows(img.width, img.height, window)
        for record in extract_tiles(img, lbl, grid, role):
            img_rel = f"{role}/{_tile_name(record.origin, 'img')}"
            lbl_rel = f"{role}/{_tile_name(record.origin, 'lbl')}"
            save_raster(record.image, out_dir / img_rel)
            save_raster(record.labels, out_dir / lbl_rel)
            entries.append(TileEntry(role, record.origin, img_rel, lbl_rel))

    transform = image.transform
    manifest = DatasetManifest(
        width=image.width,
        height=image.height,
        zoom=transform.zoom if transform else None,
        origin_px=(transform.origin_px, transform.origin_py) if transform else None,
        scale_m_per_px=transform.scale_m_per_px if transform else None,
        split=split,
        train_rows=split.train_rows(image.height),
        train_window=train_window,
        test_window=test_window,
        palette=labels.palette,
        class_weights=class_weights(class_histogram(train_lbl), weighting),
        hyperparameters=hyperparameters,
        tiles=entries,
    )
    export_manifest(manifest, out_dir)
    return manifest


def _load_prediction(path, size, palette) -> LabelRaster:
    img = Image.open(path)
    if img.mode not in ("L", "P"):
        raise BackendError(f"{path}: prediction must be a class-index PNG, got mode {img.mode}")
    arr = np.asarray(img, dtype=np.uint8)
    if arr.shape != (size, size):
        raise BackendError(f"{path}: expected {size}x{size}, got {arr.shape[1]}x{arr.shape[0]}")
    if arr.max(initial=0) >= NUM_CLASSES:
        raise BackendError(f"{path}: class index {int(arr.max())} out of range")
    return LabelRaster(arr, palette)


def run_inference(backend, manifest: DatasetManifest, dataset_dir, outdir) -> dict:
    """Produce one prediction tile per test tile; returns origin -> LabelRaster.

    Predictions are also written to ``outdir`` as class-index PNGs named
    after the tile's image file, the same layout external backends use.
    """
    dataset_dir = Path(dataset_dir)
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    entries = manifest.entries("test")
    if not entries:
        raise ValueError("manifest has no test tiles")

    if isinstance(backend, ExternalBackend):
        backend.run(dataset_dir / "manifest.json", outdir)
    else:
        for entry in entries:
            tile = load_raster(dataset_dir / entry.image)
            pred = backend.predict_tile(tile)
            Image.fromarray(pred.classes, mode="L").save(
                outdir / Path(entry.image).name, format="PNG"
            )

    size = manifest.test_window.size
    predictions = {}
    for entry in entries:
        path = outdir / Path(entry.image).name
        if not path.exists():
            raise BackendError(f"backend wrote no prediction for {entry.image}")
        predictions[entry.origin] = _load_prediction(path, size, manifest.palette)
    return predictions


def stitch_ground_truth(manifest: DatasetManifest, dataset_dir, role="test") -> LabelRaster:
    """Reassemble the ground-truth region for a role from its label tiles."""
    dataset_dir = Path(dataset_dir)
    tiles = []
    for entry in manifest.entries(role):
        if entry.labels is None:
            raise ValueError(f"tile {entry.image} has no labels")
        tiles.append((entry.origin, load_raster(dataset_dir / entry.labels)))
    height = manifest.train_rows if role == "train" else manifest.height - manifest.train_rows
    return stitch(tiles, manifest.width, height)


def evaluate_run(
    manifest: DatasetManifest,
    dataset_dir,
    predictions: dict,
    report_path=None,
    stitched_path=None,
):
    """Stitch test predictions, score against ground truth, write artifacts.

    Returns (MetricsReport, stitched LabelRaster).  ``stitched_path`` gets
    the class-index raster plus an ``_rgb`` decoded twin for inspection.
    """
    entries = manifest.entries("test")
    missing = [e.origin for e in entries if e.origin not in predictions]
    if missing:
        raise CoverageError(f"missing prediction tiles at origins {missing}")

    test_height = manifest.height - manifest.train_rows
    stitched = stitch(
        [(origin, predictions[origin]) for origin in sorted(predictions)],
        manifest.width,
        test_height,
    )
    gt = stitch_ground_truth(manifest, dataset_dir, "test")
    report = MetricsReport.from_matrix(confusion(gt, stitched))

    if report_path is not None:
        Path(report_path).parent.mkdir(parents=True, exist_ok=True)
        Path(report_path).write_text(
            json.dumps(report.to_json(), indent=2, sort_keys=True) + "\n"
        )
    if stitched_path is not None:
        stitched_path = Path(stitched_path)
        save_raster(stitched, stitched_path)
        rgb_path = stitched_path.with_name(stitched_path.stem + "_rgb.png")
        save_raster(decode_labels(stitched), rgb_path)
    return report, stitched
