"""Command line front end for the mapping pipeline."""

import json
from pathlib import Path

import click
import numpy as np
from PIL import Image

from . import pipeline, tilefetch
from .backends import parse_backend_spec
from .manifest import load_manifest
from .metrics import MetricsReport, confusion
from .raster import (
    DEFAULT_COLOR_TOLERANCE,
    class_histogram,
    class_weights,
    load_raster,
    save_raster,
)
from .tilemath import GeoPoint
from .typology import ColorMap, load_colormap
from .windowing import SplitSpec, WindowSpec, stitch


def _parse_bbox(text):
    parts = [float(p) for p in text.split(",")]
    if len(parts) != 4:
        raise click.BadParameter("expected lat1,lon1,lat2,lon2")
    return GeoPoint(parts[0], parts[1]), GeoPoint(parts[2], parts[3])


def _load_palette(path) -> ColorMap:
    return load_colormap(path) if path else ColorMap()


@click.group()
def main():
    """Map formal/informal urban environments from web tile imagery."""


@main.command()
@click.option("--bbox", required=True, help="lat1,lon1,lat2,lon2 region of interest")
@click.option("--zoom", type=int, required=True)
@click.option("--source", "source_path", type=click.Path(exists=True), required=True,
              help="Tile source config (JSON)")
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.option("--cache", "cache_dir", type=click.Path(), default="cache", show_default=True)
@click.option("--missing", type=click.Choice(["fail", "fill_black"]), default="fail",
              show_default=True)
def fetch(bbox, zoom, source_path, out_path, cache_dir, missing):
    """Fetch tiles covering a bounding box and write the cropped mosaic."""
    corner1, corner2 = _parse_bbox(bbox)
    source = tilefetch.TileSource.from_config(source_path)
    cache = tilefetch.TileCache(cache_dir)
    mosaic = tilefetch.assemble_mosaic(source, corner1, corner2, zoom, cache, missing)
    save_raster(mosaic, out_path)
    click.echo(f"wrote {mosaic.width}x{mosaic.height} mosaic to {out_path}")


@main.command()
@click.option("--image", "image_path", type=click.Path(exists=True), required=True)
@click.option("--labels", "labels_path", type=click.Path(exists=True), required=True)
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.option("--window", type=int, default=513, show_default=True)
@click.option("--overlap", type=float, default=0.7, show_default=True,
              help="Training window overlap fraction")
@click.option("--test-overlap", type=float, default=0.0, show_default=True)
@click.option("--split", "train_fraction", type=float, default=0.7, show_default=True)
@click.option("--weighting", type=click.Choice(["inverse_freq", "median_freq", "none"]),
              default="inverse_freq", show_default=True)
@click.option("--colormap", "colormap_path", type=click.Path(exists=True), default=None,
              help="Palette override JSON")
@click.option("--tolerance", type=int, default=DEFAULT_COLOR_TOLERANCE, show_default=True,
              help="Per-channel tolerance when labels come as an RGB painting")
def grid(image_path, labels_path, out_dir, window, overlap, test_overlap,
         train_fraction, weighting, colormap_path, tolerance):
    """Split, grid and write the training/test tiles plus manifest."""
    from .raster import GeoRaster, LabelRaster, encode_labels

    image = load_raster(image_path)
    labels = load_raster(labels_path)
    palette = _load_palette(colormap_path)
    if isinstance(labels, GeoRaster):
        labels = encode_labels(labels, palette, tolerance)
    elif colormap_path:
        labels = LabelRaster(labels.classes, palette, labels.transform)
    manifest = pipeline.build_dataset(
        image,
        labels,
        out_dir,
        split=SplitSpec(train_fraction),
        train_window=WindowSpec(window, overlap),
        test_window=WindowSpec(window, test_overlap),
        weighting=weighting,
    )
    click.echo(
        f"wrote {len(manifest.entries('train'))} train / "
        f"{len(manifest.entries('test'))} test tiles to {out_dir}"
    )


@main.command()
@click.option("--labels", "labels_path", type=click.Path(exists=True), required=True)
@click.option("--weighting", type=click.Choice(["inverse_freq", "median_freq", "none"]),
              default="inverse_freq", show_default=True)
def weights(labels_path, weighting):
    """Print balance weights for a label raster."""
    labels = load_raster(labels_path)
    w = class_weights(class_histogram(labels), weighting)
    click.echo(json.dumps(w.to_json(), indent=2, sort_keys=True))


@main.command()
@click.option("--manifest", "manifest_path", type=click.Path(exists=True), required=True)
def export(manifest_path):
    """Re-validate and deterministically re-export a dataset manifest."""
    from .manifest import export_manifest

    manifest, dataset_dir = load_manifest(manifest_path)
    path = export_manifest(manifest, dataset_dir)
    click.echo(f"re-exported {path}")


@main.command()
@click.option("--manifest", "manifest_path", type=click.Path(exists=True), required=True)
@click.option("--backend", "backend_spec", required=True,
              help="constant:<class> | heuristic[:<block>] | external:<command>")
@click.option("--out", "out_dir", type=click.Path(), required=True)
def infer(manifest_path, backend_spec, out_dir):
    """Run a segmentation backend over the manifest's test tiles."""
    manifest, dataset_dir = load_manifest(manifest_path)
    backend = parse_backend_spec(backend_spec, manifest.palette)
    predictions = pipeline.run_inference(backend, manifest, dataset_dir, out_dir)
    click.echo(f"wrote {len(predictions)} prediction tiles to {out_dir}")


@main.command("stitch")
@click.option("--manifest", "manifest_path", type=click.Path(exists=True), required=True)
@click.option("--tiles", "tiles_dir", type=click.Path(exists=True), required=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
def stitch_cmd(manifest_path, tiles_dir, out_path):
    """Reassemble prediction tiles into the full test-region raster."""
    manifest, _ = load_manifest(manifest_path)
    tiles_dir = Path(tiles_dir)
    pieces = []
    for entry in manifest.entries("test"):
        path = tiles_dir / Path(entry.image).name
        if not path.exists():
            raise click.ClickException(f"missing prediction tile {path}")
        arr = np.asarray(Image.open(path).convert("L"))
        from .raster import LabelRaster

        pieces.append((entry.origin, LabelRaster(arr, manifest.palette)))
    height = manifest.height - manifest.train_rows
    out = stitch(pieces, manifest.width, height)
    save_raster(out, out_path)
    click.echo(f"wrote stitched {out.width}x{out.height} raster to {out_path}")


@main.command("eval")
@click.option("--gt", "gt_path", type=click.Path(exists=True), required=True)
@click.option("--pred", "pred_path", type=click.Path(exists=True), required=True)
@click.option("--ignore", type=int, default=0, show_default=True)
@click.option("--report", "report_path", type=click.Path(), default=None)
def eval_cmd(gt_path, pred_path, ignore, report_path):
    """Score a prediction raster against ground truth, pixel by pixel."""
    gt = load_raster(gt_path)
    pred = load_raster(pred_path)
    report = MetricsReport.from_matrix(confusion(gt, pred, ignore))
    for line in report.summary_lines():
        click.echo(line)
    if report_path:
        Path(report_path).write_text(
            json.dumps(report.to_json(), indent=2, sort_keys=True) + "\n"
        )
        click.echo(f"wrote {report_path}")


@main.command()
@click.option("--port", type=int, default=8008, show_default=True)
@click.option("--imagery", "imagery_path", type=click.Path(exists=True), required=True,
              help="Mosaic PNG (with .meta.json sidecar) to annotate")
@click.option("--labels", "journal_path", type=click.Path(), required=True,
              help="Append-only annotation journal (created if absent)")
@click.option("--cell-px", type=int, default=None,
              help="Override the 400 m cell size in pixels")
@click.option("--colormap", "colormap_path", type=click.Path(exists=True), default=None)
@click.option("--cache", "cache_dir", type=click.Path(), default=None,
              help="Tile cache to serve under /tiles/")
@click.option("--source", "source_path", type=click.Path(exists=True), default=None,
              help="Tile source config for cache misses")
@click.option("--static", "static_dir", type=click.Path(exists=True), default=None,
              help="Directory with the annotator UI build")
def serve(port, imagery_path, journal_path, cell_px, colormap_path, cache_dir,
          source_path, static_dir):
    """Serve the annotation API (and UI) over a mosaic."""
    from .server import AnnotationServer, AnnotationStore

    mosaic = load_raster(imagery_path)
    store = AnnotationStore(journal_path)
    source = tilefetch.TileSource.from_config(source_path) if source_path else None
    server = AnnotationServer(
        mosaic,
        store,
        palette=_load_palette(colormap_path),
        cell_px=cell_px,
        cache_root=cache_dir,
        source=source,
        static_dir=static_dir,
        port=port,
    )
    click.echo(f"annotation server on http://127.0.0.1:{server.port}")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        server.shutdown()


if __name__ == "__main__":
    main()
