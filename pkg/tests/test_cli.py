import json
from pathlib import Path

import numpy as np
import pytest
from click.testing import CliRunner

from urbanform.cli import main
from urbanform.raster import GeoRaster, decode_labels, load_raster, save_raster

from conftest import blocky_labels


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def dataset_files(tmp_path, rng):
    labels = blocky_labels(rng, 513, 1026, block=171)
    image = GeoRaster(decode_labels(labels).data)
    img_path = save_raster(image, tmp_path / "mosaic.png")
    lbl_path = save_raster(labels, tmp_path / "gt.png")
    return img_path, lbl_path, tmp_path


def run_ok(runner, args):
    result = runner.invoke(main, args, catch_exceptions=False)
    assert result.exit_code == 0, result.output
    return result


class TestWeights:
    def test_prints_weights_json(self, runner, dataset_files):
        _, lbl_path, _ = dataset_files
        result = run_ok(runner, ["weights", "--labels", str(lbl_path)])
        doc = json.loads(result.output)
        assert set(doc) == {"1", "2", "3", "4"}


class TestGridExportInferEval:
    def test_full_chain(self, runner, dataset_files):
        img_path, lbl_path, tmp = dataset_files
        ds = tmp / "ds"
        run_ok(runner, [
            "grid", "--image", str(img_path), "--labels", str(lbl_path),
            "--out", str(ds), "--split", "0.5",
        ])
        manifest_path = ds / "manifest.json"
        assert manifest_path.exists()
        doc = json.loads(manifest_path.read_text())
        assert doc["windows"]["train"]["overlap"] == 0.7
        assert doc["windows"]["test"]["overlap"] == 0.0
        assert doc["hyperparameters"]["learning_rate"] == 0.007

        before = manifest_path.read_bytes()
        run_ok(runner, ["export", "--manifest", str(manifest_path)])
        assert manifest_path.read_bytes() == before

        preds = tmp / "preds"
        run_ok(runner, [
            "infer", "--manifest", str(manifest_path),
            "--backend", "heuristic", "--out", str(preds),
        ])
        assert sorted(preds.iterdir())

        stitched = tmp / "stitched.png"
        run_ok(runner, [
            "stitch", "--manifest", str(manifest_path),
            "--tiles", str(preds), "--out", str(stitched),
        ])
        out = load_raster(stitched)
        assert (out.width, out.height) == (513, 513)

        report_path = tmp / "report.json"
        result = run_ok(runner, [
            "eval", "--gt", str(lbl_path), "--pred", str(lbl_path),
            "--report", str(report_path),
        ])
        assert "overall accuracy: 100.00%" in result.output
        doc = json.loads(report_path.read_text())
        assert doc["overall_accuracy"] == 1.0

    def test_grid_accepts_rgb_ground_truth(self, runner, dataset_files, rng):
        img_path, _, tmp = dataset_files
        painting = decode_labels(blocky_labels(rng, 513, 1026, block=171))
        rgb_path = save_raster(painting, tmp / "painting.png")
        ds = tmp / "ds_rgb"
        run_ok(runner, [
            "grid", "--image", str(img_path), "--labels", str(rgb_path),
            "--out", str(ds), "--split", "0.5", "--tolerance", "0",
        ])
        assert (ds / "manifest.json").exists()


class TestFetch:
    def test_fetch_writes_mosaic(self, runner, tile_server, tmp_path):
        from urbanform.tilemath import global_pixel_to_latlon

        cfg = tmp_path / "source.json"
        cfg.write_text(json.dumps({
            "url_template": tile_server.url_template,
            "source_id": "scripted",
            "retry": {"max_attempts": 2, "backoff_base_ms": 1},
        }))
        nw = global_pixel_to_latlon(2 * 256, 2 * 256, 3)
        se = global_pixel_to_latlon(3 * 256, 3 * 256, 3)
        out = tmp_path / "mosaic.png"
        run_ok(runner, [
            "fetch", "--bbox", f"{nw.lat},{nw.lon},{se.lat},{se.lon}",
            "--zoom", "3", "--source", str(cfg), "--out", str(out),
            "--cache", str(tmp_path / "cache"),
        ])
        mosaic = load_raster(out)
        assert (mosaic.width, mosaic.height) == (256, 256)
        assert mosaic.transform.zoom == 3


class TestEvalErrors:
    def test_eval_mismatched_sizes(self, runner, dataset_files, rng):
        _, lbl_path, tmp = dataset_files
        other = save_raster(blocky_labels(rng, 100, 100), tmp / "other.png")
        result = runner.invoke(main, ["eval", "--gt", str(lbl_path), "--pred", str(other)])
        assert result.exit_code != 0
