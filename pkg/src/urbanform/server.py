"""Annotation server: 400 m grid cells over a mosaic, journaled labels.

An expert works cell by cell, assigning each a two-axis typology code; the
server derives the collapsed class and color, persists every assignment to
an append-only journal (replayed on startup, last write wins), and can
rasterize the current state into a ground-truth label raster at mosaic
resolution.  Also serves the typology document, cached imagery tiles and
the static annotator UI.
"""

import io
import json
import math
import re
import threading
import time
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import numpy as np
from PIL import Image

from . import tilefetch
from .raster import GeoRaster, LabelRaster, _meta_for
from .typology import (
    BuildingDiversity,
    ColorMap,
    StreetPattern,
    TypologyCode,
    classify_code,
    typology_document,
)

CELL_SIZE_M = 400.0


@dataclass(frozen=True)
class GridGeometry:
    """Annotation cells: squares of ~400 m on the mosaic's pixel grid."""

    width: int
    height: int
    cell_px: int

    @property
    def cells_x(self) -> int:
        return math.ceil(self.width / self.cell_px)

    @property
    def cells_y(self) -> int:
        return math.ceil(self.height / self.cell_px)

    def contains(self, i: int, j: int) -> bool:
        return 0 <= i < self.cells_x and 0 <= j < self.cells_y

    @classmethod
    def for_raster(cls, raster: GeoRaster, cell_px: int | None = None) -> "GridGeometry":
        if cell_px is None:
            if raster.transform is None:
                raise ValueError(
                    "mosaic has no geotransform; pass an explicit cell size"
                )
            cell_px = max(1, round(CELL_SIZE_M / raster.transform.scale_m_per_px))
        return cls(raster.width, raster.height, cell_px)


class AnnotationStore:
    """Journal-backed cell annotations; single writer, consistent reads."""

    def __init__(self, journal_path):
        self.journal_path = Path(journal_path)
        self._lock = threading.Lock()
        self._cells = {}
        if self.journal_path.exists():
            for line in self.journal_path.read_text().splitlines():
                if line.strip():
                    event = json.loads(line)
                    self._cells[(event["i"], event["j"])] = event

    def annotate(self, i, j, diversity, pattern, annotator=None) -> dict:
        code = TypologyCode(BuildingDiversity(int(diversity)), StreetPattern(pattern))
        event = {
            "i": int(i),
            "j": int(j),
            "diversity": int(code.diversity),
            "pattern": code.pattern.value,
            "code": str(code),
            "label": int(classify_code(code)),
            "ts": time.time(),
            "annotator": annotator,
        }
        with self._lock:
            self.journal_path.parent.mkdir(parents=True, exist_ok=True)
            with self.journal_path.open("a") as f:
                f.write(json.dumps(event, sort_keys=True) + "\n")
                f.flush()
            self._cells[(event["i"], event["j"])] = event
        return event

    def get(self, i, j):
        with self._lock:
            return self._cells.get((int(i), int(j)))

    def all(self) -> list:
        with self._lock:
            return sorted(self._cells.values(), key=lambda e: (e["j"], e["i"]))

    def __len__(self):
        with self._lock:
            return len(self._cells)


def rasterize_annotations(store: AnnotationStore, grid: GridGeometry,
                          palette: ColorMap | None = None) -> LabelRaster:
    """Paint annotated cells with their class index; edge cells are clipped."""
    out = np.zeros((grid.height, grid.width), dtype=np.uint8)
    p = grid.cell_px
    for event in store.all():
        x0, y0 = event["i"] * p, event["j"] * p
        out[y0:min(y0 + p, grid.height), x0:min(x0 + p, grid.width)] = event["label"]
    return LabelRaster(out, palette or ColorMap())


_ROUTES = {
    "typology": re.compile(r"^/api/typology$"),
    "grid": re.compile(r"^/api/grid$"),
    "annotations": re.compile(r"^/api/annotations$"),
    "cell": re.compile(r"^/api/cell/(-?\d+)/(-?\d+)$"),
    "export": re.compile(r"^/api/export/labelraster$"),
    "export_meta": re.compile(r"^/api/export/labelraster\.meta\.json$"),
    "tile": re.compile(r"^/tiles/(\d+)/(\d+)/(\d+)\.png$"),
}


class AnnotationServer:
    """HTTP wrapper around a mosaic, an annotation store and a tile cache."""

    def __init__(self, mosaic: GeoRaster, store: AnnotationStore,
                 palette: ColorMap | None = None, cell_px: int | None = None,
                 cache_root=None, source: "tilefetch.TileSource | None" = None,
                 static_dir=None, host="127.0.0.1", port=0):
        self.mosaic = mosaic
        self.store = store
        self.palette = palette or ColorMap()
        self.grid = GridGeometry.for_raster(mosaic, cell_px)
        self.cache_root = Path(cache_root) if cache_root else None
        self.cache = tilefetch.TileCache(cache_root) if cache_root else None
        self.source = source
        self.static_dir = Path(static_dir) if static_dir else None
        server = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args):
                pass

            def do_GET(self):
                server._handle_get(self)

            def do_PUT(self):
                server._handle_put(self)

        self.httpd = ThreadingHTTPServer((host, port), Handler)
        self._thread = None

    @property
    def port(self) -> int:
        return self.httpd.server_address[1]

    def start(self):
        self._thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)
        self._thread.start()
        return self

    def shutdown(self):
        self.httpd.shutdown()
        self.httpd.server_close()
        if self._thread:
            self._thread.join(timeout=5)

    def serve_forever(self):
        self.httpd.serve_forever()

    # -- request handling ------------------------------------------------

    def _send_json(self, handler, doc, status=200):
        payload = json.dumps(doc).encode()
        handler.send_response(status)
        handler.send_header("Content-Type", "application/json")
        handler.send_header("Content-Length", str(len(payload)))
        handler.send_header("Access-Control-Allow-Origin", "*")
        handler.end_headers()
        handler.wfile.write(payload)

    def _send_bytes(self, handler, payload, content_type, status=200):
        handler.send_response(status)
        handler.send_header("Content-Type", content_type)
        handler.send_header("Content-Length", str(len(payload)))
        handler.send_header("Access-Control-Allow-Origin", "*")
        handler.end_headers()
        handler.wfile.write(payload)

    def _grid_doc(self) -> dict:
        t = self.mosaic.transform
        return {
            "width": self.grid.width,
            "height": self.grid.height,
            "cell_size_px": self.grid.cell_px,
            "cell_size_m": CELL_SIZE_M,
            "cells_x": self.grid.cells_x,
            "cells_y": self.grid.cells_y,
            "zoom": t.zoom if t else None,
            "origin_px": [t.origin_px, t.origin_py] if t else None,
            "scale_m_per_px": t.scale_m_per_px if t else None,
        }

    def _handle_get(self, handler):
        path = handler.path.split("?", 1)[0]
        if _ROUTES["typology"].match(path):
            return self._send_json(handler, typology_document(self.palette))
        if _ROUTES["grid"].match(path):
            return self._send_json(handler, self._grid_doc())
        if _ROUTES["annotations"].match(path):
            return self._send_json(handler, {"annotations": self.store.all()})
        m = _ROUTES["cell"].match(path)
        if m:
            i, j = int(m.group(1)), int(m.group(2))
            if not self.grid.contains(i, j):
                return self._send_json(handler, {"error": "cell outside grid"}, 404)
            return self._send_json(
                handler, {"i": i, "j": j, "annotation": self.store.get(i, j)}
            )
        if _ROUTES["export"].match(path):
            labels = rasterize_annotations(self.store, self.grid, self.palette)
            buf = io.BytesIO()
            Image.fromarray(labels.classes, mode="L").save(buf, format="PNG")
            return self._send_bytes(handler, buf.getvalue(), "image/png")
        if _ROUTES["export_meta"].match(path):
            meta = _meta_for(self.mosaic.transform, self.palette, kind="labels")
            return self._send_json(handler, meta)
        m = _ROUTES["tile"].match(path)
        if m:
            return self._handle_tile(handler, *map(int, m.groups()))
        if self.static_dir is not None:
            return self._handle_static(handler, path)
        return self._send_json(handler, {"error": "not found"}, 404)

    def _handle_tile(self, handler, z, x, y):
        if self.cache_root is not None:
            cached = tilefetch.cache_tile_path(
                self.cache_root, self.source.source_id if self.source else "default",
                z, x, y,
            )
            if cached is not None:
                ctype = "image/png" if cached.suffix == ".png" else "image/jpeg"
                return self._send_bytes(handler, cached.read_bytes(), ctype)
        if self.source is not None and self.cache is not None:
            try:
                from .tilemath import TileCoord

                payload = tilefetch.fetch_tile(self.source, TileCoord(x, y, z), self.cache)
                return self._send_bytes(handler, payload, "image/png")
            except tilefetch.FetchError:
                pass
        return self._send_json(handler, {"error": "tile not available"}, 404)

    def _handle_static(self, handler, path):
        rel = path.lstrip("/") or "index.html"
        target = (self.static_dir / rel).resolve()
        if not str(target).startswith(str(self.static_dir.resolve())) or not target.is_file():
            return self._send_json(handler, {"error": "not found"}, 404)
        ctype = {
            ".html": "text/html",
            ".js": "text/javascript",
            ".css": "text/css",
            ".png": "image/png",
            ".json": "application/json",
        }.get(target.suffix, "application/octet-stream")
        return self._send_bytes(handler, target.read_bytes(), ctype)

    def _handle_put(self, handler):
        m = _ROUTES["cell"].match(handler.path.split("?", 1)[0])
        if not m:
            return self._send_json(handler, {"error": "not found"}, 404)
        i, j = int(m.group(1)), int(m.group(2))
        if not self.grid.contains(i, j):
            return self._send_json(handler, {"error": "cell outside grid"}, 404)
        length = int(handler.headers.get("Content-Length", 0))
        try:
            body = json.loads(handler.rfile.read(length) or b"{}")
            diversity = int(body["diversity"])
            pattern = str(body["pattern"]).upper()
            if diversity not in (1, 2, 3, 4) or pattern not in "ABCD" or not pattern:
                raise ValueError
        except (KeyError, TypeError, ValueError):
            return self._send_json(
                handler,
                {"error": "body must be {\"diversity\": 1..4, \"pattern\": \"A\"..\"D\"}"},
                400,
            )
        event = self.store.annotate(i, j, diversity, pattern, body.get("annotator"))
        event = dict(event)
        event["color"] = list(self.palette.color(event["label"]))
        return self._send_json(handler, event)
