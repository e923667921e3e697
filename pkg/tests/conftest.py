"""Shared test helpers: synthetic rasters and a scripted local tile server."""

import io
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np
import pytest
from PIL import Image

from urbanform.raster import GeoRaster, LabelRaster
from urbanform.typology import ColorMap


def solid_tile_png(color, size=256) -> bytes:
    arr = np.zeros((size, size, 3), dtype=np.uint8)
    arr[:] = color
    buf = io.BytesIO()
    Image.fromarray(arr).save(buf, format="PNG")
    return buf.getvalue()


def coord_tile_png(x, y, size=256) -> bytes:
    """Tile whose pixels encode their own tile coordinate (for placement checks)."""
    arr = np.zeros((size, size, 3), dtype=np.uint8)
    arr[:, :, 0] = x % 256
    arr[:, :, 1] = y % 256
    xs = np.arange(size, dtype=np.uint8)
    arr[:, :, 2] = xs[np.newaxis, :]  # column ramp, breaks left/right symmetry
    buf = io.BytesIO()
    Image.fromarray(arr).save(buf, format="PNG")
    return buf.getvalue()


def random_labels(rng, width, height, classes=5) -> LabelRaster:
    return LabelRaster(rng.integers(0, classes, size=(height, width), dtype=np.uint8))


def blocky_labels(rng, width, height, block=64) -> LabelRaster:
    """Piecewise-constant labels, the texture annotated ground truth has."""
    bw = -(-width // block)
    bh = -(-height // block)
    coarse = rng.integers(0, 5, size=(bh, bw), dtype=np.uint8)
    full = np.repeat(np.repeat(coarse, block, axis=0), block, axis=1)
    return LabelRaster(full[:height, :width])


class ScriptedTileServer:
    """Local HTTP tile endpoint with per-path scripted responses.

    Paths look like ``/t/{z}/{x}/{y}.png``.  A script is a list of HTTP
    status codes consumed one per request; the terminal 200 serves the
    tile payload.  Unscripted coordinates always 200 with a generated
    coordinate-encoding tile.  Tracks request counts and the maximum
    number of concurrently active requests.
    """

    def __init__(self, handler_delay_s=0.0):
        self.scripts = {}
        self.payloads = {}
        self.requests = []
        self.handler_delay_s = handler_delay_s
        self._lock = threading.Lock()
        self._active = 0
        self.max_active = 0
        server = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args):
                pass

            def do_GET(self):
                server._serve(self)

        self.httpd = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self._thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)

    def start(self):
        self._thread.start()
        return self

    def stop(self):
        self.httpd.shutdown()
        self.httpd.server_close()

    @property
    def url_template(self) -> str:
        host, port = self.httpd.server_address
        return f"http://{host}:{port}/t/{{z}}/{{x}}/{{y}}.png"

    def script(self, z, x, y, statuses, payload=None):
        key = (z, x, y)
        self.scripts[key] = list(statuses)
        if payload is not None:
            self.payloads[key] = payload

    def set_payload(self, z, x, y, payload):
        self.payloads[(z, x, y)] = payload

    def request_count(self, z=None, x=None, y=None) -> int:
        if z is None:
            return len(self.requests)
        return sum(1 for k in self.requests if k == (z, x, y))

    def _serve(self, handler):
        import time

        with self._lock:
            self._active += 1
            self.max_active = max(self.max_active, self._active)
        try:
            if self.handler_delay_s:
                time.sleep(self.handler_delay_s)
            parts = handler.path.strip("/").split("/")
            z, x, y = int(parts[1]), int(parts[2]), int(parts[3].split(".")[0])
            key = (z, x, y)
            with self._lock:
                self.requests.append(key)
                script = self.scripts.get(key)
                status = script.pop(0) if script else 200
            if status != 200:
                handler.send_response(status)
                handler.send_header("Content-Length", "0")
                handler.end_headers()
                return
            payload = self.payloads.get(key) or coord_tile_png(x, y)
            handler.send_response(200)
            handler.send_header("Content-Type", "image/png")
            handler.send_header("Content-Length", str(len(payload)))
            handler.end_headers()
            handler.wfile.write(payload)
        finally:
            with self._lock:
                self._active -= 1


@pytest.fixture
def tile_server():
    server = ScriptedTileServer().start()
    yield server
    server.stop()


@pytest.fixture
def rng():
    return np.random.default_rng(20260809)


@pytest.fixture
def palette():
    return ColorMap()
