"""Cached, concurrent retrieval of map tiles and mosaic assembly.

Tiles are fetched through a bounded worker pool with per-request politeness
delay, validated as PNG/JPEG payloads, and cached on disk keyed by tile
coordinate (never by URL, so subdomain rotation cannot duplicate entries).
Cache writes are write-temp-then-rename, so concurrent writers to the same
key are last-writer-wins atomic.  HTTP 4xx is a permanent failure and is
never retried; 5xx and timeouts retry with exponential backoff.
"""

import io
import itertools
import json
import os
import posixpath
import tempfile
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import requests
from PIL import Image

from . import tilemath
from .raster import GeoRaster
from .tilemath import GeoPoint, TileCoord

DEFAULT_MAX_PARALLEL = 4
DEFAULT_MAX_ATTEMPTS = 3
DEFAULT_BACKOFF_MS = 100
DEFAULT_TIMEOUT_S = 20.0


class FetchError(RuntimeError):
    """Base class for tile retrieval failures."""

    def __init__(self, message, attempts=1, status=None):
        super().__init__(message)
        self.attempts = attempts
        self.status = status


class PermanentFetchError(FetchError):
    """4xx response; retrying cannot help."""


class TransientFetchError(FetchError):
    """Timeouts / 5xx, still failing after all retry attempts."""


class ContentError(FetchError):
    """Response body is not a decodable image."""


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = DEFAULT_MAX_ATTEMPTS
    backoff_base_ms: int = DEFAULT_BACKOFF_MS

    def delay_s(self, attempt: int) -> float:
        return self.backoff_base_ms * (2 ** (attempt - 1)) / 1000.0


@dataclass(frozen=True)
class TileSource:
    """Where and how to fetch tiles.

    ``url_template`` uses ``{x}``/``{y}``/``{z}`` or ``{quadkey}``, plus an
    optional ``{s}`` cycled through ``subdomains``.
    """

    url_template: str
    source_id: str = "default"
    subdomains: tuple = ()
    headers: dict = field(default_factory=dict)
    max_parallel: int = DEFAULT_MAX_PARALLEL
    retry: RetryPolicy = field(default_factory=RetryPolicy)
    min_request_interval_ms: int = 0
    timeout_s: float = DEFAULT_TIMEOUT_S

    def __post_init__(self):
        has_xyz = all(k in self.url_template for k in ("{x}", "{y}", "{z}"))
        has_quadkey = "{quadkey}" in self.url_template
        if not (has_xyz or has_quadkey):
            raise ValueError(
                "url_template needs {x}/{y}/{z} or {quadkey} placeholders"
            )
        if self.max_parallel < 1:
            raise ValueError("max_parallel must be >= 1")

    def url_for(self, coord: TileCoord, counter: int = 0) -> str:
        url = self.url_template.format(
            x=coord.x,
            y=coord.y,
            z=coord.zoom,
            quadkey=tilemath.tile_to_quadkey(coord),
            s=self.subdomains[counter % len(self.subdomains)] if self.subdomains else "",
        )
        return url

    @classmethod
    def from_config(cls, path) -> "TileSource":
        """Load a source description from a JSON (or, on 3.11+, TOML) file."""
        path = Path(path)
        if path.suffix == ".toml":
            try:
                import tomllib
            except ImportError as exc:
                raise ValueError(
                    "TOML source configs need Python 3.11+; use JSON here"
                ) from exc
            doc = tomllib.loads(path.read_text())
        else:
            doc = json.loads(path.read_text())
        retry = doc.pop("retry", {})
        return cls(
            url_template=doc["url_template"],
            source_id=doc.get("source_id", "default"),
            subdomains=tuple(doc.get("subdomains", ())),
            headers=dict(doc.get("headers", {})),
            max_parallel=int(doc.get("max_parallel", DEFAULT_MAX_PARALLEL)),
            retry=RetryPolicy(
                max_attempts=int(retry.get("max_attempts", DEFAULT_MAX_ATTEMPTS)),
                backoff_base_ms=int(retry.get("backoff_base_ms", DEFAULT_BACKOFF_MS)),
            ),
            min_request_interval_ms=int(doc.get("min_request_interval_ms", 0)),
            timeout_s=float(doc.get("timeout_s", DEFAULT_TIMEOUT_S)),
        )


_IMAGE_MAGIC = {b"\x89PNG\r\n\x1a\n": "png", b"\xff\xd8\xff": "jpg"}


def _sniff_format(payload: bytes):
    for magic, ext in _IMAGE_MAGIC.items():
        if payload.startswith(magic):
            return ext
    return None


class TileCache:
    """Disk cache laid out as ``<root>/<source>/<z>/<x>/<y>.<ext>``."""

    def __init__(self, root):
        self.root = Path(root)

    def _dir(self, source_id, coord):
        return self.root / source_id / str(coord.zoom) / str(coord.x)

    def lookup(self, source_id: str, coord: TileCoord):
        d = self._dir(source_id, coord)
        for ext in ("png", "jpg"):
            p = d / f"{coord.y}.{ext}"
            if p.exists():
                return p.read_bytes()
        return None

    def store(self, source_id: str, coord: TileCoord, payload: bytes) -> Path:
        ext = _sniff_format(payload)
        if ext is None:
            raise ContentError("refusing to cache a non-image payload")
        d = self._dir(source_id, coord)
        d.mkdir(parents=True, exist_ok=True)
        final = d / f"{coord.y}.{ext}"
        fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
        try:
            with os.fdopen(fd, "wb") as f:
                f.write(payload)
            os.replace(tmp, final)  # atomic within the directory
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
        return final


class _RateLimiter:
    """Serializes request starts at a minimum interval (0 = unlimited)."""

    def __init__(self, interval_s: float):
        self.interval_s = interval_s
        self._lock = threading.Lock()
        self._next_allowed = 0.0

    def wait(self):
        if self.interval_s <= 0:
            return
        while True:
            with self._lock:
                now = time.monotonic()
                if now >= self._next_allowed:
                    self._next_allowed = now + self.interval_s
                    return
                pause = self._next_allowed - now
            time.sleep(pause)


_counter = itertools.count()


def fetch_tile(source: TileSource, coord: TileCoord, cache: TileCache,
               session=None, _limiter=None) -> bytes:
    """Return tile bytes, via the cache when possible.

    A cache hit makes no network call and returns byte-identical content.
    """
    cached = cache.lookup(source.source_id, coord)
    if cached is not None:
        return cached
    sess = session or requests
    limiter = _limiter or _RateLimiter(source.min_request_interval_ms / 1000.0)
    last_exc = None
    for attempt in range(1, source.retry.max_attempts + 1):
        limiter.wait()
        url = source.url_for(coord, next(_counter))
        try:
            resp = sess.get(url, headers=source.headers, timeout=source.timeout_s)
        except (requests.Timeout, requests.ConnectionError) as exc:
            last_exc = TransientFetchError(f"{url}: {exc}", attempts=attempt)
            if attempt < source.retry.max_attempts:
                time.sleep(source.retry.delay_s(attempt))
            continue
        if 400 <= resp.status_code < 500:
            raise PermanentFetchError(
                f"{url}: HTTP {resp.status_code}", attempts=attempt,
                status=resp.status_code,
            )
        if resp.status_code != 200:
            last_exc = TransientFetchError(
                f"{url}: HTTP {resp.status_code}", attempts=attempt,
                status=resp.status_code,
            )
            if attempt < source.retry.max_attempts:
                time.sleep(source.retry.delay_s(attempt))
            continue
        payload = resp.content
        if _sniff_format(payload) is None:
            raise ContentError(f"{url}: payload is not PNG/JPEG", attempts=attempt)
        cache.store(source.source_id, coord, payload)
        return payload
    raise last_exc


class MissingTilesError(RuntimeError):
    def __init__(self, missing):
        coords = ", ".join(f"({t.x},{t.y},z{t.zoom})" for t in missing)
        super().__init__(f"missing tiles: {coords}")
        self.missing = list(missing)


def assemble_mosaic(source: TileSource, corner1: GeoPoint, corner2: GeoPoint,
                    zoom: int, cache: TileCache, missing_policy: str = "fail",
                    session=None) -> GeoRaster:
    """Fetch every tile covering a bbox and crop the assembled mosaic to it.

    ``missing_policy`` handles permanently missing tiles: ``fail`` raises
    with the full list of missing coordinates, ``fill_black`` leaves their
    slots black.  Transient failures always raise.
    """
    if missing_policy not in ("fail", "fill_black"):
        raise ValueError(f"unknown missing policy {missing_policy!r}")
    x0, y0, x1, y1 = tilemath.bbox_pixel_rect(corner1, corner2, zoom)
    t0 = tilemath.global_pixel_to_tile(x0, y0, zoom)
    t1 = tilemath.global_pixel_to_tile(x1 - 1, y1 - 1, zoom)
    coords = [
        TileCoord(tx, ty, zoom)
        for ty in range(t0.y, t1.y + 1)
        for tx in range(t0.x, t1.x + 1)
    ]
    limiter = _RateLimiter(source.min_request_interval_ms / 1000.0)

    def fetch_one(coord):
        return coord, fetch_tile(source, coord, cache, session=session, _limiter=limiter)

    results = {}
    with ThreadPoolExecutor(max_workers=source.max_parallel) as pool:
        for future in [pool.submit(fetch_one, c) for c in coords]:
            try:
                coord, payload = future.result()
                results[coord] = payload
            except PermanentFetchError:
                pass  # resolved against `coords` below
    missing_coords = [c for c in coords if c not in results]
    if missing_coords and missing_policy == "fail":
        raise MissingTilesError(missing_coords)

    mosaic = np.zeros((y1 - y0, x1 - x0, 3), dtype=np.uint8)
    for coord, payload in results.items():
        tile = np.asarray(Image.open(io.BytesIO(payload)).convert("RGB"))
        ox, oy = tilemath.tile_origin_pixel(coord)
        # Intersection of this tile with the output window.
        src_x0 = max(0, x0 - ox)
        src_y0 = max(0, y0 - oy)
        src_x1 = min(tilemath.TILE_SIZE, x1 - ox)
        src_y1 = min(tilemath.TILE_SIZE, y1 - oy)
        dst_x0 = ox + src_x0 - x0
        dst_y0 = oy + src_y0 - y0
        mosaic[dst_y0:dst_y0 + (src_y1 - src_y0),
               dst_x0:dst_x0 + (src_x1 - src_x0)] = tile[src_y0:src_y1, src_x0:src_x1]
    transform = tilemath.transform_for_bbox(corner1, corner2, zoom)
    return GeoRaster(mosaic, transform)


def cache_tile_path(cache_root, source_id, z, x, y):
    """Path of a cached tile if present (used by the tile passthrough)."""
    d = Path(cache_root) / source_id / str(z) / str(x)
    for ext in ("png", "jpg"):
        p = d / f"{posixpath.basename(str(y))}.{ext}"
        if p.exists():
            return p
    return None
