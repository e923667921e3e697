import io

import numpy as np
import pytest
from PIL import Image

from urbanform.tilefetch import (
    ContentError,
    MissingTilesError,
    PermanentFetchError,
    RetryPolicy,
    TileCache,
    TileSource,
    TransientFetchError,
    assemble_mosaic,
    fetch_tile,
)
from urbanform.tilemath import GeoPoint, TileCoord, global_pixel_to_latlon

from conftest import coord_tile_png, solid_tile_png


def make_source(server, **kwargs):
    defaults = dict(
        url_template=server.url_template,
        source_id="test",
        retry=RetryPolicy(max_attempts=3, backoff_base_ms=1),
    )
    defaults.update(kwargs)
    return TileSource(**defaults)


class TestTileSource:
    def test_template_validation(self):
        with pytest.raises(ValueError):
            TileSource(url_template="http://example/{x}/{y}.png")
        TileSource(url_template="http://example/{quadkey}.png")
        TileSource(url_template="http://example/{z}/{x}/{y}.png")

    def test_quadkey_substitution(self):
        s = TileSource(url_template="http://example/{quadkey}.png")
        assert s.url_for(TileCoord(3, 5, 3)) == "http://example/213.png"

    def test_subdomain_rotation(self):
        s = TileSource(url_template="http://{s}.example/{z}/{x}/{y}.png",
                       subdomains=("a", "b"))
        urls = {s.url_for(TileCoord(0, 0, 1), i) for i in range(4)}
        assert urls == {"http://a.example/1/0/0.png", "http://b.example/1/0/0.png"}

    def test_from_config_json(self, tmp_path):
        cfg = tmp_path / "source.json"
        cfg.write_text(
            '{"url_template": "http://x/{z}/{x}/{y}.png", "source_id": "bing",'
            ' "max_parallel": 2, "retry": {"max_attempts": 5, "backoff_base_ms": 7}}'
        )
        s = TileSource.from_config(cfg)
        assert s.source_id == "bing"
        assert s.max_parallel == 2
        assert s.retry == RetryPolicy(5, 7)


class TestFetchTile:
    def test_fetch_and_cache(self, tile_server, tmp_path):
        source = make_source(tile_server)
        cache = TileCache(tmp_path / "cache")
        coord = TileCoord(1, 2, 3)
        payload = fetch_tile(source, coord, cache)
        assert payload.startswith(b"\x89PNG")
        assert tile_server.request_count(3, 1, 2) == 1
        # Warm-cache hit: byte identical, no extra request.
        again = fetch_tile(source, coord, cache)
        assert again == payload
        assert tile_server.request_count(3, 1, 2) == 1
        assert (tmp_path / "cache" / "test" / "3" / "1" / "2.png").exists()

    def test_404_is_permanent_no_retry(self, tile_server, tmp_path):
        tile_server.script(3, 0, 0, [404])
        source = make_source(tile_server)
        with pytest.raises(PermanentFetchError) as exc_info:
            fetch_tile(source, TileCoord(0, 0, 3), TileCache(tmp_path))
        assert exc_info.value.attempts == 1
        assert tile_server.request_count(3, 0, 0) == 1

    def test_two_503s_then_200(self, tile_server, tmp_path):
        tile_server.script(3, 1, 1, [503, 503, 200])
        source = make_source(tile_server)
        payload = fetch_tile(source, TileCoord(1, 1, 3), TileCache(tmp_path))
        assert payload.startswith(b"\x89PNG")
        assert tile_server.request_count(3, 1, 1) == 3

    def test_exhausted_retries_transient(self, tile_server, tmp_path):
        tile_server.script(3, 2, 2, [503, 503, 503])
        source = make_source(tile_server)
        with pytest.raises(TransientFetchError) as exc_info:
            fetch_tile(source, TileCoord(2, 2, 3), TileCache(tmp_path))
        assert exc_info.value.attempts == 3

    def test_non_image_payload(self, tile_server, tmp_path):
        tile_server.set_payload(3, 4, 4, b"<html>not a tile</html>")
        source = make_source(tile_server)
        with pytest.raises(ContentError):
            fetch_tile(source, TileCoord(4, 4, 3), TileCache(tmp_path))

    def test_cache_roundtrip_bytes(self, tmp_path):
        cache = TileCache(tmp_path)
        payload = solid_tile_png((10, 20, 30))
        cache.store("s", TileCoord(7, 8, 4), payload)
        assert cache.lookup("s", TileCoord(7, 8, 4)) == payload
        assert cache.lookup("s", TileCoord(8, 8, 4)) is None


def tile_corner_bbox(tx0, ty0, tx1, ty1, zoom):
    """Bbox whose corners are exact tile-corner latlons."""
    nw = global_pixel_to_latlon(tx0 * 256, ty0 * 256, zoom)
    se = global_pixel_to_latlon(tx1 * 256, ty1 * 256, zoom)
    return nw, se


class TestAssembleMosaic:
    def test_2x2_solid_quadrants(self, tile_server, tmp_path):
        zoom = 3
        colors = {(2, 2): (255, 0, 0), (3, 2): (0, 255, 0),
                  (2, 3): (0, 0, 255), (3, 3): (255, 255, 0)}
        for (x, y), color in colors.items():
            tile_server.set_payload(zoom, x, y, solid_tile_png(color))
        nw, se = tile_corner_bbox(2, 2, 4, 4, zoom)
        source = make_source(tile_server)
        mosaic = assemble_mosaic(source, nw, se, zoom, TileCache(tmp_path))
        assert (mosaic.width, mosaic.height) == (512, 512)
        assert mosaic.data[0, 0].tolist() == [255, 0, 0]
        assert mosaic.data[0, 511].tolist() == [0, 255, 0]
        assert mosaic.data[511, 0].tolist() == [0, 0, 255]
        assert mosaic.data[511, 511].tolist() == [255, 255, 0]
        assert mosaic.transform.origin_px == 2 * 256
        assert mosaic.transform.zoom == zoom

    def test_half_tile_crop(self, tile_server, tmp_path):
        # Right half of tile (2, 2): global pixels x in [640, 768), y in [512, 768).
        zoom = 3
        nw = global_pixel_to_latlon(640, 512, zoom)
        se = global_pixel_to_latlon(768, 768, zoom)
        source = make_source(tile_server)
        mosaic = assemble_mosaic(source, nw, se, zoom, TileCache(tmp_path))
        assert (mosaic.width, mosaic.height) == (128, 256)
        ref = np.asarray(Image.open(io.BytesIO(coord_tile_png(2, 2))))
        assert (mosaic.data == ref[:, 128:]).all()

    def test_pixel_alignment_oracle(self, tile_server, tmp_path):
        # Tiles encode their own coordinates; mosaic pixel at global g must
        # equal the owning tile's pixel at g mod 256.
        zoom = 4
        nw = global_pixel_to_latlon(2 * 256 + 100, 3 * 256 + 50, zoom)
        se = global_pixel_to_latlon(4 * 256 + 30, 4 * 256 + 200, zoom)
        source = make_source(tile_server)
        mosaic = assemble_mosaic(source, nw, se, zoom, TileCache(tmp_path))
        x0 = int(mosaic.transform.origin_px)
        y0 = int(mosaic.transform.origin_py)
        for gy in (y0, y0 + 77, y0 + mosaic.height - 1):
            for gx in (x0, x0 + 133, x0 + mosaic.width - 1):
                px = mosaic.data[gy - y0, gx - x0]
                assert px[0] == (gx // 256) % 256
                assert px[1] == (gy // 256) % 256
                assert px[2] == gx % 256

    def test_missing_tile_fail_lists_coords(self, tile_server, tmp_path):
        zoom = 3
        tile_server.script(zoom, 3, 2, [404])
        nw, se = tile_corner_bbox(2, 2, 4, 4, zoom)
        source = make_source(tile_server)
        with pytest.raises(MissingTilesError, match=r"\(3,2,z3\)"):
            assemble_mosaic(source, nw, se, zoom, TileCache(tmp_path), "fail")

    def test_missing_tile_fill_black(self, tile_server, tmp_path):
        zoom = 3
        for (x, y) in ((2, 2), (3, 2), (2, 3), (3, 3)):
            tile_server.set_payload(zoom, x, y, solid_tile_png((200, 200, 200)))
        tile_server.script(zoom, 3, 2, [404])
        nw, se = tile_corner_bbox(2, 2, 4, 4, zoom)
        source = make_source(tile_server)
        mosaic = assemble_mosaic(source, nw, se, zoom, TileCache(tmp_path), "fill_black")
        assert (mosaic.data[:256, 256:] == 0).all()
        assert (mosaic.data[:256, :256] == 200).all()

    def test_bounded_concurrency(self, tmp_path):
        from conftest import ScriptedTileServer

        server = ScriptedTileServer(handler_delay_s=0.05).start()
        try:
            source = make_source(server, max_parallel=3)
            nw, se = tile_corner_bbox(0, 0, 4, 4, 3)
            assemble_mosaic(source, nw, se, 3, TileCache(tmp_path))
            assert server.max_active <= 3
            assert server.request_count() == 16
        finally:
            server.stop()

    def test_warm_cache_zero_network(self, tile_server, tmp_path):
        zoom = 3
        nw, se = tile_corner_bbox(2, 2, 4, 4, zoom)
        source = make_source(tile_server)
        cache = TileCache(tmp_path)
        first = assemble_mosaic(source, nw, se, zoom, cache)
        before = tile_server.request_count()
        second = assemble_mosaic(source, nw, se, zoom, cache)
        assert tile_server.request_count() == before
        assert (first.data == second.data).all()
        assert first.transform == second.transform
