"""Pluggable segmentation backends behind one tile-level contract.

A backend turns each RGB tile into a class-index tile of the same size.
Two in-tree stubs keep the whole pipeline runnable without a trained
network; the external-process kind shells out to any command implementing
the wire contract: the process is invoked with the manifest path and an
output directory, and must write one class-index PNG per test tile, named
identically to the tile's image file.
"""

import shlex
import subprocess
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .raster import GeoRaster, LabelRaster, NUM_CLASSES
from .typology import ClassLabel, ColorMap


class BackendError(RuntimeError):
    """Backend produced no usable prediction; carries process diagnostics."""

    def __init__(self, message, returncode=None, stderr=None):
        super().__init__(message)
        self.returncode = returncode
        self.stderr = stderr


class ConstantBackend:
    """Predicts one configured class for every pixel."""

    kind = "builtin-stub"

    def __init__(self, label, palette: ColorMap | None = None):
        self.label = ClassLabel(int(label))
        self.palette = palette or ColorMap()

    def predict_tile(self, tile: GeoRaster) -> LabelRaster:
        out = np.full((tile.height, tile.width), int(self.label), dtype=np.uint8)
        return LabelRaster(out, self.palette)


class ColorHeuristicBackend:
    """Predicts each block's class from the palette color nearest its mean.

    On imagery that is literally decoded labels this reproduces the labels
    away from block boundaries, which makes it a useful pipeline oracle.
    """

    kind = "builtin-stub"

    def __init__(self, palette: ColorMap | None = None, block: int = 8):
        if block < 1:
            raise ValueError("block must be >= 1")
        self.palette = palette or ColorMap()
        self.block = block
        self._lut = np.array(
            [self.palette.color(ClassLabel(i)) for i in range(NUM_CLASSES)],
            dtype=np.float64,
        )

    def predict_tile(self, tile: GeoRaster) -> LabelRaster:
        if getattr(tile, "bands", 0) != 3:
            raise BackendError("color heuristic needs RGB tiles")
        h, w = tile.height, tile.width
        out = np.empty((h, w), dtype=np.uint8)
        b = self.block
        for y0 in range(0, h, b):
            for x0 in range(0, w, b):
                mean = tile.data[y0:y0 + b, x0:x0 + b].reshape(-1, 3).mean(axis=0)
                dists = np.square(self._lut - mean).sum(axis=1)
                out[y0:y0 + b, x0:x0 + b] = int(np.argmin(dists))
        return LabelRaster(out, self.palette)


@dataclass
class ExternalBackend:
    """Runs ``command <manifest.json> <outdir>`` per the wire contract."""

    command: list
    workdir: str | None = None
    timeout_s: float | None = None
    kind = "external-process"

    def run(self, manifest_path, outdir):
        cmd = [*self.command, str(manifest_path), str(outdir)]
        try:
            proc = subprocess.run(
                cmd,
                cwd=self.workdir,
                timeout=self.timeout_s,
                capture_output=True,
                text=True,
            )
        except subprocess.TimeoutExpired as exc:
            raise BackendError(
                f"backend timed out after {self.timeout_s}s: {shlex.join(cmd)}",
                stderr=exc.stderr,
            ) from exc
        if proc.returncode != 0:
            raise BackendError(
                f"backend exited {proc.returncode}: {shlex.join(cmd)}",
                returncode=proc.returncode,
                stderr=proc.stderr,
            )


def parse_backend_spec(spec: str, palette: ColorMap | None = None):
    """Build a backend from a CLI spec string.

    ``constant:<class>``, ``heuristic[:<block>]``, or
    ``external:<command line>``.
    """
    kind, _, rest = spec.partition(":")
    if kind == "constant":
        if not rest:
            raise ValueError("constant backend needs a class index, e.g. constant:3")
        return ConstantBackend(int(rest), palette)
    if kind == "heuristic":
        return ColorHeuristicBackend(palette, block=int(rest) if rest else 8)
    if kind == "external":
        if not rest:
            raise ValueError("external backend needs a command line")
        return ExternalBackend(shlex.split(rest))
    raise ValueError(f"unknown backend spec {spec!r}")
