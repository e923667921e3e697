"""External backend that returns each test tile's ground-truth labels.

Implements the wire contract: invoked with a manifest path and an output
directory, writes one class-index PNG per test tile named after the tile's
image file.  Used as the identity oracle in pipeline tests.
"""

import json
import shutil
import sys
from pathlib import Path


def main(manifest_path, outdir):
    manifest_path = Path(manifest_path)
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    doc = json.loads(manifest_path.read_text())
    root = manifest_path.parent
    for tile in doc["tiles"]:
        if tile["role"] != "test":
            continue
        src = root / tile["labels"]
        dst = outdir / Path(tile["image"]).name
        shutil.copyfile(src, dst)


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])
