"""Regenerate the committed ``exported_sample`` fixture.

Creates two classes ("cat", "dog") of three deterministic 8x8 PNGs each
and exports them with the offline encoder at dim 16.  Run from this
directory: ``python3 make_fixture.py``.
"""

import tempfile
from pathlib import Path

import numpy as np
from PIL import Image

from xmod_export import ExportJob, export

HERE = Path(__file__).resolve().parent


def main() -> None:
    rng = np.random.default_rng(7)
    with tempfile.TemporaryDirectory() as tmp:
        root = Path(tmp) / "images"
        for name in ("cat", "dog"):
            folder = root / name
            folder.mkdir(parents=True)
            for i in range(3):
                pixels = rng.integers(0, 256, size=(8, 8, 3), dtype=np.uint8)
                Image.fromarray(pixels).save(folder / f"img_{i}.png")
        out = export(ExportJob("offline-16", root, HERE / "exported_sample"))
        print(f"wrote {out}")


if __name__ == "__main__":
    main()
