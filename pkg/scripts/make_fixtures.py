#!/usr/bin/env python3
"""Regenerate the committed test fixtures in tests/fixtures.

Natural content comes from scikit-image's bundled "camera" photograph
(deterministic, ships with the package); the gradient and gray images are
synthesized.  Run from the repository root:

    python3 scripts/make_fixtures.py
"""

import os
import sys

import numpy as np
from skimage import data

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from nivc.imageio import Frame, Plane, write_pgm, write_yuv420  # noqa: E402

OUT = os.path.join(os.path.dirname(__file__), "..", "tests", "fixtures")


def crop(img, y, x, size):
    return Plane(img[y:y + size, x:x + size].copy())


def main():
    os.makedirs(OUT, exist_ok=True)
    cam = data.camera()  # 512x512 uint8

    # round-trip / RD-sanity trio: textured 64x64 regions
    for i, (y, x) in enumerate(((96, 160), (200, 320), (320, 96))):
        write_pgm(os.path.join(OUT, f"natural_{i:02d}.pgm"), crop(cam, y, x, 64))

    # training corpus: eight 96x96 crops
    coords = ((32, 32), (32, 192), (32, 352), (160, 32), (160, 352),
              (288, 32), (288, 192), (288, 352))
    for i, (y, x) in enumerate(coords):
        write_pgm(os.path.join(OUT, f"train_{i:02d}.pgm"), crop(cam, y, x, 96))

    # held-out image for validation patches and BD evaluation
    write_pgm(os.path.join(OUT, "holdout.pgm"), crop(cam, 176, 176, 128))

    # smooth, slightly curved gradient (for the neural prediction mode)
    yy, xx = np.mgrid[0:64, 0:64].astype(np.float64) / 64.0
    grad = 128 + 80 * np.sin(1.3 * xx + 0.9 * yy + 0.8 * xx * yy)
    write_pgm(os.path.join(OUT, "gradient.pgm"),
              Plane(np.clip(np.rint(grad), 0, 255).astype(np.uint8)))

    # constant gray
    write_pgm(os.path.join(OUT, "gray.pgm"), Plane(np.full((64, 64), 128, np.uint8)))

    # one true YUV 4:2:0 frame: luma crop + smooth chroma fields
    luma = crop(cam, 128, 128, 64).samples
    cy, cx = np.mgrid[0:32, 0:32].astype(np.float64)
    u = np.clip(110 + 1.2 * cx + 0.4 * cy, 0, 255).astype(np.uint8)
    v = np.clip(150 - 0.8 * cx + 0.9 * cy, 0, 255).astype(np.uint8)
    write_yuv420(os.path.join(OUT, "tiny64.yuv"), Frame(Plane(luma), Plane(u), Plane(v)))

    print(f"fixtures written to {OUT}")


if __name__ == "__main__":
    main()
