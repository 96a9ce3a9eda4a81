"""Procedural fixtures: microstructure images, random masks, detection sets.

Everything here is built with PIL drawing and plain numpy so the expected
values do not depend on the code under test.
"""

from __future__ import annotations

import numpy as np
from PIL import Image, ImageDraw

ALITE_RGB = (185, 150, 120)
BELITE_RGB = (95, 110, 170)
MATRIX_RGB = (52, 50, 58)


def _convex_blob(rng, cx, cy, radius, sides):
    """An angular convex polygon around a center, as a PIL point list."""
    angles = np.sort(rng.uniform(0, 2 * np.pi, sides))
    radii = rng.uniform(0.65, 1.0, sides) * radius
    xs = cx + radii * np.cos(angles)
    ys = cy + radii * np.sin(angles)
    return [(float(x), float(y)) for x, y in zip(xs, ys)]


def make_microstructure(size: int = 300, seed: int = 0, noise_sigma: float = 8.0):
    """A synthetic micrograph and its ground-truth phase map.

    Angular bright blobs are drawn as convex polygons (phase 1), rounded
    blobs as ellipses (phase 2), and the background carries a slow sinusoidal
    texture. Gaussian pixel noise is added to the image only. Returns
    (image uint8 HxWx3, labels uint8 HxW).
    """
    rng = np.random.default_rng(seed)
    img = Image.new("RGB", (size, size), MATRIX_RGB)
    lab = Image.new("L", (size, size), 0)
    di = ImageDraw.Draw(img)
    dl = ImageDraw.Draw(lab)

    for _ in range(14):
        cx, cy = rng.uniform(15, size - 15, 2)
        pts = _convex_blob(rng, cx, cy, rng.uniform(12, 30), int(rng.integers(5, 9)))
        jitter = rng.integers(-12, 13, 3)
        color = tuple(int(np.clip(c + j, 0, 255)) for c, j in zip(ALITE_RGB, jitter))
        di.polygon(pts, fill=color)
        dl.polygon(pts, fill=1)
    for _ in range(12):
        cx, cy = rng.uniform(15, size - 15, 2)
        rx, ry = rng.uniform(8, 22, 2)
        box = (cx - rx, cy - ry, cx + rx, cy + ry)
        jitter = rng.integers(-12, 13, 3)
        color = tuple(int(np.clip(c + j, 0, 255)) for c, j in zip(BELITE_RGB, jitter))
        di.ellipse(box, fill=color)
        dl.ellipse(box, fill=2)

    a = np.asarray(img, dtype=np.float64)
    labels = np.asarray(lab, dtype=np.uint8).copy()

    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    texture = 9.0 * np.sin(xx / 6.5) + 7.0 * np.cos(yy / 4.0)
    a[labels == 0] += texture[labels == 0, None]
    a += rng.normal(0.0, noise_sigma, a.shape)
    return np.clip(np.round(a), 0, 255).astype(np.uint8), labels


def random_mask(rng, height: int, width: int, blobs: int = 4) -> np.ndarray:
    """A random multi-blob boolean mask drawn with PIL primitives."""
    im = Image.new("L", (width, height), 0)
    d = ImageDraw.Draw(im)
    for _ in range(blobs):
        cx = rng.uniform(0, width)
        cy = rng.uniform(0, height)
        rx = rng.uniform(1, max(2.0, width / 4))
        ry = rng.uniform(1, max(2.0, height / 4))
        if rng.random() < 0.5:
            d.ellipse((cx - rx, cy - ry, cx + rx, cy + ry), fill=1)
        else:
            d.rectangle((cx - rx, cy - ry, cx + rx, cy + ry), fill=1)
    return np.asarray(im, dtype=bool)


def random_label_map(rng, height: int = 80, width: int = 80) -> np.ndarray:
    """A random three-phase map with contiguous regions of each phase."""
    im = Image.new("L", (width, height), 0)
    d = ImageDraw.Draw(im)
    for _ in range(int(rng.integers(3, 9))):
        phase = int(rng.integers(1, 3))
        cx = rng.uniform(0, width)
        cy = rng.uniform(0, height)
        rx = rng.uniform(3, width / 3)
        ry = rng.uniform(3, height / 3)
        d.ellipse((cx - rx, cy - ry, cx + rx, cy + ry), fill=phase)
    return np.asarray(im, dtype=np.uint8).copy()
