"""Pixel-grid primitives: images, phase label maps, masks, and neighborhood features.

Conventions used throughout the package:

* arrays are indexed ``[row, column]`` = ``[y, x]``, origin at the top-left
* pixel ``(x, y)`` covers the unit square from ``(x, y)`` to ``(x+1, y+1)``
  and its center sits at ``(x + 0.5, y + 0.5)``
* label maps hold one uint8 phase id per pixel
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import DataError


class PhaseLabel(IntEnum):
    OTHER = 0
    ALITE = 1
    BELITE = 2


#: RGB used when a label map is written to (or read from) PNG.
PHASE_COLORS: dict[int, tuple[int, int, int]] = {
    PhaseLabel.OTHER: (0, 0, 0),
    PhaseLabel.ALITE: (255, 0, 0),
    PhaseLabel.BELITE: (0, 0, 255),
}

#: Grayscale luma weights (red, green, blue).
LUMA_WEIGHTS = (0.299, 0.587, 0.114)


def _as_readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(eq=False)
class RasterImage:
    """An 8-bit image with 1 (grayscale) or 3 (RGB) channels.

    ``data`` has shape ``(height, width, channels)`` and dtype uint8.
    """

    data: np.ndarray

    def __post_init__(self) -> None:
        d = np.asarray(self.data)
        if d.ndim == 2:
            d = d[:, :, None]
        if d.ndim != 3 or d.shape[2] not in (1, 3):
            raise DataError(f"image must be (h, w, 1|3), got shape {d.shape}")
        if d.dtype != np.uint8:
            raise DataError(f"image dtype must be uint8, got {d.dtype}")
        if d.shape[0] < 1 or d.shape[1] < 1:
            raise DataError("image must have positive dimensions")
        self.data = _as_readonly(d)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]


@dataclass(eq=False)
class LabelMap:
    """A per-pixel phase assignment, same grid as the image it describes."""

    labels: np.ndarray

    def __post_init__(self) -> None:
        a = np.asarray(self.labels)
        if a.ndim != 2:
            raise DataError(f"label map must be 2-d, got shape {a.shape}")
        if a.shape[0] < 1 or a.shape[1] < 1:
            raise DataError("label map must have positive dimensions")
        if a.dtype != np.uint8:
            if not np.issubdtype(a.dtype, np.integer):
                raise DataError(f"label map dtype must be integer, got {a.dtype}")
            a = a.astype(np.uint8)
        known = {int(p) for p in PhaseLabel}
        present = set(np.unique(a).tolist())
        if not present <= known:
            raise DataError(f"label map holds unknown phase ids {sorted(present - known)}")
        self.labels = _as_readonly(a)

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    def mask(self, phase: PhaseLabel) -> "BinaryMask":
        """Boolean mask of the pixels assigned to ``phase``."""
        return BinaryMask(self.labels == int(phase))


@dataclass(eq=False)
class BinaryMask:
    """A boolean pixel mask."""

    bits: np.ndarray

    def __post_init__(self) -> None:
        a = np.asarray(self.bits)
        if a.ndim != 2:
            raise DataError(f"mask must be 2-d, got shape {a.shape}")
        if a.shape[0] < 1 or a.shape[1] < 1:
            raise DataError("mask must have positive dimensions")
        if a.dtype != np.bool_:
            raise DataError(f"mask dtype must be bool, got {a.dtype}")
        self.bits = _as_readonly(a)

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def area(self) -> int:
        return int(self.bits.sum())


@dataclass(frozen=True)
class BBox:
    """Axis-aligned pixel box: ``x, y`` is the top-left pixel, sizes in pixels."""

    x: int
    y: int
    w: int
    h: int

    def __post_init__(self) -> None:
        if self.w < 1 or self.h < 1:
            raise DataError(f"box must have positive extent, got {self.w}x{self.h}")
        if self.x < 0 or self.y < 0:
            raise DataError(f"box origin must be non-negative, got ({self.x}, {self.y})")

    @property
    def diagonal(self) -> float:
        return float(np.hypot(self.w, self.h))

    @classmethod
    def around(cls, mask: BinaryMask) -> "BBox":
        """Tight box around the true pixels of ``mask``."""
        ys, xs = np.nonzero(mask.bits)
        if ys.size == 0:
            raise DataError("cannot bound an empty mask")
        x0, x1 = int(xs.min()), int(xs.max())
        y0, y1 = int(ys.min()), int(ys.max())
        return cls(x0, y0, x1 - x0 + 1, y1 - y0 + 1)


def load_image(path: str | Path) -> RasterImage:
    """Read a PNG/JPEG/TIFF image into an 8-bit array.

    Alpha channels are dropped, palettes are expanded, and 16-bit samples are
    reduced to 8 bits by integer division with 256.
    """
    path = Path(path)
    try:
        with Image.open(path) as im:
            im.load()
            mode = im.mode
            if mode in ("I", "I;16", "I;16B", "I;16L"):
                a = np.asarray(im, dtype=np.int64)
                a = (a // 256).clip(0, 255).astype(np.uint8)
                return RasterImage(a[:, :, None])
            if mode == "LA":
                im = im.convert("L")
            elif mode in ("RGBA", "P", "CMYK"):
                im = im.convert("RGB")
            elif mode not in ("L", "RGB"):
                im = im.convert("RGB")
            a = np.asarray(im, dtype=np.uint8)
    except FileNotFoundError:
        raise DataError(f"no such image: {path}") from None
    except OSError as e:
        raise DataError(f"cannot read image {path}: {e}") from None
    if a.ndim == 2:
        a = a[:, :, None]
    return RasterImage(a)


def save_image(img: RasterImage, path: str | Path) -> None:
    """Write an image as PNG (lossless)."""
    a = img.data[:, :, 0] if img.channels == 1 else img.data
    Image.fromarray(a).save(Path(path), format="PNG")


def to_grayscale(img: RasterImage) -> RasterImage:
    """Collapse RGB to single-channel luma, rounding half up to the nearest level.

    Grayscale input is returned unchanged.
    """
    if img.channels == 1:
        return img
    r, g, b = (img.data[:, :, i].astype(np.float64) for i in range(3))
    wr, wg, wb = LUMA_WEIGHTS
    y = np.floor(wr * r + wg * g + wb * b + 0.5)
    return RasterImage(y.astype(np.uint8)[:, :, None])


def feature_grid(img: RasterImage, p: int) -> np.ndarray:
    """Per-pixel neighborhood features for every pixel of ``img``.

    Returns an array of shape ``(height, width, channels * p * p)`` where each
    row is the p-by-p neighborhood of that pixel, channel-major then row-major.
    Pixels past the border are filled by replicating the nearest edge pixel.
    """
    if p < 1 or p % 2 == 0:
        raise DataError(f"neighborhood size must be odd and positive, got {p}")
    r = p // 2
    padded = np.pad(img.data, ((r, r), (r, r), (0, 0)), mode="edge")
    win = np.lib.stride_tricks.sliding_window_view(padded, (p, p), axis=(0, 1))
    # (h, w, c, p, p) -> channel-major, then rows, then columns
    h, w = img.height, img.width
    return np.ascontiguousarray(win.reshape(h, w, img.channels * p * p))


def neighborhood_features(img: RasterImage, x: int, y: int, p: int) -> np.ndarray:
    """Feature vector of length ``channels * p * p`` for the pixel at (x, y)."""
    if p < 1 or p % 2 == 0:
        raise DataError(f"neighborhood size must be odd and positive, got {p}")
    if not (0 <= x < img.width and 0 <= y < img.height):
        raise DataError(f"pixel ({x}, {y}) outside {img.width}x{img.height} image")
    r = p // 2
    ys = np.clip(np.arange(y - r, y + r + 1), 0, img.height - 1)
    xs = np.clip(np.arange(x - r, x + r + 1), 0, img.width - 1)
    block = img.data[np.ix_(ys, xs)]  # (p, p, c)
    return np.ascontiguousarray(block.transpose(2, 0, 1).reshape(-1))


def save_label_map(labels: LabelMap, path: str | Path) -> None:
    """Write a label map as an RGB PNG using the fixed phase palette."""
    rgb = np.zeros((labels.height, labels.width, 3), dtype=np.uint8)
    for phase, color in PHASE_COLORS.items():
        rgb[labels.labels == phase] = color
    Image.fromarray(rgb).save(Path(path), format="PNG")


def load_label_map(path: str | Path) -> LabelMap:
    """Read a label map PNG written by :func:`save_label_map`."""
    img = load_image(path)
    if img.channels == 1:
        a = img.data[:, :, 0]
        out = np.zeros_like(a)
        # grayscale render of the palette: black stays black, anything else is unknown
        if np.any(a != 0):
            raise DataError(f"{path}: grayscale label map must be all background")
        return LabelMap(out)
    rgb = img.data
    out = np.full((img.height, img.width), 255, dtype=np.uint8)
    for phase, color in PHASE_COLORS.items():
        hit = np.all(rgb == np.array(color, dtype=np.uint8), axis=2)
        out[hit] = phase
    if np.any(out == 255):
        bad = np.argwhere(out == 255)[0]
        px = rgb[bad[0], bad[1]]
        raise DataError(
            f"{path}: pixel ({bad[1]}, {bad[0]}) has color {tuple(int(v) for v in px)} "
            "which is not in the phase palette"
        )
    return LabelMap(out)
