"""Per-particle measurements, size distributions, and point counting."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import DataError
from .raster import BBox, BinaryMask, LabelMap, PhaseLabel

#: Output range for normalized particle diagonals.
NORM_RANGE = (0.1, 16.0)

_EIGHT = np.ones((3, 3), dtype=int)


def connected_components(mask: BinaryMask) -> list[BinaryMask]:
    """Split a mask into its 8-connected regions.

    Regions are ordered by their first pixel in raster order (top to bottom,
    left to right).
    """
    lab, count = ndimage.label(mask.bits, structure=_EIGHT)
    if count == 0:
        return []
    flat = lab.ravel()
    first = np.full(count + 1, flat.size, dtype=np.int64)
    np.minimum.at(first, flat, np.arange(flat.size))
    order = sorted(range(1, count + 1), key=lambda c: first[c])
    return [BinaryMask(lab == c) for c in order]


@dataclass(frozen=True)
class ParticleStats:
    """Measurements of one particle; the normalized diagonal is filled in
    relative to the population it was summarized with."""

    id: int
    phase: PhaseLabel
    area: int
    centroid: tuple[float, float]
    bbox: BBox
    diagonal: float
    normalized_diagonal: float


def normalize_diagonals(values: np.ndarray, log_scale: bool = False) -> np.ndarray:
    """Map diagonals linearly onto the fixed output range.

    The population minimum lands on the low end, the maximum on the high end.
    With ``log_scale`` the mapping is linear in log(diagonal) instead. A
    population with a single distinct value maps to the low end.
    """
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        return v.copy()
    if np.any(v <= 0):
        raise DataError("diagonals must be positive")
    lo, hi = NORM_RANGE
    x = np.log(v) if log_scale else v
    xmin, xmax = float(x.min()), float(x.max())
    if xmax == xmin:
        return np.full(v.shape, lo)
    t = (x - xmin) / (xmax - xmin)
    return lo * (1.0 - t) + hi * t


def summarize_particles(instances, log_scale: bool = False) -> list[ParticleStats]:
    """Per-particle area, centroid, box, and population-normalized diagonal.

    Centroids are means of pixel centers, so a single pixel at (x, y) has its
    centroid at (x + 0.5, y + 0.5).
    """
    rows: list[ParticleStats] = []
    diags = np.array([inst.bbox.diagonal for inst in instances], dtype=np.float64)
    normed = normalize_diagonals(diags, log_scale) if len(instances) else diags
    for inst, d, nd in zip(instances, diags, normed):
        ys, xs = np.nonzero(inst.region.bits)
        cx = float(xs.mean() + 0.5)
        cy = float(ys.mean() + 0.5)
        rows.append(
            ParticleStats(
                id=inst.id,
                phase=inst.phase,
                area=inst.area,
                centroid=(cx, cy),
                bbox=inst.bbox,
                diagonal=float(d),
                normalized_diagonal=float(nd),
            )
        )
    return rows


@dataclass(eq=False)
class PsdCurve:
    """A cumulative percent-finer curve over unique particle sizes."""

    sizes: np.ndarray
    percent_finer: np.ndarray

    def __post_init__(self) -> None:
        if self.sizes.shape != self.percent_finer.shape:
            raise DataError("size and percent arrays differ in length")
        if np.any(np.diff(self.sizes) <= 0):
            raise DataError("sizes must be strictly increasing")


def psd_curve(values) -> PsdCurve:
    """Percent of particles at or below each unique size.

    Equal sizes collapse to one point carrying the higher percentage, and the
    curve ends at 100.
    """
    v = np.asarray(values, dtype=np.float64).reshape(-1)
    if v.size == 0:
        raise DataError("cannot build a size distribution from no particles")
    u, counts = np.unique(v, return_counts=True)
    pct = 100.0 * np.cumsum(counts) / v.size
    return PsdCurve(sizes=u, percent_finer=pct)


@dataclass(eq=False)
class PointCountResult:
    """Phase tallies over a set of probe points."""

    total: int
    counts: dict[PhaseLabel, int]
    fractions: dict[PhaseLabel, float]


def point_count(
    labels: LabelMap, n: int, mode: str = "grid", seed: int = 0
) -> PointCountResult:
    """Estimate phase area fractions by sampling n probe points.

    ``grid`` lays a centered ceil(sqrt(n))-per-side lattice over the image
    and keeps the first n points in raster order; ``random`` draws uniform
    pixels with a seeded generator. When the grid has exactly one point per
    pixel the tally equals the full pixel count.
    """
    if n < 1:
        raise DataError(f"point count must be positive, got {n}")
    w, h = labels.width, labels.height
    if mode == "grid":
        g = int(np.ceil(np.sqrt(n)))
        ix = np.minimum((np.floor((np.arange(g) + 0.5) * w / g)).astype(np.int64), w - 1)
        iy = np.minimum((np.floor((np.arange(g) + 0.5) * h / g)).astype(np.int64), h - 1)
        xx, yy = np.meshgrid(ix, iy)
        px = xx.reshape(-1)[:n]
        py = yy.reshape(-1)[:n]
    elif mode == "random":
        rng = np.random.default_rng(seed)
        px = rng.integers(0, w, n)
        py = rng.integers(0, h, n)
    else:
        raise DataError(f"unknown point mode {mode!r}")
    hits = labels.labels[py, px]
    counts = {ph: int(np.sum(hits == int(ph))) for ph in PhaseLabel}
    fractions = {ph: counts[ph] / n for ph in PhaseLabel}
    return PointCountResult(total=n, counts=counts, fractions=fractions)


def export_particles_csv(stats: list[ParticleStats], path: str | Path) -> None:
    """Write per-particle rows; floats keep full precision."""
    header = [
        "id",
        "phase",
        "area",
        "centroid_x",
        "centroid_y",
        "bbox_x",
        "bbox_y",
        "bbox_w",
        "bbox_h",
        "diagonal",
        "normalized_diagonal",
    ]
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(header)
        for s in stats:
            out.writerow(
                [
                    s.id,
                    s.phase.name.lower(),
                    s.area,
                    repr(s.centroid[0]),
                    repr(s.centroid[1]),
                    s.bbox.x,
                    s.bbox.y,
                    s.bbox.w,
                    s.bbox.h,
                    repr(s.diagonal),
                    repr(s.normalized_diagonal),
                ]
            )


def export_psd_csv(curve: PsdCurve, path: str | Path) -> None:
    """Write a percent-finer curve as two columns."""
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["size", "percent_finer"])
        for s, p in zip(curve.sizes.tolist(), curve.percent_finer.tolist()):
            out.writerow([repr(s), repr(p)])
