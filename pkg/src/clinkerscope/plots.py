"""Static SVG figures, assembled as text so output is byte-stable.

No plotting library: both figures here are a few hundred primitives at
most, and writing the markup directly keeps reruns diffable.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import DataError
from .meshing import TriMesh
from .particles import PsdCurve
from .raster import PHASE_COLORS, PhaseLabel


def _fmt(v: float) -> str:
    return f"{v:.3f}".rstrip("0").rstrip(".")


def psd_plot(curve: PsdCurve, path: str | Path, log_x: bool = True) -> Path:
    """Cumulative percent-finer curve as an SVG line chart.

    The x axis is logarithmic by default, which is the usual way to show a
    size distribution spanning more than a decade.
    """
    sizes = np.asarray(curve.sizes, dtype=np.float64)
    pct = np.asarray(curve.percent_finer, dtype=np.float64)
    if sizes.size == 0:
        raise DataError("cannot plot an empty distribution")
    if log_x and sizes.min() <= 0:
        raise DataError("log axis needs positive sizes")
    width, height = 640, 420
    ml, mr, mt, mb = 70, 20, 20, 55
    pw, ph = width - ml - mr, height - mt - mb

    x = np.log10(sizes) if log_x else sizes
    xlo, xhi = float(x.min()), float(x.max())
    if xhi == xlo:
        xlo, xhi = xlo - 0.5, xhi + 0.5

    def sx(v: float) -> float:
        return ml + (v - xlo) / (xhi - xlo) * pw

    def sy(p: float) -> float:
        return mt + (100.0 - p) / 100.0 * ph

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" '
        'stroke="black" stroke-width="1"/>',
    ]
    for p in range(0, 101, 20):
        yy = sy(p)
        parts.append(
            f'<line x1="{ml}" y1="{_fmt(yy)}" x2="{ml + pw}" y2="{_fmt(yy)}" '
            'stroke="#cccccc" stroke-width="0.5"/>'
        )
        parts.append(
            f'<text x="{ml - 8}" y="{_fmt(yy + 4)}" text-anchor="end" '
            f'font-family="sans-serif" font-size="12">{p}</text>'
        )
    if log_x:
        lo_d, hi_d = int(np.floor(xlo)), int(np.ceil(xhi))
        for d in range(lo_d, hi_d + 1):
            if not (xlo <= d <= xhi):
                continue
            xx = sx(d)
            parts.append(
                f'<line x1="{_fmt(xx)}" y1="{mt}" x2="{_fmt(xx)}" y2="{mt + ph}" '
                'stroke="#cccccc" stroke-width="0.5"/>'
            )
            parts.append(
                f'<text x="{_fmt(xx)}" y="{mt + ph + 18}" text-anchor="middle" '
                f'font-family="sans-serif" font-size="12">{_fmt(10.0 ** d)}</text>'
            )
    else:
        for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
            v = xlo + frac * (xhi - xlo)
            xx = sx(v)
            parts.append(
                f'<text x="{_fmt(xx)}" y="{mt + ph + 18}" text-anchor="middle" '
                f'font-family="sans-serif" font-size="12">{_fmt(v)}</text>'
            )
    pts = " ".join(f"{_fmt(sx(a))},{_fmt(sy(b))}" for a, b in zip(x.tolist(), pct.tolist()))
    parts.append(
        f'<polyline points="{pts}" fill="none" stroke="#1f77b4" stroke-width="2"/>'
    )
    for a, b in zip(x.tolist(), pct.tolist()):
        parts.append(
            f'<circle cx="{_fmt(sx(a))}" cy="{_fmt(sy(b))}" r="2.5" fill="#1f77b4"/>'
        )
    parts.append(
        f'<text x="{ml + pw // 2}" y="{height - 14}" text-anchor="middle" '
        'font-family="sans-serif" font-size="13">particle size</text>'
    )
    parts.append(
        f'<text x="18" y="{mt + ph // 2}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="13" '
        f'transform="rotate(-90 18 {mt + ph // 2})">percent finer</text>'
    )
    parts.append("</svg>")
    out = Path(path)
    out.write_text("\n".join(parts) + "\n")
    return out


def mesh_plot(mesh: TriMesh, path: str | Path, scale: float = 4.0) -> Path:
    """Triangle mesh colored by phase label, edges drawn thin on top."""
    if mesh.n_triangles == 0:
        raise DataError("cannot plot an empty mesh")
    lo = mesh.nodes.min(axis=0)
    hi = mesh.nodes.max(axis=0)
    width = max(1, int(np.ceil((hi[0] - lo[0]) * scale)))
    height = max(1, int(np.ceil((hi[1] - lo[1]) * scale)))
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    fills = {}
    for phase in PhaseLabel:
        r, g, b = PHASE_COLORS[phase]
        fills[int(phase)] = f"rgb({r},{g},{b})"
    for tri, lab in zip(mesh.triangles.tolist(), mesh.labels.tolist()):
        p = [
            (
                _fmt((mesh.nodes[v, 0] - lo[0]) * scale),
                _fmt((mesh.nodes[v, 1] - lo[1]) * scale),
            )
            for v in tri
        ]
        d = f"M{p[0][0]},{p[0][1]} L{p[1][0]},{p[1][1]} L{p[2][0]},{p[2][1]} Z"
        parts.append(
            f'<path d="{d}" fill="{fills[lab]}" fill-opacity="0.85" '
            'stroke="#404040" stroke-width="0.4"/>'
        )
    parts.append("</svg>")
    out = Path(path)
    out.write_text("\n".join(parts) + "\n")
    return out
