"""Window sampling and the pixel-classification workflow built on it.

A handful of small windows is cut from an annotated image; every pixel in
every window becomes one training sample whose features are its p-by-p
neighborhood (channel-major). Samples are split 70/15/15 by default, a
boosted ensemble is picked on the validation part, and the winner can then
label whole images pixel by pixel.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .boosting import GbdtModel, GbdtParams, fit_gbdt
from .errors import DataError
from .evaluation import PrfScores, prf_from_labels
from .raster import LabelMap, RasterImage, feature_grid

SPLIT_UNASSIGNED = -1
SPLIT_TRAIN = 0
SPLIT_VAL = 1
SPLIT_TEST = 2
SPLIT_NAMES = {SPLIT_TRAIN: "train", SPLIT_VAL: "val", SPLIT_TEST: "test"}


@dataclass(frozen=True)
class WindowSpec:
    """One sampling window: top-left pixel and side length."""

    x: int
    y: int
    n: int

    def __post_init__(self) -> None:
        if self.n < 1:
            raise DataError(f"window side must be positive, got {self.n}")
        if self.x < 0 or self.y < 0:
            raise DataError(f"window origin must be non-negative, got ({self.x}, {self.y})")


@dataclass(frozen=True)
class StratifiedWindows:
    """Randomly placed windows, redrawn until every phase of the image shows up."""

    count: int = 10
    side: int = 50
    attempts: int = 1000

    def __post_init__(self) -> None:
        if self.count < 1 or self.side < 1:
            raise DataError("window count and side must be positive")


def sample_windows(
    img: RasterImage,
    labels: LabelMap,
    plan: list[WindowSpec] | StratifiedWindows,
    seed: int = 0,
) -> list[WindowSpec]:
    """Resolve a window plan against an image, validating bounds.

    Explicit windows are checked and passed through. For the stratified plan,
    placements are drawn with a seeded generator until the union of windows
    contains every phase present in the label map.
    """
    if labels.width != img.width or labels.height != img.height:
        raise DataError(
            f"label map {labels.width}x{labels.height} does not match "
            f"image {img.width}x{img.height}"
        )
    if isinstance(plan, StratifiedWindows):
        if plan.side > img.width or plan.side > img.height:
            raise DataError(f"window side {plan.side} exceeds the image")
        wanted = set(np.unique(labels.labels).tolist())
        rng = np.random.default_rng(seed)
        for _ in range(plan.attempts):
            xs = rng.integers(0, img.width - plan.side + 1, plan.count)
            ys = rng.integers(0, img.height - plan.side + 1, plan.count)
            seen: set[int] = set()
            for x, y in zip(xs.tolist(), ys.tolist()):
                block = labels.labels[y : y + plan.side, x : x + plan.side]
                seen.update(np.unique(block).tolist())
            if seen >= wanted:
                return [
                    WindowSpec(int(x), int(y), plan.side)
                    for x, y in zip(xs.tolist(), ys.tolist())
                ]
        raise DataError(
            f"could not cover all phases with {plan.count} windows "
            f"after {plan.attempts} draws"
        )
    windows = list(plan)
    if not windows:
        raise DataError("window list is empty")
    for w in windows:
        if w.x + w.n > img.width or w.y + w.n > img.height:
            raise DataError(
                f"window ({w.x}, {w.y}) side {w.n} leaves the "
                f"{img.width}x{img.height} image"
            )
    return windows


@dataclass(eq=False)
class MowDataset:
    """Per-pixel samples cut from windows, with provenance and a split tag.

    ``split`` holds -1 until :func:`split_samples` assigns train/val/test.
    """

    features: np.ndarray
    labels: np.ndarray
    image_ids: np.ndarray
    window_ids: np.ndarray
    xs: np.ndarray
    ys: np.ndarray
    split: np.ndarray
    p: int

    def __post_init__(self) -> None:
        n = self.features.shape[0]
        for name in ("labels", "image_ids", "window_ids", "xs", "ys", "split"):
            a = getattr(self, name)
            if a.shape != (n,):
                raise DataError(f"dataset column {name} has shape {a.shape}, expected ({n},)")

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def feature_width(self) -> int:
        return self.features.shape[1]

    def part(self, which: int) -> tuple[np.ndarray, np.ndarray]:
        """Feature matrix and labels of one split part."""
        sel = self.split == which
        return self.features[sel], self.labels[sel]


def build_dataset(
    img: RasterImage,
    labels: LabelMap,
    windows: list[WindowSpec],
    p: int = 3,
    image_id: int = 0,
) -> MowDataset:
    """Expand windows into one sample per pixel.

    The sample count is the sum of n*n over the windows and each feature row
    has length channels * p * p.
    """
    windows = sample_windows(img, labels, windows)
    grid = feature_grid(img, p)
    feats: list[np.ndarray] = []
    labs: list[np.ndarray] = []
    wxs: list[np.ndarray] = []
    wys: list[np.ndarray] = []
    wids: list[np.ndarray] = []
    for wi, w in enumerate(windows):
        block = grid[w.y : w.y + w.n, w.x : w.x + w.n]
        feats.append(block.reshape(w.n * w.n, -1))
        labs.append(labels.labels[w.y : w.y + w.n, w.x : w.x + w.n].reshape(-1))
        yy, xx = np.mgrid[w.y : w.y + w.n, w.x : w.x + w.n]
        wxs.append(xx.reshape(-1))
        wys.append(yy.reshape(-1))
        wids.append(np.full(w.n * w.n, wi, dtype=np.int64))
    n = sum(a.shape[0] for a in feats)
    return MowDataset(
        features=np.concatenate(feats, axis=0),
        labels=np.concatenate(labs).astype(np.uint8),
        image_ids=np.full(n, image_id, dtype=np.int64),
        window_ids=np.concatenate(wids),
        xs=np.concatenate(wxs).astype(np.int64),
        ys=np.concatenate(wys).astype(np.int64),
        split=np.full(n, SPLIT_UNASSIGNED, dtype=np.int8),
        p=p,
    )


def _cuts(n: int, ratios: tuple[float, float, float]) -> tuple[int, int]:
    r1, r2, r3 = ratios
    if min(r1, r2, r3) <= 0 or abs(r1 + r2 + r3 - 1.0) > 1e-9:
        raise DataError(f"split ratios must be positive and sum to 1, got {ratios}")
    b1 = int(np.floor(r1 * n + 0.5))
    b2 = int(np.floor((r1 + r2) * n + 0.5))
    return b1, b2


def split_samples(
    ds: MowDataset,
    ratios: tuple[float, float, float] = (0.70, 0.15, 0.15),
    seed: int = 0,
    per_window: bool = False,
) -> MowDataset:
    """Assign every sample to train/val/test and return the dataset.

    Samples are permuted with a seeded generator and cut at the rounded ratio
    boundaries. With ``per_window`` all pixels of a window stay in the same
    part: windows are permuted instead and dealt to parts until each part's
    sample quota is reached.
    """
    n = ds.n_samples
    if n < 3:
        raise DataError(f"need at least 3 samples to split, got {n}")
    b1, b2 = _cuts(n, ratios)
    if b1 < 1 or b2 <= b1 or b2 >= n:
        raise DataError(f"ratios {ratios} leave an empty part for {n} samples")
    rng = np.random.default_rng(seed)
    split = np.full(n, SPLIT_UNASSIGNED, dtype=np.int8)
    if per_window:
        wids = np.unique(ds.window_ids)
        if wids.size < 3:
            raise DataError(f"need at least 3 windows for a per-window split, got {wids.size}")
        order = rng.permutation(wids)
        got = 0
        for wid in order:
            size = int(np.sum(ds.window_ids == wid))
            part = SPLIT_TRAIN if got < b1 else SPLIT_VAL if got < b2 else SPLIT_TEST
            split[ds.window_ids == wid] = part
            got += size
        for part in (SPLIT_TRAIN, SPLIT_VAL, SPLIT_TEST):
            if not np.any(split == part):
                raise DataError("per-window split left a part empty; use more windows")
    else:
        perm = rng.permutation(n)
        split[perm[:b1]] = SPLIT_TRAIN
        split[perm[b1:b2]] = SPLIT_VAL
        split[perm[b2:]] = SPLIT_TEST
    ds.split = split
    return ds


def train_mow_model(
    ds: MowDataset,
    grid: list[GbdtParams] | None = None,
    seed: int = 0,
    class_weighting: bool = False,
) -> tuple[GbdtModel, dict]:
    """Fit one model per grid point and keep the best by validation macro F1.

    Ties prefer the smaller model (fewer trees, then shallower). Returns the
    winner plus a report with the grid scores and the held-out test scores.
    """
    if np.any(ds.split == SPLIT_UNASSIGNED):
        raise DataError("dataset has unassigned samples; run split_samples first")
    grid = grid or [GbdtParams()]
    Xtr, ytr = ds.part(SPLIT_TRAIN)
    Xva, yva = ds.part(SPLIT_VAL)
    Xte, yte = ds.part(SPLIT_TEST)
    best: tuple[float, tuple[int, int]] | None = None
    best_model: GbdtModel | None = None
    entries: list[dict] = []
    selected = -1
    for gi, params in enumerate(grid):
        model = fit_gbdt(Xtr, ytr, params, seed=seed, class_weighting=class_weighting)
        scores = prf_from_labels(model.predict(Xva), yva, model.classes)
        macro = float(np.mean([s.f1 for s in scores.values()]))
        entries.append({"params": params.to_dict(), "val_macro_f1": macro})
        rank = (macro, (-params.trees, -params.depth))
        if best is None or rank > best:
            best = rank
            best_model = model
            selected = gi
    assert best_model is not None
    test_scores = prf_from_labels(best_model.predict(Xte), yte, best_model.classes)
    report = {
        "grid": entries,
        "selected": selected,
        "val_macro_f1": entries[selected]["val_macro_f1"],
        "test": {
            str(c): {
                "precision": s.precision,
                "recall": s.recall,
                "f1": s.f1,
                "support": s.tp + s.fn,
            }
            for c, s in test_scores.items()
        },
        "test_macro_f1": float(np.mean([s.f1 for s in test_scores.values()])),
    }
    return best_model, report


def predict_image(model: GbdtModel, img: RasterImage, p: int = 3) -> LabelMap:
    """Label every pixel of an image with the model's class choice."""
    grid = feature_grid(img, p)
    h, w, fw = grid.shape
    if fw != model.feature_width:
        raise DataError(
            f"model expects {model.feature_width} features per pixel, "
            f"a {p}x{p} window on this image gives {fw}"
        )
    flat = grid.reshape(h * w, fw)
    out = np.empty(h * w, dtype=np.uint8)
    step = 1 << 18
    for lo in range(0, h * w, step):
        hi = min(lo + step, h * w)
        out[lo:hi] = model.predict(flat[lo:hi])
    return LabelMap(out.reshape(h, w))


def export_dataset_csv(ds: MowDataset, path: str | Path) -> None:
    """Dump the dataset with provenance columns ahead of the raw features."""
    header = ["image_id", "window_id", "x", "y", "label", "split"]
    header += [f"f{i}" for i in range(ds.feature_width)]
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(header)
        for i in range(ds.n_samples):
            row = [
                int(ds.image_ids[i]),
                int(ds.window_ids[i]),
                int(ds.xs[i]),
                int(ds.ys[i]),
                int(ds.labels[i]),
                SPLIT_NAMES.get(int(ds.split[i]), "unassigned"),
            ]
            row += [int(v) for v in ds.features[i]]
            out.writerow(row)
