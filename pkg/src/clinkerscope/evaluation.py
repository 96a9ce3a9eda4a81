"""Pixel- and instance-level scoring of phase predictions.

All precision/recall/F1 figures use the convention that an empty denominator
scores zero, so images with nothing to find and nothing found come out at 0
rather than raising.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .annotations import ParticleInstance
from .errors import DataError
from .raster import LabelMap, PhaseLabel


@dataclass(frozen=True)
class PrfScores:
    """Match counts with the derived precision/recall/F1."""

    tp: int
    fp: int
    fn: int

    @property
    def precision(self) -> float:
        d = self.tp + self.fp
        return self.tp / d if d else 0.0

    @property
    def recall(self) -> float:
        d = self.tp + self.fn
        return self.tp / d if d else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r else 0.0

    def __add__(self, other: "PrfScores") -> "PrfScores":
        return PrfScores(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn)


def f1_score(precision: float, recall: float) -> float:
    """Harmonic mean, zero when both inputs are zero."""
    s = precision + recall
    return 2 * precision * recall / s if s else 0.0


def prf_from_labels(
    pred: np.ndarray, true: np.ndarray, classes: list[int]
) -> dict[int, PrfScores]:
    """One-vs-rest counts for each class over parallel label vectors."""
    pred = np.asarray(pred).reshape(-1)
    true = np.asarray(true).reshape(-1)
    if pred.shape != true.shape:
        raise DataError(f"{pred.shape[0]} predictions vs {true.shape[0]} labels")
    out: dict[int, PrfScores] = {}
    for c in classes:
        p = pred == c
        t = true == c
        out[c] = PrfScores(
            tp=int(np.sum(p & t)), fp=int(np.sum(p & ~t)), fn=int(np.sum(~p & t))
        )
    return out


def pixel_prf(
    pred: LabelMap, gt: LabelMap, classes: list[PhaseLabel] | None = None
) -> dict[PhaseLabel, PrfScores]:
    """Per-phase pixel scores between two label maps of the same size."""
    if (pred.width, pred.height) != (gt.width, gt.height):
        raise DataError(
            f"prediction {pred.width}x{pred.height} vs ground truth {gt.width}x{gt.height}"
        )
    classes = classes or list(PhaseLabel)
    raw = prf_from_labels(pred.labels, gt.labels, [int(c) for c in classes])
    return {PhaseLabel(c): s for c, s in raw.items()}


def mask_iou(a, b) -> float:
    """Intersection over union of two masks; 0 when both are empty."""
    if a.bits.shape != b.bits.shape:
        raise DataError(f"mask shapes differ: {a.bits.shape} vs {b.bits.shape}")
    inter = int(np.sum(a.bits & b.bits))
    union = int(np.sum(a.bits | b.bits))
    return inter / union if union else 0.0


def _confidence(inst: ParticleInstance) -> float:
    return 1.0 if inst.confidence is None else inst.confidence


def _boxes_touch(a: ParticleInstance, b: ParticleInstance) -> bool:
    return not (
        a.bbox.x + a.bbox.w <= b.bbox.x
        or b.bbox.x + b.bbox.w <= a.bbox.x
        or a.bbox.y + a.bbox.h <= b.bbox.y
        or b.bbox.y + b.bbox.h <= a.bbox.y
    )


def match_instances(
    preds: list[ParticleInstance],
    gts: list[ParticleInstance],
    iou_threshold: float = 0.5,
    same_phase: bool = True,
) -> list[tuple[int, int, float]]:
    """Greedy one-to-one matching of predictions to ground truth.

    Pairs at or above the IoU threshold are taken in order of descending
    prediction confidence, then descending IoU, then list position. Returns
    ``(pred_index, gt_index, iou)`` triples.
    """
    if not (0.0 < iou_threshold <= 1.0):
        raise DataError(f"IoU threshold must be in (0, 1], got {iou_threshold}")
    cands: list[tuple[float, float, int, int]] = []
    for pi, p in enumerate(preds):
        for gi, g in enumerate(gts):
            if same_phase and p.phase != g.phase:
                continue
            if not _boxes_touch(p, g):
                continue
            iou = mask_iou(p.region, g.region)
            if iou >= iou_threshold:
                cands.append((-_confidence(p), -iou, pi, gi))
    cands.sort()
    taken_p: set[int] = set()
    taken_g: set[int] = set()
    out: list[tuple[int, int, float]] = []
    for negc, negiou, pi, gi in cands:
        if pi in taken_p or gi in taken_g:
            continue
        taken_p.add(pi)
        taken_g.add(gi)
        out.append((pi, gi, -negiou))
    return out


PHASES = (PhaseLabel.ALITE, PhaseLabel.BELITE)


def _check_scored(preds_by_image: dict[int, list[ParticleInstance]]) -> None:
    for image_id, preds in preds_by_image.items():
        for p in preds:
            if p.confidence is None:
                raise DataError(
                    f"prediction {p.id} on image {image_id} has no confidence score"
                )


def evaluate_detections(
    preds_by_image: dict[int, list[ParticleInstance]],
    gts_by_image: dict[int, list[ParticleInstance]],
    iou_threshold: float = 0.5,
    cutoff: float = 0.0,
    same_phase: bool = True,
) -> dict[PhaseLabel, PrfScores]:
    """Per-phase detection counts pooled over images at one confidence cutoff."""
    _check_scored(preds_by_image)
    totals = {ph: PrfScores(0, 0, 0) for ph in PHASES}
    for image_id in sorted(set(preds_by_image) | set(gts_by_image)):
        preds = [p for p in preds_by_image.get(image_id, []) if _confidence(p) >= cutoff]
        gts = gts_by_image.get(image_id, [])
        matches = match_instances(preds, gts, iou_threshold, same_phase)
        matched_p = {pi for pi, _, _ in matches}
        matched_g = {gi for _, gi, _ in matches}
        for ph in PHASES:
            tp = sum(1 for pi, gi, _ in matches if gts[gi].phase == ph)
            fp = sum(1 for pi, p in enumerate(preds) if p.phase == ph and pi not in matched_p)
            fn = sum(1 for gi, g in enumerate(gts) if g.phase == ph and gi not in matched_g)
            totals[ph] = totals[ph] + PrfScores(tp, fp, fn)
    return totals


@dataclass(eq=False)
class ThresholdSweep:
    """Result of scanning confidence cutoffs for the best F1."""

    threshold: float
    per_phase: dict[PhaseLabel, PrfScores]
    objective: float
    curve: list[tuple[float, float]] = field(default_factory=list)


def _objective(scores: dict[PhaseLabel, PrfScores], average: str) -> float:
    if average == "macro":
        return float(np.mean([scores[ph].f1 for ph in PHASES]))
    if average == "micro":
        pooled = PrfScores(0, 0, 0)
        for ph in PHASES:
            pooled = pooled + scores[ph]
        return pooled.f1
    raise DataError(f"unknown averaging mode {average!r}")


def sweep_thresholds(
    preds_by_image: dict[int, list[ParticleInstance]],
    gts_by_image: dict[int, list[ParticleInstance]],
    iou_threshold: float = 0.5,
    step: float = 0.01,
    average: str = "macro",
) -> ThresholdSweep:
    """Scan cutoffs 0, step, ..., 1 and keep the lowest one maximizing F1.

    An empty prediction set is allowed and scores zero at cutoff 0 rather
    than failing.
    """
    if not (0.0 < step <= 1.0):
        raise DataError(f"sweep step must be in (0, 1], got {step}")
    _check_scored(preds_by_image)
    num = int(round(1.0 / step))
    cutoffs = [round(i * step, 10) for i in range(num + 1)]
    best: ThresholdSweep | None = None
    curve: list[tuple[float, float]] = []
    for cutoff in cutoffs:
        scores = evaluate_detections(
            preds_by_image, gts_by_image, iou_threshold, cutoff
        )
        obj = _objective(scores, average)
        curve.append((cutoff, obj))
        if best is None or obj > best.objective:
            best = ThresholdSweep(threshold=cutoff, per_phase=scores, objective=obj)
    assert best is not None
    best.curve = curve
    return best
