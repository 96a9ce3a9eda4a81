import numpy as np
import pytest

from clinkerscope import (
    BinaryMask,
    DataError,
    LabelMap,
    ParticleInstance,
    PhaseLabel,
    PrfScores,
    evaluate_detections,
    f1_score,
    mask_iou,
    match_instances,
    pixel_prf,
    prf_from_labels,
    sweep_thresholds,
)


def inst(i, phase, x, y, w, h, conf=None, frame=(20, 20)):
    bits = np.zeros(frame, dtype=bool)
    bits[y : y + h, x : x + w] = True
    return ParticleInstance.from_mask(i, phase, BinaryMask(bits), confidence=conf)


def test_prf_scores_by_hand():
    s = PrfScores(tp=8, fp=2, fn=4)
    assert s.precision == 0.8
    assert s.recall == pytest.approx(2 / 3)
    assert s.f1 == pytest.approx(2 * 0.8 * (2 / 3) / (0.8 + 2 / 3))


def test_empty_denominators_score_zero():
    s = PrfScores(0, 0, 0)
    assert (s.precision, s.recall, s.f1) == (0.0, 0.0, 0.0)
    assert f1_score(0.0, 0.0) == 0.0


def test_prf_scores_add_counts():
    s = PrfScores(1, 2, 3) + PrfScores(10, 20, 30)
    assert (s.tp, s.fp, s.fn) == (11, 22, 33)


def test_f1_score_published_style_values():
    assert round(f1_score(0.945, 0.847), 3) == 0.893
    assert round(f1_score(0.963, 0.805), 3) == 0.877
    assert f1_score(1.0, 1.0) == 1.0


def test_prf_from_labels_counts():
    pred = np.array([0, 1, 1, 2, 2, 0])
    true = np.array([0, 1, 2, 2, 1, 1])
    scores = prf_from_labels(pred, true, [0, 1, 2])
    assert (scores[0].tp, scores[0].fp, scores[0].fn) == (1, 1, 0)
    assert (scores[1].tp, scores[1].fp, scores[1].fn) == (1, 1, 2)
    assert (scores[2].tp, scores[2].fp, scores[2].fn) == (1, 1, 1)
    with pytest.raises(DataError):
        prf_from_labels(pred[:3], true, [0])


def test_pixel_prf_checks_sizes():
    a = LabelMap(np.zeros((4, 4), dtype=np.uint8))
    b = LabelMap(np.zeros((4, 5), dtype=np.uint8))
    with pytest.raises(DataError):
        pixel_prf(a, b)
    scores = pixel_prf(a, LabelMap(np.zeros((4, 4), dtype=np.uint8)))
    assert scores[PhaseLabel.OTHER].tp == 16


def test_mask_iou_hand_case():
    a = np.zeros((6, 6), dtype=bool)
    b = np.zeros((6, 6), dtype=bool)
    a[0:2, 0:2] = True
    b[0:2, 1:3] = True
    assert mask_iou(BinaryMask(a), BinaryMask(b)) == pytest.approx(2 / 6)
    assert mask_iou(BinaryMask(np.zeros((6, 6), bool)), BinaryMask(np.zeros((6, 6), bool))) == 0.0
    with pytest.raises(DataError):
        mask_iou(BinaryMask(a), BinaryMask(np.zeros((5, 6), bool)))


def test_matching_is_one_to_one_and_confidence_first():
    gt = [inst(1, PhaseLabel.ALITE, 2, 2, 6, 6)]
    close = inst(1, PhaseLabel.ALITE, 2, 2, 6, 6, conf=0.4)
    loose = inst(2, PhaseLabel.ALITE, 2, 2, 6, 5, conf=0.9)
    matches = match_instances([close, loose], gt, iou_threshold=0.5)
    assert len(matches) == 1
    assert matches[0][0] == 1
    assert matches[0][2] == pytest.approx(5 / 6)


def test_matching_prefers_iou_at_equal_confidence():
    gt = [inst(1, PhaseLabel.ALITE, 2, 2, 6, 6)]
    close = inst(1, PhaseLabel.ALITE, 2, 2, 6, 6, conf=0.5)
    loose = inst(2, PhaseLabel.ALITE, 2, 2, 6, 5, conf=0.5)
    matches = match_instances([loose, close], gt)
    assert matches[0][0] == 1
    assert matches[0][2] == 1.0


def test_matching_respects_phase_unless_disabled():
    gt = [inst(1, PhaseLabel.BELITE, 2, 2, 6, 6)]
    pred = [inst(1, PhaseLabel.ALITE, 2, 2, 6, 6, conf=0.9)]
    assert match_instances(pred, gt) == []
    cross = match_instances(pred, gt, same_phase=False)
    assert len(cross) == 1


def test_matching_shrinks_as_the_threshold_rises():
    gt = [inst(1, PhaseLabel.ALITE, 2, 2, 4, 4), inst(2, PhaseLabel.ALITE, 10, 10, 4, 4)]
    preds = [
        inst(1, PhaseLabel.ALITE, 2, 2, 4, 4, conf=0.9),
        inst(2, PhaseLabel.ALITE, 10, 11, 4, 4, conf=0.8),
    ]
    sizes = [len(match_instances(preds, gt, iou_threshold=t)) for t in (0.3, 0.6, 0.9, 1.0)]
    assert sizes == sorted(sizes, reverse=True)
    assert sizes[0] == 2 and sizes[-1] == 1
    with pytest.raises(DataError):
        match_instances(preds, gt, iou_threshold=0.0)


def test_detection_counts_pool_over_images():
    gts = {
        0: [inst(1, PhaseLabel.ALITE, 1, 1, 5, 5)],
        1: [inst(1, PhaseLabel.BELITE, 1, 1, 5, 5), inst(2, PhaseLabel.ALITE, 10, 10, 5, 5)],
    }
    preds = {
        0: [inst(1, PhaseLabel.ALITE, 1, 1, 5, 5, conf=0.9)],
        1: [
            inst(1, PhaseLabel.BELITE, 1, 1, 5, 5, conf=0.8),
            inst(2, PhaseLabel.ALITE, 0, 0, 3, 3, conf=0.7),
        ],
    }
    scores = evaluate_detections(preds, gts)
    al = scores[PhaseLabel.ALITE]
    be = scores[PhaseLabel.BELITE]
    assert (al.tp, al.fp, al.fn) == (1, 1, 1)
    assert (be.tp, be.fp, be.fn) == (1, 0, 0)


def test_unscored_predictions_are_rejected():
    gts = {0: [inst(1, PhaseLabel.ALITE, 1, 1, 5, 5)]}
    preds = {0: [inst(1, PhaseLabel.ALITE, 1, 1, 5, 5)]}
    with pytest.raises(DataError, match="confidence"):
        evaluate_detections(preds, gts)
    with pytest.raises(DataError, match="confidence"):
        sweep_thresholds(preds, gts)


def test_cutoff_drops_low_confidence_predictions():
    gts = {0: [inst(1, PhaseLabel.ALITE, 1, 1, 5, 5)]}
    preds = {
        0: [
            inst(1, PhaseLabel.ALITE, 1, 1, 5, 5, conf=0.9),
            inst(2, PhaseLabel.ALITE, 12, 12, 4, 4, conf=0.2),
        ]
    }
    low = evaluate_detections(preds, gts, cutoff=0.0)[PhaseLabel.ALITE]
    high = evaluate_detections(preds, gts, cutoff=0.5)[PhaseLabel.ALITE]
    assert (low.tp, low.fp) == (1, 1)
    assert (high.tp, high.fp) == (1, 0)


def test_sweep_picks_the_lowest_optimal_cutoff():
    gts = {0: [inst(1, PhaseLabel.ALITE, 1, 1, 6, 6), inst(2, PhaseLabel.BELITE, 10, 10, 6, 6)]}
    preds = {
        0: [
            inst(1, PhaseLabel.ALITE, 1, 1, 6, 6, conf=0.8),
            inst(2, PhaseLabel.BELITE, 10, 10, 6, 6, conf=0.8),
            inst(3, PhaseLabel.ALITE, 1, 12, 4, 4, conf=0.3),
        ]
    }
    sweep = sweep_thresholds(preds, gts, step=0.01)
    assert sweep.threshold == pytest.approx(0.31)
    assert sweep.objective == pytest.approx(1.0)
    assert len(sweep.curve) == 101


def test_sweep_scores_match_a_recompute_at_its_threshold():
    rng = np.random.default_rng(7)
    gts = {0: [inst(i, PhaseLabel.ALITE, 1 + 5 * i, 1, 4, 4, frame=(40, 60)) for i in range(5)]}
    preds = {
        0: [
            inst(
                i,
                PhaseLabel.ALITE,
                1 + 5 * i,
                1 + int(rng.integers(0, 2)),
                4,
                4,
                conf=float(rng.uniform(0.1, 0.9)),
                frame=(40, 60),
            )
            for i in range(5)
        ]
    }
    sweep = sweep_thresholds(preds, gts, step=0.05)
    redo = evaluate_detections(preds, gts, cutoff=sweep.threshold)
    for ph in (PhaseLabel.ALITE, PhaseLabel.BELITE):
        assert (redo[ph].tp, redo[ph].fp, redo[ph].fn) == (
            sweep.per_phase[ph].tp,
            sweep.per_phase[ph].fp,
            sweep.per_phase[ph].fn,
        )


def test_micro_average_pools_counts():
    gts = {
        0: [inst(i, PhaseLabel.ALITE, 1 + 5 * i, 1, 4, 4, frame=(30, 60)) for i in range(9)]
        + [inst(9, PhaseLabel.BELITE, 1, 20, 4, 4, frame=(30, 60))]
    }
    preds = {
        0: [inst(i, PhaseLabel.ALITE, 1 + 5 * i, 1, 4, 4, conf=0.9, frame=(30, 60)) for i in range(9)]
    }
    macro = sweep_thresholds(preds, gts, average="macro")
    micro = sweep_thresholds(preds, gts, average="micro")
    assert macro.objective == pytest.approx(0.5)
    assert micro.objective == pytest.approx(2 * 9 / (2 * 9 + 0 + 1))
    with pytest.raises(DataError, match="averaging"):
        sweep_thresholds(preds, gts, average="mean")


def test_sweep_step_validation():
    with pytest.raises(DataError, match="step"):
        sweep_thresholds({}, {}, step=0.0)
    empty = sweep_thresholds({}, {0: [inst(1, PhaseLabel.ALITE, 1, 1, 4, 4)]}, step=0.5)
    assert empty.objective == 0.0
    assert empty.threshold == 0.0
