import numpy as np
import pytest

from clinkerscope import (
    BinaryMask,
    DataError,
    LabelMap,
    ParticleInstance,
    PhaseLabel,
    connected_components,
    export_particles_csv,
    export_psd_csv,
    normalize_diagonals,
    point_count,
    psd_curve,
    summarize_particles,
)

from synthdata import random_mask


def blob_instance(rng, i=1, h=40, w=50):
    bits = random_mask(rng, h, w, blobs=2).astype(bool)
    while not bits.any():
        bits = random_mask(rng, h, w, blobs=2).astype(bool)
    return ParticleInstance.from_mask(i, PhaseLabel.ALITE, BinaryMask(bits))


def test_measurements_match_brute_force(rng):
    for i in range(40):
        inst = blob_instance(rng, i + 1)
        stats = summarize_particles([inst])[0]
        ys, xs = np.nonzero(inst.region.bits)
        assert stats.area == len(xs)
        assert stats.centroid[0] == pytest.approx(np.mean(xs) + 0.5)
        assert stats.centroid[1] == pytest.approx(np.mean(ys) + 0.5)
        bw = int(xs.max() - xs.min() + 1)
        bh = int(ys.max() - ys.min() + 1)
        assert (stats.bbox.x, stats.bbox.y, stats.bbox.w, stats.bbox.h) == (
            int(xs.min()),
            int(ys.min()),
            bw,
            bh,
        )
        assert stats.diagonal == pytest.approx(np.hypot(bw, bh))


def test_components_come_out_in_raster_order():
    bits = np.zeros((8, 8), dtype=bool)
    bits[6, 1] = True
    bits[0, 5] = True
    bits[3:5, 3:5] = True
    parts = connected_components(BinaryMask(bits))
    assert [int(np.argwhere(p.bits)[0].tolist()[0]) for p in parts] == [0, 3, 6]
    assert [p.area for p in parts] == [1, 4, 1]


def test_diagonal_touch_is_one_component():
    bits = np.zeros((4, 4), dtype=bool)
    bits[0, 0] = bits[1, 1] = True
    assert len(connected_components(BinaryMask(bits))) == 1
    assert connected_components(BinaryMask(np.zeros((4, 4), bool))) == []


def test_normalization_hits_the_range_ends_exactly():
    out = normalize_diagonals(np.array([2.0, 6.0, 10.0]))
    assert out[0] == 0.1
    assert out[-1] == 16.0
    assert out[1] == pytest.approx(0.1 + 15.9 * 0.5)


def test_normalization_preserves_rank(rng):
    v = rng.uniform(0.5, 300.0, 200)
    for log_scale in (False, True):
        out = normalize_diagonals(v, log_scale=log_scale)
        assert np.array_equal(np.argsort(out), np.argsort(v))
        assert out.min() == 0.1
        assert out.max() == 16.0


def test_log_normalization_is_linear_in_logs():
    out = normalize_diagonals(np.array([1.0, 10.0, 100.0]), log_scale=True)
    assert out[1] == pytest.approx((0.1 + 16.0) / 2)


def test_normalization_edge_cases():
    assert normalize_diagonals(np.array([7.0, 7.0])).tolist() == [0.1, 0.1]
    assert normalize_diagonals(np.array([])).size == 0
    with pytest.raises(DataError):
        normalize_diagonals(np.array([3.0, 0.0]))


def test_psd_is_monotone_and_ends_at_hundred(rng):
    v = np.round(rng.uniform(1, 30, 150), 1)
    curve = psd_curve(v)
    assert np.all(np.diff(curve.sizes) > 0)
    assert np.all(np.diff(curve.percent_finer) > 0)
    assert curve.percent_finer[-1] == pytest.approx(100.0)


def test_psd_ties_collapse_to_the_higher_percent():
    curve = psd_curve([2.0, 2.0, 5.0, 9.0])
    assert curve.sizes.tolist() == [2.0, 5.0, 9.0]
    assert curve.percent_finer.tolist() == [50.0, 75.0, 100.0]
    with pytest.raises(DataError):
        psd_curve([])


def test_point_count_over_every_pixel_is_exact(rng):
    labels = np.zeros((10, 10), dtype=np.uint8)
    labels[2:7, 1:5] = 1
    labels[8:10, 3:8] = 2
    lm = LabelMap(labels)
    res = point_count(lm, 100, mode="grid")
    for ph in PhaseLabel:
        assert res.counts[ph] == int(np.sum(labels == int(ph)))
        assert res.fractions[ph] == pytest.approx(res.counts[ph] / 100)
    assert res.total == 100


def test_point_count_grid_approximates_fractions():
    labels = np.zeros((100, 100), dtype=np.uint8)
    labels[:, :30] = 1
    res = point_count(LabelMap(labels), 2500, mode="grid")
    assert res.fractions[PhaseLabel.ALITE] == pytest.approx(0.3, abs=0.02)


def test_random_point_count_is_seeded():
    labels = np.zeros((50, 50), dtype=np.uint8)
    labels[:25] = 1
    a = point_count(LabelMap(labels), 400, mode="random", seed=9)
    b = point_count(LabelMap(labels), 400, mode="random", seed=9)
    c = point_count(LabelMap(labels), 400, mode="random", seed=10)
    assert a.counts == b.counts
    assert a.fractions[PhaseLabel.ALITE] == pytest.approx(0.5, abs=0.1)
    assert a.counts != c.counts or a.total == c.total


def test_point_count_rejects_bad_arguments():
    lm = LabelMap(np.zeros((5, 5), dtype=np.uint8))
    with pytest.raises(DataError):
        point_count(lm, 0)
    with pytest.raises(DataError, match="jitter"):
        point_count(lm, 5, mode="jitter")


def test_particle_csv_layout(tmp_path, rng):
    stats = summarize_particles([blob_instance(rng, 1), blob_instance(rng, 2)])
    path = tmp_path / "p.csv"
    export_particles_csv(stats, path)
    lines = path.read_text().strip().splitlines()
    assert lines[0].startswith("id,phase,area,centroid_x,centroid_y,bbox_")
    assert len(lines) == 3
    row = lines[1].split(",")
    assert row[0] == "1"
    assert row[1] == "alite"
    assert float(row[9]) == pytest.approx(stats[0].diagonal)


def test_psd_csv_round_trips_exact_floats(tmp_path):
    curve = psd_curve([1.5, 2.25, 2.25, 7.0])
    path = tmp_path / "psd.csv"
    export_psd_csv(curve, path)
    rows = [line.split(",") for line in path.read_text().strip().splitlines()[1:]]
    assert [float(r[0]) for r in rows] == curve.sizes.tolist()
    assert [float(r[1]) for r in rows] == curve.percent_finer.tolist()
