import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from agetrace.detection import (
    DefectEstimate,
    ResidualSeries,
    detect_defects_dfi,
    estimate_onset_and_params,
    extract_residual_series,
    inter_defect_distance_histogram,
    sector_uniformity_test,
)
from agetrace.errors import InvalidArgument
from agetrace.imaging import AcquisitionMeta, PixelCoord, RasterImage
from agetrace.sim import DatasetSpec, simulate


def series(values, illum=None, tau=1.0):
    v = np.asarray(values, dtype=float)
    n = v.size
    i = np.full(n, 100.0) if illum is None else np.asarray(illum, dtype=float)
    return ResidualSeries(PixelCoord(0, 0), v, i, np.full(n, tau), np.arange(n, dtype=float))


def step_series(n, k, step, sigma=0.0, seed=0):
    rng = np.random.default_rng(seed)
    illum = rng.uniform(50, 150, n)
    v = np.where(np.arange(n) >= k, step, 0.0) + (rng.normal(0, sigma, n) if sigma else 0.0)
    return series(v, illum)


def test_dfi_examples():
    zeros = [RasterImage(np.zeros((6, 6)))] * 3
    assert detect_defects_dfi(zeros) == []
    a = np.zeros((6, 6))
    a[2, 3] = 20
    assert detect_defects_dfi([RasterImage(a)], 14, cfa=False) == [PixelCoord(2, 3, 0)]
    assert detect_defects_dfi([RasterImage(a)], 14) == [PixelCoord(2, 3, 1)]
    with pytest.raises(InvalidArgument):
        detect_defects_dfi([])
    with pytest.raises(InvalidArgument):
        detect_defects_dfi([RasterImage(a)], metas=[AcquisitionMeta(0.0)])


@given(st.integers(0, 1000), st.floats(0, 60), st.floats(0, 60))
def test_dfi_monotone_in_threshold(seed, t1, t2):
    img = RasterImage(np.random.default_rng(seed).integers(0, 64, (8, 8)))
    lo, hi = sorted((t1, t2))
    assert set(detect_defects_dfi([img], hi)) <= set(detect_defects_dfi([img], lo))


def test_dfi_matches_simulator_truth():
    spec = DatasetSpec.from_dict({"profile": {"width": 64, "height": 64}, "session_times": [0.0, 50.0],
                                  "dark_fields_per_session": 2, "defects": {"rate_per_day": 1.0},
                                  "demosaic": False, "rng_seed": 2})
    frames, truth = simulate(spec)
    dark = [f for f in frames if f.role == "dark" and f.session_index == 1]
    found = detect_defects_dfi([f.image for f in dark], 14, [f.meta for f in dark])
    expected = {d.coord for d in truth.defects if d.onset_time <= 50.0}
    assert len(expected) > 10 and set(found) == expected


def test_extract_series_examples():
    imgs = [RasterImage(np.full((6, 6), 77))] * 5
    metas = [AcquisitionMeta(float(t)) for t in range(5)]
    out = extract_residual_series(imgs, [PixelCoord(2, 2), PixelCoord(0, 5)], metas)
    assert len(out) == 2 and all(len(s) == 5 and not s.values.any() for s in out)
    with pytest.raises(InvalidArgument):
        extract_residual_series(imgs, [PixelCoord(2, 2)], metas[::-1])
    with pytest.raises(InvalidArgument):
        extract_residual_series(imgs, [PixelCoord(9, 2)], metas)


def test_extract_series_from_simulator():
    spec = DatasetSpec.from_dict({
        "profile": {"width": 32, "height": 32}, "session_times": [0.0, 10.0, 20.0], "images_per_session": 4,
        "scene": {"kind": "flat", "level": 60.0}, "demosaic": False,
        "defects": {"mode": "none", "forced": [{"coord": {"row": 9, "col": 9}, "D": 100.0, "c": 7.0,
                                                "onset_time": 10.0}]}})
    frames, truth = simulate(spec)
    trusted = [f for f in frames if f.role == "trusted"]
    (s,) = extract_residual_series([f.image for f in trusted], [truth.defects[0].coord], [f.meta for f in trusted])
    tau = trusted[0].meta.tau
    assert np.all(s.values[:4] == 0)
    assert np.allclose(s.values[4:], tau * 100 + 7, atol=1)


@pytest.mark.parametrize("k", [1, 2, 5, 17, 28, 29])
def test_onset_noiseless_exact(k):
    est = estimate_onset_and_params(step_series(30, k, 150.0))
    assert est.onset_index_j == k
    assert est.params_after.c == pytest.approx(150.0, abs=1e-6)


def test_onset_never_and_always():
    est = estimate_onset_and_params(series(np.zeros(20)))
    assert est.onset_index_j == 20
    assert abs(est.params_before.c) < 1e-9 and abs(est.params_before.K) < 1e-9
    always = estimate_onset_and_params(series(np.full(20, 150.0)), present_threshold=14)
    assert always.onset_index_j == 0
    assert estimate_onset_and_params(series(np.zeros(20)), present_threshold=14).onset_index_j == 20


def test_onset_noisy_recovery():
    hits = sum(estimate_onset_and_params(step_series(60, 1 + s % 58, 150.0, 2.0, s)).onset_index_j == 1 + s % 58
               for s in range(100))
    assert hits >= 99


def test_onset_recovers_dark_current_and_offset():
    rng = np.random.default_rng(3)
    n = 40
    illum = rng.uniform(50, 150, n)
    tau = rng.choice([0.5, 1.0, 2.0], n)
    v = np.where(np.arange(n) >= 12, 0.02 * illum + 60.0 * tau + 9.0, 0.0)
    s = ResidualSeries(PixelCoord(1, 1), v, illum, tau, np.arange(n, dtype=float))
    est = estimate_onset_and_params(s)
    assert est.onset_index_j == 12
    a = est.params_after
    assert (a.K, a.D, a.c) == pytest.approx((0.02, 60.0, 9.0), abs=1e-6)
    assert DefectEstimate.from_dict(est.as_dict()) == est


def test_onset_invariant_to_constant_image_shift():
    spec = DatasetSpec.from_dict({
        "profile": {"width": 32, "height": 32, "read_noise_sigma": 1.0}, "session_times": [0.0, 10.0],
        "images_per_session": 8, "scene": {"kind": "flat", "level": 60.0}, "demosaic": False,
        "defects": {"mode": "none", "forced": [{"coord": {"row": 9, "col": 9}, "D": 100.0, "onset_time": 5.0}]}})
    frames, truth = simulate(spec)
    imgs = [f.image for f in frames]
    metas = [f.meta for f in frames]
    shifted = [RasterImage(im.data.astype(int) + 20) for im in imgs]
    coord = [truth.defects[0].coord]
    a = estimate_onset_and_params(extract_residual_series(imgs, coord, metas)[0])
    b = estimate_onset_and_params(extract_residual_series(shifted, coord, metas)[0])
    assert a.onset_index_j == b.onset_index_j == 8


def test_onset_error_shrinks_with_step_size():
    errs = []
    for step in (3.0, 6.0, 12.0, 48.0):
        e = [abs(estimate_onset_and_params(step_series(40, 20, step, 2.0, s)).onset_index_j - 20) for s in range(60)]
        errs.append(np.mean(e))
    assert all(b <= a + 0.25 for a, b in zip(errs, errs[1:]))
    assert errs[-1] == 0


def test_onset_short_series_rejected():
    with pytest.raises(InvalidArgument):
        estimate_onset_and_params(series([0.0, 1.0, 2.0]))


def test_distance_histogram_insufficient():
    r = inter_defect_distance_histogram([PixelCoord(0, 0), PixelCoord(3, 4)], (64, 64))
    assert r.status == "insufficient data" and r.observed.sum() == 1


def uniform_coords(seed, n=500, size=400):
    sites = np.random.default_rng(seed).choice(size * size, n, replace=False)
    return [PixelCoord(int(s // size), int(s % size)) for s in sites]


def test_distance_histogram_uniform_and_cluster():
    passes = sum(inter_defect_distance_histogram(uniform_coords(s), (400, 400), placements=60, null_draws=60,
                                                 seed=1000 + s).p_value > 0.01 for s in range(100))
    assert passes >= 95
    rng = np.random.default_rng(0)
    sites = rng.choice(2500, 500, replace=False)
    cluster = [PixelCoord(100 + int(s // 50), 200 + int(s % 50)) for s in sites]
    assert inter_defect_distance_histogram(cluster, (400, 400)).p_value < 0.001


def test_sector_test_validation():
    with pytest.raises(InvalidArgument):
        sector_uniformity_test([PixelCoord(500, 0)], (400, 400))
    with pytest.raises(InvalidArgument):
        sector_uniformity_test([], (400, 400))
    stat, p = sector_uniformity_test(uniform_coords(0), (400, 400))
    assert 0 <= p <= 1 and stat >= 0
