import json
import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pedfusion.calib import (
    DistancePoly,
    SpatialMap,
    TriggerClock,
    align_camera_to_lidar,
    align_lidar_to_frame,
    build_spatial_map,
    calibration_to_json,
    eval_distance,
    fit_distance_poly,
    identity_map,
    load_calibration,
    load_samples_csv,
    save_calibration,
    save_samples_csv,
)
from pedfusion.errors import (
    DegenerateDesign,
    NonMonotone,
    NoScanAvailable,
    OutOfCalibratedRange,
    SchemaError,
    TooFewAnchors,
    TooFewSamples,
)
from pedfusion.lidar import LidarScan


def ground_plane_samples(n=53):
    ys = np.linspace(215.0, 470.0, n)
    return [(float(y), 600.0 / (y - 200.0)) for y in ys]


def mp_lstsq_residual(samples, dps=60):
    """Full-precision least-squares degree-8 fit on raw rows (QR in mpmath)."""
    mpmath.mp.dps = dps
    A = mpmath.matrix([[mpmath.mpf(y) ** k for k in range(8, -1, -1)] for y, _ in samples])
    b = mpmath.matrix([mpmath.mpf(d) for _, d in samples])
    Q, R = mpmath.qr(A)
    qtb = Q.T * b
    coef = mpmath.lu_solve(R[:9, :9], qtb[:9])
    resid = A * coef - b
    return [float(r) for r in resid]


# -- fit_distance_poly -------------------------------------------------------

def test_constant_fit():
    samples = [(200.0 + 10 * k, 7.0) for k in range(9)]
    poly = fit_distance_poly(samples)
    for y, _ in samples:
        assert eval_distance(poly, y) == pytest.approx(7.0, abs=1e-9)


def test_too_few_samples():
    with pytest.raises(TooFewSamples):
        fit_distance_poly([(float(y), 5.0) for y in range(8)])


def test_identical_rows_degenerate():
    with pytest.raises(DegenerateDesign):
        fit_distance_poly([(300.0, 5.0 + k) for k in range(12)])


def test_rank_deficient_degenerate():
    # only five distinct rows cannot pin nine coefficients
    samples = [(float(300 + 10 * (k % 5)), 5.0 + 0.1 * k) for k in range(15)]
    with pytest.raises(DegenerateDesign):
        fit_distance_poly(samples)


def test_nonpositive_distance_rejected():
    samples = [(float(200 + k), 1.0) for k in range(9)]
    samples[3] = (203.0, 0.0)
    with pytest.raises(ValueError):
        fit_distance_poly(samples)


def test_fit_report_and_range():
    samples = ground_plane_samples()
    poly = fit_distance_poly(samples)
    assert poly.valid_y_range == (215.0, 470.0)
    assert poly.report.n_samples == 53
    resid = [abs(eval_distance(poly, y) - d) for y, d in samples]
    assert poly.report.max_residual_m == pytest.approx(max(resid), rel=1e-9)


def test_ground_plane_fit_matches_full_precision_oracle():
    samples = ground_plane_samples()
    poly = fit_distance_poly(samples)
    ours = max(abs(eval_distance(poly, y) - d) for y, d in samples)
    oracle = max(abs(r) for r in mp_lstsq_residual(samples))
    rms_ours = math.sqrt(np.mean([(eval_distance(poly, y) - d) ** 2 for y, d in samples]))
    rms_oracle = math.sqrt(np.mean(np.square(mp_lstsq_residual(samples))))
    # the normalized double-precision solve reaches the true least-squares optimum
    assert rms_ours <= rms_oracle * (1 + 1e-6)
    assert ours == pytest.approx(oracle, rel=1e-4)


@pytest.mark.xfail(strict=True, reason="600/(y-200) over [215, 470] has a least-squares degree-8 "
                   "residual of ~0.7 m; no degree-8 polynomial reaches 0.05 m (see oracle test)")
def test_ground_plane_fit_within_5cm():
    samples = ground_plane_samples()
    poly = fit_distance_poly(samples)
    assert max(abs(eval_distance(poly, y) - d) for y, d in samples) <= 0.05


@pytest.mark.xfail(strict=True, reason="same generator: the fit at y=300 is off by more than 0.05 m")
def test_ground_plane_eval_at_300():
    poly = fit_distance_poly(ground_plane_samples())
    assert eval_distance(poly, 300.0) == pytest.approx(6.0, abs=0.05)


def test_jittered_renderer_sweep_fits(calibration):
    from pedfusion.pipeline import sweep_samples
    from pedfusion.sim import ScenarioConfig
    rng = np.random.default_rng(7)
    samples = [(y + rng.uniform(-0.1, 0.1), d) for y, d in sweep_samples(ScenarioConfig())]
    poly = fit_distance_poly(samples)
    assert len(samples) == 53
    assert poly.report is not None and poly.report.max_residual_m < 0.5


@settings(max_examples=60, deadline=None)
@given(coeffs=st.lists(st.floats(-5, 5), min_size=9, max_size=9),
       lo=st.floats(0, 200), span=st.floats(50, 400), n=st.integers(9, 60))
def test_fit_recovers_degree8_generator(coeffs, lo, span, n):
    ys = np.linspace(lo, lo + span, n)
    yc = ys.mean()
    ys_scale = np.max(np.abs(ys - yc))
    u = (ys - yc) / ys_scale
    d = np.polyval(coeffs, u) + 50.0  # keep distances positive
    poly = fit_distance_poly(list(zip(ys, d)))
    scale = max(1.0, float(np.max(np.abs(d))))
    for y, di in zip(ys, d):
        assert abs(eval_distance(poly, y) - di) <= 1e-6 * scale


# -- eval_distance -----------------------------------------------------------

def test_eval_constant_term_only():
    poly = DistancePoly(coeffs=(0.0,) * 8 + (7.5,), y_center=300.0, y_scale=100.0,
                        valid_y_range=(200.0, 400.0))
    for y in (200.0, 255.5, 400.0):
        assert eval_distance(poly, y) == 7.5


def test_eval_out_of_range():
    poly = fit_distance_poly(ground_plane_samples())
    with pytest.raises(OutOfCalibratedRange):
        eval_distance(poly, poly.valid_y_range[1] + 1)
    with pytest.raises(OutOfCalibratedRange):
        eval_distance(poly, poly.valid_y_range[0] - 1e-9)


def test_poly_invariants():
    with pytest.raises(ValueError):
        DistancePoly(coeffs=(1.0,) * 8, y_center=0.0, y_scale=1.0, valid_y_range=(0.0, 1.0))
    with pytest.raises(ValueError):
        DistancePoly(coeffs=(1.0,) * 9, y_center=0.0, y_scale=0.0, valid_y_range=(0.0, 1.0))


# -- spatial map -------------------------------------------------------------

def test_identity_map():
    smap = build_spatial_map([(k, k) for k in range(2, 11)])
    assert len(smap.anchors) == 9
    assert align_camera_to_lidar(smap, 6.3) == pytest.approx(6.3)


def test_near_identity_map_accepted():
    lid = [2.1, 3.05, 4.02, 5.0, 6.01, 6.98, 8.0, 9.02, 10.0]
    smap = build_spatial_map(list(zip(range(2, 11), lid)))
    assert len(smap.anchors) == 9


def test_interpolation_midpoint():
    smap = build_spatial_map([(2.0, 2.2), (3.0, 3.0)])
    assert align_camera_to_lidar(smap, 2.5) == pytest.approx(2.6)


def test_extension_uses_last_segment_slope():
    pairs = [(2.0, 2.0), (5.0, 5.5), (9.0, 9.4), (10.0, 10.6)]
    smap = build_spatial_map(pairs)
    # slope 1.2 on the 9-10 segment
    assert align_camera_to_lidar(smap, 12.0) == pytest.approx(10.6 + 2 * 1.2)
    # slope 3.5/3 on the 2-5 segment below the span
    assert align_camera_to_lidar(smap, 1.0) == pytest.approx(2.0 - 3.5 / 3)


def test_nonmonotone_rejected():
    with pytest.raises(NonMonotone):
        build_spatial_map([(2, 2.0), (3, 3.0), (4, 2.9), (5, 5.0)])
    with pytest.raises(NonMonotone):
        SpatialMap(anchors=((2.0, 2.0), (2.0, 3.0)))


def test_too_few_anchors():
    with pytest.raises(TooFewAnchors):
        build_spatial_map([(2.0, 2.0)])


@settings(max_examples=100, deadline=None)
@given(steps=st.lists(st.tuples(st.floats(0.1, 3), st.floats(0.1, 3)), min_size=1, max_size=10),
       xs=st.lists(st.floats(-10, 40), min_size=2, max_size=20))
def test_alignment_monotone_and_matches_interp(steps, xs):
    c, l = 1.0, 1.0
    pairs = [(c, l)]
    for dc, dl in steps:
        c, l = c + dc, l + dl
        pairs.append((c, l))
    smap = build_spatial_map(pairs)
    xs = sorted(xs)
    ys = [align_camera_to_lidar(smap, x) for x in xs]
    assert all(b >= a - 1e-9 for a, b in zip(ys, ys[1:]))
    cs, ls = zip(*pairs)
    for x, y in zip(xs, ys):
        if cs[0] <= x <= cs[-1]:
            assert y == pytest.approx(float(np.interp(x, cs, ls)), abs=1e-9)


# -- temporal alignment --------------------------------------------------------

def scans_at(*ts):
    return [LidarScan.from_ranges(t, [None, None, None]) for t in ts]


def test_latest_not_after():
    clock = TriggerClock()
    assert align_lidar_to_frame(clock, 0.015, scans_at(0.0, 0.01, 0.02)).t_s == 0.01
    assert clock.last_frame_time_s == 0.015


def test_single_candidate():
    assert align_lidar_to_frame(TriggerClock(), 0.033, scans_at(0.0)).t_s == 0.0


def test_empty_stream():
    with pytest.raises(NoScanAvailable):
        align_lidar_to_frame(TriggerClock(), 0.1, [])
    with pytest.raises(NoScanAvailable):
        align_lidar_to_frame(TriggerClock(), 0.1, scans_at(0.2))


def test_trigger_clock_period():
    with pytest.raises(ValueError):
        TriggerClock(frame_period_s=0.0)


@settings(max_examples=100, deadline=None)
@given(ts=st.lists(st.floats(0, 10), min_size=1, max_size=40, unique=True), t=st.floats(0, 10))
def test_alignment_oracle(ts, t):
    stream = scans_at(*sorted(ts))
    earlier = [s for s in stream if s.t_s <= t]
    if not earlier:
        with pytest.raises(NoScanAvailable):
            align_lidar_to_frame(TriggerClock(), t, stream)
    else:
        got = align_lidar_to_frame(TriggerClock(), t, stream)
        assert got.t_s == max(s.t_s for s in earlier) and got.t_s <= t


# -- serialization -------------------------------------------------------------

def test_calibration_json_roundtrip(tmp_path):
    poly = fit_distance_poly(ground_plane_samples())
    smap = identity_map()
    p = tmp_path / "cal.json"
    save_calibration(p, poly, smap)
    doc = json.loads(p.read_text())
    assert set(doc["poly"]) == {"coeffs", "y_center", "y_scale", "y_range"}
    poly2, smap2 = load_calibration(p)
    assert poly2 == poly and smap2 == smap
    assert calibration_to_json(poly2, smap2) == p.read_text()


def test_calibration_schema_error(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text(json.dumps({"poly": {"coeffs": [1] * 9}}))
    with pytest.raises(SchemaError):
        load_calibration(p)


def test_samples_csv_roundtrip(tmp_path):
    samples = ground_plane_samples(12)
    p = tmp_path / "s.csv"
    save_samples_csv(p, samples)
    assert p.read_text().splitlines()[0] == "y_px,distance_m"
    assert load_samples_csv(p) == samples
