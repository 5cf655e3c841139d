import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pedfusion.errors import SchemaError
from pedfusion.lidar import (
    ChannelHistory,
    ChannelReading,
    Detection,
    GateResult,
    GateWindow,
    LidarScan,
    Source,
    channel_gate,
    gate_scan,
    project_cio_to_image,
    read_lidar_csv,
    select_cio,
    write_lidar_csv,
)

A, R = GateResult.ACCEPTED, GateResult.REJECTED


def filled(value=5.0, n=30):
    hist = ChannelHistory()
    for _ in range(n):
        assert channel_gate(hist, 0, value) is A
    return hist


def test_gate_examples():
    assert channel_gate(filled(), 0, 5.15) is A
    assert channel_gate(filled(), 0, 5.25) is R
    assert channel_gate(ChannelHistory(), 0, 9.7) is A


def test_boundary_is_accepted():
    hist = filled(5.0)
    assert channel_gate(hist, 0, 5.0 + 0.2 - 1e-12) is A


def test_warmup_accepts_anything():
    hist = ChannelHistory()
    for v in (5.0, 9.0, 1.5, 7.0):
        assert channel_gate(hist, 0, v) is A
    assert len(hist.windows[0]) == 4


def test_rejected_samples_do_not_enter_window():
    hist = filled(5.0, 10)
    before = list(hist.windows[0].samples)
    assert channel_gate(hist, 0, 6.0) is R
    assert list(hist.windows[0].samples) == before


def test_window_capacity_is_30():
    hist = filled(5.0, 45)
    assert len(hist.windows[0]) == 30
    assert all(w.capacity == 30 for w in hist.windows)
    assert hist.sigma_spec_m == 0.10


def test_reset_after_ten_consecutive_rejects():
    hist = filled(5.0, 10)
    for _ in range(9):
        assert channel_gate(hist, 0, 8.0) is R
    assert len(hist.windows[0]) == 10
    assert channel_gate(hist, 0, 8.0) is R
    assert len(hist.windows[0]) == 0
    assert channel_gate(hist, 0, 8.0) is A


def test_channels_are_independent():
    hist = filled(5.0)
    assert channel_gate(hist, 1, 9.0) is A
    assert channel_gate(hist, 0, 9.0) is R


def test_non_finite_sample():
    with pytest.raises(ValueError):
        channel_gate(ChannelHistory(), 0, math.nan)


def test_closing_target_tracked_with_ego_speed():
    """A target closing at 15 km/h stays accepted when the window is carried forward."""
    v = 15 / 3.6
    rng = np.random.default_rng(3)
    hist = ChannelHistory()
    hist.set_closing_speed(v)
    res = [channel_gate(hist, 0, 10 - v * k / 30 + rng.normal(0, 0.1), k / 30) for k in range(200)]
    assert sum(r is R for r in res) / len(res) < 0.1


def test_plain_mean_lags_a_closing_target():
    v = 15 / 3.6
    hist = ChannelHistory()
    res = [channel_gate(hist, 0, 10 - v * k / 30, k / 30) for k in range(60)]
    assert sum(r is R for r in res) > 30


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(1, 10), min_size=0, max_size=40), st.floats(1, 10))
def test_gate_deterministic(history, sample):
    h1, h2 = ChannelHistory(), ChannelHistory()
    for v in history:
        channel_gate(h1, 2, v)
        channel_gate(h2, 2, v)
    assert channel_gate(h1, 2, sample) is channel_gate(h2, 2, sample)


# -- scans and CIO -------------------------------------------------------------

def test_scan_invariants():
    with pytest.raises(ValueError):
        LidarScan(0.0, (ChannelReading(5.0, True),) * 2)
    with pytest.raises(ValueError):
        LidarScan.from_ranges(0.0, [10.5, None, None])
    with pytest.raises(ValueError):
        LidarScan.from_ranges(0.0, [0.9, None, None])
    s = LidarScan.from_ranges(0.0, [1.0, 10.0, None])
    assert [c.valid for c in s.channels] == [True, True, False]


def test_detection_positive():
    with pytest.raises(ValueError):
        Detection(0.0, Source.LIDAR, 0.0)


def test_select_cio_examples():
    s = LidarScan.from_ranges(0.0, [3.2, 7.5, None])
    d = select_cio(s, [A, A, None])
    assert d.distance_m == 3.2 and d.source is Source.LIDAR and d.lateral_px is None
    assert select_cio(LidarScan.from_ranges(0.0, [None] * 3), [None] * 3) is None
    s = LidarScan.from_ranges(0.0, [4.0, 6.1, 5.0])
    assert select_cio(s, [R, A, A]).distance_m == 5.0


def test_gate_scan_skips_invalid():
    hist = ChannelHistory()
    gates = gate_scan(hist, LidarScan.from_ranges(0.0, [5.0, None, 6.0]))
    assert gates == [A, None, A]
    assert len(hist.windows[1]) == 0


@settings(max_examples=100, deadline=None)
@given(st.lists(st.one_of(st.none(), st.floats(1, 10)), min_size=3, max_size=3),
       st.lists(st.booleans(), min_size=3, max_size=3))
def test_cio_never_exceeds_accepted(ranges, acc):
    scan = LidarScan.from_ranges(0.0, ranges)
    gates = [None if r is None else (A if a else R) for r, a in zip(ranges, acc)]
    d = select_cio(scan, gates)
    accepted = [r for r, g in zip(ranges, gates) if g is A]
    if not accepted:
        assert d is None
    else:
        assert d.distance_m == min(accepted)


# -- projection ----------------------------------------------------------------

def test_projection_interval():
    det = Detection(5.0, Source.LIDAR, 0.0)
    half = 640 * math.tan(math.radians(13.5)) / (2 * math.tan(math.radians(39)))
    lo, hi = project_cio_to_image(det, 640, 78.0, 27.0)
    assert (lo, hi) == (226, 414)
    assert lo == math.ceil(320 - half) and hi == math.floor(320 + half)


def test_projection_equal_fov_full_width():
    assert project_cio_to_image(Detection(5.0, Source.LIDAR, 0.0), 640, 40.0, 40.0) == (0, 639)


@pytest.mark.parametrize("cam,lid", [(78.0, 27.0), (90.0, 10.0), (30.0, 29.0)])
def test_projection_tiny_width(cam, lid):
    lo, hi = project_cio_to_image(Detection(5.0, Source.LIDAR, 0.0), 2, cam, lid)
    assert lo <= hi and lo <= 1 <= hi


def test_projection_rejects_camera_source():
    with pytest.raises(ValueError):
        project_cio_to_image(Detection(5.0, Source.CAMERA, 0.0), 640, 78.0, 27.0)


# -- CSV -------------------------------------------------------------------------

def test_csv_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    scans = [LidarScan.from_ranges(k / 100, [float(rng.uniform(1, 10)) if rng.random() < 0.7 else None
                                             for _ in range(3)]) for k in range(50)]
    p = tmp_path / "l.csv"
    write_lidar_csv(p, scans)
    assert p.read_text().splitlines()[0] == "t_s,ch0_m,ch0_valid,ch1_m,ch1_valid,ch2_m,ch2_valid"
    assert read_lidar_csv(p) == scans


def test_csv_missing_column(tmp_path):
    p = tmp_path / "l.csv"
    p.write_text("t_s,ch0_m,ch0_valid,ch1_m,ch1_valid,ch2_m\n0.0,5.0,1,5.0,1,5.0\n")
    with pytest.raises(SchemaError):
        read_lidar_csv(p)


def test_csv_bad_row_reports_row_number(tmp_path):
    p = tmp_path / "l.csv"
    p.write_text("t_s,ch0_m,ch0_valid,ch1_m,ch1_valid,ch2_m,ch2_valid\n"
                 "0.0,5.0,1,0.0,0,0.0,0\n"
                 "0.01,abc,1,0.0,0,0.0,0\n")
    with pytest.raises(SchemaError) as exc:
        read_lidar_csv(p)
    assert exc.value.row == 3
