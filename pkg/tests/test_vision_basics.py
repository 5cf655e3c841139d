import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import point_in_polygon
from pedfusion.errors import DegeneratePolygon
from pedfusion.vision import GrayFrame, compute_roi, full_mask, mask_threshold, read_pgm, write_pgm
from pedfusion.vision.roi import RoiMask, polygon_raster


def test_frame_invariants():
    f = GrayFrame(np.zeros((480, 640), dtype=np.uint8), 1.5)
    assert (f.width, f.height) == (640, 480) and f.pixels.size == 640 * 480
    with pytest.raises(ValueError):
        f.pixels[0, 0] = 3
    with pytest.raises(ValueError):
        GrayFrame(np.zeros(10, dtype=np.uint8))
    with pytest.raises(ValueError):
        GrayFrame(np.full((4, 4), 300))


def test_pgm_roundtrip(tmp_path):
    rng = np.random.default_rng(1)
    f = GrayFrame(rng.integers(0, 256, (37, 53), dtype=np.uint8))
    write_pgm(tmp_path / "a.pgm", f)
    raw = (tmp_path / "a.pgm").read_bytes()
    assert raw.startswith(b"P5\n53 37\n255\n")
    assert read_pgm(tmp_path / "a.pgm") == f


def test_pgm_with_comments(tmp_path):
    body = bytes(range(12))
    (tmp_path / "c.pgm").write_bytes(b"P5\n# made by hand\n4 # width\n3\n255\n" + body)
    f = read_pgm(tmp_path / "c.pgm")
    assert f.shape == (3, 4) and f.tobytes() == body


@pytest.mark.parametrize("data", [b"P2\n2 2\n255\n0 0 0 0", b"P5\n2 2\n65535\n" + b"\0" * 8,
                                  b"P5\n4 4\n255\n" + b"\0" * 3, b"P5\n4"])
def test_pgm_rejects_bad_files(tmp_path, data):
    (tmp_path / "b.pgm").write_bytes(data)
    with pytest.raises(ValueError):
        read_pgm(tmp_path / "b.pgm")


# -- ROI ---------------------------------------------------------------------------

def test_roi_example_vertices():
    roi = compute_roi((320, 215), ((40, 479), (600, 479)), 12)
    assert set(roi.polygon) == {(308, 215), (332, 215), (600, 479), (40, 479)}
    assert roi.contains(320, 400) is True
    assert roi.contains(5, 220) is False


def test_roi_degenerate():
    with pytest.raises(DegeneratePolygon):
        compute_roi((320, 215), ((40, 479), (600, 479)), 0)
    with pytest.raises(DegeneratePolygon):
        compute_roi((320, 215), ((40, 479), (40, 479)))
    with pytest.raises(DegeneratePolygon):
        compute_roi((320, 479), ((40, 300), (600, 300)))


def test_roi_near_points_order_irrelevant():
    a = compute_roi((320, 215), ((40, 479), (600, 479)))
    b = compute_roi((320, 215), ((600, 479), (40, 479)))
    assert np.array_equal(a.raster, b.raster)


@settings(max_examples=40, deadline=None)
@given(fx=st.floats(100, 540), fy=st.floats(150, 300), lx=st.floats(-100, 300),
       rx=st.floats(340, 740), hw=st.floats(1, 40))
def test_roi_raster_matches_ray_casting(fx, fy, lx, rx, hw):
    roi = compute_roi((fx, fy), ((lx, 479.0), (rx, 479.0)), hw)
    rng = np.random.default_rng(int(fx * 1000) % 2**32)
    for x, y in zip(rng.integers(0, 640, 300), rng.integers(0, 480, 300)):
        # pixels whose center lies exactly on an edge may go either way under even-odd rules
        inside = point_in_polygon(x + 1e-7, y + 1e-7, roi.polygon)
        if inside != point_in_polygon(x - 1e-7, y - 1e-7, roi.polygon):
            continue
        assert bool(roi.raster[y, x]) == inside


def test_polygon_raster_shape():
    r = polygon_raster(((0, 0), (9, 0), (9, 9), (0, 9)), (10, 10))
    assert r.all()


# -- mask + threshold --------------------------------------------------------------------

def test_mask_threshold_all_pass():
    f = GrayFrame(np.full((48, 64), 128, dtype=np.uint8))
    assert mask_threshold(f, full_mask((48, 64)), 100) == f


def test_mask_threshold_all_fail():
    f = GrayFrame(np.full((48, 64), 128, dtype=np.uint8))
    assert not mask_threshold(f, full_mask((48, 64)), 200).pixels.any()


def test_mask_threshold_checker_left_half():
    ys, xs = np.mgrid[0:48, 0:64]
    checker = np.where(((ys // 8) + (xs // 8)) % 2 == 0, 255, 0).astype(np.uint8)
    left = np.zeros((48, 64), dtype=bool)
    left[:, :32] = True
    mask = RoiMask(polygon=((0, 0), (31, 0), (31, 47), (0, 47)), raster=left)
    out = mask_threshold(GrayFrame(checker), mask, 128).pixels
    assert not out[:, 32:].any()
    assert np.array_equal(out[:, :32], checker[:, :32])
    assert (out == 255).sum() == (checker[:, :32] == 255).sum()


def test_mask_threshold_checks():
    f = GrayFrame(np.zeros((48, 64), dtype=np.uint8))
    with pytest.raises(ValueError):
        mask_threshold(f, full_mask((48, 64)), 256)
    with pytest.raises(ValueError):
        mask_threshold(f, full_mask((10, 10)), 10)
