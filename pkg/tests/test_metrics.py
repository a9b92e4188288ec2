import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from toflow.errors import ShapeError
from toflow.metrics import PSNR_CAP, MetricReport, psnr, ssim


def const(v, shape=(3, 16, 16)):
    return np.full(shape, v)


def test_psnr_cases():
    assert psnr(const(0.3), const(0.3)) == PSNR_CAP == 99.0
    assert psnr(const(0.0), const(1.0)) == 0.0
    assert abs(psnr(const(0.5), const(0.6)) - 20.0) < 1e-9


def test_psnr_shape_mismatch():
    with pytest.raises(ShapeError):
        psnr(const(0, (3, 4, 4)), const(0, (3, 4, 5)))


@settings(max_examples=50, deadline=None)
@given(st.floats(0.001, 0.4), st.floats(0.001, 0.4))
def test_psnr_decreases_with_offset(d1, d2):
    a = const(0.3)
    p1, p2 = psnr(a, a + d1), psnr(a, a + d2)
    if d1 < d2:
        assert p1 > p2
    assert psnr(a, a + d1) == psnr(a + d1, a)


def test_ssim_identity_is_one():
    a = np.random.default_rng(0).random((3, 24, 24))
    assert ssim(a, a) == 1.0


def test_ssim_two_constants_closed_form():
    c1, c2 = 0.01**2, 0.03**2
    mu_a, mu_b = 0.5, 0.6
    expect = (2 * mu_a * mu_b + c1) / (mu_a**2 + mu_b**2 + c1) * (c2 / c2)
    assert abs(ssim(const(mu_a), const(mu_b)) - expect) < 1e-9


def test_ssim_symmetric_and_bounded():
    rng = np.random.default_rng(1)
    a, b = rng.random((3, 20, 20)), rng.random((3, 20, 20))
    assert ssim(a, b) == pytest.approx(ssim(b, a), abs=1e-12)
    assert -1 <= ssim(a, b) <= 1
    assert ssim(a, 1 - a) < 0


def test_ssim_window_too_large():
    with pytest.raises(ShapeError):
        ssim(const(0, (3, 10, 30)), const(0, (3, 10, 30)))


def test_report_order_and_jsonl():
    rep = MetricReport()
    rep.add("b", const(0.5), const(0.6))
    rep.add("a", const(0.5), const(0.5))
    assert rep.count == 2
    assert rep.mean_psnr == pytest.approx((20 + 99) / 2)
    lines = rep.jsonl().splitlines()
    assert [l.split('"clip": ')[1][:3] for l in lines] == ['"b"', '"a"']
    assert rep.summary()["count"] == 2
