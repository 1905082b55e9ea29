import numpy as np
import pytest
from hypothesis import given, settings

from conftest import boxes
from mr2track.core import BBox, iou
from mr2track.kalman import KalmanFilter, MotionState, kf_initiate, kf_predict, kf_state_to_bbox, kf_update


def _assert_psd(cov):
    assert np.allclose(cov, cov.T, atol=1e-9)
    assert np.linalg.eigvalsh(cov).min() >= -1e-9


def test_initiate_example():
    s = kf_initiate(BBox(0.4, 0.4, 0.6, 0.6))
    np.testing.assert_allclose(s.mean, [0.5, 0.5, 1.0, 0.2, 0, 0, 0, 0], atol=1e-15)
    assert np.all(s.mean[4:] == 0.0)
    _assert_psd(s.covariance)
    assert np.all(np.diag(s.covariance) > 0)


def test_initiate_rejects_zero_area():
    with pytest.raises(ValueError):
        kf_initiate(BBox(0.2, 0.2, 0.2, 0.5))


def test_state_to_bbox_example():
    s = MotionState(np.array([0.5, 0.5, 1.0, 0.2, 0, 0, 0, 0.0]), np.eye(8))
    b = kf_state_to_bbox(s)
    np.testing.assert_allclose(b.as_tuple(), (0.4, 0.4, 0.6, 0.6), atol=1e-15)


def test_state_to_bbox_clamps():
    s = MotionState(np.array([0.95, 0.05, 1.0, 0.4, 0, 0, 0, 0.0]), np.eye(8))
    b = kf_state_to_bbox(s)
    assert b.x_max == 1.0 and b.y_min == 0.0


@given(boxes(min_size=1e-3))
def test_round_trip(b):
    out = kf_state_to_bbox(kf_initiate(b))
    np.testing.assert_allclose(out.as_tuple(), b.as_tuple(), atol=1e-12)


def test_predict_static_grows_covariance():
    s = kf_initiate(BBox(0.4, 0.4, 0.6, 0.6))
    p = kf_predict(s)
    np.testing.assert_array_equal(p.mean[:4], s.mean[:4])
    assert np.trace(p.covariance) > np.trace(s.covariance)


def test_predict_constant_velocity():
    mean = np.array([0.5, 0.5, 1.0, 0.2, 0.01, 0, 0, 0])
    p = kf_predict(MotionState(mean, np.eye(8) * 1e-4))
    assert p.mean[0] == pytest.approx(0.51, abs=1e-15)


def test_predict_twice_without_noise():
    kf = KalmanFilter(process_noise_scale=0.0)
    mean = np.array([0.5, 0.4, 1.0, 0.2, 0.01, -0.02, 0, 0])
    s = MotionState(mean, np.eye(8) * 1e-4)
    s2 = kf.predict(kf.predict(s))
    np.testing.assert_allclose(s2.mean[:2], [0.52, 0.36], atol=1e-15)


def test_update_with_predicted_box_keeps_mean():
    s = kf_predict(kf_initiate(BBox(0.4, 0.4, 0.6, 0.6)))
    u = kf_update(s, kf_state_to_bbox(s))
    np.testing.assert_allclose(u.mean[:4], s.mean[:4], atol=1e-9)


def test_update_shrinks_position_block():
    s = kf_predict(kf_initiate(BBox(0.4, 0.4, 0.6, 0.6)))
    u = kf_update(s, BBox(0.42, 0.41, 0.61, 0.6))
    assert np.trace(u.covariance[:4, :4]) <= np.trace(s.covariance[:4, :4])


def test_repeated_updates_converge_to_measurement():
    target = BBox(0.3, 0.35, 0.5, 0.6)
    s = kf_initiate(BBox(0.25, 0.3, 0.47, 0.58))
    for _ in range(20):
        s = kf_update(kf_predict(s), target)
    np.testing.assert_allclose(kf_state_to_bbox(s).as_tuple(), target.as_tuple(), atol=1e-3)


def test_covariance_stays_psd_long_run():
    rng = np.random.default_rng(11)
    s = kf_initiate(BBox(0.4, 0.4, 0.6, 0.6))
    for _ in range(1000):
        s = kf_predict(s)
        if rng.random() < 0.8:
            c = rng.uniform(0.2, 0.8, 2)
            w, h = rng.uniform(0.05, 0.3, 2)
            s = kf_update(s, BBox(c[0] - w / 2, c[1] - h / 2, c[0] + w / 2, c[1] + h / 2))
        _assert_psd(s.covariance)
        assert s.mean[3] > 0


def _track_linear(v: float, steps: int):
    box = lambda t: BBox(0.2 + v * t, 0.3, 0.4 + v * t, 0.5)  # noqa: E731
    s = kf_initiate(box(0))
    for t in range(1, steps + 1):
        s = kf_update(kf_predict(s), box(t))
    return abs(s.mean[0] - (0.3 + v * steps)), abs(s.mean[1] - 0.4)


@pytest.mark.parametrize("v", [0.0, 0.002, 0.01])
def test_constant_velocity_noiseless(v):
    ex, ey = _track_linear(v, 10)
    assert ex < 1e-3 and ey < 1e-3


def test_update_helps_on_average():
    # Manoeuvring target: velocity random-walks; measurements carry Gaussian noise.
    err_pred, err_upd = [], []
    for seed in range(100):
        rng = np.random.default_rng(seed)
        cx, vx = 0.4, 0.0
        s = kf_initiate(BBox(cx - 0.1, 0.3, cx + 0.1, 0.55))
        for _ in range(15):
            vx += rng.normal(0, 0.004)
            cx += vx
            pred = kf_predict(s)
            noisy = np.array([cx - 0.1, 0.3, cx + 0.1, 0.55]) + rng.normal(0, 0.002, 4)
            s = kf_update(pred, BBox(*noisy))
            err_pred.append(abs(pred.mean[0] - cx))
            err_upd.append(abs(s.mean[0] - cx))
    assert np.mean(err_upd) <= np.mean(err_pred)
