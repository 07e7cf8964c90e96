import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rcmtrack.core import BBox
from rcmtrack.motion import KfState, kf_init, kf_predict, kf_update, state_to_bbox

SP, SV = 1 / 20, 1 / 160


def ref_predict(mean, cov):
    F = np.eye(8)
    for k in range(4):
        F[k, k + 4] = 1.0
    h = mean[3]
    q = np.array([SP * h, SP * h, 1e-2, SP * h, SV * h, SV * h, 1e-5, SV * h]) ** 2
    return F @ mean, F @ cov @ F.T + np.diag(q)


def ref_update(mean, cov, z):
    H = np.zeros((4, 8))
    H[:4, :4] = np.eye(4)
    h = mean[3]
    R = np.diag(np.array([SP * h, SP * h, 1e-1, SP * h]) ** 2)
    S = H @ cov @ H.T + R
    K = cov @ H.T @ np.linalg.inv(S)
    return mean + K @ (z - H @ mean), (np.eye(8) - K @ H) @ cov


def meas(b):
    return np.array([b.x + b.w / 2, b.y + b.h / 2, b.w / b.h, b.h])


boxes = st.builds(BBox, st.floats(-500, 2000), st.floats(-500, 1000), st.floats(2, 400), st.floats(2, 400))


def test_init_mean():
    s = kf_init(BBox(100, 100, 40, 80))
    assert s.mean.tolist() == [120, 140, 0.5, 80, 0, 0, 0, 0]


def test_init_cov_diagonal_stds():
    s = kf_init(BBox(100, 100, 40, 80))
    std = np.sqrt(np.diag(s.cov))
    assert std[[0, 1, 3]] == pytest.approx([2 * SP * 80] * 3)
    assert std[[4, 5, 7]] == pytest.approx([10 * SV * 80] * 3)
    assert np.linalg.eigvalsh(s.cov).min() > 0


@given(boxes)
def test_init_velocity_zero_and_pd(b):
    s = kf_init(b)
    assert np.all(s.mean[4:] == 0)
    assert np.linalg.eigvalsh(s.cov).min() > 0


def test_predict_moves_by_velocity():
    s = kf_init(BBox(100, 100, 40, 80))
    m = s.mean.copy()
    m[4] = 2.0
    p = kf_predict(KfState(m, s.cov))
    assert p.mean[0] == pytest.approx(122.0)


def test_predict_static_and_trace_grows():
    s = kf_init(BBox(100, 100, 40, 80))
    p = kf_predict(s)
    assert p.mean[:4].tolist() == s.mean[:4].tolist()
    assert np.trace(p.cov) > np.trace(s.cov)


@given(boxes, st.floats(-5, 5), st.floats(-5, 5))
def test_predict_matches_reference(b, vx, vy):
    s = kf_init(b)
    m = s.mean.copy()
    m[4], m[5] = vx, vy
    p = kf_predict(KfState(m, s.cov))
    rm, rc = ref_predict(m, s.cov)
    assert np.allclose(p.mean, rm, rtol=1e-12, atol=1e-9)
    assert np.allclose(p.cov, rc, rtol=1e-9, atol=1e-9)


@given(boxes, boxes)
def test_update_matches_reference(b, z):
    s = kf_predict(kf_init(b))
    u = kf_update(s, z)
    rm, rc = ref_update(s.mean, s.cov, meas(z))
    assert np.allclose(u.mean[:4], np.maximum(rm[:4], [-np.inf, -np.inf, 1e-3, 1e-3]), rtol=1e-9, atol=1e-6)
    assert np.allclose(u.cov, rc, rtol=1e-7, atol=1e-7)


def test_update_zero_innovation_keeps_mean():
    s = kf_predict(kf_init(BBox(100, 100, 40, 80)))
    u = kf_update(s, state_to_bbox(s))
    assert u.mean[:4] == pytest.approx(s.mean[:4], abs=1e-9)


def test_update_converges_to_constant_measurement():
    # literal example: predict/update against a fixed box, 1e-6 within 50 rounds
    s = kf_init(BBox(100, 100, 40, 80))
    z = BBox(130, 90, 44, 76)
    for _ in range(50):
        s = kf_update(kf_predict(s), z)
    assert s.mean[[0, 1, 3]] == pytest.approx(meas(z)[[0, 1, 3]], abs=1e-6)


def test_update_converges_geometrically():
    s = kf_init(BBox(100, 100, 40, 80))
    z = BBox(130, 90, 44, 76)
    errs = []
    for _ in range(150):
        s = kf_update(kf_predict(s), z)
        errs.append(np.abs(s.mean[[0, 1, 3]] - meas(z)[[0, 1, 3]]).max())
    assert errs[-1] < 1e-6
    assert errs[99] < errs[49] * 1e-2


def test_update_contracts_position_variance():
    s = kf_predict(kf_init(BBox(100, 100, 40, 80)))
    u = kf_update(s, BBox(101, 99, 40, 80))
    assert np.all(np.diag(u.cov)[:4] < np.diag(s.cov)[:4])


def test_state_to_bbox_example():
    m = np.array([120, 140, 0.5, 80, 0, 0, 0, 0], dtype=float)
    b = state_to_bbox(KfState(m, np.eye(8)))
    assert (b.x, b.y, b.w, b.h) == (100, 100, 40, 80)
    m[2], m[3] = 1.0, 50.0
    assert state_to_bbox(KfState(m, np.eye(8))).w == 50


@given(boxes)
def test_box_state_round_trip(b):
    r = state_to_bbox(kf_init(b))
    assert (r.x, r.y, r.w, r.h) == pytest.approx((b.x, b.y, b.w, b.h), abs=1e-9)


def test_covariance_stays_spd_over_long_random_run():
    rng = np.random.default_rng(7)
    s = kf_init(BBox(500, 400, 60, 40))
    for _ in range(10_000):
        s = kf_predict(s)
        if rng.random() < 0.7:
            cx, cy = s.mean[0] + rng.normal(0, 3), s.mean[1] + rng.normal(0, 3)
            w, h = 60 * rng.uniform(0.8, 1.2), 40 * rng.uniform(0.8, 1.2)
            s = kf_update(s, BBox(cx - w / 2, cy - h / 2, w, h))
        assert np.array_equal(s.cov, s.cov.T)
    assert np.linalg.eigvalsh(s.cov).min() > 0


def test_noiseless_constant_velocity_prediction():
    # 1 px/frame; after 5 warm-up updates each one-step prediction lands within 0.5 px
    s = kf_init(BBox(100, 200, 50, 30))
    v = np.array([1.0, -0.5]) / np.hypot(1.0, -0.5)
    truth = lambda k: BBox(100 + v[0] * k, 200 + v[1] * k, 50, 30)
    for k in range(1, 6):
        s = kf_update(kf_predict(s), truth(k))
    for k in range(6, 16):
        s = kf_predict(s)
        t = truth(k)
        assert np.hypot(s.mean[0] - (t.x + 25), s.mean[1] - (t.y + 15)) < 0.5
        s = kf_update(s, t)


def test_filter_is_deterministic():
    def run():
        s = kf_init(BBox(10, 20, 30, 40))
        for k in range(30):
            s = kf_update(kf_predict(s), BBox(10 + k, 20 + 0.5 * k, 30, 40))
        return s

    a, b = run(), run()
    assert np.array_equal(a.mean, b.mean) and np.array_equal(a.cov, b.cov)


def test_negative_height_floored():
    s = kf_init(BBox(100, 100, 40, 2))
    m = s.mean.copy()
    m[7] = -10.0
    p = kf_predict(KfState(m, s.cov))
    assert p.mean[3] == pytest.approx(1e-3)
