from types import SimpleNamespace

import numpy as np
import pytest

from pzplan.estimator import (
    DegenerateGeometryError,
    FilterState,
    ScheduleEntry,
    correct,
    correct_linear,
    kalman_gain,
    overbound_measurement_cov,
    precompute_schedule,
    predict,
)
from pzplan.gnss.measurements import SatelliteView
from pzplan.models import NoiseConfig, jacobian_measurement, measurement
from scipy.stats import norm

Q = np.diag([0.01, 0.01, 0.001])


def test_overbound_examples():
    np.testing.assert_array_equal(overbound_measurement_cov([4.0, 2.0], [0.0, 0.0]), np.diag([4.0, 2.0]))
    r_hat = overbound_measurement_cov([4.0], [3.0], q_sigma=3)
    assert r_hat[0, 0] == pytest.approx(9.0)
    # the 3-sigma quantile of N(b, R) equals 3 * sqrt(R_hat)
    assert norm.ppf(norm.cdf(3), loc=3.0, scale=2.0) == pytest.approx(3 * np.sqrt(r_hat[0, 0]))
    with pytest.raises(ValueError):
        overbound_measurement_cov([0.0], [1.0])


def test_overbound_identity_exact():
    rng = np.random.default_rng(0)
    r, b = rng.uniform(0.1, 50, 20), rng.uniform(0, 40, 20)
    for q in (1.0, 2.0, 3.0):
        r_hat = np.diag(overbound_measurement_cov(r, b, q))
        np.testing.assert_allclose(q * np.sqrt(r_hat), b + q * np.sqrt(r), rtol=1e-14)


def test_predict_examples():
    f = FilterState([0, 0, 0.3], np.diag([1.0, 2.0, 0.1]))
    out = predict(f, [0.0, 0.7], Q, 0.2)
    np.testing.assert_allclose(out.covariance, f.covariance + Q)
    np.testing.assert_array_equal(predict(f, [0.0, 0.0], np.zeros((3, 3)), 0.2).covariance, f.covariance)


def test_predict_keeps_psd():
    rng = np.random.default_rng(1)
    for _ in range(1000):
        m = rng.normal(size=(3, 3))
        out = predict(FilterState(rng.normal(size=3), m @ m.T), rng.uniform([0, -1], [20, 1]), Q, 0.2)
        assert np.array_equal(out.covariance, out.covariance.T)
        assert np.linalg.eigvalsh(out.covariance)[0] >= -1e-9


def test_no_information_limit():
    sats = np.array([[2e7, 1e6, 1e7], [-1e7, 2e7, 1e7]])
    f = FilterState([1.0, 2.0, 0.1], np.eye(3))
    z = measurement([5.0, -3.0, 0.5], sats)
    out = correct(f, z, sats, np.eye(3) * 1e12)
    np.testing.assert_allclose(out.estimate, f.estimate, atol=1e-6)


def test_perfect_measurement_limit():
    f = FilterState([0.0, 0.0, 0.0], np.eye(3))
    z = np.array([1.0, 2.0, 0.5])
    out, _ = correct_linear(f, z - f.estimate, np.eye(3), np.eye(3) * 1e-12)
    np.testing.assert_allclose(out.estimate, z, atol=1e-6)


def test_joseph_form_matches():
    rng = np.random.default_rng(2)
    m = rng.normal(size=(3, 3))
    p_bar = m @ m.T + np.eye(3)
    c = rng.normal(size=(4, 3))
    r_hat = np.diag(rng.uniform(0.5, 2, 4))
    out, gain = correct_linear(FilterState(np.zeros(3), p_bar), np.zeros(4), c, r_hat)
    f = np.eye(3) - gain @ c
    np.testing.assert_allclose(out.covariance, f @ p_bar @ f.T + gain @ r_hat @ gain.T, atol=1e-8)


def test_degenerate_innovation_raises():
    with pytest.raises(DegenerateGeometryError):
        kalman_gain(np.zeros((3, 3)), np.ones((2, 3)), np.diag([1.0, -2.0]))


def test_heading_innovation_wraps():
    f = FilterState([0.0, 0.0, np.pi - 0.01], np.eye(3) * 0.1)
    out = correct(f, [-np.pi + 0.01], np.zeros((0, 3)), np.eye(1) * 0.1)
    assert abs(out.estimate[2]) > 3.0


def test_filter_stays_psd_and_trace_shrinks():
    rng = np.random.default_rng(3)
    f = FilterState(np.zeros(3), np.eye(3))
    for _ in range(10_000):
        f = predict(f, rng.uniform([0, -0.5], [15, 0.5]), Q, 0.2)
        n = rng.integers(0, 7)
        sats = rng.normal(size=(n, 3)) * 2e7
        r_hat = np.diag(np.concatenate([rng.uniform(5, 50, n), [0.001]]))
        c = jacobian_measurement(f.estimate, sats)
        before = np.trace(f.covariance)
        f, _ = correct_linear(f, np.zeros(n + 1), c, r_hat)
        assert np.trace(f.covariance) <= before + 1e-9
        assert np.linalg.eigvalsh(f.covariance)[0] >= -1e-9


def test_schedule_entry_shape_checks():
    with pytest.raises(ValueError):
        ScheduleEntry(np.eye(3), np.zeros((3, 2)), np.zeros((2, 3)), np.zeros((3, 3)), np.zeros((2, 3)))
    with pytest.raises(ValueError):
        ScheduleEntry(np.eye(3), np.zeros((3, 2)), np.zeros((1, 3)), np.zeros((3, 1)), np.zeros((2, 3)), r_hat=np.zeros((1, 1)))


class FixedSky:
    """Environment stub: a fixed set of satellites, all usable everywhere."""

    def __init__(self, sats, bias=0.0):
        self.sats = np.asarray(sats, dtype=float).reshape(-1, 3)
        self.bias = bias
        self.scene = SimpleNamespace(altitude=65.0)

    def view(self, position, t):
        if len(self.sats) == 0:
            return SatelliteView.empty()
        n = len(self.sats)
        return SatelliteView(tuple(range(1, n + 1)), self.sats, np.full(n, 1.0), np.full(n, 5.0), np.full(n, self.bias))


def _straight(steps, v=10.0, dt=0.2):
    xs = np.column_stack([np.arange(steps + 1) * v * dt, np.zeros(steps + 1), np.zeros(steps + 1)])
    us = np.tile([v, 0.0], (steps, 1))
    ks = np.zeros((steps, 2, 3))
    return xs, us, ks


def test_schedule_gain_converges_on_straight_line():
    sky = FixedSky([[2e7, 1e7, 1.5e7], [-1.8e7, 0.5e7, 1.5e7], [0.2e7, -2e7, 1.2e7], [0.1e7, 0.3e7, 2.2e7]])
    xs, us, ks = _straight(400)
    sched = precompute_schedule(xs, us, ks, sky, np.eye(3), NoiseConfig())
    assert len(sched) == 400
    assert np.abs(sched[-1].gain_l - sched[-2].gain_l).max() < 1e-6
    assert sched[0].meas_dim == 5 and sched[0].visible_sats == (1, 2, 3, 4)


def test_schedule_without_satellites_corrects_heading_only():
    xs, us, ks = _straight(10)
    sched = precompute_schedule(xs, us, ks, FixedSky(np.zeros((0, 3))), np.eye(3), NoiseConfig())
    assert all(e.gain_l.shape == (3, 1) for e in sched)
    assert all(abs(e.gain_l[2, 0]) > 0 for e in sched)


def test_schedule_zero_uncertainty_gives_zero_gain():
    xs, us, ks = _straight(10)
    sky = FixedSky([[2e7, 1e7, 1.5e7]])
    sched = precompute_schedule(xs, us, ks, sky, np.zeros((3, 3)), NoiseConfig(q=np.zeros((3, 3))))
    assert all(not e.gain_l.any() for e in sched)


def test_schedule_uses_overbounded_covariance():
    xs, us, ks = _straight(3)
    sched = precompute_schedule(xs, us, ks, FixedSky([[2e7, 1e7, 1.5e7]], bias=6.0), np.eye(3), NoiseConfig())
    assert sched[0].r_hat[0, 0] == pytest.approx((np.sqrt(5.0) + 2.0) ** 2)
    assert sched[0].r_hat[1, 1] == pytest.approx(0.001)


def test_schedule_rejects_empty_trajectory():
    with pytest.raises(ValueError):
        precompute_schedule(np.zeros((1, 3)), np.zeros((0, 2)), np.zeros((0, 2, 3)), FixedSky([]), np.eye(3), NoiseConfig())
