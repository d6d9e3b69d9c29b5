import math
from collections import Counter

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from bistatic_ducm.cmkf import (
    FilterError,
    MotionModel,
    TrackState,
    dcwna_model,
    initialize,
    predict,
    step,
    track_to_measurement_space,
    update,
)
from bistatic_ducm.conversion import (
    ConvertedMeasurement,
    NoiseSpec,
    NoisyMeasurement,
    convert_ucm,
    ucm_covariance,
    ucm_position,
)
from bistatic_ducm.geometry import BistaticGeometry, CartesianPoint, GeometryError, to_measurement
from bistatic_ducm.metrics import chi2_mean_bounds, normalized_errors
from oracles import fd_forward_jacobian

GEOM = BistaticGeometry(4000.0)
DEG = math.pi / 180
PUBLISHED_Q = np.array(
    [
        [0.0625, 0.125, 0, 0],
        [0.125, 0.25, 0, 0],
        [0, 0, 0.0625, 0.125],
        [0, 0, 0.125, 0.25],
    ]
)


def cm_at(x, y, cov):
    return ConvertedMeasurement(CartesianPoint(x, y), np.asarray(cov, dtype=float), "ucm")


def no_noise(model):
    return MotionModel(model.transition, np.zeros((4, 4)), model.period)


class TestMotionModel:
    def test_process_noise_matches_published_matrix(self):
        assert_array_equal(dcwna_model(1.0).process_noise, PUBLISHED_Q)

    def test_constant_velocity(self):
        assert_array_equal(dcwna_model(1.0).transition @ [0, 1, 0, 1], [1, 1, 1, 1])

    @pytest.mark.parametrize("T", [0.1, 1.0, 2.5])
    def test_q_is_symmetric_psd(self, T):
        Q = dcwna_model(T).process_noise
        assert_array_equal(Q, Q.T)
        assert np.linalg.eigvalsh(Q).min() >= -1e-15

    def test_group_property(self):
        F1, F2 = dcwna_model(1.0).transition, dcwna_model(2.0).transition
        assert_allclose(F1 @ F1, F2)

    @pytest.mark.parametrize("T", [0.0, -1.0])
    def test_rejects_bad_period(self, T):
        with pytest.raises(FilterError):
            dcwna_model(T)


class TestInitialize:
    def test_from_first_measurement(self):
        tr = initialize(cm_at(8000.0, 8000.0, np.eye(2) * 1e4))
        assert_array_equal(tr.state, [8000.0, 0.0, 8000.0, 0.0])
        assert_array_equal(tr.covariance, np.diag([100.0] * 4))

    def test_ignores_measurement_covariance(self):
        a = initialize(cm_at(1.0, 2.0, np.eye(2)))
        b = initialize(cm_at(1.0, 2.0, np.eye(2) * 1e9))
        assert_array_equal(a.covariance, b.covariance)

    def test_batched(self):
        tr = initialize(cm_at(np.arange(3.0), np.ones(3), np.broadcast_to(np.eye(2), (3, 2, 2))))
        assert tr.state.shape == (3, 4) and tr.covariance.shape == (3, 4, 4)
        assert np.all(tr.state[:, [1, 3]] == 0.0)


class TestPredict:
    def test_state(self):
        tr = predict(TrackState(np.array([0.0, 1, 0, 1]), np.zeros((4, 4))), no_noise(dcwna_model(1.0)))
        assert_array_equal(tr.state, [1, 1, 1, 1])

    def test_zero_covariance_becomes_q(self):
        tr = predict(TrackState(np.zeros(4), np.zeros((4, 4))), dcwna_model(1.0))
        assert_array_equal(tr.covariance, PUBLISHED_Q)

    def test_two_steps_equal_one_double_step(self):
        rng = np.random.default_rng(0)
        A = rng.standard_normal((4, 4))
        tr = TrackState(rng.standard_normal(4), A @ A.T)
        m1, m2 = no_noise(dcwna_model(1.0)), no_noise(dcwna_model(2.0))
        a, b = predict(predict(tr, m1), m1), predict(tr, m2)
        assert_allclose(a.state, b.state)
        assert_allclose(a.covariance, b.covariance)


class TestMeasurementSpace:
    def test_zero_covariance(self):
        tr = TrackState(np.array([2000.0, 0, 3464.1016, 0]), np.zeros((4, 4)))
        pred = track_to_measurement_space(tr, GEOM)
        assert pred.var_bt == 0.0 and pred.var_alphat == 0.0

    def test_variances_match_fd_gradients(self):
        x, y = 2000.0, 3464.1016
        P = np.zeros((4, 4))
        P[np.ix_([0, 2], [0, 2])] = 900.0 * np.array([[1.0, 0.1], [0.1, 1.0]])
        pred = track_to_measurement_space(TrackState(np.array([x, 0, y, 0]), P), GEOM)
        G = fd_forward_jacobian(x, y, 4000.0)
        Pp = P[np.ix_([0, 2], [0, 2])]
        assert float(pred.var_bt) == pytest.approx(G[0] @ Pp @ G[0], rel=1e-6)
        assert float(pred.var_alphat) == pytest.approx(G[1] @ Pp @ G[1], rel=1e-6)
        z = to_measurement(CartesianPoint(x, y), GEOM)
        assert float(pred.b_t) == float(z.b) and float(pred.alpha_t) == float(z.alpha)

    def test_baseline_prediction_rejected(self):
        tr = TrackState(np.array([2000.0, 0, 0.0, 0]), np.eye(4))
        with pytest.raises(GeometryError):
            track_to_measurement_space(tr, GEOM)


class TestUpdate:
    def prior(self):
        rng = np.random.default_rng(1)
        A = rng.standard_normal((4, 4))
        return TrackState(np.array([100.0, 2.0, -50.0, 1.0]), A @ A.T + 10 * np.eye(4))

    def test_exact_measurement(self):
        post = update(self.prior(), cm_at(110.0, -40.0, 1e-10 * np.eye(2)))
        assert_allclose(post.state[[0, 2]], [110.0, -40.0], atol=1e-6)

    def test_uninformative_measurement(self):
        pr = self.prior()
        post = update(pr, cm_at(1e3, 1e3, 1e12 * np.eye(2)))
        assert_allclose(post.state, pr.state, rtol=1e-6, atol=1e-6)
        assert_allclose(post.covariance, pr.covariance, rtol=1e-6)

    def test_contracts_covariance(self):
        pr = self.prior()
        post = update(pr, cm_at(0.0, 0.0, [[50.0, 5.0], [5.0, 30.0]]))
        assert np.linalg.eigvalsh(pr.covariance - post.covariance).min() >= -1e-9

    def test_singular_innovation(self):
        with pytest.raises(FilterError):
            update(TrackState(np.zeros(4), np.zeros((4, 4))), cm_at(0.0, 0.0, np.zeros((2, 2))))

    def test_joseph_form_stays_psd(self):
        rng = np.random.default_rng(7)
        n, model = 100, dcwna_model(1.0)
        tr = TrackState(np.zeros((n, 4)), np.broadcast_to(100.0 * np.eye(4), (n, 4, 4)).copy())
        worst = np.inf
        for _ in range(100):
            A = rng.standard_normal((n, 2, 2)) * rng.lognormal(0, 3, (n, 1, 1))
            R = A @ np.swapaxes(A, -1, -2) + 1e-6 * np.eye(2)
            z = rng.standard_normal((n, 2)) * 100
            tr = update(predict(tr, model), cm_at(z[:, 0], z[:, 1], R))
            P = tr.covariance
            assert_array_equal(P, np.swapaxes(P, -1, -2))
            ratio = np.linalg.eigvalsh(P)[:, 0] / np.trace(P, axis1=-2, axis2=-1)
            worst = min(worst, ratio.min())
        assert worst >= -1e-9


def test_linear_gaussian_filter_is_consistent():
    # Exact linear problem: the KF's NEES at the final scan must sit in the 99% band.
    rng = np.random.default_rng(2024)
    runs, scans, model = 1000, 30, dcwna_model(1.0)
    R = np.array([[400.0, 60.0], [60.0, 250.0]])
    P0 = 100.0 * np.eye(4)
    x0 = np.array([8000.0, 0.0, 8000.0, 0.0])
    truth = x0 + rng.multivariate_normal(np.zeros(4), P0, size=runs)
    tr = TrackState(np.broadcast_to(x0, (runs, 4)).copy(), np.broadcast_to(P0, (runs, 4, 4)).copy())
    for _ in range(scans):
        truth = truth @ model.transition.T + rng.multivariate_normal(
            np.zeros(4), model.process_noise, size=runs, method="eigh"
        )
        z = truth[:, [0, 2]] + rng.multivariate_normal(np.zeros(2), R, size=runs)
        tr = update(predict(tr, model), cm_at(z[:, 0], z[:, 1], np.broadcast_to(R, (runs, 2, 2))))
    nees = normalized_errors(truth - tr.state, tr.covariance).mean()
    lo, hi = chi2_mean_bounds(runs, 4, 0.99)
    assert lo <= nees <= hi


class TestStep:
    def setup_method(self):
        self.noise = NoiseSpec(10.0, 2 * DEG)
        self.model = dcwna_model(1.0)
        self.track = TrackState(np.array([8000.0, 5.0, 8000.0, -5.0]), 100.0 * np.eye(4))
        self.raw = NoisyMeasurement(20270.0, 0.79, self.noise)

    def test_ucm_is_manual_composition(self):
        got = step(self.track, self.raw, "ucm", self.model, GEOM)
        want = update(predict(self.track, self.model), convert_ucm(self.raw, GEOM))
        assert_array_equal(got.state, want.state)
        assert_array_equal(got.covariance, want.covariance)

    def test_ducm_reduces_to_ucm_at_truth(self):
        truth = np.array([8000.0, 5.0, 8000.0, -5.0])
        tr = TrackState(truth, np.zeros((4, 4)))
        model = no_noise(self.model)
        prior = predict(tr, model)
        z = to_measurement(prior.position, GEOM)
        at_truth = NoisyMeasurement(z.b, z.alpha, self.noise)
        expected_cm = ConvertedMeasurement(
            ucm_position(self.raw, GEOM), ucm_covariance(at_truth, GEOM), "ducm"
        )
        got = step(tr, self.raw, "ducm", model, GEOM)
        want = update(prior, expected_cm)
        assert_allclose(got.state, want.state, rtol=1e-12)
        assert_allclose(got.covariance, want.covariance, rtol=1e-12, atol=1e-12)

    def test_ducm_covariance_ignores_measurement_values(self):
        other = NoisyMeasurement(20300.0, 0.76, self.noise)
        a = step(self.track, self.raw, "ducm", self.model, GEOM)
        b = step(self.track, other, "ducm", self.model, GEOM)
        assert_array_equal(a.covariance, b.covariance)
        u1 = step(self.track, self.raw, "ucm", self.model, GEOM)
        u2 = step(self.track, other, "ucm", self.model, GEOM)
        assert not np.array_equal(u1.covariance, u2.covariance)

    def test_fallback_when_prediction_on_baseline(self):
        tr = TrackState(np.array([2000.0, 0.0, 0.0, 0.0]), np.eye(4))
        raw = NoisyMeasurement(8000.0, 1.0, self.noise)
        events = Counter()
        out = step(tr, raw, "ducm", no_noise(self.model), GEOM, events)
        assert events["ducm_fallback"] == 1
        assert np.all(np.isfinite(out.covariance))

    def test_unknown_method(self):
        with pytest.raises(ValueError):
            step(self.track, self.raw, "ekf", self.model, GEOM)

    def test_batched_matches_single(self):
        raws = NoisyMeasurement(np.array([20270.0, 20250.0]), np.array([0.79, 0.78]), self.noise)
        tracks = TrackState(
            np.stack([self.track.state] * 2), np.stack([self.track.covariance] * 2)
        )
        batch = step(tracks, raws, "ducm", self.model, GEOM)
        for i in range(2):
            single = step(
                self.track,
                NoisyMeasurement(raws.b_m[i], raws.alpha_m[i], self.noise),
                "ducm",
                self.model,
                GEOM,
            )
            assert_allclose(batch.state[i], single.state, rtol=1e-13)
            assert_allclose(batch.covariance[i], single.covariance, rtol=1e-12)
