"""Converted measurement Kalman filter on the state ``[x, vx, y, vy]``.

Track states may carry leading batch dimensions (``state`` of shape
``(..., 4)``, ``covariance`` of shape ``(..., 4, 4)``); the Monte Carlo
campaigns run all runs of a scan through one vectorized call.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np

from .conversion import (
    ConvertedMeasurement,
    MeasurementSpacePrediction,
    NoisyMeasurement,
    convert,
)
from .geometry import BistaticGeometry, CartesianPoint, GeometryError, forward_partials, to_measurement

# Selects [x, y] from [x, vx, y, vy].
H = np.array([[1.0, 0.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0]])
INITIAL_VARIANCE = 100.0
# Acceleration noise variance that reproduces the published Q at T = 1 s.
DEFAULT_ACCEL_VARIANCE = 0.25


class FilterError(ValueError):
    pass


@dataclass(frozen=True)
class TrackState:
    state: np.ndarray
    covariance: np.ndarray

    @property
    def position(self) -> CartesianPoint:
        return CartesianPoint(self.state[..., 0], self.state[..., 2])

    @property
    def position_covariance(self) -> np.ndarray:
        return self.covariance[..., ::2, ::2]


@dataclass(frozen=True)
class MotionModel:
    transition: np.ndarray
    process_noise: np.ndarray
    period: float


def dcwna_model(period: float, accel_variance: float = DEFAULT_ACCEL_VARIANCE) -> MotionModel:
    """Constant-velocity model with per-axis process noise
    ``accel_variance * [[T^4/4, T^3/2], [T^3/2, T^2]]``.

    At ``T = 1`` and the default variance this is the published
    ``[[0.0625, 0.125], [0.125, 0.25]]`` block on each axis.
    """
    if not period > 0:
        raise FilterError(f"period must be positive, got {period}")
    T = float(period)
    F1 = np.array([[1.0, T], [0.0, 1.0]])
    Q1 = accel_variance * np.array([[T**4 / 4, T**3 / 2], [T**3 / 2, T**2]])
    Z = np.zeros((2, 2))
    F = np.block([[F1, Z], [Z, F1]])
    Q = np.block([[Q1, Z], [Z, Q1]])
    return MotionModel(F, Q, T)


def initialize(first: ConvertedMeasurement) -> TrackState:
    """Position from the first converted measurement, zero velocity, ``100 I`` covariance."""
    pos = first.position.as_array()
    state = np.zeros(pos.shape[:-1] + (4,))
    state[..., 0] = pos[..., 0]
    state[..., 2] = pos[..., 1]
    cov = np.broadcast_to(INITIAL_VARIANCE * np.eye(4), state.shape + (4,)).copy()
    return TrackState(state, cov)


def predict(track: TrackState, model: MotionModel) -> TrackState:
    F, Q = model.transition, model.process_noise
    state = track.state @ F.T
    cov = F @ track.covariance @ F.T + Q
    return TrackState(state, cov)


def position_to_measurement_space(
    pos: CartesianPoint, position_covariance: np.ndarray, geom: BistaticGeometry
) -> MeasurementSpacePrediction:
    """Map a position estimate and its 2x2 covariance to ``(b, alpha)`` space.

    Variances come from linearizing each coordinate separately; the
    ``b``/``alpha`` cross-covariance is dropped. No range validation is done.
    """
    z = to_measurement(pos, geom)
    fp = forward_partials(pos, geom)
    P = position_covariance
    grad_b = np.stack([fp.dphi_dx, fp.dphi_dy], axis=-1)
    grad_a = np.stack([fp.dgamma_dx, fp.dgamma_dy], axis=-1)
    var_b = np.einsum("...i,...ij,...j->...", grad_b, P, grad_b)
    var_a = np.einsum("...i,...ij,...j->...", grad_a, P, grad_a)
    return MeasurementSpacePrediction(z.b, z.alpha, np.maximum(var_b, 0.0), np.maximum(var_a, 0.0))


def _measurement_space(track: TrackState, geom: BistaticGeometry) -> MeasurementSpacePrediction:
    return position_to_measurement_space(track.position, track.position_covariance, geom)


def fallback_to_measurement(
    pred: MeasurementSpacePrediction, raw: NoisyMeasurement, geom: BistaticGeometry
) -> tuple[MeasurementSpacePrediction, int]:
    """Swap in the raw measurement as evaluation point wherever ``b_t <= L``."""
    bad = ~(np.asarray(pred.b_t) > geom.min_range)
    n = int(np.count_nonzero(bad))
    if n:
        pred = MeasurementSpacePrediction(
            np.where(bad, raw.b_m, pred.b_t),
            np.where(bad, raw.alpha_m, pred.alpha_t),
            pred.var_bt,
            pred.var_alphat,
        )
    return pred, n


def track_to_measurement_space(track: TrackState, geom: BistaticGeometry) -> MeasurementSpacePrediction:
    """Map the predicted position and its covariance to ``(b, alpha)`` space."""
    pred = _measurement_space(track, geom)
    if np.any(~(np.asarray(pred.b_t) > geom.min_range)):
        raise GeometryError("predicted position maps onto the baseline segment (b_t <= L)")
    return pred


def update(track: TrackState, cm: ConvertedMeasurement) -> TrackState:
    """Linear update with the Joseph-form covariance."""
    P = track.covariance
    R = cm.covariance
    S = H @ P @ H.T + R
    # Solve rather than invert: K = P H^T S^-1  <=>  S K^T = H P
    try:
        K = np.swapaxes(np.linalg.solve(S, H @ np.swapaxes(P, -1, -2)), -1, -2)
    except np.linalg.LinAlgError as exc:
        raise FilterError("singular innovation covariance") from exc
    innovation = cm.position.as_array() - track.state @ H.T
    state = track.state + np.einsum("...ij,...j->...i", K, innovation)
    A = np.eye(4) - K @ H
    cov = A @ P @ np.swapaxes(A, -1, -2) + K @ R @ np.swapaxes(K, -1, -2)
    cov = 0.5 * (cov + np.swapaxes(cov, -1, -2))
    return TrackState(state, cov)


def step(
    track: TrackState,
    raw: NoisyMeasurement,
    method: str,
    model: MotionModel,
    geom: BistaticGeometry,
    events: Counter | None = None,
) -> TrackState:
    """Predict, convert the raw measurement with ``method``, update.

    For ``ducm`` the a priori track is mapped into measurement space and the
    converted covariance is evaluated there. Where the prediction lands on or
    inside the baseline, that entry falls back to the raw measurement as the
    evaluation point; the number of fallbacks is added to
    ``events["ducm_fallback"]``.
    """
    prior = predict(track, model)
    pred = None
    if method == "ducm":
        pred, n_fallback = fallback_to_measurement(_measurement_space(prior, geom), raw, geom)
        if events is not None and n_fallback:
            events["ducm_fallback"] += n_fallback
    cm = convert(raw, method, geom, pred)
    if events is not None and np.any(cm.adjusted):
        events["psd_adjusted"] += int(np.count_nonzero(cm.adjusted))
    return update(prior, cm)
