"""Bistatic-to-Cartesian converted measurements.

Three schemes are provided:

* ``conventional``: direct inversion with first-order covariance ``J R J^T``.
* ``ucm``: second-order Taylor debiasing of the position, with a second-order
  covariance evaluated at the raw measurement.
* ``ducm``: same debiased position, but the covariance is evaluated at the
  track's prediction in measurement space, so it is independent of the
  current measurement noise.

All functions broadcast over leading array dimensions.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .geometry import (
    BistaticGeometry,
    BistaticPoint,
    CartesianPoint,
    GeometryError,
    InversePartials,
    check_range,
    inverse_partials,
    to_cartesian,
)

logger = logging.getLogger(__name__)

METHODS = ("conventional", "ucm", "ducm")

# Covariances with min eigenvalue below -PSD_TOL * trace get diagonal jitter.
PSD_TOL = 1e-12
# Noisy draws with b_m <= L are moved to L * (1 + CLAMP_MARGIN).
CLAMP_MARGIN = 1e-6


@dataclass(frozen=True)
class NoiseSpec:
    """Standard deviations of the range-sum (m) and bearing (rad) noise."""

    sigma_b: float
    sigma_alpha: float

    def __post_init__(self):
        if self.sigma_b < 0 or self.sigma_alpha < 0:
            raise ValueError("noise standard deviations must be non-negative")

    @property
    def covariance(self) -> np.ndarray:
        return np.diag([self.sigma_b**2, self.sigma_alpha**2])


@dataclass(frozen=True)
class NoisyMeasurement:
    b_m: np.ndarray
    alpha_m: np.ndarray
    noise: NoiseSpec

    @property
    def point(self) -> BistaticPoint:
        return BistaticPoint(self.b_m, self.alpha_m)


@dataclass(frozen=True)
class MeasurementSpacePrediction:
    """Track prediction mapped to ``(b, alpha)`` with per-coordinate variances."""

    b_t: np.ndarray
    alpha_t: np.ndarray
    var_bt: np.ndarray
    var_alphat: np.ndarray

    def __post_init__(self):
        if np.any(np.asarray(self.var_bt) < 0) or np.any(np.asarray(self.var_alphat) < 0):
            raise ValueError("prediction variances must be non-negative")

    @property
    def point(self) -> BistaticPoint:
        return BistaticPoint(self.b_t, self.alpha_t)


@dataclass(frozen=True)
class ConvertedMeasurement:
    position: CartesianPoint
    covariance: np.ndarray
    method: str
    # True where PSD enforcement had to add jitter.
    adjusted: np.ndarray = field(default=False)


class ConversionError(ValueError):
    pass


def clamp_range(b, geom: BistaticGeometry) -> tuple[np.ndarray, int]:
    """Clamp ``b <= L`` up to just beyond the baseline; return the clamp count."""
    b = np.array(b, dtype=float)
    bad = ~(b > geom.min_range)
    n = int(np.count_nonzero(bad))
    if n:
        b[bad] = geom.baseline * (1.0 + CLAMP_MARGIN)
    return b, n


def enforce_psd(cov: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Symmetrize ``cov`` and lift its diagonal where it is not PSD.

    Returns the repaired matrices and a boolean mask of the adjusted ones.
    """
    cov = 0.5 * (cov + np.swapaxes(cov, -1, -2))
    trace = np.trace(cov, axis1=-2, axis2=-1)
    min_eig = np.linalg.eigvalsh(cov)[..., 0]
    adjusted = min_eig < -PSD_TOL * trace
    if np.any(adjusted):
        jitter = np.where(adjusted, PSD_TOL * trace - min_eig, 0.0)
        cov = cov + jitter[..., None, None] * np.eye(cov.shape[-1])
        logger.debug("PSD enforcement adjusted %d covariance(s)", int(np.sum(adjusted)))
    return cov, adjusted


def _outer(u_f, u_g) -> np.ndarray:
    """Outer product of the 2-vector ``[u_f, u_g]`` with itself, shape (..., 2, 2)."""
    u = np.stack(np.broadcast_arrays(u_f, u_g), axis=-1)
    return u[..., :, None] * u[..., None, :]


def _second_order_covariance(
    d: InversePartials,
    var_b,
    var_a,
    var_bt=0.0,
    var_at=0.0,
) -> np.ndarray:
    # Every term is a non-negative weight times an outer product of a column of
    # partials, so the sum is PSD by construction. With var_bt = var_at = 0
    # this is exactly the UCM covariance.
    w_bb = 0.5 * var_b**2 + var_b * var_bt
    w_aa = 0.5 * var_a**2 + var_a * var_at
    w_ba = var_b * var_a + var_b * var_at + var_a * var_bt
    return (
        np.asarray(var_b)[..., None, None] * _outer(d.df_db, d.dg_db)
        + np.asarray(var_a)[..., None, None] * _outer(d.df_dalpha, d.dg_dalpha)
        + np.asarray(w_bb)[..., None, None] * _outer(d.d2f_db2, d.d2g_db2)
        + np.asarray(w_aa)[..., None, None] * _outer(d.d2f_dalpha2, d.d2g_dalpha2)
        + np.asarray(w_ba)[..., None, None] * _outer(d.d2f_dbdalpha, d.d2g_dbdalpha)
    )


def conventional_covariance(m: NoisyMeasurement, geom: BistaticGeometry) -> np.ndarray:
    """First-order covariance ``J R J^T`` at the measurement."""
    J = inverse_partials(m.point, geom).jacobian
    R = m.noise.covariance
    return J @ R @ np.swapaxes(J, -1, -2)


def convert_conventional(m: NoisyMeasurement, geom: BistaticGeometry) -> ConvertedMeasurement:
    position = to_cartesian(m.point, geom)
    cov, adjusted = enforce_psd(conventional_covariance(m, geom))
    return ConvertedMeasurement(position, cov, "conventional", adjusted)


def ucm_position(m: NoisyMeasurement, geom: BistaticGeometry) -> CartesianPoint:
    """Debiased position: subtract the second-order bias evaluated at the measurement."""
    raw = to_cartesian(m.point, geom)
    d = inverse_partials(m.point, geom)
    var_b = m.noise.sigma_b**2
    var_a = m.noise.sigma_alpha**2
    bias_x = 0.5 * var_b * d.d2f_db2 + 0.5 * var_a * d.d2f_dalpha2
    bias_y = 0.5 * var_b * d.d2g_db2 + 0.5 * var_a * d.d2g_dalpha2
    return CartesianPoint(x=raw.x - bias_x, y=raw.y - bias_y)


def ucm_covariance(m: NoisyMeasurement, geom: BistaticGeometry) -> np.ndarray:
    d = inverse_partials(m.point, geom)
    cov = _second_order_covariance(d, m.noise.sigma_b**2, m.noise.sigma_alpha**2)
    return 0.5 * (cov + np.swapaxes(cov, -1, -2))


def ducm_covariance(
    pred: MeasurementSpacePrediction, noise: NoiseSpec, geom: BistaticGeometry
) -> np.ndarray:
    """Second-order covariance evaluated at the prediction ``(b_t, alpha_t)``.

    Adds the cross terms between the measurement noise and the prediction
    uncertainty to the UCM expression.
    """
    try:
        d = inverse_partials(pred.point, geom)
    except GeometryError as exc:
        raise ConversionError(f"prediction outside valid region: {exc}") from exc
    cov = _second_order_covariance(
        d,
        noise.sigma_b**2,
        noise.sigma_alpha**2,
        np.asarray(pred.var_bt, dtype=float),
        np.asarray(pred.var_alphat, dtype=float),
    )
    return 0.5 * (cov + np.swapaxes(cov, -1, -2))


def convert_ucm(m: NoisyMeasurement, geom: BistaticGeometry) -> ConvertedMeasurement:
    cov, adjusted = enforce_psd(ucm_covariance(m, geom))
    return ConvertedMeasurement(ucm_position(m, geom), cov, "ucm", adjusted)


def convert_ducm(
    m: NoisyMeasurement, pred: MeasurementSpacePrediction, geom: BistaticGeometry
) -> ConvertedMeasurement:
    check_range(m.b_m, geom)
    cov, adjusted = enforce_psd(ducm_covariance(pred, m.noise, geom))
    return ConvertedMeasurement(ucm_position(m, geom), cov, "ducm", adjusted)


def convert(
    m: NoisyMeasurement,
    method: str,
    geom: BistaticGeometry,
    pred: MeasurementSpacePrediction | None = None,
) -> ConvertedMeasurement:
    """Dispatch on ``method``; ``pred`` is required for ``ducm``."""
    if method == "conventional":
        return convert_conventional(m, geom)
    if method == "ucm":
        return convert_ucm(m, geom)
    if method == "ducm":
        if pred is None:
            raise ConversionError("ducm conversion needs a measurement-space prediction")
        return convert_ducm(m, pred, geom)
    raise ConversionError(f"unknown method {method!r}; expected one of {METHODS}")
