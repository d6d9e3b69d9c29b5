"""Planar bistatic geometry: coordinate transforms and their analytic partials.

The receiver sits at the origin and the transmitter at ``[L, 0]``. A target is
described either in Cartesian ``(x, y)`` or in measurement coordinates
``(b, alpha)`` where ``b`` is the transmitter-target-receiver path length and
``alpha`` is the bearing at the receiver, measured from the +x axis.

Every function broadcasts over numpy arrays, so a whole Monte Carlo batch can be
pushed through in one call. Angles are radians.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike

# b must exceed L by this relative margin; the inverse map's denominator
# 2(L cos(alpha) - b) vanishes on the baseline segment.
RANGE_GUARD = 1e-9


class GeometryError(ValueError):
    """Base class for invalid bistatic geometry inputs."""


class DegeneratePositionError(GeometryError):
    """Raised when a Cartesian point coincides with the receiver or transmitter."""


class InvalidRangeError(GeometryError):
    """Raised when a bistatic range does not exceed the baseline."""


@dataclass(frozen=True)
class BistaticGeometry:
    """Receiver at the origin, transmitter at ``[baseline, 0]`` (meters)."""

    baseline: float

    def __post_init__(self):
        if not np.isfinite(self.baseline) or self.baseline <= 0:
            raise GeometryError(f"baseline must be positive, got {self.baseline}")

    @property
    def receiver(self) -> np.ndarray:
        return np.zeros(2)

    @property
    def transmitter(self) -> np.ndarray:
        return np.array([self.baseline, 0.0])

    @property
    def min_range(self) -> float:
        """Smallest bistatic range accepted by the inverse transform."""
        return self.baseline * (1.0 + RANGE_GUARD)


@dataclass(frozen=True)
class CartesianPoint:
    x: ArrayLike
    y: ArrayLike

    def as_array(self) -> np.ndarray:
        """Stack into shape ``(..., 2)``."""
        return np.stack(np.broadcast_arrays(self.x, self.y), axis=-1).astype(float)


@dataclass(frozen=True)
class BistaticPoint:
    b: ArrayLike
    alpha: ArrayLike


@dataclass(frozen=True)
class InversePartials:
    """First and second partials of ``x = f(b, alpha)``, ``y = g(b, alpha)``."""

    df_db: np.ndarray
    df_dalpha: np.ndarray
    dg_db: np.ndarray
    dg_dalpha: np.ndarray
    d2f_db2: np.ndarray
    d2f_dalpha2: np.ndarray
    d2f_dbdalpha: np.ndarray
    d2g_db2: np.ndarray
    d2g_dalpha2: np.ndarray
    d2g_dbdalpha: np.ndarray

    @property
    def jacobian(self) -> np.ndarray:
        """``[[df/db, df/dalpha], [dg/db, dg/dalpha]]`` with shape ``(..., 2, 2)``."""
        return _stack_2x2(self.df_db, self.df_dalpha, self.dg_db, self.dg_dalpha)


@dataclass(frozen=True)
class ForwardPartials:
    """First partials of ``b = phi(x, y)`` and ``alpha = gamma(x, y)``."""

    dphi_dx: np.ndarray
    dphi_dy: np.ndarray
    dgamma_dx: np.ndarray
    dgamma_dy: np.ndarray

    @property
    def jacobian(self) -> np.ndarray:
        return _stack_2x2(self.dphi_dx, self.dphi_dy, self.dgamma_dx, self.dgamma_dy)


def _stack_2x2(a, b, c, d) -> np.ndarray:
    a, b, c, d = np.broadcast_arrays(a, b, c, d)
    return np.stack([np.stack([a, b], axis=-1), np.stack([c, d], axis=-1)], axis=-2)


def _sensor_ranges(x, y, geom: BistaticGeometry):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    r1 = np.hypot(x, y)
    r2 = np.hypot(x - geom.baseline, y)
    if np.any(r1 == 0) or np.any(r2 == 0):
        raise DegeneratePositionError("point coincides with a sensor")
    return x, y, r1, r2


def check_range(b, geom: BistaticGeometry) -> np.ndarray:
    """Return ``b`` as an array, raising if any entry is not beyond the baseline."""
    b = np.asarray(b, dtype=float)
    if np.any(~(b > geom.min_range)):
        raise InvalidRangeError(
            f"bistatic range must exceed baseline {geom.baseline} m; "
            f"got min {np.min(b)}"
        )
    return b


def to_measurement(p: CartesianPoint, geom: BistaticGeometry) -> BistaticPoint:
    """Map a Cartesian position to ``(b, alpha)``; ``alpha`` lies in ``(-pi, pi]``."""
    x, y, r1, r2 = _sensor_ranges(p.x, p.y, geom)
    return BistaticPoint(b=r1 + r2, alpha=np.arctan2(y, x))


def _receiver_range(b, alpha, L):
    # r1 = (b^2 - L^2) / (2 (b - L cos alpha)); x = r1 cos alpha, y = r1 sin alpha
    return 0.5 * (b * b - L * L) / (b - L * np.cos(alpha))


def to_cartesian(z: BistaticPoint, geom: BistaticGeometry) -> CartesianPoint:
    """Invert :func:`to_measurement`. Requires ``b > L``."""
    b = check_range(z.b, geom)
    alpha = np.asarray(z.alpha, dtype=float)
    r1 = _receiver_range(b, alpha, geom.baseline)
    return CartesianPoint(x=r1 * np.cos(alpha), y=r1 * np.sin(alpha))


def inverse_partials(z: BistaticPoint, geom: BistaticGeometry) -> InversePartials:
    """Closed-form first and second partials of the inverse transform.

    Written through the receiver range ``r1(b, alpha) = N / D`` with
    ``N = (b^2 - L^2) / 2`` and ``D = b - L cos(alpha)``, then
    ``f = r1 cos(alpha)`` and ``g = r1 sin(alpha)`` by the product rule.
    """
    b = check_range(z.b, geom)
    alpha = np.asarray(z.alpha, dtype=float)
    L = geom.baseline
    c, s = np.cos(alpha), np.sin(alpha)

    D = b - L * c
    N = 0.5 * (b * b - L * L)
    r = N / D
    D2 = D * D
    D3 = D2 * D

    r_b = 0.5 * (b * b - 2.0 * b * L * c + L * L) / D2
    r_a = -N * L * s / D2
    r_bb = -L * L * s * s / D3
    r_ba = L * L * s * (b * c - L) / D3
    r_aa = -N * L * (c * D - 2.0 * L * s * s) / D3

    return InversePartials(
        df_db=r_b * c,
        df_dalpha=r_a * c - r * s,
        dg_db=r_b * s,
        dg_dalpha=r_a * s + r * c,
        d2f_db2=r_bb * c,
        d2f_dalpha2=r_aa * c - 2.0 * r_a * s - r * c,
        d2f_dbdalpha=r_ba * c - r_b * s,
        d2g_db2=r_bb * s,
        d2g_dalpha2=r_aa * s + 2.0 * r_a * c - r * s,
        d2g_dbdalpha=r_ba * s + r_b * c,
    )


def forward_partials(p: CartesianPoint, geom: BistaticGeometry) -> ForwardPartials:
    """Gradients of the bistatic range and bearing with respect to ``(x, y)``."""
    x, y, r1, r2 = _sensor_ranges(p.x, p.y, geom)
    rho2 = r1 * r1
    return ForwardPartials(
        dphi_dx=x / r1 + (x - geom.baseline) / r2,
        dphi_dy=y / r1 + y / r2,
        dgamma_dx=-y / rho2,
        dgamma_dy=x / rho2,
    )
