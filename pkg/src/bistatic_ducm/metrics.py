"""Consistency and accuracy statistics for conversions and tracks."""

from __future__ import annotations

from dataclasses import dataclass, field
from statistics import NormalDist

import numpy as np


class MetricsError(ValueError):
    pass


def normalized_errors(errors, covariances) -> np.ndarray:
    """Per-sample ``e^T C^-1 e / d``."""
    e = np.asarray(errors, dtype=float)
    C = np.asarray(covariances, dtype=float)
    if e.shape != C.shape[:-1] or C.shape[-1] != C.shape[-2]:
        raise MetricsError(f"shape mismatch: errors {e.shape}, covariances {C.shape}")
    try:
        sol = np.linalg.solve(C, e[..., None])[..., 0]
    except np.linalg.LinAlgError as exc:
        raise MetricsError("singular covariance") from exc
    return np.einsum("...i,...i->...", e, sol) / e.shape[-1]


def nees_static(errors, covariances) -> float:
    """Mean NEES of 2-D converted position errors against their own covariances."""
    if np.shape(errors)[-1] != 2:
        raise MetricsError("static NEES expects 2-vectors")
    return float(np.mean(normalized_errors(errors, covariances)))


def nees_dynamic(errors, covariances) -> float:
    """Mean NEES of 4-D state errors."""
    if np.shape(errors)[-1] != 4:
        raise MetricsError("dynamic NEES expects 4-vectors")
    return float(np.mean(normalized_errors(errors, covariances)))


def rmse(truths, estimates) -> float:
    t = np.asarray(truths, dtype=float)
    x = np.asarray(estimates, dtype=float)
    if t.shape != x.shape:
        raise MetricsError(f"shape mismatch: {t.shape} vs {x.shape}")
    sq = np.sum((t - x) ** 2, axis=-1)
    return float(np.sqrt(np.mean(sq)))


def chi2_mean_bounds(
    runs: int, dof: int, confidence: float = 0.99, method: str = "wilson-hilferty"
) -> tuple[float, float]:
    """Two-sided interval for the mean of ``runs`` NEES values of dimension ``dof``.

    The mean is ``chi2(k) / k`` with ``k = runs * dof``. The default uses the
    Wilson-Hilferty cube approximation, ``chi2_p(k)/k ~ (1 - 2/(9k) + z_p sqrt(2/(9k)))^3``,
    accurate to well under 1e-4 for ``k`` in the thousands; ``method="exact"``
    inverts the regularized incomplete gamma function instead.
    """
    if runs < 1 or dof < 1:
        raise MetricsError("runs and dof must be positive")
    if not 0.0 < confidence < 1.0:
        raise MetricsError("confidence must lie in (0, 1)")
    k = runs * dof
    tails = (0.5 * (1.0 - confidence), 0.5 * (1.0 + confidence))
    if method == "wilson-hilferty":
        c = 2.0 / (9.0 * k)
        z = [NormalDist().inv_cdf(p) for p in tails]
        lo, hi = (max(1.0 - c + zi * np.sqrt(c), 0.0) ** 3 for zi in z)
        return float(lo), float(hi)
    if method == "exact":
        from scipy.special import gammaincinv

        lo, hi = (2.0 * gammaincinv(k / 2.0, p) / k for p in tails)
        return float(lo), float(hi)
    raise MetricsError(f"unknown method {method!r}")


@dataclass
class ScanAccumulator:
    """Per-scan sums over runs; shards combine with ``+``."""

    sq_pos: np.ndarray
    sq_vel: np.ndarray
    nees: np.ndarray
    count: int = 0

    @classmethod
    def empty(cls, n_scans: int) -> ScanAccumulator:
        z = np.zeros(n_scans)
        return cls(z.copy(), z.copy(), z.copy(), 0)

    def add(self, truth: np.ndarray, est: np.ndarray, cov: np.ndarray) -> None:
        """Accumulate arrays shaped ``(runs, scans, 4)`` / ``(runs, scans, 4, 4)``."""
        err = truth - est
        self.sq_pos += np.sum(err[..., 0] ** 2 + err[..., 2] ** 2, axis=0)
        self.sq_vel += np.sum(err[..., 1] ** 2 + err[..., 3] ** 2, axis=0)
        self.nees += np.sum(normalized_errors(err, cov), axis=0)
        self.count += truth.shape[0]

    def __add__(self, other: ScanAccumulator) -> ScanAccumulator:
        return ScanAccumulator(
            self.sq_pos + other.sq_pos,
            self.sq_vel + other.sq_vel,
            self.nees + other.nees,
            self.count + other.count,
        )

    @property
    def rmse_pos(self) -> np.ndarray:
        return np.sqrt(self.sq_pos / self.count)

    @property
    def rmse_vel(self) -> np.ndarray:
        return np.sqrt(self.sq_vel / self.count)

    @property
    def mean_nees(self) -> np.ndarray:
        return self.nees / self.count


@dataclass
class CampaignStatistics:
    """Results of one campaign, keyed by conversion method.

    Tracking campaigns fill ``scans``; static campaigns fill ``static_nees``
    (grid value -> NEES) or ``bias`` (grid value -> per-axis mean/SE/truth).
    """

    runs: int
    scans: dict[str, ScanAccumulator] = field(default_factory=dict)
    static_nees: dict[str, dict[float, float]] = field(default_factory=dict)
    bias: dict[str, dict[float, dict]] = field(default_factory=dict)
    events: dict[str, int] = field(default_factory=dict)
    # Digest of the measurement stream each method consumed.
    checksums: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if self.runs <= 0:
            raise MetricsError("run count must be positive")
