"""Monte Carlo campaigns: static conversion bias, static NEES sweeps, tracking.

Random streams are derived from ``(seed, index)`` through
:class:`numpy.random.SeedSequence` spawn keys and drawn with PCG64, so a given
run or grid point always sees the same numbers no matter how many others are
simulated or how the work is split across threads. Gaussian draws use numpy's
ziggurat sampler.
"""

from __future__ import annotations

import hashlib
import logging
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import cmkf
from .conversion import (
    METHODS,
    NoiseSpec,
    NoisyMeasurement,
    clamp_range,
    convert_conventional,
    convert_ducm,
    convert_ucm,
)
from .geometry import BistaticGeometry, BistaticPoint, CartesianPoint, to_cartesian, to_measurement
from .metrics import CampaignStatistics, ScanAccumulator, normalized_errors

logger = logging.getLogger(__name__)

# Runs per tracking chunk. Fixed so that results do not depend on --threads.
CHUNK_RUNS = 100
SWEEP_PARAMS = ("b", "alpha", "sigma_b", "sigma_alpha")
# Shape of the prediction-corruption covariance; scaled by sigma_b^2.
PREDICTION_SHAPE = ((1.0, 0.1), (0.1, 1.0))


def stream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for ``(seed, *key)``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))


@dataclass(frozen=True)
class ScenarioConfig:
    """Tracking scenario. Angles in radians."""

    baseline: float = 4000.0
    sigma_b: float = 10.0
    sigma_alpha: float = float(np.radians(2.0))
    period: float = 1.0
    scans: int = 200
    runs: int = 5000
    start: tuple[float, float] = (8000.0, 8000.0)
    speed: float = 10.0
    # None draws a heading uniformly in [0, 2 pi) per run.
    heading: float | None = None
    process_noise: bool = True
    accel_variance: float = cmkf.DEFAULT_ACCEL_VARIANCE
    seed: int = 0

    def __post_init__(self):
        if self.scans < 1 or self.runs < 1:
            raise ValueError("scans and runs must be positive")
        if self.sigma_b <= 0 or self.sigma_alpha <= 0:
            raise ValueError("noise standard deviations must be positive")

    @property
    def geometry(self) -> BistaticGeometry:
        return BistaticGeometry(self.baseline)

    @property
    def noise(self) -> NoiseSpec:
        return NoiseSpec(self.sigma_b, self.sigma_alpha)

    @property
    def model(self) -> cmkf.MotionModel:
        return cmkf.dcwna_model(self.period, self.accel_variance)


@dataclass(frozen=True)
class StaticSweepConfig:
    """One-parameter NEES sweep at a fixed target.

    ``grid`` holds values of ``sweep`` in SI units (angles in radians). With
    ``bisector=True`` the target sits on the perpendicular bisector of the
    baseline and its bearing follows from ``b``.
    """

    sweep: str
    grid: tuple[float, ...]
    b: float = 8000.0
    alpha: float = float(np.radians(60.0))
    sigma_b: float = 30.0
    sigma_alpha: float = float(np.radians(1.0))
    baseline: float = 4000.0
    bisector: bool = False
    runs: int = 10_000
    prediction_shape: tuple[tuple[float, float], tuple[float, float]] = PREDICTION_SHAPE
    seed: int = 0
    name: str = ""

    def __post_init__(self):
        if self.sweep not in SWEEP_PARAMS:
            raise ValueError(f"sweep must be one of {SWEEP_PARAMS}, got {self.sweep!r}")
        if len(self.grid) == 0:
            raise ValueError("sweep grid is empty")
        if self.runs < 1:
            raise ValueError("runs must be positive")
        for v in self.grid if self.sweep.startswith("sigma") else ():
            if v <= 0:
                raise ValueError("swept noise levels must be positive")
        if self.sigma_b <= 0 or self.sigma_alpha <= 0:
            raise ValueError("noise standard deviations must be positive")

    def point(self, value: float) -> dict:
        """Parameters at one grid value."""
        p = dict(b=self.b, alpha=self.alpha, sigma_b=self.sigma_b, sigma_alpha=self.sigma_alpha)
        p[self.sweep] = float(value)
        if self.bisector:
            half = 0.5 * self.baseline
            p["alpha"] = float(np.arctan2(np.sqrt((0.5 * p["b"]) ** 2 - half**2), half))
        return p


@dataclass(frozen=True)
class StaticBiasConfig:
    b: float = 8000.0
    bearings: tuple[float, ...] = tuple(np.radians(np.arange(0.0, 91.0, 15.0)))
    sigma_b: float = 30.0
    sigma_alpha: float = float(np.radians(5.0))
    baseline: float = 4000.0
    runs: int = 100_000
    bins: int = 60
    seed: int = 0

    def __post_init__(self):
        if self.runs < 1 or len(self.bearings) == 0:
            raise ValueError("need at least one run and one bearing")


def generate_trajectory(cfg: ScenarioConfig, rng: np.random.Generator) -> np.ndarray:
    """Truth states ``[x, vx, y, vy]`` for scans ``1..cfg.scans``, shape ``(scans, 4)``."""
    heading = rng.uniform(0.0, 2.0 * np.pi) if cfg.heading is None else cfg.heading
    model = cfg.model
    x = np.array(
        [cfg.start[0], cfg.speed * np.cos(heading), cfg.start[1], cfg.speed * np.sin(heading)]
    )
    out = np.empty((cfg.scans, 4))
    out[0] = x
    if cfg.process_noise and cfg.scans > 1:
        # Q is rank-deficient (one acceleration per axis), so factor via eigh.
        w, V = np.linalg.eigh(model.process_noise)
        G = V * np.sqrt(np.clip(w, 0.0, None))
        noise = rng.standard_normal((cfg.scans - 1, 4)) @ G.T
    else:
        noise = np.zeros((cfg.scans - 1, 4))
    for k in range(1, cfg.scans):
        x = model.transition @ x + noise[k - 1]
        out[k] = x
    return out


def generate_measurement(
    truth: CartesianPoint, noise: NoiseSpec, geom: BistaticGeometry, rng: np.random.Generator
) -> NoisyMeasurement:
    """Exact ``(b, alpha)`` of ``truth`` plus independent Gaussian noise."""
    z = to_measurement(truth, geom)
    shape = np.shape(z.b)
    w = rng.standard_normal((2,) + shape)
    return NoisyMeasurement(z.b + noise.sigma_b * w[0], z.alpha + noise.sigma_alpha * w[1], noise)


def _clamped(m: NoisyMeasurement, geom: BistaticGeometry) -> tuple[NoisyMeasurement, int]:
    b, n = clamp_range(m.b_m, geom)
    return NoisyMeasurement(b, m.alpha_m, m.noise), n


def run_static_bias_campaign(cfg: StaticBiasConfig) -> CampaignStatistics:
    """Per bearing: mean and standard error of each method's converted position.

    ``stats.bias[method][bearing]`` holds ``mean``, ``se``, ``truth``, ``n`` and,
    for ``conventional``, a 2-D histogram of the converted cloud (``hist``).
    DUCM shares the UCM position so its rows equal the UCM rows.
    """
    geom = BistaticGeometry(cfg.baseline)
    noise = NoiseSpec(cfg.sigma_b, cfg.sigma_alpha)
    stats = CampaignStatistics(runs=cfg.runs, bias={m: {} for m in METHODS})
    events: Counter = Counter()
    for i, alpha in enumerate(cfg.bearings):
        rng = stream(cfg.seed, i)
        truth = to_cartesian(BistaticPoint(cfg.b, alpha), geom)
        t = np.array([float(truth.x), float(truth.y)])
        w = rng.standard_normal((2, cfg.runs))
        m, n_clamp = _clamped(
            NoisyMeasurement(cfg.b + cfg.sigma_b * w[0], alpha + cfg.sigma_alpha * w[1], noise), geom
        )
        events["clamped"] += n_clamp
        conv = to_cartesian(m.point, geom).as_array()
        ucm = convert_ucm(m, geom).position.as_array()
        for method, pts in (("conventional", conv), ("ucm", ucm), ("ducm", ucm)):
            entry = _moments(pts)
            entry["truth"] = t
            if method == "conventional":
                entry["hist"] = np.histogram2d(pts[:, 0], pts[:, 1], bins=cfg.bins)
            stats.bias[method][float(alpha)] = entry
    stats.events = dict(events)
    return stats


def _moments(pts: np.ndarray) -> dict:
    n = pts.shape[0]
    mean = pts.mean(axis=0)
    se = pts.std(axis=0, ddof=1) / np.sqrt(n) if n > 1 else np.full(2, np.inf)
    return {"mean": mean, "se": se, "n": n}


def static_nees_point(
    params: dict,
    runs: int,
    geom: BistaticGeometry,
    rng: np.random.Generator,
    prediction_shape=PREDICTION_SHAPE,
    events: Counter | None = None,
) -> dict[str, float]:
    """Static NEES of each method at one target/noise configuration.

    For DUCM the prediction is the truth corrupted by
    ``N(0, sigma_b^2 * prediction_shape)``.
    """
    noise = NoiseSpec(params["sigma_b"], params["sigma_alpha"])
    truth = to_cartesian(BistaticPoint(params["b"], params["alpha"]), geom)
    t = np.array([float(truth.x), float(truth.y)])
    w = rng.standard_normal((2, runs))
    m, n_clamp = _clamped(
        NoisyMeasurement(
            params["b"] + noise.sigma_b * w[0], params["alpha"] + noise.sigma_alpha * w[1], noise
        ),
        geom,
    )
    P_t = noise.sigma_b**2 * np.asarray(prediction_shape, dtype=float)
    pred_pos = t + rng.standard_normal((runs, 2)) @ np.linalg.cholesky(P_t).T
    pred = cmkf.position_to_measurement_space(
        CartesianPoint(pred_pos[:, 0], pred_pos[:, 1]), P_t, geom
    )
    pred, n_fallback = cmkf.fallback_to_measurement(pred, m, geom)
    if events is not None:
        events["clamped"] += n_clamp
        events["ducm_fallback"] += n_fallback

    out = {}
    for cm in (convert_conventional(m, geom), convert_ucm(m, geom), convert_ducm(m, pred, geom)):
        err = cm.position.as_array() - t
        out[cm.method] = float(np.mean(normalized_errors(err, cm.covariance)))
    return out


def run_static_nees_campaign(cfg: StaticSweepConfig, threads: int = 1) -> CampaignStatistics:
    """NEES of each conversion method at every grid value of the sweep."""
    geom = BistaticGeometry(cfg.baseline)

    def one(i):
        ev: Counter = Counter()
        res = static_nees_point(
            cfg.point(cfg.grid[i]), cfg.runs, geom, stream(cfg.seed, i), cfg.prediction_shape, ev
        )
        return res, ev

    idx = range(len(cfg.grid))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, idx))
    else:
        results = [one(i) for i in idx]

    stats = CampaignStatistics(runs=cfg.runs, static_nees={m: {} for m in METHODS})
    events: Counter = Counter()
    for value, (res, ev) in zip(cfg.grid, results):
        for method, v in res.items():
            stats.static_nees[method][float(value)] = v
        events.update(ev)
    stats.events = dict(events)
    return stats


@dataclass
class _ChunkResult:
    scans: dict[str, ScanAccumulator]
    events: Counter
    checksums: dict[str, str] = field(default_factory=dict)


def simulate_runs(cfg: ScenarioConfig, run_indices) -> tuple[np.ndarray, NoisyMeasurement, int]:
    """Truth ``(runs, scans, 4)`` and raw measurements ``(runs, scans)`` for the given runs."""
    geom, noise = cfg.geometry, cfg.noise
    truths = np.empty((len(run_indices), cfg.scans, 4))
    b_m = np.empty((len(run_indices), cfg.scans))
    alpha_m = np.empty_like(b_m)
    for j, r in enumerate(run_indices):
        rng = stream(cfg.seed, r)
        truths[j] = generate_trajectory(cfg, rng)
        m = generate_measurement(CartesianPoint(truths[j, :, 0], truths[j, :, 2]), noise, geom, rng)
        b_m[j], alpha_m[j] = m.b_m, m.alpha_m
    raw = NoisyMeasurement(b_m, alpha_m, noise)
    raw, n_clamp = _clamped(raw, geom)
    return truths, raw, n_clamp


def _run_chunk(cfg: ScenarioConfig, methods, run_indices) -> _ChunkResult:
    geom, model = cfg.geometry, cfg.model
    truths, raw, n_clamp = simulate_runs(cfg, run_indices)
    events: Counter = Counter(clamped=n_clamp)
    result = _ChunkResult({}, events)
    digest = hashlib.sha256(raw.b_m.tobytes() + raw.alpha_m.tobytes()).hexdigest()
    n_runs = len(run_indices)
    for method in methods:
        est = np.empty((n_runs, cfg.scans, 4))
        cov = np.empty((n_runs, cfg.scans, 4, 4))
        first = NoisyMeasurement(raw.b_m[:, 0], raw.alpha_m[:, 0], raw.noise)
        init = convert_conventional(first, geom) if method == "conventional" else convert_ucm(first, geom)
        track = cmkf.initialize(init)
        est[:, 0], cov[:, 0] = track.state, track.covariance
        for k in range(1, cfg.scans):
            m = NoisyMeasurement(raw.b_m[:, k], raw.alpha_m[:, k], raw.noise)
            track = cmkf.step(track, m, method, model, geom, events)
            est[:, k], cov[:, k] = track.state, track.covariance
        acc = ScanAccumulator.empty(cfg.scans)
        acc.add(truths, est, cov)
        result.scans[method] = acc
        result.checksums[method] = digest
    return result


def run_tracking_campaign(
    cfg: ScenarioConfig,
    methods=METHODS,
    threads: int = 1,
    run_range: range | None = None,
) -> CampaignStatistics:
    """Run every method on identical measurement streams and accumulate per-scan stats.

    ``run_range`` selects a shard of run indices (default ``range(cfg.runs)``);
    shard results merge with :func:`merge_statistics`.
    """
    runs = range(cfg.runs) if run_range is None else run_range
    chunks = [runs[i : i + CHUNK_RUNS] for i in range(0, len(runs), CHUNK_RUNS)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda c: _run_chunk(cfg, methods, c), chunks))
    else:
        results = [_run_chunk(cfg, methods, c) for c in chunks]

    stats = CampaignStatistics(runs=len(runs))
    events: Counter = Counter()
    checksum = {m: hashlib.sha256() for m in methods}
    for res in results:
        for m in methods:
            stats.scans[m] = stats.scans[m] + res.scans[m] if m in stats.scans else res.scans[m]
            checksum[m].update(res.checksums[m].encode())
        events.update(res.events)
    stats.events = dict(events)
    stats.checksums = {m: h.hexdigest() for m, h in checksum.items()}
    rate = events.get("clamped", 0) / (len(runs) * cfg.scans)
    if rate > 1e-4:
        logger.warning("clamp rate %.2e exceeds 1e-4", rate)
    return stats


def merge_statistics(a: CampaignStatistics, b: CampaignStatistics) -> CampaignStatistics:
    """Combine tracking statistics from disjoint run shards."""
    out = CampaignStatistics(runs=a.runs + b.runs)
    out.scans = {m: a.scans[m] + b.scans[m] for m in a.scans}
    ev = Counter(a.events)
    ev.update(b.events)
    out.events = dict(ev)
    return out


def with_runs(cfg, runs: int | None = None, seed: int | None = None):
    """Copy of a config with optional run-count and seed overrides."""
    changes = {}
    if runs is not None:
        changes["runs"] = runs
    if seed is not None:
        changes["seed"] = seed
    return replace(cfg, **changes)


# Published scenarios. NEES sweep grid extents are a local choice covering
# each parameter direction.
FIG2 = StaticBiasConfig()
FIG3 = {
    "a": StaticSweepConfig(
        sweep="b",
        grid=tuple(np.arange(5000.0, 40001.0, 2500.0)),
        sigma_b=30.0,
        sigma_alpha=float(np.radians(1.0)),
        bisector=True,
        name="a",
    ),
    "b": StaticSweepConfig(
        sweep="alpha",
        grid=tuple(np.radians(np.arange(0.0, 91.0, 10.0))),
        b=8000.0,
        sigma_b=30.0,
        sigma_alpha=float(np.radians(2.0)),
        name="b",
    ),
    "c": StaticSweepConfig(
        sweep="sigma_b",
        grid=(1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0, 200.0, 300.0),
        b=8000.0,
        alpha=float(np.radians(60.0)),
        sigma_alpha=float(np.radians(1.0)),
        name="c",
    ),
    "d": StaticSweepConfig(
        sweep="sigma_alpha",
        grid=tuple(np.radians([0.1, 0.25, 0.5, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0])),
        b=8000.0,
        alpha=float(np.radians(60.0)),
        sigma_b=30.0,
        name="d",
    ),
}
FIG4 = ScenarioConfig()
