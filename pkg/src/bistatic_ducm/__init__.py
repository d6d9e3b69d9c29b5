"""Debiased converted measurements and Kalman tracking for 2-D bistatic radar."""

from .cmkf import MotionModel, TrackState, dcwna_model, initialize, predict, step, update
from .conversion import (
    ConvertedMeasurement,
    MeasurementSpacePrediction,
    NoiseSpec,
    NoisyMeasurement,
    convert,
    convert_conventional,
    convert_ducm,
    convert_ucm,
)
from .geometry import BistaticGeometry, BistaticPoint, CartesianPoint, to_cartesian, to_measurement

__version__ = "0.1.0"
