"""Correlation-enhanced beam tracking with entangled photon pairs:
ray optics, pair source, event camera, coincidence matching, estimators."""

__version__ = "0.1.0"

from .camera import BackgroundKind, BackgroundSpec, CameraParams, detect, inject_background  # noqa: E402
from .coincidence import CoincidenceConfig, match_coincidences  # noqa: E402
from .source import Arm, Displacement, LaserSourceParams, Plane, SpdcSourceParams  # noqa: E402
from .tracking import Mode, TrialStatistics, displacement_estimate, uncertainty_product  # noqa: E402

__all__ = [
    "Arm", "BackgroundKind", "BackgroundSpec", "CameraParams", "CoincidenceConfig", "Displacement",
    "LaserSourceParams", "Mode", "Plane", "SpdcSourceParams", "TrialStatistics", "detect",
    "displacement_estimate", "inject_background", "match_coincidences", "uncertainty_product",
]
