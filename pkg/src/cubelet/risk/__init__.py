from .dose import infection_probability, well_mixed_dose
from .exposure import BreathingZone, ExposureRecord, SamplingGapError, zone_exposure
from .matrix import MissingSeatRunError, RiskMatrix, build_risk_matrix

__all__ = [
    "infection_probability",
    "well_mixed_dose",
    "BreathingZone",
    "ExposureRecord",
    "SamplingGapError",
    "zone_exposure",
    "MissingSeatRunError",
    "RiskMatrix",
    "build_risk_matrix",
]
