"""Robust GLRT-based detection of range-spread targets."""
from .detectors import (
    GAMF,
    GASD,
    GLRT_H,
    ROBUST_GLRT,
    DetectorKind,
    Kind,
    NuBranch,
    NuEstimate,
    StatisticValue,
    all_detectors,
    alpha_hat,
    gamf_statistic,
    gasd_statistic,
    glrt_h_statistic,
    glrt_robust_statistic,
    nu_hat,
    parametric,
    parametric_statistic,
    projected_spectrum,
    statistic,
)
from .linalg import EigenSpectrum, complement_projector, eigvals_psd, inv_sqrt, logdet_id_plus
from .montecarlo import (
    CfarReport,
    PdCurve,
    ThresholdRecord,
    calibrate_threshold,
    calibrate_thresholds,
    cfar_check,
    estimate_pd,
    estimate_pd_many,
)
from .scenario import (
    Dataset,
    Scenario,
    amplitudes_for_snr,
    clutter_covariance,
    cos2_theta,
    draw_dataset,
    steering_vector,
)

__version__ = "0.1.0"

__all__ = [
    "CfarReport",
    "Dataset",
    "DetectorKind",
    "EigenSpectrum",
    "GAMF",
    "GASD",
    "GLRT_H",
    "Kind",
    "NuBranch",
    "NuEstimate",
    "PdCurve",
    "ROBUST_GLRT",
    "Scenario",
    "StatisticValue",
    "ThresholdRecord",
    "all_detectors",
    "alpha_hat",
    "amplitudes_for_snr",
    "calibrate_threshold",
    "calibrate_thresholds",
    "cfar_check",
    "clutter_covariance",
    "complement_projector",
    "cos2_theta",
    "draw_dataset",
    "eigvals_psd",
    "estimate_pd",
    "estimate_pd_many",
    "gamf_statistic",
    "gasd_statistic",
    "glrt_h_statistic",
    "glrt_robust_statistic",
    "inv_sqrt",
    "logdet_id_plus",
    "nu_hat",
    "parametric",
    "parametric_statistic",
    "projected_spectrum",
    "statistic",
    "steering_vector",
]
