"""End-to-end RGB camera model: simulate pixel formation and estimate the
spectral sensitivity, response function, and gamut mapping of an unknown
camera from images of known reflectances under known illuminants."""

__version__ = "0.1.0"

from .camera import (
    CameraModel,
    ResponseCurve,
    Saturation,
    SaturationFlags,
    apply_response,
    classify_saturation,
    default_thresholds,
    interpolated_code,
    invert_response,
    simulate_pixel,
)
from .gamut import (
    GamutFitConfig,
    GamutFitResult,
    GamutPartition,
    RbfGamutMap,
    apply_gamut_map,
    fit_gamut_map,
    partition_gamut,
    rgb_to_xy,
)
from .pipeline import (
    CalibrationInput,
    EstimatedCamera,
    EvaluationReport,
    PipelineConfig,
    evaluate,
    generate_synthetic_dataset,
    run_two_stage,
    synthetic_camera,
    synthetic_gamut_warp,
)
from .response import (
    ExposureStack,
    ReciprocityReport,
    ResponseFitConfig,
    check_exposure_reciprocity,
    estimate_response,
)
from .sensitivity import (
    CrossValidationReport,
    MeasurementSet,
    SensitivityBasis,
    SensitivityDatabase,
    SensitivityFit,
    build_basis,
    cross_validate,
    estimate_constrained,
    estimate_pinv,
    synthetic_database,
)
from .spectral import (
    DEFAULT_GRID,
    Kind,
    SensitivityMatrix,
    SpectralCurve,
    SpectralGrid,
    integrate_sensitivity,
    resample,
    spectral_product,
)

__all__ = [
    "__version__",
    "CameraModel",
    "ResponseCurve",
    "Saturation",
    "SaturationFlags",
    "apply_response",
    "classify_saturation",
    "default_thresholds",
    "interpolated_code",
    "invert_response",
    "simulate_pixel",
    "GamutFitConfig",
    "GamutFitResult",
    "GamutPartition",
    "RbfGamutMap",
    "apply_gamut_map",
    "fit_gamut_map",
    "partition_gamut",
    "rgb_to_xy",
    "CalibrationInput",
    "EstimatedCamera",
    "EvaluationReport",
    "PipelineConfig",
    "evaluate",
    "generate_synthetic_dataset",
    "run_two_stage",
    "synthetic_camera",
    "synthetic_gamut_warp",
    "ExposureStack",
    "ReciprocityReport",
    "ResponseFitConfig",
    "check_exposure_reciprocity",
    "estimate_response",
    "CrossValidationReport",
    "MeasurementSet",
    "SensitivityBasis",
    "SensitivityDatabase",
    "SensitivityFit",
    "build_basis",
    "cross_validate",
    "estimate_constrained",
    "estimate_pinv",
    "synthetic_database",
    "DEFAULT_GRID",
    "Kind",
    "SensitivityMatrix",
    "SpectralCurve",
    "SpectralGrid",
    "integrate_sensitivity",
    "resample",
    "spectral_product",
]
