"""Needle-tip localisation: simulator, pivot calibration and trained-model inference."""

from ._needletrack import (
    AxisRange,
    ConfigError,
    DataError,
    Model,
    NormalizationConfig,
    OpticsConfig,
    compute_metrics,
    denormalize_position,
    normalize_position,
    pivot_calibrate,
    read_png,
    render_image,
    surface_irradiance,
)

__all__ = [
    "AxisRange",
    "ConfigError",
    "DataError",
    "Model",
    "NormalizationConfig",
    "OpticsConfig",
    "compute_metrics",
    "denormalize_position",
    "normalize_position",
    "pivot_calibrate",
    "read_png",
    "render_image",
    "surface_irradiance",
]
