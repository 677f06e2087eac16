"""Evaluation protocols, synthetic data generators and the MLP baseline."""

from .experiments import (
    fit_frame_model,
    interpolation_split_eval,
    missing_reading_experiment,
    missing_sensor_experiment,
    nrmse_cross_city,
    select_alpha,
    spatial_sigma,
    threshold_sweep,
)
from .metrics import Metrics, RetrievalReport, compute_metrics, score_retrieval
from .mlp import MLPInterpolator, gradient_check
from .synth import (
    PlantedNetworkSpec,
    SyntheticFieldSpec,
    planted_hotspot_network,
    synth_field,
)

__all__ = [
    "Metrics", "RetrievalReport", "MLPInterpolator", "PlantedNetworkSpec", "SyntheticFieldSpec",
    "compute_metrics", "fit_frame_model", "gradient_check", "interpolation_split_eval",
    "missing_reading_experiment", "missing_sensor_experiment", "nrmse_cross_city",
    "planted_hotspot_network", "score_retrieval", "select_alpha", "spatial_sigma",
    "synth_field", "threshold_sweep",
]
