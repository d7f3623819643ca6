"""Gap filling for daily panels: Kalman smoothing and spline-EM, plus masked scoring."""

from .kalman import (StateSpaceModel, fit_state_space, kalman_impute, kalman_impute_panel,
                     kalman_smooth)
from .masking import ImputationReport, MaskSpec, MaskedCell, apply_mask, score_imputation
from .spline_em import SplineEmConfig, SplineEmResult, spline_em_fit, spline_em_impute

__all__ = [
    "StateSpaceModel", "fit_state_space", "kalman_impute", "kalman_smooth",
    "ImputationReport", "MaskSpec", "MaskedCell", "apply_mask", "score_imputation",
    "SplineEmConfig", "SplineEmResult", "spline_em_fit", "spline_em_impute",
    "kalman_impute_panel",
]

