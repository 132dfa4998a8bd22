"""Multimodal SHAP: serialization, Shapley estimation and faithfulness checks."""
from .aggregate import (
    STRATEGIES, FaithfulnessCurve, ModalityRelevance, explain_dataset, faithfulness_curves,
    modality_relevance, perturbation_curve, top_percentile_local, write_attributions_csv,
    write_curves_csv, write_relevance_csv,
)
from .serialize import (
    IMPUTATION, MODALITY_ORDER, MOD_SEP, STEP_SEP, Layout, SerializationError, SerializedSample,
    deserialize, serialize,
)
from .shapley import (
    Attribution, CoalitionGame, ShapleyError, exact_shapley, feature_groups, kernel_shap,
    sample_coalitions, shapley_kernel_weight, solve_kernel_wls,
)

__all__ = [
    "Attribution", "CoalitionGame", "FaithfulnessCurve", "IMPUTATION", "Layout", "MODALITY_ORDER",
    "MOD_SEP", "ModalityRelevance", "STEP_SEP", "STRATEGIES", "SerializationError",
    "SerializedSample", "ShapleyError", "deserialize", "exact_shapley", "explain_dataset",
    "faithfulness_curves", "feature_groups", "kernel_shap", "modality_relevance",
    "perturbation_curve", "sample_coalitions", "serialize", "shapley_kernel_weight",
    "solve_kernel_wls", "top_percentile_local", "write_attributions_csv", "write_curves_csv",
    "write_relevance_csv",
]
