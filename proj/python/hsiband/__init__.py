"""Explainability-driven hyperspectral band selection."""

from hsiband._core import (
    ConfigError,
    DataError,
    Model,
    NumericalError,
    average_drop,
    band_relevance,
    deletion_curve,
    exact_shapley,
    generate_synthetic,
    insertion_curve,
    kde,
    lrp,
    rank_bands,
    rise,
    run_stage,
    scott_bandwidth,
    scott_bandwidth_from_sigma,
    select_top_k,
    shap,
    train,
)

__all__ = [
    "ConfigError",
    "DataError",
    "Model",
    "NumericalError",
    "average_drop",
    "band_relevance",
    "deletion_curve",
    "exact_shapley",
    "generate_synthetic",
    "insertion_curve",
    "kde",
    "lrp",
    "rank_bands",
    "rise",
    "run_stage",
    "scott_bandwidth",
    "scott_bandwidth_from_sigma",
    "select_top_k",
    "shap",
    "train",
]
