"""Debiased modelling of hate-speech resharing: synthetic data, exposure propensities,
debiased user embeddings and explainable effect models."""

from ._core import (
    ATTRIBUTE_NAMES,
    ConvergenceError,
    Dataset,
    EffectModel,
    PlvModel,
    ValidationError,
    dbscan,
    embed_analyze,
    fit_ebm,
    fit_linear,
    load_dataset,
    mu_sweep,
    outcomes,
    propensity,
    run_pipeline,
    silhouette,
    split,
    synth,
    train_plv,
    welch_t_test,
)

__all__ = [
    "ATTRIBUTE_NAMES",
    "ConvergenceError",
    "Dataset",
    "EffectModel",
    "PlvModel",
    "ValidationError",
    "dbscan",
    "embed_analyze",
    "fit_ebm",
    "fit_linear",
    "load_dataset",
    "mu_sweep",
    "outcomes",
    "propensity",
    "run_pipeline",
    "silhouette",
    "split",
    "synth",
    "train_plv",
    "welch_t_test",
]
