"""Weakly disentangled representations: factor grammars, Gaussian-mixture
priors, disentanglement metrics and the ``wdis`` pipeline from Python."""

from ._wdis import (
    ConfigError,
    DataError,
    FactorSpace,
    GMPrior,
    NumericError,
    Relation,
    builtin_relations,
    dci,
    estimate_prior,
    factor_space,
    load_dataset,
    make_dataset,
    mig,
    run_cli,
    sap,
)

__all__ = [
    "ConfigError",
    "DataError",
    "FactorSpace",
    "GMPrior",
    "NumericError",
    "Relation",
    "builtin_relations",
    "dci",
    "estimate_prior",
    "factor_space",
    "load_dataset",
    "make_dataset",
    "mig",
    "run_cli",
    "sap",
]
