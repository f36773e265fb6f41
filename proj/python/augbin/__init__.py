"""Response-probability estimation from tumour-size and new-lesion data."""

from ._augbin import (
    Dataset,
    Error,
    FittedModel,
    InsufficientData,
    ParseError,
    TooManyFailures,
    ValidationError,
    estimate,
    fit,
    generate,
    load_csv,
    mvn_rect_prob,
    permutation_test,
    power,
    preset_names,
    read_csv,
    simulate,
    two_arm_test,
    wilson_ci,
)

__all__ = [
    "Dataset",
    "Error",
    "FittedModel",
    "InsufficientData",
    "ParseError",
    "TooManyFailures",
    "ValidationError",
    "estimate",
    "fit",
    "generate",
    "load_csv",
    "mvn_rect_prob",
    "permutation_test",
    "power",
    "preset_names",
    "read_csv",
    "simulate",
    "two_arm_test",
    "wilson_ci",
]
