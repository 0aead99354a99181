"""Test problems, the FISTA baseline and benchmark tables."""

from .harness import (BenchConfig, RateDiagnostic, fista, local_rate_diagnostic,
                      rate_slope, run_benchmark)
from .problems import (ClassificationInstance, LassoInstance, LibsvmParseError,
                       PartialDCT, gen_classification, gen_lasso, load_instance,
                       load_libsvm, tanh_oracle)

__all__ = [
    "BenchConfig",
    "RateDiagnostic",
    "fista",
    "local_rate_diagnostic",
    "rate_slope",
    "run_benchmark",
    "ClassificationInstance",
    "LassoInstance",
    "LibsvmParseError",
    "PartialDCT",
    "gen_classification",
    "gen_lasso",
    "load_instance",
    "load_libsvm",
    "tanh_oracle",
]
