"""Two-sample Mendelian randomization with winner's-curse-corrected instruments."""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    ConvergenceError,
    DegenerateInstrumentsError,
    DomainError,
    ExperimentError,
    FormatError,
    InsufficientInstrumentsError,
    MRError,
    PipelineError,
)
from .estimators import EstimateReport, InstrumentPair, Method, PairArrays, divw, ivw, rivw, rivw_from_rb, srivw
from .selection import (
    DEFAULT_ETA,
    LAMBDA_GWS,
    LAMBDA_RIVW,
    SelectionConfig,
    rao_blackwellize,
    rb_arrays,
    rb_variance_quadrature,
    select_randomized,
)

__all__ = [
    "ConfigError",
    "ConvergenceError",
    "DEFAULT_ETA",
    "DegenerateInstrumentsError",
    "DomainError",
    "EstimateReport",
    "ExperimentError",
    "FormatError",
    "InstrumentPair",
    "InsufficientInstrumentsError",
    "LAMBDA_GWS",
    "LAMBDA_RIVW",
    "MRError",
    "Method",
    "PairArrays",
    "PipelineError",
    "SelectionConfig",
    "divw",
    "ivw",
    "rao_blackwellize",
    "rb_arrays",
    "rb_variance_quadrature",
    "rivw",
    "rivw_from_rb",
    "select_randomized",
    "srivw",
]
