"""Exception hierarchy shared by every module.

Each class carries the process exit code the command-line interface uses
when the error escapes a command.
"""


class MRError(Exception):
    exit_code = 1


class DomainError(MRError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""

    exit_code = 6


class ConvergenceError(MRError, ArithmeticError):
    exit_code = 7

    def __init__(self, message, error_estimate=float("nan")):
        super().__init__(message)
        self.error_estimate = error_estimate


class DegenerateInstrumentsError(MRError):
    """Estimator denominator is not strictly positive."""

    exit_code = 8


class InsufficientInstrumentsError(MRError):
    exit_code = 9

    def __init__(self, message, n_selected=0):
        super().__init__(message)
        self.n_selected = n_selected


class FormatError(MRError):
    """Input file does not match the expected column layout."""

    exit_code = 4


class PipelineError(MRError):
    exit_code = 10


class ConfigError(MRError, ValueError):
    exit_code = 5


class ExperimentError(MRError):
    exit_code = 11


# OSError is mapped separately by the CLI.
IO_EXIT_CODE = 3
USAGE_EXIT_CODE = 2

EXIT_CODES = {
    "usage": USAGE_EXIT_CODE,
    "io": IO_EXIT_CODE,
    FormatError.__name__: FormatError.exit_code,
    ConfigError.__name__: ConfigError.exit_code,
    DomainError.__name__: DomainError.exit_code,
    ConvergenceError.__name__: ConvergenceError.exit_code,
    DegenerateInstrumentsError.__name__: DegenerateInstrumentsError.exit_code,
    InsufficientInstrumentsError.__name__: InsufficientInstrumentsError.exit_code,
    PipelineError.__name__: PipelineError.exit_code,
    ExperimentError.__name__: ExperimentError.exit_code,
    "unexpected": MRError.exit_code,
}
