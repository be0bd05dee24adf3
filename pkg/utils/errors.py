"""Exception hierarchy shared by the library and the benchmark runner.

Every error carries a short ``code`` that the sweeps write into the CSV
``status`` column when a row fails.
"""


class TrotterBenchError(Exception):
    code = "error"


class DimensionMismatchError(TrotterBenchError, ValueError):
    code = "dimension_mismatch"


class NonFiniteMatrixError(TrotterBenchError, ValueError):
    code = "non_finite"


class NotHermitianError(TrotterBenchError, ValueError):
    code = "not_hermitian"


class QuadratureError(TrotterBenchError):
    code = "quadrature_failed"

    def __init__(self, message, best_estimate=None):
        super().__init__(message)
        self.best_estimate = best_estimate


class DegenerateBetaError(TrotterBenchError):
    """Raised when a coefficient integral is too small to divide by"""

    code = "degenerate_beta"

    def __init__(self, message, slot, beta, remedies=()):
        super().__init__(message)
        self.slot = slot
        self.beta = beta
        self.remedies = tuple(remedies)


class IllConditionedSystemError(TrotterBenchError):
    code = "ill_conditioned"

    def __init__(self, message, condition, ratio_name):
        super().__init__(message)
        self.condition = condition
        self.ratio_name = ratio_name


class OracleError(TrotterBenchError):
    code = "oracle_failed"


class StepSizeUnderflowError(OracleError):
    code = "step_underflow"


class OracleDisagreementError(OracleError):
    code = "oracle_disagreement"

    def __init__(self, message, deviation):
        super().__init__(message)
        self.deviation = deviation


class StepFailedError(TrotterBenchError):
    """A per-step failure inside a composed evolution"""

    def __init__(self, step_index, cause):
        super().__init__(f"step {step_index} failed: {cause}")
        self.step_index = step_index
        self.cause = cause
        self.code = getattr(cause, "code", "step_failed")


class FitRangeError(TrotterBenchError):
    code = "below_roundoff_floor"


class GateModelError(TrotterBenchError, ValueError):
    code = "no_gate_model"


class ConfigError(TrotterBenchError, ValueError):
    code = "bad_config"
