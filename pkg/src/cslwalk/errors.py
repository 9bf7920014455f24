"""Exception hierarchy.  Each class carries the CLI error category and exit code."""


class CslWalkError(Exception):
    category = "error"
    exit_code = 1


class ParameterDomainError(CslWalkError, ValueError):
    """An input lies outside the domain of a formula (names the field)."""

    category = "parameter-domain"
    exit_code = 3

    def __init__(self, field: str, value, requirement: str):
        self.field = field
        self.value = value
        super().__init__(f"{field}={value!r}: {requirement}")


class UnitError(CslWalkError, ValueError):
    category = "unit"
    exit_code = 3


class ModelDomainError(CslWalkError, ValueError):
    """The large-localization-length approximation does not hold."""

    category = "model-domain"
    exit_code = 3


class InsufficientDataError(CslWalkError, ValueError):
    category = "insufficient-data"
    exit_code = 3


class OracleDivergenceError(CslWalkError, RuntimeError):
    """A numerical oracle failed its own convergence test."""

    category = "oracle-divergence"
    exit_code = 4


class IntegratorToleranceError(OracleDivergenceError):
    category = "integrator-tolerance"
