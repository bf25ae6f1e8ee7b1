# Custom exceptions
class DFOTRError(Exception):
    """Base exception for DFO-TR errors"""

    pass


class DFOTRConfigError(DFOTRError):
    """Configuration related errors"""

    pass


class DFOTRValidationError(DFOTRError):
    """Validation related errors"""

    pass


class NonFiniteInputError(DFOTRValidationError):
    """Input contains NaN or Inf entries"""

    pass


class EmptyClassError(DFOTRValidationError):
    """A class of the labeled dataset has no examples"""

    pass


class DegenerateDirectionError(DFOTRValidationError):
    """The projected score difference has (numerically) zero variance"""

    pass


class ModelError(DFOTRError):
    """Interpolation model construction errors"""

    pass


class EmptySetError(ModelError):
    """No usable interpolation points besides the center"""

    pass


class DegenerateGeometryError(ModelError):
    """Interpolation displacements carry no directional information"""

    pass


class ParseError(DFOTRError):
    """LIBSVM input could not be parsed"""

    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason


class ExternalObjectiveError(DFOTRError):
    """External black-box command failed or violated the line protocol"""

    pass


class ExternalTimeoutError(ExternalObjectiveError):
    """External black-box command did not answer in time"""

    pass
