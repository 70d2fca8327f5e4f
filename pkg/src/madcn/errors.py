"""Exception hierarchy shared by every module.

Each error carries the CLI exit code it maps to, so the command layer can
translate failures without a lookup table of its own.
"""


class MadcnError(Exception):
    exit_code = 1


class ArgumentError(MadcnError, ValueError):
    exit_code = 2


class ShapeError(MadcnError, ValueError):
    exit_code = 2


class InputError(MadcnError):
    exit_code = 2


class FormatError(InputError):
    """Model container is corrupt, truncated or from an unknown version."""


class EncodingError(InputError):
    """A categorical label or code does not fit its declared cardinality."""


class SchemaError(MadcnError):
    exit_code = 3


class CapacityError(MadcnError):
    exit_code = 4


class DivergenceError(MadcnError):
    exit_code = 5

    def __init__(self, epoch: int, batch: int, loss: float):
        super().__init__(f"non-finite loss {loss!r} at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch
        self.loss = loss


class SingularityError(MadcnError, ArithmeticError):
    exit_code = 2


class DegenerateTargetError(MadcnError, ValueError):
    exit_code = 2


class EvaluationError(MadcnError, ArithmeticError):
    exit_code = 2
