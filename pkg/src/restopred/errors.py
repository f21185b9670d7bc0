"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: DataError -> 2, NumericalError -> 3,
anything else (including ValueError from bad arguments) -> 1.
"""


class RestopredError(Exception):
    """Base class for package-specific failures."""


class DataError(RestopredError):
    """Input files or serialized artifacts are missing, malformed, or inconsistent."""


class IngestError(DataError):
    pass


class ArtifactError(DataError):
    pass


class NumericalError(RestopredError):
    """A numerical procedure failed (degenerate inputs, no convergence, non-finite values)."""


class SdescError(NumericalError):
    pass


class NeuralError(NumericalError):
    pass


class TsneError(NumericalError):
    pass


class TransferError(RestopredError):
    pass
