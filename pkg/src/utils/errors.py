class GenshinError(ValueError):
    """Base class for every contract violation raised by this package."""


class ShapeError(GenshinError):
    pass


class NonFiniteError(GenshinError):
    pass


class AutogradError(GenshinError):
    pass


class NonDeterministicError(GenshinError):
    pass


class TensorFormatError(GenshinError):
    pass


class DataError(GenshinError):
    pass


class GraphError(GenshinError):
    pass


class ConfigError(GenshinError):
    pass


class CheckpointError(GenshinError):
    pass


class NumericError(GenshinError):
    """Training diverged or a numerical check failed."""

    def __init__(self, message: str, batch_index: int | None = None) -> None:
        super().__init__(message)
        self.batch_index = batch_index
