"""Exception hierarchy shared by every module."""


class SilverSieveError(Exception):
    """Base class for all library errors."""


class ParseError(SilverSieveError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class SchemaError(SilverSieveError):
    """Unknown label, malformed template, or inconsistent relation schema."""


class DimensionError(ParseError):
    pass


class ContractError(SilverSieveError):
    """A precondition of an operation was violated."""


class MissingGroundTruthError(ContractError):
    pass


class TrainingError(SilverSieveError):
    def __init__(self, message: str, epoch: int | None = None):
        self.epoch = epoch
        if epoch is not None:
            message = f"epoch {epoch}: {message}"
        super().__init__(message)
