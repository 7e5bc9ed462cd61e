"""Exception types shared across the package."""


class SparseDynError(Exception):
    """Base class for all errors raised by sparsedyn."""


class DimensionError(SparseDynError, ValueError):
    pass


class ConfigError(SparseDynError, ValueError):
    pass


class ContractError(SparseDynError, RuntimeError):
    pass


class ParseError(SparseDynError, ValueError):
    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}" if where else f"line {line}"
        super().__init__(f"{where}: {message}" if where else message)


class ProtocolError(SparseDynError, ValueError):
    pass


class CheckpointError(SparseDynError, ValueError):
    pass
