class TradeMLError(ValueError):
    """Base class for all errors raised by trademl."""


class IngestError(TradeMLError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class SchemaError(TradeMLError):
    """A CSV or model header is missing a required column."""


class ConfigError(TradeMLError):
    pass
