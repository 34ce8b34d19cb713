"""Trade-pattern mining, country clustering, boosted trade models and series sanity checks."""

__version__ = "0.1.0"

from .errors import ConfigError, IngestError, SchemaError, TradeMLError  # noqa: E402,F401
