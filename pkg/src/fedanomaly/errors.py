"""Exception hierarchy.

Every failure mode raised by this package derives from FedAnomalyError so the
CLI can map exception classes onto its exit codes (see cli.EXIT_*).
"""

from __future__ import annotations


class FedAnomalyError(Exception):
    """Base class for all package errors."""


class ConfigError(FedAnomalyError, ValueError):
    """Invalid configuration value, unknown key, or unparseable config file."""


class ShapeError(FedAnomalyError, ValueError):
    """Tensor/layer dimension mismatch."""


class NumericError(FedAnomalyError, ArithmeticError):
    """Non-finite value produced where finite math was required.

    ``sample_index`` identifies the offending record when known.
    """

    def __init__(self, message: str, sample_index: int | None = None):
        super().__init__(message)
        self.sample_index = sample_index


class SchemaError(FedAnomalyError, ValueError):
    """Dataset file does not provide a column the schema declares."""


class DataError(FedAnomalyError, ValueError):
    """Malformed record content. Carries (row, column) when known.

    ``row`` is the 1-based data row number (header excluded), matching what a
    user sees in a spreadsheet minus the header line.
    """

    def __init__(self, message: str, row: int | None = None, column: str | None = None):
        super().__init__(message)
        self.row = row
        self.column = column


class InjectionError(FedAnomalyError, RuntimeError):
    """Anomaly synthesis could not satisfy its constraints (e.g. no unseen
    value combination found within the retry budget)."""


class PartitionError(FedAnomalyError, ValueError):
    """Partitioning constraint violated (empty partition, too few departments,
    or inconsistent split/merge parameter subsets)."""


class FederationError(FedAnomalyError, RuntimeError):
    """Federated round could not complete."""


class AggregationError(FedAnomalyError, ValueError):
    """fed_avg inputs inconsistent (shapes, weights)."""


class EvalError(FedAnomalyError, ValueError):
    """Evaluation undefined for the given inputs (e.g. no positive records)."""
