"""Exception hierarchy shared by every stage of the pipeline."""

from __future__ import annotations


class PipelineError(Exception):
    """Base class for all errors raised by midcap_neutral."""


class SchemaError(PipelineError):
    """An input file is missing a required column."""


class RowParseError(PipelineError):
    """A single input row could not be parsed."""

    def __init__(self, path, line: int, column: str, value: str):
        self.path = str(path)
        self.line = line
        self.column = column
        self.value = value
        super().__init__(f"{self.path}, line {line}: cannot parse {column}={value!r}")


class ValidationError(PipelineError):
    """A parsed value violates a domain constraint."""


class AmbiguousLinkError(PipelineError):
    """Two primary links are active for the same security-month."""

    def __init__(self, permno: int, date, gvkeys):
        self.permno = permno
        self.date = date
        self.gvkeys = tuple(gvkeys)
        keys = ", ".join(str(g) for g in self.gvkeys)
        super().__init__(f"permno {permno} on {date:%Y-%m-%d} has several primary links: gvkey {keys}")


class EmptyMatrixError(PipelineError):
    """Every feature in a cross-section is degenerate."""


class SingularFitError(PipelineError):
    """The return model cannot be fitted without regularization."""


class InsufficientDataError(PipelineError):
    """Too few observations for the requested statistic."""


class AlignmentError(PipelineError):
    """Two labelled inputs do not line up."""


class EmptyUniverseError(PipelineError):
    """No security survives the universe filters on a rebalance date."""


class NotPositiveDefiniteError(PipelineError):
    """A covariance matrix failed Cholesky factorization."""


class DegenerateUniverseError(PipelineError):
    """The universe is too small for a dollar-neutral portfolio."""


class PositionError(PipelineError):
    """Shares cannot be computed for a weighted security."""


class UndefinedSharpeError(PipelineError):
    """Return series has zero dispersion."""


class MissingRangeError(PipelineError):
    """The panel does not cover the dates a phase needs."""


class ConfigError(PipelineError):
    """Invalid configuration file or value."""
