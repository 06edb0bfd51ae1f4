"""Exception taxonomy shared across the package.

Two families matter downstream: data/contract errors (malformed input,
invalid configuration) and identification errors (the estimand is not
recoverable from the data at hand). The CLI maps the former to exit code 2
and the latter to exit code 3.
"""


class RsvError(Exception):
    """Base class for all package errors."""


class DataError(RsvError):
    """Input data or configuration violates a contract."""


class IdentificationError(RsvError):
    """The target quantity is not identified from the given data."""


# -- data / contract errors -------------------------------------------------

class MalformedRow(DataError):
    """A CSV row could not be parsed (e.g. non-numeric feature cell)."""


class SchemaViolation(DataError):
    """A row contradicts its sample tag (e.g. experimental row with outcome)."""


class EmptySample(DataError):
    """Dataset lacks experimental or observational units entirely."""


class InvalidSpec(DataError):
    """A generator or binning spec has out-of-range parameters."""


class OutOfSupport(DataError):
    """Continuous outcome falls outside the declared binning support."""


class DimMismatch(DataError):
    """Feature vector dimension differs from the fitted predictor's."""


class EmptyTraining(DataError):
    """A predictor target has zero eligible training units."""


class InfeasibleSplit(DataError):
    """No fold assignment satisfies per-fold sample presence after retries."""


class Unsupported(DataError):
    """Operation not available for this outcome/covariate configuration."""


class SupportTooLarge(DataError):
    """Finite-support enumeration would exceed the size limit."""


class InsufficientCell(DataError):
    """A density cell has too few labeled units (reported, cell skipped)."""


# -- identification errors ---------------------------------------------------

class ZeroCount(IdentificationError):
    """A marginal event probability is zero; its reciprocal is undefined."""


class SingularDesign(IdentificationError):
    """The initial-estimate normal equations are (numerically) singular."""


class IrrelevantRSV(IdentificationError):
    """The representation carries no outcome signal; refusing a point estimate."""


class WeakInstrument(IdentificationError):
    """First-stage contrast below the configured floor."""


class DegenerateBootstrap(IdentificationError):
    """Bootstrap replicates failed at a rate that makes the CI meaningless."""
