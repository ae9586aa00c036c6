"""Exception and warning types shared across the toolkit."""


class OamTomoError(Exception):
    """Base class for all toolkit errors."""


class NonPhysicalState(OamTomoError):
    """A density matrix failed a physicality check (trace, Hermiticity or positivity)."""


class ZeroWeightWedge(OamTomoError):
    """A post-selected wedge carries no weight; Pauli ratios are undefined there."""


class MissingSetting(OamTomoError):
    """A measurement campaign does not cover the required (rotation, axis) plan."""


class MLERequiresRecords(OamTomoError):
    """Iterative likelihood maximization was requested without measurement records."""


class NonHermitianInput(OamTomoError):
    """An operation requiring a Hermitian matrix received one that is not."""


class SchemaError(OamTomoError):
    """Structured input (JSON/CSV) does not match the documented schema."""


class NormError(OamTomoError):
    """Amplitudes or ensemble weights violate their normalization constraint."""


class RangeError(OamTomoError):
    """An index (OAM or angle) lies outside the allowed range."""


class EmptyFrame(OamTomoError):
    """A polar intensity frame contains no samples."""


class PgmFormatError(OamTomoError):
    """Bytes could not be parsed as a P2/P5 PGM image."""


class GeometryError(OamTomoError):
    """The requested sampling annulus does not fit inside the image."""


class IoError(OamTomoError):
    """A file could not be read or written."""


class ZeroWedgeWarning(UserWarning):
    """A wedge had zero total counts; the affected matrix element is imputed as 0."""
