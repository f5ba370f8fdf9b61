"""Exception hierarchy shared across the package."""


class TubecamError(Exception):
    """Base class for all domain errors raised by this package."""


class FormatError(TubecamError):
    """A binary input does not parse as the format it claims to be."""


class UnsupportedLayoutError(FormatError):
    """The file parses but uses a layout we refuse (e.g. Fortran order)."""


class UnsupportedDtypeError(FormatError):
    """The file parses but stores an element type we refuse."""


class CorruptFileError(FormatError):
    """Header and payload disagree (truncated or oversized data)."""


class DataError(TubecamError):
    """Loaded values violate a data invariant (NaN/Inf)."""


class ManifestError(TubecamError):
    """A run manifest is missing fields, malformed, or points nowhere."""


class ShapeError(TubecamError):
    """Tensor ranks or extents do not line up."""


class EmptySelectionError(TubecamError):
    """The threshold policy retained no feature channels."""


class EmptyInputError(TubecamError):
    """An input directory contains nothing usable."""
