"""Exception hierarchy shared across the toolkit."""


class GaanetError(Exception):
    """Base class for every error raised by this package."""


class ShapeError(GaanetError, ValueError):
    """Tensor or weight dimensions do not match the declared geometry."""


class GeometryError(GaanetError, ValueError):
    """An operation would produce an empty or otherwise invalid spatial output."""


class SpecError(GaanetError, ValueError):
    """A block specification violates one of its construction invariants."""


class ConfigError(GaanetError, ValueError):
    """Network configuration text is malformed or inconsistent."""


class DataError(GaanetError, ValueError):
    """Label, image, or prediction data could not be ingested."""


class WeightArchiveError(GaanetError, ValueError):
    """Base class for weight-archive format errors."""


class BadMagic(WeightArchiveError):
    """The file does not start with the GAAW magic bytes."""


class TruncatedArchive(WeightArchiveError):
    """The file ends before the declared entries are complete."""


class DuplicateEntry(WeightArchiveError):
    """Two archive entries share the same name."""


class MissingWeight(GaanetError, KeyError):
    """A weight name required by the graph is absent from the archive."""
