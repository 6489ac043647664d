"""Exception types raised by the mutual localization library."""


class MutlocError(Exception):
    """Base class for all library errors."""


class NonPositiveDepth(MutlocError):
    """A point lies on or behind the image plane of a camera."""


class DegenerateConfiguration(MutlocError):
    """Point sets are collinear or otherwise rank deficient."""


class DegenerateBearing(MutlocError):
    """Two markers project onto the same viewing ray."""


class ZeroPolynomial(MutlocError):
    """All polynomial coefficients vanish."""


class NoPositiveRoots(MutlocError):
    """No all-positive scale triple survives back-substitution."""


class NoSolution(MutlocError):
    """Every marker triple produced zero pose candidates."""


class MarkerNotVisible(MutlocError):
    """A marker falls outside the image or behind the camera."""


class ConfigError(MutlocError):
    """A configuration or observation file could not be parsed."""

    def __init__(self, message, path=None, line=None, key=None):
        self.path = path
        self.line = line
        self.key = key
        where = []
        if path is not None:
            where.append(str(path))
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"key '{key}'")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)
