"""Exception types raised across the library.

The CLI maps these onto distinct exit codes, so estimators raise the most
specific class that applies rather than bare ValueError/RuntimeError.
"""


class GridMismatchError(ValueError):
    """Operands live on different wavelength grids; resample first."""


class SaturatedCodeError(ValueError):
    """A digital code outside the invertible (unsaturated) range was inverted."""


class UnderdeterminedError(RuntimeError):
    """A fit has fewer usable equations than unknowns."""


class RankDeficiencyError(RuntimeError):
    """A linear system is rank deficient or numerically non-invertible."""


class ConvergenceError(RuntimeError):
    """An iterative solver hit its iteration cap or failed its KKT checks."""


class DegenerateGeometryError(RuntimeError):
    """Sample geometry is degenerate (e.g. all points collinear)."""


class PipelineError(RuntimeError):
    """A pipeline stage could not run; message carries the stage label."""


class ParseError(ValueError):
    """A file failed to parse; message carries location and the violated rule."""


class SchemaVersionError(ValueError):
    """A JSON document declares a schema version this library does not read."""
