"""Exception types shared across the package.

Two failure families matter to callers: malformed or inconsistent input
data, and numerically degenerate situations (zero norms, collapsed
spectra, singular iterates).  The CLI maps them to distinct exit codes.
"""


class GapAlignError(Exception):
    """Base class for all package errors."""


class DataFormatError(GapAlignError):
    """Malformed files, truncated payloads, shape or dtype mismatches."""


class ArtifactVersionError(DataFormatError):
    """Artifact schema_version is unknown to this build."""


class DegenerateInputError(GapAlignError):
    """Numerically degenerate input: zero norms, empty spectra, collapse."""
