class FiguresError(Exception):
    """Base class for rendering failures."""


class MissingArtifact(FiguresError):
    """Input artifact absent, unreadable, or empty."""


class SchemaMismatch(FiguresError):
    """Artifact schema version differs from what this renderer reads."""
