"""Figure rendering for the exported three-body artifacts.

Consumes only the exported files (homoclinic.csv, grids.json,
paths.csv); the producing library is never imported, so the file
schemas are the entire contract between the two packages.
"""

from .errors import MissingArtifact, SchemaMismatch
from .render import FigureSpec, render

__version__ = "0.1.0"

__all__ = ["FigureSpec", "render", "MissingArtifact", "SchemaMismatch",
           "__version__"]
