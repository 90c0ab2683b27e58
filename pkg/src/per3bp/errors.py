"""Exception taxonomy shared across the library.

Every failure mode that can abort a verification run has its own class so
batch drivers can collect and report them individually.
"""


class Per3bpError(Exception):
    """Base class for all library errors."""


class DivisionByZeroInterval(Per3bpError):
    """Interval division where the divisor contains zero."""


class DomainViolation(Per3bpError):
    """Interval function evaluated outside its real domain (e.g. sqrt)."""


class SingularPosition(Per3bpError):
    """Phase-space point (or box) too close to one of the primaries."""


class NoConvergence(Per3bpError):
    """An iterative (non-rigorous) solver failed to converge."""


class BlowUp(Per3bpError):
    """Rigorous enclosure diameter exceeded the configured budget."""


class StepUnderflow(Per3bpError):
    """Validated step size shrank below the representable minimum."""


class OffSection(Per3bpError):
    """Point handed to a chart does not lie on the chart's section."""


class RadicandNegative(Per3bpError):
    """Momentum radicand of a local parameterization reaches below zero."""


class NoCrossing(Per3bpError):
    """Flow failed to reach the target section within the time budget."""


class TangentialCrossing(Per3bpError):
    """Transversality interval at a section crossing contains zero."""


class DegenerateSplitting(Per3bpError):
    """Hyperbolic splitting estimate too weak to fit a chart."""


class EnclosureTooWide(Per3bpError):
    """A set-valued check came out undecidable at the current resolution."""


class ExpansionLost(Per3bpError):
    """Cone propagation denominator not certified positive."""


class WrongTopology(Per3bpError):
    """Shot trajectory does not have the expected loop structure."""


class CoverageGap(Per3bpError):
    """Window grid union fails to cover the required strip rectangle."""


class OverlapTooThin(Per3bpError):
    """Pairwise window overlap cannot host the required rectangle."""


class OverlapInfeasible(Per3bpError):
    """Requested grid dimensions cannot host the minimum overlap."""


class NonPositiveDrift(Per3bpError):
    """Certified lower drift bound c failed to be strictly positive."""


class Undecided(Per3bpError):
    """Neither of the available mechanisms could settle a disjointness
    or inclusion question."""


class TrackingLost(Per3bpError):
    """Steered orbit left the schedule tolerance band."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class InsufficientSample(Per3bpError):
    """Too few paths for the requested statistical comparison."""


class MissingInput(Per3bpError):
    """Constant derivation requested without a complete certificate."""


class ConfigInvalid(Per3bpError):
    """Run configuration failed validation."""


class MissingArtifact(Per3bpError):
    """A required exploration artifact is absent or unreadable."""


class SchemaMismatch(Per3bpError):
    """Artifact schema version differs from what this build writes."""
