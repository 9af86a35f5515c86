"""Exception types shared across the package."""


class GbplocError(Exception):
    """Base class for every error raised by this package."""


# ---------------------------------------------------------------------------
# geometry

class SingularGeometry(GbplocError):
    """The two arrival bearings are parallel or antiparallel, so the
    single-bounce line constraint has no finite steering vector."""


class NotLineOfSight(GbplocError):
    """A line-of-sight construction was requested for a path that is not
    line-of-sight."""


class AllPathsDegenerate(GbplocError):
    """Every path on an edge was dropped as geometrically degenerate."""


class RankDeficient(GbplocError):
    """The stacked edge geometry has numerical rank zero."""


# ---------------------------------------------------------------------------
# belief propagation

class IsolatedNode(GbplocError):
    """A node with no neighbors cannot receive messages."""


class NoMessages(GbplocError):
    """Fusion of an empty message sequence was requested."""


class NumericalFailure(GbplocError):
    """A message covariance stayed non-invertible after regularization."""


class MismatchedNodeSets(GbplocError):
    """Two belief maps cover different node sets."""


# ---------------------------------------------------------------------------
# scenario simulation

class InvalidReflection(GbplocError):
    """No valid single-bounce reflection exists for this node pair and
    reflector (nodes straddle or touch the line)."""


class CoincidentNodes(GbplocError):
    """Two nodes occupy the same position."""


class ScenarioInfeasible(GbplocError):
    """Scenario generation failed to find valid geometry within the retry
    budget."""


class UnreachableNode(GbplocError):
    """A node has no path to the anchor."""


# ---------------------------------------------------------------------------
# reference solvers

class RankDeficientSystem(GbplocError):
    """The stacked network system does not determine all positions.

    Attributes:
        nullity: dimension of the undetermined subspace.
    """

    def __init__(self, message: str, nullity: int = 0):
        super().__init__(message)
        self.nullity = nullity


class TooManyUnknowns(GbplocError):
    """Grid search is limited to two unknown nodes."""


# ---------------------------------------------------------------------------
# transport

class FrameError(GbplocError):
    """Base class for frame codec errors."""


class SenderIdOverflow(FrameError):
    """Node id does not fit the 16-bit sender field."""


class BadMagic(FrameError):
    """Frame does not start with the expected magic bytes."""


class UnsupportedVersion(FrameError):
    """Frame version byte is not supported."""


class UnexpectedKind(FrameError):
    """Frame kind byte does not match the expected frame type."""


class TruncatedFrame(FrameError):
    """Frame length differs from the fixed layout size."""


class NonFiniteField(FrameError):
    """A float field decoded to NaN or infinity."""


class RoundTimeout(GbplocError):
    """A neighbor frame was still missing after the retry budget."""


# ---------------------------------------------------------------------------
# experiments

class EmptySamples(GbplocError):
    """An error-sample collection holds no trials."""
