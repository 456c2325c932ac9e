"""Exception hierarchy.

Every error raised on purpose by the package derives from LedTreeError, and
carries an ``exit_code`` the command line maps to its process status.
"""


class LedTreeError(Exception):
    exit_code = 5


class InputFormatError(LedTreeError):
    exit_code = 2


class TopologyError(InputFormatError):
    """Malformed combinatorial tree description."""


class NotFullBinary(TopologyError):
    pass


class CyclicStructure(TopologyError):
    pass


class IndexRangeViolation(TopologyError):
    pass


class DimensionMismatch(InputFormatError):
    pass


class InfeasibleError(LedTreeError):
    """No LED tree of the given hanging type could be constructed."""

    exit_code = 3


class InfeasiblePair(InfeasibleError):
    """Two siblings violate ``|v1 - v2| >= |h2 - h1|``."""


class StretchInfeasible(InfeasibleError):
    def __init__(self, vertex, message=None):
        self.vertex = vertex
        super().__init__(message or f"stretched tree does not exist: merge at inner vertex {vertex} fails")


class EmptyFeasibleGrid(InfeasibleError):
    pass


class TopologyInferenceFailed(InfeasibleError):
    def __init__(self, stage, message=None):
        self.stage = stage
        super().__init__(message or f"no admissible pair at agglomeration stage {stage}")


class CoincidentChildren(LedTreeError):
    pass


class DegenerateFoci(LedTreeError):
    pass


class NotFeasible(LedTreeError):
    exit_code = 3


class TangentDirectionForbidden(LedTreeError):
    pass


class AntiparallelBlock(LedTreeError):
    pass


class UnknownExample(InputFormatError):
    pass


class ParameterViolation(InputFormatError):
    pass


class DegenerateDirections(LedTreeError):
    exit_code = 4


class NotRegular(LedTreeError):
    exit_code = 4


class NonConvergence(LedTreeError):
    pass


class EmptyTable(InputFormatError):
    pass


class AllMissingRow(InputFormatError):
    pass


class ZeroAnchorHeight(LedTreeError):
    exit_code = 2


class DimensionUnsupported(LedTreeError):
    exit_code = 2
