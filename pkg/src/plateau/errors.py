"""Exception types raised across the package."""


class PlateauError(Exception):
    """Base class for all package errors."""


class TopologyError(PlateauError):
    """A region surface is not closed or not consistently oriented."""


class MeshError(PlateauError):
    """Invalid mesh data (bad indices, labels, degenerate triangles)."""


class NumericalError(PlateauError):
    """A geometric quantity became too large or ill-defined to trust."""


class NotAJunctionVertex(PlateauError):
    pass


class DegenerateEdge(PlateauError):
    pass


class NoJunction(PlateauError):
    pass


class SingularConstraint(PlateauError):
    """The volume-constraint Gram matrix is numerically singular."""


class BlowupDetected(PlateauError):
    """A flow step moved some vertex farther than the shortest edge."""

    def __init__(self, message, step=None, max_disp=None):
        super().__init__(message)
        self.step = step
        self.max_disp = max_disp


class NotConverged(PlateauError):
    pass


class GenerationError(PlateauError):
    pass


class SheetNotFound(PlateauError):
    pass


class FormatError(PlateauError):
    """Malformed MMM text."""
