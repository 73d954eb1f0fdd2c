"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class PartitionError(Exception):
    """Base class for every error raised by mpcpart."""


class UnknownCommutation(PartitionError):
    pass


class NumericalError(PartitionError):
    """The conic solver stalled. Never to be read as infeasibility.

    ``problem`` holds the offending subproblem data (a JSON-friendly dict)
    so that a failed partitioning run can dump it for inspection.
    """

    def __init__(self, message: str, problem: dict | None = None):
        super().__init__(message)
        self.problem = problem


class UnboundedProgram(PartitionError):
    pass


class InfeasibleError(PartitionError):
    """No admissible commutation is feasible at the queried parameter."""


class DegenerateDomain(PartitionError):
    pass


class DegenerateChild(PartitionError):
    pass


class SingularSimplex(PartitionError):
    pass


class OutOfDomain(PartitionError):
    def __init__(self, theta, message: str = "parameter lies outside the partitioned domain"):
        super().__init__(f"{message}: theta={list(map(float, theta))}")
        self.theta = theta


class DomainNotCovered(PartitionError):
    """Some part of the domain admits no feasible commutation."""

    def __init__(self, witness):
        super().__init__(
            "no admissible commutation is feasible at cell centroid "
            f"{list(map(float, witness))}; the domain is not contained in the feasible parameter set"
        )
        self.witness = witness


class DepthExceeded(PartitionError):
    def __init__(self, vertices, depth: int, reason: str):
        super().__init__(f"feasible-map refinement stuck at depth {depth} ({reason})")
        self.vertices = vertices
        self.depth = depth
        self.reason = reason


class NonConvergence(PartitionError):
    """Refinement hit the depth or volume safeguard.

    Usually the cost overlap is zero near ``vertices`` or the tolerances are
    too tight. ``diameter`` is the stuck cell's longest edge, an empirical
    upper bound on the overlap.
    """

    def __init__(self, vertices, depth: int, diameter: float, reason: str):
        super().__init__(
            f"suboptimal-map refinement did not converge: depth {depth}, "
            f"cell diameter {diameter:.3e} ({reason})"
        )
        self.vertices = vertices
        self.depth = depth
        self.diameter = diameter
        self.reason = reason


class VertexInfeasible(PartitionError):
    pass


class ModeMismatch(PartitionError):
    pass


class CorruptFile(PartitionError):
    pass


class VersionMismatch(PartitionError):
    pass
