"""Hand-checkable one-dimensional test problems.

Toy-A: two parabolas ``V_delta(theta) = (theta - c_delta)**2`` with
``c_0 = -0.5`` and ``c_1 = +0.5`` on ``Theta = [-1, 1]``, both feasible
everywhere. Toy-B adds parameter cuts: ``delta = 0`` only for
``theta <= 0.25`` and ``delta = 1`` only for ``theta >= -0.25``.
"""

from __future__ import annotations

import numpy as np

from ..geometry import PolytopeV
from ..problem import CommutationSpace, ProblemTemplate, ProgramBuilder

CENTERS = (-0.5, 0.5)


def parabola_program(center: float, offset: float = 0.0, upper=None, lower=None, bound=None):
    """min t  s.t.  t >= (theta - center)**2, plus optional cuts on theta."""
    b = ProgramBuilder(n=1, p=1)
    b.cost([1.0], [0.0], offset)
    b.soc([([-1.0], [0.0], 1.0),
           ([0.0], [-2.0], -2.0 * center),
           ([-1.0], [0.0], -1.0)])
    rows = []
    if upper is not None:
        rows.append(([0.0], [1.0], upper))
    if lower is not None:
        rows.append(([0.0], [-1.0], -lower))
    if bound is not None:
        rows.append(([0.0], [1.0], bound))
        rows.append(([0.0], [-1.0], bound))
    if rows:
        b.nonneg(*rows)
    return b.build()


def toy_a(offset: float = 0.0, domain=(-1.0, 1.0)) -> ProblemTemplate:
    def inst(delta):
        return parabola_program(CENTERS[delta[0]], offset)

    return ProblemTemplate(p=1, n=1, commutations=CommutationSpace(1, ((0,), (1,))),
                           instantiator=inst,
                           parameter_domain=PolytopeV(np.array([[domain[0]], [domain[1]]])),
                           label="toy_a" if offset == 0.0 else f"toy_a{offset:+g}")


def toy_b(upper0: float = 0.25, lower1: float = -0.25, bound: float | None = None,
          domain=(-1.0, 1.0), label: str = "toy_b") -> ProblemTemplate:
    """Toy-A with ``theta <= upper0`` for delta=0 and ``theta >= lower1`` for delta=1.

    ``bound`` additionally restricts both commutations to ``|theta| <= bound``.
    """
    def inst(delta):
        if delta[0] == 0:
            return parabola_program(CENTERS[0], upper=upper0, bound=bound)
        return parabola_program(CENTERS[1], lower=lower1, bound=bound)

    return ProblemTemplate(p=1, n=1, commutations=CommutationSpace(1, ((0,), (1,))),
                           instantiator=inst,
                           parameter_domain=PolytopeV(np.array([[domain[0]], [domain[1]]])),
                           label=label)


def toy_b_enlarged() -> ProblemTemplate:
    """Toy-B on [-2, 2] while the problem is only feasible on [-1.25, 1.25]."""
    return toy_b(bound=1.25, domain=(-2.0, 2.0), label="toy_b_enlarged")


def toy_zero_overlap() -> ProblemTemplate:
    """Feasible everywhere but with zero cost overlap around theta = -0.1.

    delta=0 is only feasible for theta <= -0.1, where delta=1 costs at least
    0.2 more; to the right only delta=1 is feasible. For eps_a < 0.2 no single
    commutation is eps-suboptimal on any neighbourhood of -0.1.
    """
    return toy_b(upper0=-0.1, lower1=-0.3, label="toy_zero_overlap")


def toy_constant(values=(1.0, 2.0), domain=(-1.0, 1.0)) -> ProblemTemplate:
    """Parameter-independent costs V_delta = values[delta]."""
    def inst(delta):
        b = ProgramBuilder(n=1, p=1)
        b.cost([0.0], [0.0], values[delta[0]])
        b.nonneg(([-1.0], [0.0], 0.0))
        b.nonneg(([1.0], [0.0], 1.0))
        return b.build()

    return ProblemTemplate(p=1, n=1, commutations=CommutationSpace(1, ((0,), (1,))),
                           instantiator=inst,
                           parameter_domain=PolytopeV(np.array([[domain[0]], [domain[1]]])),
                           label="toy_constant")


def toy_a_value(theta) -> float:
    """Closed-form optimal cost of Toy-A."""
    return min((theta + 0.5) ** 2, (theta - 0.5) ** 2)


def toy_a_delta_value(delta, theta) -> float:
    return (theta - CENTERS[delta[0]]) ** 2
