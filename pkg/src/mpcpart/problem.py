"""Problem class: multiparametric mixed-integer conic programs.

A :class:`ProblemTemplate` couples a finite set of admissible binary
commutations with an instantiator that returns, for each commutation, a
:class:`FixedCommutationProgram` -- a linear-objective conic program whose
data is affine in the parameter ``theta``::

    V_delta(theta) = min_x  c_x @ x + c_theta @ theta + c_0
                     s.t.   A_x @ x + A_theta @ theta == b
                            h - H_x @ x - H_theta @ theta  in  K

Convex costs are written in epigraph form by the template author. The full
mixed-integer problem is solved by enumerating the admissible commutations.
"""

from __future__ import annotations

import threading
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .conic import Cone, Status, solve_standard
from .errors import InfeasibleError, NumericalError, UnboundedProgram, UnknownCommutation
from .geometry import PolytopeV

Delta = tuple  # tuple of 0/1 ints


def as_delta(bits: Iterable[int]) -> Delta:
    return tuple(int(b) for b in bits)


@dataclass(frozen=True)
class CommutationSpace:
    m: int
    admissible: tuple

    def __post_init__(self):
        adm = tuple(as_delta(d) for d in self.admissible)
        object.__setattr__(self, "admissible", adm)
        if not adm:
            raise ValueError("admissible commutation set is empty")
        if len(set(adm)) != len(adm):
            raise ValueError("admissible commutations contain duplicates")
        for d in adm:
            if len(d) != self.m or any(b not in (0, 1) for b in d):
                raise ValueError(f"commutation {d} is not a binary vector of length {self.m}")
        object.__setattr__(self, "_index", {d: i for i, d in enumerate(adm)})

    @classmethod
    def hypercube(cls, m: int) -> "CommutationSpace":
        import itertools

        return cls(m, tuple(itertools.product((0, 1), repeat=m)))

    def index(self, delta) -> int:
        try:
            return self._index[as_delta(delta)]
        except KeyError:
            raise UnknownCommutation(f"commutation {tuple(delta)} is not admissible") from None

    def __contains__(self, delta) -> bool:
        return as_delta(delta) in self._index

    def __len__(self) -> int:
        return len(self.admissible)

    def __iter__(self):
        return iter(self.admissible)


@dataclass(frozen=True, eq=False)
class FixedCommutationProgram:
    c_x: np.ndarray
    c_theta: np.ndarray
    c_0: float
    A_x: np.ndarray
    A_theta: np.ndarray
    b: np.ndarray
    H_x: np.ndarray
    H_theta: np.ndarray
    h: np.ndarray
    cone: tuple

    def __post_init__(self):
        n, p = self.n, self.p
        l = self.b.shape[0]
        d = self.h.shape[0]
        if self.c_theta.shape != (p,):
            raise ValueError("c_theta has the wrong length")
        if self.A_x.shape != (l, n) or self.A_theta.shape != (l, p):
            raise ValueError("equality data dimensions are inconsistent")
        if self.H_x.shape != (d, n) or self.H_theta.shape != (d, p):
            raise ValueError("conic data dimensions are inconsistent")
        if sum(c.dim for c in self.cone) != d:
            raise ValueError("cone dimensions do not add up to the number of conic rows")
        for arr in (self.c_x, self.c_theta, self.A_x, self.A_theta, self.b,
                    self.H_x, self.H_theta, self.h):
            arr.setflags(write=False)

    @property
    def n(self) -> int:
        return self.c_x.shape[0]

    @property
    def p(self) -> int:
        return self.c_theta.shape[0]

    def cost(self, theta, x) -> float:
        return float(self.c_x @ x + self.c_theta @ theta + self.c_0)

    def residuals(self, theta, x) -> tuple[float, float]:
        """(max equality violation, max cone distance) of ``x`` at ``theta``."""
        from .conic import cone_distance

        theta = np.asarray(theta, dtype=float)
        eq = self.b - self.A_x @ x - self.A_theta @ theta
        s = self.h - self.H_x @ x - self.H_theta @ theta
        eq_res = float(np.max(np.abs(eq), initial=0.0))
        z, dist = cone_distance(s, self.cone)
        return max(eq_res, z), dist

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "cost": {"c_x": self.c_x.tolist(), "c_theta": self.c_theta.tolist(), "c_0": self.c_0},
            "equality": {"A_x": self.A_x.tolist(), "A_theta": self.A_theta.tolist(),
                         "b": self.b.tolist()},
            "conic": {"H_x": self.H_x.tolist(), "H_theta": self.H_theta.tolist(),
                      "h": self.h.tolist(),
                      "cones": [{"type": c.kind, "dim": c.dim} for c in self.cone]},
        }


class ProgramBuilder:
    """Row-by-row assembly of a :class:`FixedCommutationProgram`.

    Each constraint row is given as ``(coef_x, coef_theta, rhs)``; for conic
    rows the meaning is ``rhs - coef_x @ x - coef_theta @ theta`` in the cone.
    Example -- the epigraph ``t >= (theta - c)**2`` with ``x = (t,)``::

        b = ProgramBuilder(n=1, p=1)
        b.cost([1.0])
        b.soc([([-1.0], [0.0], 1.0),     # t + 1
               ([0.0], [-2.0], -2 * c),  # 2 (theta - c)
               ([-1.0], [0.0], -1.0)])   # t - 1
    """

    def __init__(self, n: int, p: int):
        self.n, self.p = n, p
        self._c_x = np.zeros(n)
        self._c_theta = np.zeros(p)
        self._c_0 = 0.0
        self._eq: list = []
        self._rows: list = []
        self._cones: list[Cone] = []

    def cost(self, c_x, c_theta=None, c_0: float = 0.0) -> "ProgramBuilder":
        self._c_x = np.asarray(c_x, dtype=float).reshape(self.n)
        if c_theta is not None:
            self._c_theta = np.asarray(c_theta, dtype=float).reshape(self.p)
        self._c_0 = float(c_0)
        return self

    def _row(self, cx, ct, rhs):
        cx = np.zeros(self.n) if cx is None else np.asarray(cx, dtype=float).reshape(self.n)
        ct = np.zeros(self.p) if ct is None else np.asarray(ct, dtype=float).reshape(self.p)
        return cx, ct, float(rhs)

    def equality(self, cx, ct, rhs) -> "ProgramBuilder":
        self._eq.append(self._row(cx, ct, rhs))
        return self

    def _block(self, kind, rows):
        rows = [self._row(*r) for r in rows]
        if not rows:
            return self
        if kind != "soc" and self._cones and self._cones[-1].kind == kind:
            last = self._cones.pop()
            self._cones.append(Cone(kind, last.dim + len(rows)))
        else:
            self._cones.append(Cone(kind, len(rows)))
        self._rows.extend(rows)
        return self

    def zero(self, *rows) -> "ProgramBuilder":
        return self._block("zero", rows)

    def nonneg(self, *rows) -> "ProgramBuilder":
        return self._block("nonneg", rows)

    def soc(self, rows: Sequence) -> "ProgramBuilder":
        return self._block("soc", rows)

    def build(self) -> FixedCommutationProgram:
        def stack(rows, width_x, width_t):
            if not rows:
                return np.zeros((0, width_x)), np.zeros((0, width_t)), np.zeros(0)
            return (np.array([r[0] for r in rows]), np.array([r[1] for r in rows]),
                    np.array([r[2] for r in rows]))

        A_x, A_t, b = stack(self._eq, self.n, self.p)
        H_x, H_t, h = stack(self._rows, self.n, self.p)
        return FixedCommutationProgram(self._c_x.copy(), self._c_theta.copy(), self._c_0,
                                       A_x, A_t, b, H_x, H_t, h, tuple(self._cones))


@dataclass(frozen=True)
class ToleranceConfig:
    eps_a: float = 0.0
    eps_r: float = 0.0
    solver_tol: float = 1e-8
    geom_tol: float = 1e-9
    min_cell_volume: float = 0.0
    max_depth: int = 40
    rel_denominator_floor: float = 1e-9
    # relative slack within which two scores count as tied
    tie_tol: float = 1e-7

    def __post_init__(self):
        if self.eps_a < 0 or self.eps_r < 0:
            raise ValueError("tolerances must be nonnegative")
        if not (self.eps_a > 0 or self.eps_r > 0):
            raise ValueError("at least one of eps_a, eps_r must be positive")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")

    def threshold(self, v_star: float) -> float:
        """The suboptimality allowance max{eps_a, eps_r * V*}."""
        return max(self.eps_a, self.eps_r * v_star)


@dataclass
class SolveResult:
    status: Status
    value: float | None = None
    x: np.ndarray | None = None
    residuals: tuple = (0.0, 0.0, 0.0)
    aux: np.ndarray | None = None

    @property
    def optimal(self) -> bool:
        return self.status is Status.OPTIMAL


class SolveCounter:
    """Thread-safe tally of solver calls per subproblem kind."""

    def __init__(self):
        self._lock = threading.Lock()
        self.counts: Counter = Counter()

    def add(self, kind: str, k: int = 1):
        with self._lock:
            self.counts[kind] += k


@dataclass(frozen=True, eq=False)
class ProblemTemplate:
    p: int
    n: int
    commutations: CommutationSpace
    instantiator: Callable
    parameter_domain: PolytopeV
    label: str = ""
    # indices of x needed online (e.g. the first control move); None = all of x
    output_index: tuple | None = None
    _programs: dict = field(default_factory=dict, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    @property
    def m(self) -> int:
        return self.commutations.m

    @property
    def n_hat(self) -> int:
        return self.n if self.output_index is None else len(self.output_index)

    def program(self, delta) -> FixedCommutationProgram:
        return instantiate(self, delta)


def instantiate(template: ProblemTemplate, delta) -> FixedCommutationProgram:
    delta = as_delta(delta)
    if delta not in template.commutations:
        raise UnknownCommutation(f"commutation {delta} is not admissible for {template.label!r}")
    prog = template._programs.get(delta)
    if prog is None:
        prog = template.instantiator(delta)
        if prog.p != template.p:
            raise ValueError(f"instantiated program has p={prog.p}, template says {template.p}")
        with template._lock:
            prog = template._programs.setdefault(delta, prog)
    return prog


def solve_slice(prog: FixedCommutationProgram, theta0, T, cfg: ToleranceConfig, *,
                z_cost=None, z_eq=None, z_nonneg=None, with_cost: bool = True,
                counter: SolveCounter | None = None, kind: str = "slice") -> SolveResult:
    """Solve the program over an affine slice of parameter space.

    The parameter is ``theta = theta0 + T @ z`` with auxiliary variables
    ``z`` constrained by ``E z = e`` (``z_eq``) and ``G z <= g``
    (``z_nonneg``). The objective is the program cost (omitted when
    ``with_cost`` is False) plus ``z_cost @ z``. ``value`` is that objective;
    ``x`` and ``aux`` (= z) hold the primal point.
    """
    theta0 = np.asarray(theta0, dtype=float)
    T = np.zeros((prog.p, 0)) if T is None else np.asarray(T, dtype=float)
    n, k = prog.n, T.shape[1]
    c = np.zeros(n + k)
    const = 0.0
    if with_cost:
        c[:n] = prog.c_x
        c[n:] = prog.c_theta @ T
        const = float(prog.c_theta @ theta0 + prog.c_0)
    if z_cost is not None:
        c[n:] += np.asarray(z_cost, dtype=float)

    blocks_A, blocks_b, cones = [], [], []
    l = prog.b.shape[0]
    zero_rows = []
    if l:
        zero_rows.append((np.hstack([prog.A_x, prog.A_theta @ T]), prog.b - prog.A_theta @ theta0))
    if z_eq is not None:
        E, e = np.atleast_2d(np.asarray(z_eq[0], dtype=float)), np.atleast_1d(np.asarray(z_eq[1], dtype=float))
        zero_rows.append((np.hstack([np.zeros((E.shape[0], n)), E]), e))
    if zero_rows:
        blocks_A.extend(r[0] for r in zero_rows)
        blocks_b.extend(r[1] for r in zero_rows)
        cones.append(Cone("zero", sum(r[1].shape[0] for r in zero_rows)))
    if z_nonneg is not None:
        G, g = np.atleast_2d(np.asarray(z_nonneg[0], dtype=float)), np.atleast_1d(np.asarray(z_nonneg[1], dtype=float))
        blocks_A.append(np.hstack([np.zeros((G.shape[0], n)), G]))
        blocks_b.append(g)
        cones.append(Cone("nonneg", G.shape[0]))
    if prog.h.shape[0]:
        blocks_A.append(np.hstack([prog.H_x, prog.H_theta @ T]))
        blocks_b.append(prog.h - prog.H_theta @ theta0)
        cones.extend(prog.cone)
    A = np.vstack(blocks_A) if blocks_A else np.zeros((0, n + k))
    b = np.concatenate(blocks_b) if blocks_b else np.zeros(0)

    if counter is not None:
        counter.add(kind)
    sol = solve_standard(c, A, b, cones, tol=cfg.solver_tol)
    if sol.status is Status.NUMERICAL:
        raise NumericalError(
            f"conic solver failed ({sol.raw_status}) on a {kind} subproblem",
            problem={"kind": kind, "c": c.tolist(), "A": A.tolist(), "b": b.tolist(),
                     "cones": [{"type": cn.kind, "dim": cn.dim} for cn in cones]},
        )
    if sol.status is not Status.OPTIMAL:
        return SolveResult(sol.status)
    x = sol.x[:n]
    z = sol.x[n:]
    return SolveResult(Status.OPTIMAL, sol.objective + const, x,
                       (sol.primal_eq, sol.cone_dist, sol.duality_gap), z)


def solve_conic(prog: FixedCommutationProgram, theta, cfg: ToleranceConfig,
                counter: SolveCounter | None = None) -> SolveResult:
    theta = np.asarray(theta, dtype=float).reshape(-1)
    if theta.shape[0] != prog.p:
        raise ValueError(f"theta has dimension {theta.shape[0]}, expected {prog.p}")
    res = solve_slice(prog, theta, None, cfg, counter=counter, kind="point")
    if res.status is Status.UNBOUNDED:
        raise UnboundedProgram("fixed-commutation program is unbounded below")
    return res


def feasible_at(template: ProblemTemplate, delta, theta, cfg: ToleranceConfig,
                counter: SolveCounter | None = None) -> bool:
    prog = instantiate(template, delta)
    theta = np.asarray(theta, dtype=float).reshape(-1)
    res = solve_slice(prog, theta, None, cfg, with_cost=False, counter=counter, kind="feasibility")
    return res.status is Status.OPTIMAL


def first_best(scores, tie_tol: float, maximize: bool = True):
    """Index of the first score within ``tie_tol`` (relative) of the best one.

    ``scores`` is a sequence of floats or None (None entries are ignored).
    Returns None when every entry is None.
    """
    vals = [s for s in scores if s is not None]
    if not vals:
        return None
    best = max(vals) if maximize else min(vals)
    slack = tie_tol * (1.0 + abs(best))
    for i, s in enumerate(scores):
        if s is None:
            continue
        if (maximize and s >= best - slack) or (not maximize and s <= best + slack):
            return i
    raise AssertionError("unreachable")


@dataclass
class MinlpSolution:
    value: float
    delta: Delta
    x: np.ndarray


def solve_minlp(template: ProblemTemplate, theta, cfg: ToleranceConfig,
                counter: SolveCounter | None = None) -> MinlpSolution:
    """Enumerate the admissible commutations; ties go to the earliest one."""
    results = [solve_conic(instantiate(template, d), theta, cfg, counter)
               for d in template.commutations]
    values = [r.value if r.optimal else None for r in results]
    i = first_best(values, cfg.tie_tol, maximize=False)
    if i is None:
        raise InfeasibleError(f"no admissible commutation is feasible at theta={list(np.ravel(theta))}")
    best = min(v for v in values if v is not None)
    return MinlpSolution(best, template.commutations.admissible[i], results[i].x)
