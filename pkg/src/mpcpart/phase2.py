"""Refinement of the feasible map into an epsilon-suboptimal map.

Every open cell ``(R, delta)`` is tested with tractable upper bounds on the
absolute and relative suboptimality of ``delta`` over ``R``. Cells that pass
are closed. Otherwise a better commutation is searched for; the cell is then
either relabelled (when ``V_delta`` varies little over ``R``) or bisected.

In explicit mode the bounds also compare ``delta`` against itself, so that
interpolating the vertex solutions is itself epsilon-suboptimal, and closed
leaves keep those vertex solutions.

All bilevel subproblems are solved by enumerating commutations, one conic
program per commutation, with the parameter written in barycentric form
``theta = V a, sum(a) = 1, a >= 0``.
"""

from __future__ import annotations

import enum
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .conic import Status
from .errors import DegenerateChild, NonConvergence, VertexInfeasible
from .geometry import Simplex, barycentric, diameter, split_longest_edge
from .phase1 import feasible_everywhere, vertex_result
from .problem import (ProblemTemplate, SolveCounter, ToleranceConfig, as_delta, first_best,
                      instantiate, solve_slice)
from .tree import ClosedExplicit, ClosedSubopt, PartitionTree, ProgressLog

log = logging.getLogger(__name__)


class Mode(str, enum.Enum):
    SEMI_EXPLICIT = "semi"
    EXPLICIT = "explicit"


@dataclass(frozen=True)
class RefineConfig:
    mode: Mode = Mode.SEMI_EXPLICIT
    tolerances: ToleranceConfig = ToleranceConfig(eps_a=1e-2)
    parallel_workers: int = 1
    # which commutation the variability test looks at: the cell's current
    # one ("current") or the improved candidate ("candidate")
    variability_of: str = "current"

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        if self.parallel_workers < 1:
            raise ValueError("parallel_workers must be >= 1")
        if self.variability_of not in ("current", "candidate"):
            raise ValueError("variability_of must be 'current' or 'candidate'")


@dataclass(frozen=True, eq=False)
class OverApprox:
    """Affine interpolation of vertex optimal costs over a cell."""

    cell: Simplex
    delta: tuple
    vertex_values: np.ndarray

    def __call__(self, theta) -> float:
        return float(barycentric(self.cell, theta) @ self.vertex_values)


@dataclass(frozen=True)
class ErrorBound:
    value: float
    witness_theta: np.ndarray
    witness_delta: tuple


@dataclass(frozen=True)
class CellVerdict:
    close: bool
    e_bar_a: float | None = None
    d_min: float | None = None
    reason: str = ""


def build_over_approx(template: ProblemTemplate, R: Simplex, delta, cfg: ToleranceConfig,
                      cache=None, counter=None) -> OverApprox:
    delta = as_delta(delta)
    vals = []
    for vid, v in zip(R.vertex_ids, R.vertices):
        res = vertex_result(template, delta, vid, v, cfg, cache, counter)
        if not res.optimal:
            raise VertexInfeasible(f"commutation {delta} infeasible at vertex {v.tolist()}")
        vals.append(res.value)
    return OverApprox(R, delta, np.array(vals))


def _cell_program(template, R: Simplex, delta_prime, weights, cfg, counter, kind):
    """min over theta in R of V_{delta'}(theta) - weights @ a(theta)."""
    prog = instantiate(template, delta_prime)
    k = R.p + 1
    z_cost = None if weights is None else -np.asarray(weights, dtype=float)
    return solve_slice(prog, np.zeros(R.p), R.vertices.T, cfg, z_cost=z_cost,
                       z_eq=(np.ones((1, k)), [1.0]), z_nonneg=(-np.eye(k), np.zeros(k)),
                       counter=counter, kind=kind)


def max_gap(template, R: Simplex, over: OverApprox, delta_prime, cfg, counter=None):
    """max over theta in R of V_bar(theta) - V_{delta'}(theta), with its witness.

    Returns None when ``delta'`` is infeasible on all of R. The objective is
    concave in (theta, x), so this is a single conic program.
    """
    res = _cell_program(template, R, delta_prime, over.vertex_values, cfg, counter, "gap")
    if res.status is Status.INFEASIBLE:
        return None
    if not res.optimal:
        raise AssertionError(f"unexpected status {res.status}")
    return -res.value, R.vertices.T @ res.aux


def min_cost_over_cell(template, R: Simplex, delta_prime, cfg, counter=None):
    """min over theta in R of V_{delta'}(theta), or None if infeasible on R."""
    res = _cell_program(template, R, delta_prime, None, cfg, counter, "cellmin")
    if res.status is Status.INFEASIBLE:
        return None
    if not res.optimal:
        raise AssertionError(f"unexpected status {res.status}")
    return res.value


class CellEvaluator:
    """Per-cell memo of the conic subproblems shared by the tests below."""

    def __init__(self, template: ProblemTemplate, R: Simplex, delta, mode: Mode,
                 cfg: ToleranceConfig, cache=None, counter=None):
        self.template = template
        self.R = R
        self.delta = as_delta(delta)
        self.mode = Mode(mode)
        self.cfg = cfg
        self.cache = cache
        self.counter = counter
        self._over = None
        self._gap: dict = {}
        self._min: dict = {}

    @property
    def over(self) -> OverApprox:
        if self._over is None:
            self._over = build_over_approx(self.template, self.R, self.delta, self.cfg,
                                           self.cache, self.counter)
        return self._over

    def gap(self, d):
        if d not in self._gap:
            self._gap[d] = max_gap(self.template, self.R, self.over, d, self.cfg, self.counter)
        return self._gap[d]

    def cell_min(self, d):
        if d not in self._min:
            self._min[d] = min_cost_over_cell(self.template, self.R, d, self.cfg, self.counter)
        return self._min[d]

    def comparison_set(self):
        adm = self.template.commutations.admissible
        if self.mode is Mode.EXPLICIT:
            return list(adm)
        return [d for d in adm if d != self.delta]

    def abs_error_bound(self) -> ErrorBound | None:
        best = None
        for d in self.comparison_set():
            g = self.gap(d)
            if g is None:
                continue
            if best is None or g[0] > best.value:
                best = ErrorBound(g[0], g[1], d)
        return best

    def _denominator(self, candidates) -> float | None:
        vals = [self.cell_min(d) for d in candidates]
        vals = [v for v in vals if v is not None]
        if not vals:
            return None
        d_min = min(vals)
        if d_min <= self.cfg.rel_denominator_floor:
            return None
        return d_min

    def rel_error_denominator(self) -> float | None:
        return self._denominator(self.comparison_set())

    def others_denominator(self) -> float | None:
        """min over R and delta'' != delta of V_{delta''} (used by the selection step)."""
        return self._denominator([d for d in self.template.commutations.admissible
                                  if d != self.delta])

    def check(self) -> CellVerdict:
        bound = self.abs_error_bound()
        if bound is None:
            return CellVerdict(True, reason="only feasible commutation")
        e_bar = bound.value
        if e_bar <= self.cfg.eps_a:
            return CellVerdict(True, e_bar, None, "absolute")
        d_min = self.rel_error_denominator()
        if d_min is not None and e_bar / d_min <= self.cfg.eps_r:
            return CellVerdict(True, e_bar, d_min, "relative")
        return CellVerdict(False, e_bar, d_min, "")

    def selection_threshold(self) -> float:
        d = self.others_denominator()
        return max(self.cfg.eps_a, self.cfg.eps_r * (0.0 if d is None else d))

    def better_delta(self):
        cands = [d for d in self.template.commutations.admissible
                 if d != self.delta and feasible_everywhere(self.template, d, self.R, self.cfg,
                                                            self.cache, self.counter)]
        if not cands:
            return None
        margins = []
        for d in cands:
            g = self.gap(d)
            margins.append(None if g is None else g[0])
        k = first_best(margins, self.cfg.tie_tol, maximize=True)
        if k is None:
            return None
        t = self.selection_threshold()
        best = max(m for m in margins if m is not None)
        if best < t:
            return None
        return cands[k]

    def variability_holds(self, delta=None) -> bool:
        delta = self.delta if delta is None else as_delta(delta)
        top = max(vertex_result(self.template, delta, vid, v, self.cfg, self.cache,
                                self.counter).value
                  for vid, v in zip(self.R.vertex_ids, self.R.vertices))
        low = self.cell_min(delta)
        mins = [self.cell_min(d) for d in self.template.commutations.admissible]
        v_star_min = min(v for v in mins if v is not None)
        return top - low < self.cfg.threshold(v_star_min)


def abs_error_bound(template, R, delta, mode, cfg, cache=None, counter=None):
    """Tractable upper bound on the absolute suboptimality of ``delta`` on ``R``.

    Returns an :class:`ErrorBound` or None when every compared commutation is
    infeasible on R (``delta`` is then the only feasible choice).
    """
    return CellEvaluator(template, R, delta, mode, cfg, cache, counter).abs_error_bound()


def rel_error_denominator(template, R, delta, mode, cfg, cache=None, counter=None):
    """Smallest compared optimal cost over R; None when undefined or below the floor."""
    return CellEvaluator(template, R, delta, mode, cfg, cache, counter).rel_error_denominator()


def check_cell(template, R, delta, mode, cfg, cache=None, counter=None) -> CellVerdict:
    return CellEvaluator(template, R, delta, mode, cfg, cache, counter).check()


def better_delta(template, R, delta, cfg, cache=None, counter=None):
    return CellEvaluator(template, R, delta, Mode.SEMI_EXPLICIT, cfg, cache, counter).better_delta()


def variability_holds(template, R, delta, cfg, cache=None, counter=None) -> bool:
    return CellEvaluator(template, R, delta, Mode.SEMI_EXPLICIT, cfg, cache,
                         counter).variability_holds()


def depth_prediction(l0: float, psi: float, p: int) -> int:
    """Approximate number of bisections to shrink an edge of length l0 below psi."""
    if l0 <= 0 or psi <= 0:
        raise ValueError("l0 and psi must be positive")
    return max(0, math.ceil(p * (p + 1) * math.log2(l0 / psi) / 2 - 1e-12))


def psi_proxy(eps_a, eps_r, eps_a_max, eps_r_max) -> float:
    return eps_a / eps_a_max + eps_r / eps_r_max


# -- main loop ---------------------------------------------------------------

@dataclass(frozen=True)
class Action:
    kind: str  # "close" | "reassign" | "split"
    delta: tuple
    payload: object = None
    verdict: CellVerdict | None = None


def evaluate_cell(template, R: Simplex, delta, rcfg: RefineConfig, cache, counter) -> Action:
    """Decide what happens to the open cell (R, delta). Does not touch the tree."""
    cfg = rcfg.tolerances
    ev = CellEvaluator(template, R, delta, rcfg.mode, cfg, cache, counter)
    verdict = ev.check()
    if verdict.close:
        if rcfg.mode is Mode.EXPLICIT:
            sols = np.array([vertex_result(template, ev.delta, vid, v, cfg, cache, counter).x
                             for vid, v in zip(R.vertex_ids, R.vertices)])
            sols.setflags(write=False)
            return Action("close", ev.delta, ClosedExplicit(ev.delta, sols), verdict)
        return Action("close", ev.delta, ClosedSubopt(ev.delta), verdict)
    star = ev.better_delta()
    if star is None:
        return Action("split", ev.delta, verdict=verdict)
    which = ev.delta if rcfg.variability_of == "current" else star
    if ev.variability_holds(which):
        return Action("reassign", star, verdict=verdict)
    return Action("split", star, verdict=verdict)


def run_phase2(tree: PartitionTree, template: ProblemTemplate, rcfg: RefineConfig) -> PartitionTree:
    """Refine a feasible-map tree in place and return it.

    With ``parallel_workers > 1`` the top of the open stack is evaluated
    speculatively by a thread pool; actions are still committed one at a time
    in the serial (LIFO) order, so the resulting tree is identical.
    """
    cfg = rcfg.tolerances
    t0 = time.perf_counter()
    tree.reopen_all()
    tree.progress = ProgressLog()
    tree.mode = rcfg.mode.value
    counter = SolveCounter()
    rejected: dict[int, set] = {}
    memo: dict = {}
    executor = ThreadPoolExecutor(rcfg.parallel_workers) if rcfg.parallel_workers > 1 else None

    def evaluate(leaf, delta):
        return evaluate_cell(template, tree[leaf].simplex, delta, rcfg, tree.cache, counter)

    def guarded(leaf, delta):
        try:
            return evaluate(leaf, delta), None
        except Exception as exc:  # re-raised when the serial order reaches this leaf
            return None, exc

    try:
        while tree.open_stack:
            if executor is not None:
                top = [(leaf, tree[leaf].payload.delta)
                       for leaf in tree.open_stack[-rcfg.parallel_workers:]]
                todo = [k for k in top if k not in memo]
                if todo:
                    for key, out in zip(todo, executor.map(lambda k: guarded(*k), todo)):
                        memo[key] = out
            leaf = tree.pop_open()
            node = tree[leaf]
            delta = node.payload.delta
            key = (leaf, delta)
            if key in memo:
                action, exc = memo.pop(key)
                if exc is not None:
                    raise exc
            else:
                action = evaluate(leaf, delta)
            _commit(tree, leaf, node, delta, action, cfg, rejected, template)
    finally:
        if executor is not None:
            executor.shutdown(wait=True)
    tree.wall_time = time.perf_counter() - t0
    tree.solve_counts = dict(counter.counts)
    tree.meta["phase2_time"] = tree.wall_time
    tree.meta["mode"] = rcfg.mode.value
    tree.meta["eps_a"] = cfg.eps_a
    tree.meta["eps_r"] = cfg.eps_r
    log.info("phase II (%s): %d leaves, depth %d, %.2fs", rcfg.mode.value,
             tree.stats().lam, tree.stats().tau, tree.wall_time)
    return tree


def _commit(tree, leaf, node, delta, action, cfg, rejected, template):
    if action.kind == "close":
        tree.close(leaf, action.payload)
        return
    if action.kind == "reassign":
        seen = rejected.setdefault(leaf, set())
        seen.add(delta)
        if action.delta in seen or len(seen) > len(template.commutations):
            raise NonConvergence(node.simplex.vertices, node.depth, diameter(node.simplex),
                                 f"commutation {action.delta} re-proposed for the same cell")
        tree.reassign(leaf, action.delta)
        return
    R = node.simplex
    if node.depth + 1 > cfg.max_depth:
        raise NonConvergence(R.vertices, node.depth, diameter(R), "max_depth reached")
    try:
        S1, S2, _ = split_longest_edge(R, tree.pool, cfg.min_cell_volume)
    except DegenerateChild:
        raise NonConvergence(R.vertices, node.depth, diameter(R),
                             "min_cell_volume reached") from None
    tree.push_children(leaf, [S1, S2], action.delta)


def partition(template: ProblemTemplate, rcfg: RefineConfig) -> PartitionTree:
    """Feasible map followed by refinement."""
    from .phase1 import run_phase1

    tree = run_phase1(template, rcfg.tolerances)
    return run_phase2(tree, template, rcfg)
