"""Feasible-map computation: a coarse simplicial partition with one feasible
commutation per cell.

Each open cell gets the commutation that travels furthest, summed over the
centroid-to-vertex rays; the cell is closed if that commutation is feasible
at every vertex (convexity of the feasible parameter set then covers the
whole simplex), otherwise it is bisected along its longest edge.
"""

from __future__ import annotations

import logging
import time

import numpy as np

from .conic import Status
from .errors import DegenerateChild, DepthExceeded, DomainNotCovered
from .geometry import Simplex, centroid, split_longest_edge
from .problem import (ProblemTemplate, SolveCounter, SolveResult, ToleranceConfig, as_delta,
                      first_best, instantiate, solve_conic, solve_slice)
from .tree import ClosedFeasible, PartitionTree, VertexSolutionCache

log = logging.getLogger(__name__)


def shoot(template: ProblemTemplate, delta, D: Simplex, i: int, cfg: ToleranceConfig,
          counter: SolveCounter | None = None) -> float | None:
    """Largest alpha in [0, 1] with theta = c + alpha (v_i - c) feasible for ``delta``.

    Returns None when the centroid itself is infeasible.
    """
    prog = instantiate(template, delta)
    c = centroid(D)
    d = (D.vertices[i] - c).reshape(-1, 1)
    res = solve_slice(prog, c, d, cfg, z_cost=[-1.0], z_nonneg=([[-1.0], [1.0]], [0.0, 1.0]),
                      with_cost=False, counter=counter, kind="shoot")
    if res.status is Status.INFEASIBLE:
        return None
    if not res.optimal:
        raise AssertionError(f"unexpected shooting status {res.status}")
    return float(min(1.0, max(0.0, res.aux[0])))


def maxvol(template: ProblemTemplate, D: Simplex, cfg: ToleranceConfig,
           counter: SolveCounter | None = None):
    """Commutation maximizing the summed ray travel over ``D``, or None if no
    commutation is feasible at the centroid."""
    scores = []
    for delta in template.commutations:
        total = 0.0
        for i in range(D.p + 1):
            a = shoot(template, delta, D, i, cfg, counter)
            if a is None:
                total = None
                break
            total += a
        scores.append(total)
    k = first_best(scores, cfg.tie_tol, maximize=True)
    if k is None:
        return None
    return template.commutations.admissible[k]


def vertex_result(template: ProblemTemplate, delta, vid: int, coords, cfg: ToleranceConfig,
                  cache: VertexSolutionCache | None, counter: SolveCounter | None = None
                  ) -> SolveResult:
    """Optimal-cost solve at a pool vertex, memoized per (vertex id, delta)."""
    delta = as_delta(delta)

    def solve():
        return solve_conic(instantiate(template, delta), coords, cfg, counter)

    if cache is None:
        return solve()
    return cache.get_or_solve((vid, delta), solve)


def feasible_everywhere(template: ProblemTemplate, delta, R: Simplex, cfg: ToleranceConfig,
                        cache: VertexSolutionCache | None = None,
                        counter: SolveCounter | None = None) -> bool:
    for vid, v in zip(R.vertex_ids, R.vertices):
        if not vertex_result(template, delta, vid, v, cfg, cache, counter).optimal:
            return False
    return True


def run_phase1(template: ProblemTemplate, cfg: ToleranceConfig) -> PartitionTree:
    """Build the feasible-map tree (all leaves ``ClosedFeasible``).

    Raises DomainNotCovered when some cell centroid admits no feasible
    commutation and DepthExceeded when the depth/volume safeguards trigger.
    """
    t0 = time.perf_counter()
    tree = PartitionTree(template.parameter_domain, geom_tol=cfg.geom_tol)
    tree.progress.reset_clock()
    tree.meta.update(label=template.label, m=template.m,
                     output_index=template.output_index)
    counter = SolveCounter()
    while tree.open_stack:
        leaf = tree.pop_open()
        node = tree[leaf]
        R = node.simplex
        delta = maxvol(template, R, cfg, counter)
        if delta is None:
            raise DomainNotCovered(centroid(R))
        if feasible_everywhere(template, delta, R, cfg, tree.cache, counter):
            tree.close(leaf, ClosedFeasible(delta))
            continue
        if node.depth + 1 > cfg.max_depth:
            raise DepthExceeded(R.vertices, node.depth, "max_depth reached")
        try:
            S1, S2, _ = split_longest_edge(R, tree.pool, cfg.min_cell_volume)
        except DegenerateChild:
            raise DepthExceeded(R.vertices, node.depth, "min_cell_volume reached") from None
        tree.push_children(leaf, [S1, S2])
    tree.wall_time = time.perf_counter() - t0
    tree.solve_counts = dict(counter.counts)
    tree.meta["phase1_time"] = tree.wall_time
    log.info("phase I: %d leaves in %.2fs", tree.stats().lam, tree.wall_time)
    return tree


def vertex_values(template, delta, R: Simplex, cfg, cache, counter=None) -> np.ndarray:
    vals = []
    for vid, v in zip(R.vertex_ids, R.vertices):
        res = vertex_result(template, delta, vid, v, cfg, cache, counter)
        vals.append(res.value if res.optimal else np.nan)
    return np.array(vals)
