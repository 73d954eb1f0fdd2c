"""Online evaluation of a partition, plus the implicit (enumeration) baseline."""

from __future__ import annotations

import statistics
import time
from dataclasses import dataclass

import numpy as np

from .errors import ModeMismatch
from .problem import ProblemTemplate, ToleranceConfig, instantiate, solve_conic, solve_minlp
from .tree import ClosedExplicit, PartitionTree


@dataclass(frozen=True)
class Timings:
    query: float = 0.0
    solve: float = 0.0

    @property
    def total(self) -> float:
        return self.query + self.solve


@dataclass(frozen=True)
class QueryResult:
    delta: tuple
    x: np.ndarray | None
    value: float | None
    timings: Timings


def eval_semi_explicit(tree: PartitionTree, template: ProblemTemplate, theta,
                       cfg: ToleranceConfig) -> QueryResult:
    """Look up the commutation for ``theta`` and solve the fixed-commutation program."""
    theta = np.asarray(theta, dtype=float).reshape(template.p)
    t0 = time.perf_counter()
    leaf = tree.locate(theta)
    t1 = time.perf_counter()
    delta = leaf.payload.delta
    res = solve_conic(instantiate(template, delta), theta, cfg)
    t2 = time.perf_counter()
    return QueryResult(delta, res.x, res.value if res.optimal else None, Timings(t1 - t0, t2 - t1))


def eval_explicit(tree: PartitionTree, theta) -> QueryResult:
    """Convex combination of the stored vertex solutions; no optimization."""
    theta = np.asarray(theta, dtype=float).reshape(tree.p)
    t0 = time.perf_counter()
    leaf = tree.locate(theta)
    if not isinstance(leaf.payload, ClosedExplicit):
        raise ModeMismatch("tree does not carry vertex solutions (build it in explicit mode)")
    alpha = leaf.bary(theta)
    # vertex-by-vertex accumulation keeps each column's rounding independent of
    # how many columns are stored, so trimmed and full trees agree bit for bit
    X = leaf.payload.vertex_solutions
    x = alpha[0] * X[0]
    for a, row in zip(alpha[1:], X[1:]):
        x = x + a * row
    t1 = time.perf_counter()
    return QueryResult(leaf.payload.delta, x, None, Timings(t1 - t0, 0.0))


def eval_implicit(template: ProblemTemplate, theta, cfg: ToleranceConfig) -> QueryResult:
    theta = np.asarray(theta, dtype=float).reshape(template.p)
    t0 = time.perf_counter()
    sol = solve_minlp(template, theta, cfg)
    t1 = time.perf_counter()
    return QueryResult(sol.delta, sol.x, sol.value, Timings(0.0, t1 - t0))


def control(template: ProblemTemplate, x) -> np.ndarray:
    """First-stage input picked out of a decision vector.

    Vectors that are already reduced to ``output_index`` (explicit trees
    loaded from disk) are returned as they are.
    """
    x = np.asarray(x)
    if template.output_index is None or x.shape[0] != template.n:
        return x
    return x[list(template.output_index)]


@dataclass(frozen=True)
class TimingSummary:
    median: float
    min: float
    max: float
    count: int


def time_queries(fn, thetas) -> TimingSummary:
    """Wall time per call of ``fn(theta)`` (monotonic clock)."""
    samples = []
    for th in thetas:
        t0 = time.perf_counter()
        fn(th)
        samples.append(time.perf_counter() - t0)
    return TimingSummary(statistics.median(samples), min(samples), max(samples), len(samples))
