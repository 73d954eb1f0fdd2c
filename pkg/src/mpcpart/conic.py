"""Thin wrapper around the Clarabel interior-point solver.

Standard form handled here::

    minimize    c @ x
    subject to  b - A @ x in K,   K = K_1 x ... x K_q

with each block one of ``zero``, ``nonneg`` or ``soc`` (second-order cone,
first coordinate is the norm bound). Zero/nonneg rows whose coefficients
vanish identically are checked directly and dropped before calling the
solver, which keeps boundary cases (a vertex sitting exactly on a
parameter-only cut) classified exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import clarabel
import numpy as np
import scipy.sparse as sp

CONE_KINDS = ("zero", "nonneg", "soc")


@dataclass(frozen=True)
class Cone:
    kind: str
    dim: int

    def __post_init__(self):
        if self.kind not in CONE_KINDS:
            raise ValueError(f"unknown cone kind {self.kind!r}")
        if self.dim < 1 or (self.kind == "soc" and self.dim < 2):
            raise ValueError(f"invalid {self.kind} cone dimension {self.dim}")


class Status(str, Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"
    NUMERICAL = "Numerical"


@dataclass
class StandardSolution:
    status: Status
    x: np.ndarray | None
    objective: float | None
    primal_eq: float = 0.0
    cone_dist: float = 0.0
    duality_gap: float = 0.0
    raw_status: str = ""


def cone_distance(s: np.ndarray, cones) -> tuple[float, float]:
    """Return (max |zero-row| residual, max distance from the other cones)."""
    eq = 0.0
    dist = 0.0
    k = 0
    for cone in cones:
        blk = s[k:k + cone.dim]
        if cone.kind == "zero":
            eq = max(eq, float(np.max(np.abs(blk))))
        elif cone.kind == "nonneg":
            dist = max(dist, float(np.max(-blk, initial=0.0)))
        else:
            dist = max(dist, max(0.0, float(np.linalg.norm(blk[1:]) - blk[0])))
        k += cone.dim
    return eq, dist


def _settings(tol: float, max_iter: int):
    s = clarabel.DefaultSettings()
    s.verbose = False
    s.tol_gap_abs = tol
    s.tol_gap_rel = tol
    s.tol_feas = tol
    s.tol_infeas_abs = tol
    s.tol_infeas_rel = tol
    s.max_iter = max_iter
    s.max_threads = 1
    return s


_CLARABEL_CONES = {
    "zero": clarabel.ZeroConeT,
    "nonneg": clarabel.NonnegativeConeT,
    "soc": clarabel.SecondOrderConeT,
}


def _presolve(A: np.ndarray, b: np.ndarray, cones, tol: float):
    """Drop zero/nonneg rows with no variable dependence.

    Returns (A, b, cones) or None when such a row is violated.
    """
    if A.shape[1] == 0:
        empty = np.ones(A.shape[0], dtype=bool)
    else:
        empty = ~np.any(A != 0.0, axis=1)
    if not empty.any():
        return A, b, cones
    keep = np.ones(A.shape[0], dtype=bool)
    new_cones = []
    k = 0
    for cone in cones:
        sl = slice(k, k + cone.dim)
        if cone.kind in ("zero", "nonneg"):
            blk_empty = empty[sl]
            vals = b[sl][blk_empty]
            scale = 1.0 + np.abs(vals)
            if cone.kind == "zero" and np.any(np.abs(vals) > tol * scale):
                return None
            if cone.kind == "nonneg" and np.any(vals < -tol * scale):
                return None
            keep[sl] = ~blk_empty
            left = int(np.count_nonzero(~blk_empty))
            if left:
                new_cones.append(Cone(cone.kind, left))
        else:
            new_cones.append(cone)
        k += cone.dim
    return A[keep], b[keep], new_cones


def solve_standard(c, A, b, cones, tol: float = 1e-8, max_iter: int = 200) -> StandardSolution:
    c = np.asarray(c, dtype=float)
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    n = c.shape[0]
    pre = _presolve(A, b, cones, tol)
    if pre is None:
        return StandardSolution(Status.INFEASIBLE, None, None, raw_status="presolve")
    A2, b2, cones2 = pre
    if A2.shape[0] == 0:
        # unconstrained linear objective
        if np.any(c != 0.0):
            return StandardSolution(Status.UNBOUNDED, None, None, raw_status="presolve")
        return StandardSolution(Status.OPTIMAL, np.zeros(n), 0.0, raw_status="presolve")
    if n == 0:
        eq, dist = cone_distance(b2, cones2)
        ok = eq <= tol and dist <= tol
        return StandardSolution(
            Status.OPTIMAL if ok else Status.INFEASIBLE, np.zeros(0) if ok else None,
            0.0 if ok else None, eq, dist, 0.0, raw_status="presolve",
        )

    P = sp.csc_matrix((n, n))
    solver = clarabel.DefaultSolver(
        P, c, sp.csc_matrix(A2), b2,
        [_CLARABEL_CONES[cn.kind](cn.dim) for cn in cones2],
        _settings(tol, max_iter),
    )
    sol = solver.solve()
    raw = str(sol.status)
    if raw in ("Solved", "AlmostSolved"):
        x = np.asarray(sol.x, dtype=float)
        eq, dist = cone_distance(b2 - A2 @ x, cones2)
        gap = abs(sol.obj_val - sol.obj_val_dual)
        if raw == "AlmostSolved":
            # accepted only when the primal point is feasible to a modest multiple of tol
            loose = 100.0 * tol * (1.0 + float(np.max(np.abs(b2), initial=0.0)))
            if eq > loose or dist > loose:
                return StandardSolution(Status.NUMERICAL, None, None, eq, dist, gap, raw)
        return StandardSolution(Status.OPTIMAL, x, float(c @ x), eq, dist, gap, raw)
    if raw in ("PrimalInfeasible", "AlmostPrimalInfeasible"):
        return StandardSolution(Status.INFEASIBLE, None, None, raw_status=raw)
    if raw in ("DualInfeasible", "AlmostDualInfeasible"):
        return StandardSolution(Status.UNBOUNDED, None, None, raw_status=raw)
    return StandardSolution(Status.NUMERICAL, None, None, raw_status=raw)
