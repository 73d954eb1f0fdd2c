"""Tolerance sweeps on the station-keeping problem and plot-data exports."""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import asdict, dataclass

import numpy as np

from .phase1 import run_phase1
from .phase2 import Mode, RefineConfig, psi_proxy, run_phase2
from .problem import ProblemTemplate, ToleranceConfig
from .problems.cwh import TABLE_SETTINGS, CwhConfig, cwh, eps_a_rule, with_auto_shrink
from .runtime import eval_explicit, eval_implicit, eval_semi_explicit, time_queries
from .sim import (explicit_controller, implicit_controller, semi_explicit_controller,
                  simulate_closed_loop)
from .storage import dumps

log = logging.getLogger(__name__)

BENCH_COLUMNS = ("mode", "s", "eps_a", "eps_r", "tau", "lambda", "t_solve", "t_query_median",
                 "t_query_min", "t_query_max", "bytes")


@dataclass
class BenchRow:
    mode: str
    s: float
    eps_a: float
    eps_r: float
    tau: int
    lam: int
    t_solve: float
    t_query_median: float
    t_query_min: float
    t_query_max: float
    bytes: int

    def as_csv(self):
        return (self.mode, f"{self.s:g}", f"{self.eps_a:.9g}", f"{self.eps_r:g}", self.tau,
                self.lam, f"{self.t_solve:.4f}", f"{self.t_query_median:.3e}",
                f"{self.t_query_min:.3e}", f"{self.t_query_max:.3e}", self.bytes)


@dataclass
class SweepResult:
    rows: list
    trees: dict  # (s, mode) -> PartitionTree
    template: ProblemTemplate
    cwh_cfg: CwhConfig
    implicit: object = None  # TimingSummary of the enumeration baseline


def sample_domain(template: ProblemTemplate, count: int, seed: int = 0) -> np.ndarray:
    lo, hi = template.parameter_domain.bounding_box()
    return np.random.default_rng(seed).uniform(lo, hi, size=(count, template.p))


def bench_sweep(settings=TABLE_SETTINGS[:2], cwh_cfg: CwhConfig | None = None,
                modes=(Mode.SEMI_EXPLICIT, Mode.EXPLICIT), queries: int = 200, seed: int = 0,
                workers: int = 1, max_depth: int = 40) -> SweepResult:
    """Build both kinds of partition for each (s, eps_r) pair and time them.

    ``eps_a`` follows the rule ``max V*`` over the vertices of the domain
    scaled by ``s``. The domain is shrunk automatically if the feasible-map
    stage reports it is not covered.
    """
    cwh_cfg = cwh_cfg or CwhConfig()

    def first(template):
        tol = ToleranceConfig(eps_a=1.0, max_depth=max_depth)
        return run_phase1(template, tol)

    _, cwh_cfg = with_auto_shrink(first, cwh_cfg)
    template = cwh(cwh_cfg)
    thetas = sample_domain(template, queries, seed)
    tol0 = ToleranceConfig(eps_a=1.0)
    implicit = time_queries(lambda th: eval_implicit(template, th, tol0), thetas)
    rows, trees = [], {}
    for s, eps_r in settings:
        eps_a = eps_a_rule(template, s)
        tol = ToleranceConfig(eps_a=eps_a, eps_r=eps_r, max_depth=max_depth)
        p1 = run_phase1(template, tol)
        for mode in modes:
            mode = Mode(mode)
            t0 = time.perf_counter()
            tree = run_phase2(p1.clone(), template, RefineConfig(mode, tol, workers))
            t_solve = p1.wall_time + (time.perf_counter() - t0)
            tree.meta["t_solve"] = t_solve
            if mode is Mode.EXPLICIT:
                q = time_queries(lambda th: eval_explicit(tree, th), thetas)
            else:
                q = time_queries(lambda th: eval_semi_explicit(tree, template, th, tol), thetas)
            st = tree.stats()
            rows.append(BenchRow(mode.value, s, eps_a, eps_r, st.tau, st.lam, t_solve, q.median,
                                 q.min, q.max, len(dumps(tree, "M1"))))
            trees[(s, mode.value)] = tree
            log.info("s=%g eps_r=%g %s: tau=%d lambda=%d %.1fs", s, eps_r, mode.value, st.tau,
                     st.lam, t_solve)
    return SweepResult(rows, trees, template, cwh_cfg, implicit)


def write_bench_csv(result: SweepResult, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(BENCH_COLUMNS)
        for r in result.rows:
            w.writerow(r.as_csv())
        imp = result.implicit
        if imp is not None:
            w.writerow(("implicit", "", "", "", "", "", "", f"{imp.median:.3e}", f"{imp.min:.3e}",
                        f"{imp.max:.3e}", ""))


def psi_fit(rows) -> tuple[float, float]:
    """Least-squares fit tau ~ a * log(1/psi) + b with the tolerance proxy for psi."""
    ea_max = max(r.eps_a for r in rows)
    er_max = max(r.eps_r for r in rows)
    x = np.array([np.log(1.0 / psi_proxy(r.eps_a, r.eps_r, ea_max, er_max)) for r in rows])
    y = np.array([r.tau for r in rows], dtype=float)
    if np.ptp(x) == 0:
        return 0.0, float(y.mean())
    a, b = np.polyfit(x, y, 1)
    return float(a), float(b)


# -- plot data ------------------------------------------------------------------

def export_convergence(result: SweepResult, path):
    """Closed-volume fraction against time for every tree of a sweep."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("s", "mode", "wall_time_s", "closed_leaf_count", "closed_volume_fraction",
                    "open_count", "depth"))
        for (s, mode), tree in result.trees.items():
            for row in tree.progress.rows:
                w.writerow((f"{s:g}", mode, f"{row[0]:.6f}", row[1], f"{row[2]:.12f}", row[3],
                            row[4]))


def export_query_times(result: SweepResult, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("s", "mode", "median", "min", "max"))
        for r in result.rows:
            w.writerow((f"{r.s:g}", r.mode, f"{r.t_query_median:.3e}", f"{r.t_query_min:.3e}",
                        f"{r.t_query_max:.3e}"))
        imp = result.implicit
        if imp is not None:
            w.writerow(("", "implicit", f"{imp.median:.3e}", f"{imp.min:.3e}", f"{imp.max:.3e}"))


def fuel_study(result: SweepResult, seeds=range(5), steps: int = 30, disturbance: float = 0.05):
    """Relative fuel over-consumption of each tree against the implicit controller.

    Initial states are drawn uniformly from the domain scaled by 0.8.
    Returns rows (s, mode, seed, fuel_implicit, fuel_tree, ratio).
    """
    template = result.template
    tol = ToleranceConfig(eps_a=1.0)
    imp = implicit_controller(template, tol)
    rows = []
    for seed in seeds:
        x0 = 0.8 * sample_domain(template, 1, seed)[0]
        ref = simulate_closed_loop(imp, x0, steps, result.cwh_cfg, disturbance, seed).fuel
        for (s, mode), tree in result.trees.items():
            if mode == "explicit":
                ctrl = explicit_controller(tree, template)
            else:
                ctrl = semi_explicit_controller(tree, template, tol)
            fuel = simulate_closed_loop(ctrl, x0, steps, result.cwh_cfg, disturbance, seed).fuel
            rows.append((s, mode, seed, ref, fuel, fuel / ref if ref > 0 else float("nan")))
    return rows


def export_fuel(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("s", "mode", "seed", "fuel_implicit", "fuel_tree", "ratio"))
        for s, mode, seed, ref, fuel, ratio in rows:
            w.writerow((f"{s:g}", mode, seed, f"{ref:.9g}", f"{fuel:.9g}", f"{ratio:.9g}"))


def rows_as_dicts(rows):
    return [asdict(r) for r in rows]
