"""Closed-loop simulation of the station-keeping problem under a partition controller."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import InfeasibleError
from .problem import ProblemTemplate, ToleranceConfig
from .problems.cwh import CwhConfig, scaled_dynamics
from .runtime import control, eval_explicit, eval_implicit, eval_semi_explicit
from .tree import PartitionTree


def implicit_controller(template: ProblemTemplate, cfg: ToleranceConfig):
    def ctrl(theta):
        return float(control(template, eval_implicit(template, theta, cfg).x)[0])
    return ctrl


def semi_explicit_controller(tree: PartitionTree, template: ProblemTemplate, cfg: ToleranceConfig):
    def ctrl(theta):
        res = eval_semi_explicit(tree, template, theta, cfg)
        if res.value is None:
            raise InfeasibleError(f"stored commutation infeasible at {theta}")
        return float(control(template, res.x)[0])
    return ctrl


def explicit_controller(tree: PartitionTree, template: ProblemTemplate):
    def ctrl(theta):
        return float(control(template, eval_explicit(tree, theta).x)[0])
    return ctrl


@dataclass
class Trajectory:
    states: np.ndarray  # (steps+1, 2)
    inputs: np.ndarray  # (steps,)
    out_of_domain: list = field(default_factory=list)
    infeasible: list = field(default_factory=list)

    @property
    def fuel(self) -> float:
        return float(np.abs(self.inputs).sum())

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(("step", "z_cm", "zdot_mm_s", "dv_mm_s", "out_of_domain", "infeasible"))
            for k in range(len(self.inputs)):
                w.writerow((k, f"{self.states[k, 0]:.9g}", f"{self.states[k, 1]:.9g}",
                            f"{self.inputs[k]:.9g}", int(k in self.out_of_domain),
                            int(k in self.infeasible)))


def simulate_closed_loop(controller, x0, steps: int, cwh_cfg: CwhConfig | None = None,
                         disturbance: float = 0.0, seed: int = 0) -> Trajectory:
    """Run ``steps`` sampling periods from ``x0``.

    ``disturbance`` is the half-width of a uniform additive state disturbance
    (internal units). States leaving the parameter box are projected back onto
    it before the controller is queried, and the step is flagged.
    """
    cwh_cfg = cwh_cfg or CwhConfig()
    A = scaled_dynamics(cwh_cfg)
    bound = np.array([cwh_cfg.z_max, cwh_cfg.zdot_max]) * cwh_cfg.shrink
    rng = np.random.default_rng(seed)
    x = np.asarray(x0, dtype=float).copy()
    states = [x.copy()]
    inputs = []
    flagged, infeasible = [], []
    for k in range(steps):
        if np.any(np.abs(x) > bound):
            flagged.append(k)
            x = np.clip(x, -bound, bound)
        try:
            u = controller(x)
        except InfeasibleError:
            infeasible.append(k)
            u = 0.0
        inputs.append(u)
        x = A @ (x + np.array([0.0, u]))
        if disturbance > 0:
            x = x + rng.uniform(-disturbance, disturbance, size=2)
        states.append(x.copy())
    return Trajectory(np.array(states), np.array(inputs), flagged, infeasible)
