"""Minimum-fuel out-of-plane spacecraft station keeping.

The out-of-plane Clohessy-Wiltshire motion is a harmonic oscillator
``z'' = -w0**2 z + u``. Inputs are impulsive velocity changes applied every
``T_s`` seconds, each either zero or of magnitude in ``[dv_lo, dv_hi]``. The
latter set is nonconvex, so every step picks one of three convex pieces
(negative band, zero, positive band) through a one-hot binary triple.

Internally states are in centimetres and millimetres per second so that the
parameter box is ``[-10, 10] x [-1, 1]`` and all program data is O(1).
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, replace

import numpy as np

from ..errors import DomainNotCovered
from ..geometry import PolytopeV
from ..problem import (CommutationSpace, ProblemTemplate, ProgramBuilder, ToleranceConfig,
                       solve_minlp)

log = logging.getLogger(__name__)

# SI value = SCALE * internal value (cm -> m, mm/s -> m/s)
SCALE = np.array([0.01, 0.001])
PIECES = ("neg", "zero", "pos")


def cwh_discretize(omega: float, T_s: float):
    """Exact discretization of the oscillator with an impulse at the start of the step.

    Returns (A, B) in SI units for ``x+ = A (x + B dv)``, ``B = (0, 1)``.
    """
    if omega <= 0 or T_s <= 0:
        raise ValueError("omega and T_s must be positive")
    wt = omega * T_s
    A = np.array([[math.cos(wt), math.sin(wt) / omega],
                  [-omega * math.sin(wt), math.cos(wt)]])
    return A, np.array([0.0, 1.0])


@dataclass(frozen=True)
class CwhConfig:
    omega: float = 0.00113
    T_s: float = 100.0
    horizon: int = 3
    # bounds on |dv| in internal units (mm/s)
    dv_lo: float = 0.02
    dv_hi: float = 2.0
    z_max: float = 10.0  # cm
    zdot_max: float = 1.0  # mm/s
    terminal_weight: float = 0.1
    shrink: float = 1.0


def scaled_dynamics(cfg: CwhConfig) -> np.ndarray:
    A, _ = cwh_discretize(cfg.omega, cfg.T_s)
    return np.diag(1.0 / SCALE) @ A @ np.diag(SCALE)


def step_options():
    """One-hot triples ordered zero, neg, pos (zero thrust first)."""
    return [(0, 1, 0), (1, 0, 0), (0, 0, 1)]


def commutation_space(horizon: int) -> CommutationSpace:
    adm = [tuple(b for triple in combo for b in triple)
           for combo in itertools.product(step_options(), repeat=horizon)]
    return CommutationSpace(3 * horizon, tuple(adm))


def _piece(delta, k) -> str:
    triple = delta[3 * k:3 * k + 3]
    return PIECES[triple.index(1)]


def prediction(cfg: CwhConfig):
    """Maps (theta, u) -> x_k as x_k = Phi[k] theta + Gam[k] u for k = 1..N."""
    A = scaled_dynamics(cfg)
    N = cfg.horizon
    Phi, Gam = [], []
    for k in range(1, N + 1):
        Phi.append(np.linalg.matrix_power(A, k))
        G = np.zeros((2, N))
        for j in range(k):
            G[:, j] = np.linalg.matrix_power(A, k - j) @ np.array([0.0, 1.0])
        Gam.append(G)
    return Phi, Gam


def cwh_program(delta, cfg: CwhConfig):
    """Fixed-commutation program; decision x = (u_0..u_{N-1}, t_0..t_{N-1}, s)."""
    N = cfg.horizon
    n = 2 * N + 1
    b = ProgramBuilder(n=n, p=2)
    c = np.zeros(n)
    c[N:2 * N] = 1.0
    c[2 * N] = cfg.terminal_weight
    b.cost(c)

    def ex(i, v=1.0):
        e = np.zeros(n)
        e[i] = v
        return e

    zero_rows = [(ex(k), None, 0.0) for k in range(N) if _piece(delta, k) == "zero"]
    b.zero(*zero_rows)
    rows = []
    for k in range(N):
        piece = _piece(delta, k)
        # |u_k| <= t_k
        rows.append((ex(k) - ex(N + k), None, 0.0))
        rows.append((-ex(k) - ex(N + k), None, 0.0))
        if piece == "pos":
            rows.append((-ex(k), None, -cfg.dv_lo))
            rows.append((ex(k), None, cfg.dv_hi))
        elif piece == "neg":
            rows.append((ex(k), None, -cfg.dv_lo))
            rows.append((-ex(k), None, cfg.dv_hi))
    Phi, Gam = prediction(cfg)
    bound = np.array([cfg.z_max, cfg.zdot_max]) * cfg.shrink
    for P, G in zip(Phi, Gam):
        for i in range(2):
            gx = np.concatenate([G[i], np.zeros(N + 1)])
            rows.append((gx, P[i], bound[i]))
            rows.append((-gx, -P[i], bound[i]))
    b.nonneg(*rows)
    # s >= || W x_N ||
    W = np.diag([1.0 / cfg.z_max, 1.0 / cfg.zdot_max])
    P, G = Phi[-1], Gam[-1]
    soc = [(-ex(2 * N), None, 0.0)]
    for i in range(2):
        gx = np.concatenate([W[i, i] * G[i], np.zeros(N + 1)])
        soc.append((-gx, -W[i, i] * P[i], 0.0))
    b.soc(soc)
    return b.build()


def cwh(cfg: CwhConfig | None = None) -> ProblemTemplate:
    cfg = cfg or CwhConfig()
    s = cfg.shrink
    dom = PolytopeV.box([-s * cfg.z_max, -s * cfg.zdot_max], [s * cfg.z_max, s * cfg.zdot_max])
    return ProblemTemplate(p=2, n=2 * cfg.horizon + 1, commutations=commutation_space(cfg.horizon),
                           instantiator=lambda d: cwh_program(d, cfg), parameter_domain=dom,
                           label="cwh", output_index=(0,))


def eps_a_rule(template: ProblemTemplate, s: float, tol: ToleranceConfig | None = None) -> float:
    """Largest optimal cost over the vertices of the domain scaled by s."""
    tol = tol or ToleranceConfig(eps_a=1.0)
    return max(solve_minlp(template, v, tol).value
               for v in template.parameter_domain.scaled(s).vertices)


# the four (s, eps_r) settings, coarsest first
TABLE_SETTINGS = ((0.5, 2.0), (0.25, 1.0), (0.1, 0.1), (0.03, 0.05))


def with_auto_shrink(build, cfg: CwhConfig, factor: float = 0.9, attempts: int = 5):
    """Call ``build(template)``; shrink the domain whenever it is not covered.

    Returns (result, config actually used).
    """
    for _ in range(attempts):
        try:
            return build(cwh(cfg)), cfg
        except DomainNotCovered as exc:
            log.warning("domain not covered near %s; shrinking by %g", exc.witness, factor)
            cfg = replace(cfg, shrink=cfg.shrink * factor)
    return build(cwh(cfg)), cfg
