import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mpcpart.errors import NonConvergence, VertexInfeasible
from mpcpart.geometry import make_simplex
from mpcpart.phase1 import run_phase1
from mpcpart.phase2 import (Mode, RefineConfig, abs_error_bound, better_delta, build_over_approx,
                            check_cell, depth_prediction, partition, psi_proxy,
                            rel_error_denominator, run_phase2, variability_holds)
from mpcpart.problem import ToleranceConfig, solve_minlp
from mpcpart.problems.toy import (CENTERS, toy_a, toy_a_delta_value, toy_a_value, toy_b,
                                  toy_constant, toy_zero_overlap)
from mpcpart.storage import dumps
from mpcpart.tree import ClosedExplicit

TOL = ToleranceConfig(eps_a=0.05)
SEMI, EXPL = Mode.SEMI_EXPLICIT, Mode.EXPLICIT


def interval(a, b):
    return make_simplex([[a], [b]])


def grid_gap(a, b, d, d2, n=10_001, feasible=lambda d, th: np.ones_like(th, dtype=bool)):
    """Grid oracle for max over [a, b] of V_bar_d - V_d2 (Toy-A costs)."""
    th = np.linspace(a, b, n)
    va, vb = toy_a_delta_value(d, a), toy_a_delta_value(d, b)
    vbar = va + (vb - va) * (th - a) / (b - a)
    diff = vbar - (th - CENTERS[d2[0]]) ** 2
    mask = feasible(d2, th)
    return diff[mask].max() if mask.any() else None


# -- over-approximation -----------------------------------------------------------

def test_over_approx_toy_a():
    ov = build_over_approx(toy_a(), interval(-1, 1), (0,), TOL)
    assert np.allclose(sorted(ov.vertex_values), [0.25, 2.25], atol=1e-7)
    for th in np.linspace(-1, 1, 11):
        assert ov([th]) == pytest.approx(1.25 + th, abs=1e-7)
        assert toy_a_delta_value((0,), th) <= ov([th]) + 1e-7


def test_over_approx_exact_at_vertices_and_constant():
    ov = build_over_approx(toy_a(), interval(-0.3, 0.7), (1,), TOL)
    assert ov([-0.3]) == pytest.approx(0.64, abs=1e-7)
    ov = build_over_approx(toy_constant(), interval(-1, 1), (1,), TOL)
    assert ov([0.3]) == pytest.approx(2.0, abs=1e-7)


def test_over_approx_vertex_infeasible():
    with pytest.raises(VertexInfeasible):
        build_over_approx(toy_b(), interval(-1, 1), (0,), TOL)


# -- error bounds -----------------------------------------------------------------

def test_abs_error_bound_toy_a():
    R = interval(-1, 1)
    b = abs_error_bound(toy_a(), R, (0,), SEMI, TOL)
    assert b.value == pytest.approx(2.0, abs=1e-6)
    assert b.value == pytest.approx(grid_gap(-1, 1, (0,), (1,)), abs=1e-6)
    assert b.witness_delta == (1,)
    assert b.witness_theta[0] == pytest.approx(1.0, abs=1e-3)
    e = abs_error_bound(toy_a(), R, (0,), EXPL, TOL)
    assert e.value == pytest.approx(2.0, abs=1e-6)
    assert grid_gap(-1, 1, (0,), (0,)) == pytest.approx(1.0, abs=1e-6)


def test_abs_error_bound_all_others_infeasible():
    assert abs_error_bound(toy_b(), interval(0.5, 1), (1,), SEMI, TOL) is None
    assert check_cell(toy_b(), interval(0.5, 1), (1,), SEMI, ToleranceConfig(eps_a=1e-9)).close


def test_rel_error_denominator():
    assert rel_error_denominator(toy_a(), interval(-1, 1), (0,), SEMI, TOL) is None
    d = rel_error_denominator(toy_a(), interval(-1, -0.5), (0,), SEMI, TOL)
    assert d == pytest.approx(1.0, abs=1e-6)
    d10 = rel_error_denominator(toy_a(offset=10.0), interval(-1, -0.5), (0,), SEMI, TOL)
    assert d10 == pytest.approx(d + 10.0, abs=1e-6)


def test_check_cell():
    R = interval(-1, 1)
    assert check_cell(toy_a(), R, (0,), SEMI, ToleranceConfig(eps_a=2.5)).close
    v = check_cell(toy_a(), R, (0,), SEMI, ToleranceConfig(eps_a=0.1, eps_r=0.05))
    assert not v.close and v.e_bar_a == pytest.approx(2.0, abs=1e-6) and v.d_min is None


def test_better_delta():
    cfg = ToleranceConfig(eps_a=0.1)
    assert better_delta(toy_a(), interval(0.5, 1), (0,), cfg) == (1,)
    assert better_delta(toy_a(), interval(-1, -0.5), (0,), cfg) is None
    # no other commutation is feasible on the whole cell
    assert better_delta(toy_b(), interval(-1, -0.5), (0,), cfg) is None


def test_variability():
    assert variability_holds(toy_constant(), interval(-1, 1), (0,), TOL)
    assert variability_holds(toy_a(), interval(-0.01, 0.01), (0,), TOL)
    assert not variability_holds(toy_a(), interval(-1, 1), (0,), TOL)


@given(st.floats(-1.0, 0.9), st.floats(0.02, 1.0), st.sampled_from([(0,), (1,)]),
       st.sampled_from([SEMI, EXPL]))
@settings(max_examples=30, deadline=None)
def test_bound_dominates_grid(a, w, d, mode):
    b = min(1.0, a + w)
    bound = abs_error_bound(toy_a(), interval(a, b), d, mode, TOL)
    others = [(0,), (1,)] if mode is EXPL else [x for x in [(0,), (1,)] if x != d]
    true = max(grid_gap(a, b, d, d2, n=2001) for d2 in others)
    assert true <= bound.value + 1e-6


@given(st.floats(-1.0, 0.9), st.floats(0.02, 1.0))
@settings(max_examples=20, deadline=None)
def test_bound_dominates_grid_toy_b(a, w):
    b = min(1.0, a + w)
    cuts = {0: lambda th: th <= 0.25, 1: lambda th: th >= -0.25}
    for d in [(0,), (1,)]:
        if not (cuts[d[0]](a) and cuts[d[0]](b)):
            continue
        bound = abs_error_bound(toy_b(), interval(a, b), d, SEMI, TOL)
        d2 = (1 - d[0],)
        true = grid_gap(a, b, d, d2, n=2001, feasible=lambda dd, th: cuts[dd[0]](th))
        if true is None:
            assert bound is None
        else:
            assert bound is not None and true <= bound.value + 1e-6


# -- full runs --------------------------------------------------------------------

def _sampled_excess(tree, template, cfg, n=1000, seed=0):
    rng = np.random.default_rng(seed)
    worst = -np.inf
    for th in rng.uniform(-1, 1, size=n):
        d = tree.locate([th]).payload.delta
        v = toy_a_delta_value(d, th)
        worst = max(worst, v - toy_a_value(th) - cfg.threshold(toy_a_value(th)))
    return worst


@pytest.mark.parametrize("mode", [SEMI, EXPL])
@pytest.mark.parametrize("eps_a", [0.05, 0.01])
def test_toy_a_soundness(mode, eps_a):
    cfg = ToleranceConfig(eps_a=eps_a)
    tree = partition(toy_a(), RefineConfig(mode, cfg))
    assert not tree.open_stack
    assert _sampled_excess(tree, toy_a(), cfg) <= 1e-6


def test_large_eps_keeps_phase1_tree():
    cfg = ToleranceConfig(eps_a=2.5)
    p1 = run_phase1(toy_a(), cfg)
    tree = run_phase2(p1.clone(), toy_a(), RefineConfig(SEMI, cfg))
    assert tree.stats().lam == p1.stats().lam == 1


def test_explicit_leaves_store_vertex_solutions():
    t = toy_a()
    tree = partition(t, RefineConfig(EXPL, TOL))
    for leaf in tree.leaves():
        assert isinstance(leaf.payload, ClosedExplicit)
        ov = build_over_approx(t, leaf.simplex, leaf.payload.delta, TOL, tree.cache)
        X = leaf.payload.vertex_solutions
        assert X.shape == (2, 1)
        assert np.allclose(X[:, 0], ov.vertex_values, atol=1e-9)


def test_constant_problem_single_leaf():
    tree = partition(toy_constant(), RefineConfig(SEMI, TOL))
    assert [l.payload.delta for l in tree.leaves()] == [(0,)]


def test_toy_b_phase2():
    tree = partition(toy_b(), RefineConfig(SEMI, TOL))
    rng = np.random.default_rng(3)
    for th in rng.uniform(-1, 1, 300):
        d = tree.locate([th]).payload.delta
        ref = solve_minlp(toy_b(), [th], TOL).value
        assert toy_a_delta_value(d, th) - ref <= TOL.eps_a + 1e-6


def test_zero_overlap_does_not_converge():
    with pytest.raises(NonConvergence) as err:
        partition(toy_zero_overlap(), RefineConfig(SEMI, ToleranceConfig(eps_a=0.05, max_depth=16)))
    assert err.value.depth == 16
    assert abs(err.value.vertices.mean() + 0.1) < 1e-3


def test_min_cell_volume_guard():
    cfg = ToleranceConfig(eps_a=0.05, min_cell_volume=1e-3)
    with pytest.raises(NonConvergence):
        partition(toy_zero_overlap(), RefineConfig(SEMI, cfg))


def test_reassign_never_repeats():
    """A (cell, commutation) pair replaced through a reassignment never comes back."""
    for t, cfg in ((toy_a(), ToleranceConfig(eps_a=0.01)), (toy_b(), ToleranceConfig(eps_a=0.01))):
        for which in ("current", "candidate"):
            tree = partition(t, RefineConfig(SEMI, cfg, variability_of=which))
            current = {}
            banned = set()
            for _, kind, node, delta in tree.progress.events:
                if kind == "reassign":
                    banned.add((node, current.get(node)))
                current[node] = delta
                assert (node, delta) not in banned


@pytest.mark.parametrize("mode", [SEMI, EXPL])
def test_parallel_matches_serial(mode):
    cfg = ToleranceConfig(eps_a=0.005)
    serial = partition(toy_b(), RefineConfig(mode, cfg, 1))
    parallel = partition(toy_b(), RefineConfig(mode, cfg, 4))
    assert dumps(serial) == dumps(parallel)


def test_parallel_propagates_errors():
    with pytest.raises(NonConvergence):
        partition(toy_zero_overlap(), RefineConfig(SEMI, ToleranceConfig(eps_a=0.05, max_depth=12),
                                                   parallel_workers=3))


def test_depth_prediction():
    assert depth_prediction(1.0, 1.0, 2) == 0
    assert depth_prediction(2.0, 1.0, 2) == 3
    assert depth_prediction(2.0 ** 12, 1.0, 2) == 36
    with pytest.raises(ValueError):
        depth_prediction(0.0, 1.0, 2)
    assert psi_proxy(1.0, 2.0, 1.0, 2.0) == 2.0


def test_refine_config_validation():
    with pytest.raises(ValueError):
        RefineConfig(parallel_workers=0)
    with pytest.raises(ValueError):
        RefineConfig(variability_of="best")
    assert RefineConfig(mode="explicit").mode is EXPL
