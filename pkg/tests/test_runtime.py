import numpy as np
import pytest

from mpcpart.errors import InfeasibleError, ModeMismatch, OutOfDomain
from mpcpart.geometry import centroid
from mpcpart.phase2 import Mode, RefineConfig, partition
from mpcpart.problem import ToleranceConfig, instantiate
from mpcpart.problems.toy import toy_a, toy_a_value, toy_b_enlarged
from mpcpart.runtime import (control, eval_explicit, eval_implicit, eval_semi_explicit,
                             time_queries)

TOL = ToleranceConfig(eps_a=0.05)


@pytest.fixture(scope="module")
def semi_tree():
    return partition(toy_a(), RefineConfig(Mode.SEMI_EXPLICIT, TOL))


@pytest.fixture(scope="module")
def explicit_tree():
    return partition(toy_a(), RefineConfig(Mode.EXPLICIT, TOL))


def test_semi_explicit_value(semi_tree):
    res = eval_semi_explicit(semi_tree, toy_a(), [-0.9], TOL)
    assert res.delta == (0,)
    assert res.value == pytest.approx(0.16, abs=1e-7)
    assert res.timings.query > 0 and res.timings.solve > 0


def test_semi_explicit_at_vertex_matches_cache(semi_tree):
    leaf = next(semi_tree.leaves())
    for vid, v in zip(leaf.simplex.vertex_ids, leaf.simplex.vertices):
        cached = semi_tree.cache.get((vid, leaf.payload.delta))
        res = eval_semi_explicit(semi_tree, toy_a(), v, TOL)
        if res.delta == leaf.payload.delta and cached is not None:
            assert res.value == pytest.approx(cached.value, abs=1e-9)


def test_out_of_domain(semi_tree, explicit_tree):
    with pytest.raises(OutOfDomain):
        eval_semi_explicit(semi_tree, toy_a(), [1.5], TOL)
    with pytest.raises(OutOfDomain):
        eval_explicit(explicit_tree, [-1.01])


def test_explicit_vertices_and_centroid(explicit_tree):
    for leaf in explicit_tree.leaves():
        X = leaf.payload.vertex_solutions
        c = centroid(leaf.simplex)
        res = eval_explicit(explicit_tree, c)
        if explicit_tree.locate(c).id == leaf.id:
            assert np.allclose(res.x, X.mean(axis=0), atol=1e-12)


def test_explicit_at_vertex():
    tree = partition(toy_a(), RefineConfig(Mode.EXPLICIT, TOL))
    v = np.array([-1.0])
    leaf = tree.locate(v)
    k = int(np.argmin(np.abs(leaf.simplex.vertices[:, 0] - v[0])))
    assert np.array_equal(eval_explicit(tree, v).x, leaf.payload.vertex_solutions[k])


def test_explicit_cost_below_over_approx(explicit_tree):
    t = toy_a()
    for th in np.linspace(-1, 1, 41):
        res = eval_explicit(explicit_tree, [th])
        prog = instantiate(t, res.delta)
        leaf = explicit_tree.locate([th])
        alpha = leaf.bary(np.array([th]))
        vbar = alpha @ np.array([prog.cost(v, x) for v, x in
                                 zip(leaf.simplex.vertices, leaf.payload.vertex_solutions)])
        assert prog.cost([th], res.x) <= vbar + 1e-8
        assert max(prog.residuals([th], res.x)) <= 1e-6


def test_mode_mismatch(semi_tree):
    with pytest.raises(ModeMismatch):
        eval_explicit(semi_tree, [0.0])


def test_implicit():
    res = eval_implicit(toy_a(), [0.0], TOL)
    assert res.value == pytest.approx(0.25, abs=1e-7)
    with pytest.raises(InfeasibleError):
        eval_implicit(toy_b_enlarged(), [1.5], TOL)


def test_semi_explicit_agrees_with_implicit(semi_tree):
    for th in np.linspace(-1, 1, 51):
        semi = eval_semi_explicit(semi_tree, toy_a(), [th], TOL).value
        assert semi - toy_a_value(th) <= TOL.threshold(toy_a_value(th)) + 1e-7


def test_control_selects_output(cwh_template):
    x = np.arange(7.0)
    assert control(cwh_template, x).tolist() == [0.0]
    assert control(cwh_template, np.array([3.0])).tolist() == [3.0]
    assert control(toy_a(), np.array([1.0])).tolist() == [1.0]


def test_time_queries():
    s = time_queries(lambda th: None, np.zeros((5, 1)))
    assert s.count == 5 and s.min <= s.median <= s.max
