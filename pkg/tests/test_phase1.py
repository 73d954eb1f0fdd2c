import numpy as np
import pytest

from mpcpart.errors import DepthExceeded, DomainNotCovered
from mpcpart.geometry import contains, make_simplex
from mpcpart.phase1 import feasible_everywhere, maxvol, run_phase1, shoot
from mpcpart.problem import ToleranceConfig, feasible_at
from mpcpart.problems.toy import toy_a, toy_b, toy_b_enlarged
from mpcpart.tree import ClosedFeasible

TOL = ToleranceConfig(eps_a=0.05)
FULL = make_simplex([[-1.0], [1.0]])


def test_shoot_toy_b():
    # centroid 0, ray to +1, delta=0 feasible up to 0.25
    i = int(np.argmax(FULL.vertices[:, 0]))
    assert shoot(toy_b(), (0,), FULL, i, TOL) == pytest.approx(0.25, abs=1e-6)
    assert shoot(toy_b(), (0,), FULL, 1 - i, TOL) == pytest.approx(1.0, abs=1e-9)


def test_shoot_infeasible_centroid():
    R = make_simplex([[0.5], [1.0]])
    assert shoot(toy_b(), (0,), R, 0, TOL) is None


def test_maxvol_tie_and_choice():
    # both commutations travel 1.25 in total, the first one wins
    assert maxvol(toy_b(), FULL, TOL) == (0,)
    assert maxvol(toy_b(), make_simplex([[0.0], [1.0]]), TOL) == (1,)
    assert maxvol(toy_b_enlarged(), make_simplex([[-2.0], [-1.0]]), TOL) is None


def test_feasible_everywhere():
    assert feasible_everywhere(toy_b(), (0,), make_simplex([[-1.0], [0.25]]), TOL)
    assert not feasible_everywhere(toy_b(), (0,), FULL, TOL)


def test_toy_a_single_leaf():
    tree = run_phase1(toy_a(), TOL)
    leaves = list(tree.leaves())
    assert len(leaves) == 1 and leaves[0].payload == ClosedFeasible((0,))


def test_toy_b_two_leaves():
    tree = run_phase1(toy_b(), TOL)
    leaves = list(tree.leaves())
    assert len(leaves) == 2
    assert tree.locate([0.9]).payload.delta == (1,)
    assert tree.locate([-0.9]).payload.delta == (0,)


def test_feasible_map_is_feasible():
    t = toy_b()
    tree = run_phase1(t, TOL)
    for theta in np.linspace(-1, 1, 201):
        leaf = tree.locate([theta])
        assert feasible_at(t, leaf.payload.delta, [theta], TOL)


def test_enlarged_domain_not_covered():
    with pytest.raises(DomainNotCovered) as err:
        run_phase1(toy_b_enlarged(), TOL)
    assert np.allclose(err.value.witness, [-1.5])


def test_depth_exceeded():
    # delta=1 only feasible on [-0.95, 1], delta=0 nowhere in the interior
    t = toy_b(upper0=-0.99, lower1=-0.95)
    with pytest.raises(DepthExceeded):
        run_phase1(t, ToleranceConfig(eps_a=0.05, max_depth=1))


def test_cwh_phase1_covers(cwh_coarse, cwh_template):
    tree = cwh_coarse.phase1
    assert tree.stats().closed_volume_fraction == pytest.approx(1.0, rel=1e-12)
    rng = np.random.default_rng(1)
    lo, hi = cwh_template.parameter_domain.bounding_box()
    for theta in rng.uniform(lo, hi, size=(50, 2)):
        leaf = tree.locate(theta)
        assert contains(leaf.simplex, theta)
        assert feasible_at(cwh_template, leaf.payload.delta, theta, cwh_coarse.tol)
