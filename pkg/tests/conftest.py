import numpy as np
import pytest

from mpcpart.geometry import split_longest_edge
from mpcpart.phase1 import run_phase1
from mpcpart.phase2 import Mode, RefineConfig, run_phase2
from mpcpart.problem import ToleranceConfig
from mpcpart.problems.cwh import TABLE_SETTINGS, cwh, eps_a_rule
from mpcpart.tree import ClosedExplicit, ClosedSubopt, OpenCell


@pytest.fixture(scope="session")
def cwh_template():
    return cwh()


class CwhRun:
    def __init__(self, template, s, eps_r):
        self.s = s
        self.eps_a = eps_a_rule(template, s)
        self.eps_r = eps_r
        self.tol = ToleranceConfig(eps_a=self.eps_a, eps_r=eps_r)
        self.phase1 = run_phase1(template, self.tol)
        self.trees = {}
        for mode in (Mode.SEMI_EXPLICIT, Mode.EXPLICIT):
            self.trees[mode.value] = run_phase2(self.phase1.clone(), template,
                                                RefineConfig(mode, self.tol))


@pytest.fixture(scope="session")
def cwh_runs(cwh_template):
    """Semi-explicit and explicit trees for the three coarsest tolerance settings."""
    return [CwhRun(cwh_template, s, er) for s, er in TABLE_SETTINGS[:3]]


@pytest.fixture(scope="session")
def cwh_coarse(cwh_runs):
    return cwh_runs[0]


def refine_uniform(tree, min_leaves):
    """Bisect every leaf until there are at least ``min_leaves`` (storage tests).

    Children inherit the commutation; explicit children get vertex solutions
    linearly interpolated from the parent's.
    """
    while True:
        leaves = list(tree.leaves())
        if len(leaves) >= min_leaves:
            return tree
        for leaf in leaves:
            old = leaf.payload
            leaf.payload = OpenCell(old.delta)
            S1, S2, mid = split_longest_edge(leaf.simplex, tree.pool)
            kids = tree.push_children(leaf.id, [S1, S2], old.delta)
            for _ in kids:
                tree.pop_open()
            for k in kids:
                if isinstance(old, ClosedExplicit):
                    A = np.array([leaf.bary(v) for v in tree[k].simplex.vertices])
                    tree.close(k, ClosedExplicit(old.delta, A @ old.vertex_solutions))
                else:
                    tree.close(k, ClosedSubopt(old.delta))


def uniform_in_box(lo, hi, count, seed):
    return np.random.default_rng(seed).uniform(lo, hi, size=(count, len(lo)))


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
