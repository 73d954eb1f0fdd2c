"""Binary-tree simplicial partition with open/closed leaves and point location."""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import OutOfDomain
from .geometry import PolytopeV, Simplex, VertexPool, barycentric, initial_triangulation, volume


@dataclass(frozen=True)
class OpenCell:
    delta: tuple | None = None


@dataclass(frozen=True)
class ClosedFeasible:
    delta: tuple


@dataclass(frozen=True)
class ClosedSubopt:
    delta: tuple


@dataclass(frozen=True, eq=False)
class ClosedExplicit:
    delta: tuple
    # (p+1, k) array, row i is the optimal decision vector at vertex i
    vertex_solutions: np.ndarray
    # decision-vector entries kept in the rows (None: all of them)
    columns: tuple | None = None


CLOSED = (ClosedFeasible, ClosedSubopt, ClosedExplicit)


class TreeNode:
    __slots__ = ("id", "simplex", "children", "payload", "parent", "depth", "affine", "_vol")

    def __init__(self, id, simplex, parent=None, depth=0, payload=None):
        self.id = id
        self.simplex = simplex
        self.children: list[int] = []
        self.payload = payload
        self.parent = parent
        self.depth = depth
        # optional precomputed barycentric map (set by the M2 loader)
        self.affine = None
        self._vol = None

    @property
    def is_leaf(self) -> bool:
        return not self.children

    @property
    def is_closed(self) -> bool:
        return isinstance(self.payload, CLOSED)

    @property
    def volume(self) -> float:
        if self._vol is None:
            self._vol = volume(self.simplex)
        return self._vol

    def bary(self, theta) -> np.ndarray:
        if self.affine is not None:
            a = self.affine[:, :-1] @ theta + self.affine[:, -1]
            return np.append(a, 1.0 - a.sum())
        return barycentric(self.simplex, theta)

    def __repr__(self):
        return f"TreeNode(id={self.id}, depth={self.depth}, payload={self.payload!r})"


class VertexSolutionCache:
    """(vertex_id, delta) -> SolveResult. Numerical failures are never stored."""

    def __init__(self):
        self._data: dict = {}
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def __len__(self):
        return len(self._data)

    def __contains__(self, key):
        return key in self._data

    def get(self, key):
        return self._data.get(key)

    def get_or_solve(self, key, solve):
        res = self._data.get(key)
        if res is not None:
            self.hits += 1
            return res
        self.misses += 1
        res = solve()
        with self._lock:
            return self._data.setdefault(key, res)

    def items(self):
        return self._data.items()


@dataclass
class TreeStats:
    tau: int
    lam: int
    closed_volume_fraction: float
    wall_time: float
    solve_counts: dict = field(default_factory=dict)
    open_count: int = 0
    vertex_count: int = 0


PROGRESS_COLUMNS = ("wall_time_s", "closed_leaf_count", "closed_volume_fraction",
                    "open_count", "depth")


class ProgressLog:
    """Append-only event stream of tree mutations plus convergence rows."""

    def __init__(self):
        self.t0 = time.perf_counter()
        self.events: list[tuple] = []
        self.rows: list[tuple] = []

    def record(self, kind, node_id, delta, tree: "PartitionTree"):
        t = time.perf_counter() - self.t0
        self.events.append((t, kind, node_id, delta))
        self.rows.append((t, tree._closed_count, tree._closed_volume / tree.domain_volume,
                          len(tree.open_stack), tree._max_depth))

    def reset_clock(self):
        self.t0 = time.perf_counter()

    def write_csv(self, path):
        import csv

        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(PROGRESS_COLUMNS)
            for row in self.rows:
                w.writerow([f"{row[0]:.6f}", row[1], f"{row[2]:.12f}", row[3], row[4]])


class PartitionTree:
    """Arena of :class:`TreeNode` objects.

    When the initial triangulation has more than one cell, the root is a
    synthetic node without a simplex whose children are those cells.
    """

    def __init__(self, domain: PolytopeV, pool: VertexPool | None = None,
                 cells: list[Simplex] | None = None, geom_tol: float = 1e-9):
        self.domain = domain
        self.p = domain.p
        self.geom_tol = geom_tol
        self.pool = pool if pool is not None else VertexPool(self.p, geom_tol)
        if cells is None:
            cells = initial_triangulation(domain, self.pool)
        self.nodes: list[TreeNode] = []
        self.open_stack: list[int] = []
        self._open_set: set[int] = set()
        self.cache = VertexSolutionCache()
        self.progress = ProgressLog()
        self.mode = "feasible"
        self.solve_counts: dict = {}
        self.wall_time = 0.0
        self.meta: dict = {}
        self._closed_count = 0
        self._closed_volume = 0.0
        self._max_depth = 0
        self.domain_volume = float(sum(volume(S) for S in cells))
        if len(cells) == 1:
            self.root = self._new_node(cells[0], None, 0, OpenCell())
            self._push(self.root)
        else:
            self.root = self._new_node(None, None, 0, None)
            self._max_depth = 1
            for S in cells:
                child = self._new_node(S, self.root, 1, OpenCell())
                self.nodes[self.root].children.append(child)
                self._push(child)

    @classmethod
    def empty(cls, domain: PolytopeV, pool: VertexPool, domain_volume: float):
        """Bare tree shell, filled in by the file loader."""
        tree = cls.__new__(cls)
        tree.domain = domain
        tree.p = domain.p
        tree.geom_tol = pool.tol
        tree.pool = pool
        tree.nodes = []
        tree.open_stack = []
        tree._open_set = set()
        tree.cache = VertexSolutionCache()
        tree.progress = ProgressLog()
        tree.mode = "feasible"
        tree.solve_counts = {}
        tree.wall_time = 0.0
        tree.meta = {}
        tree._closed_count = 0
        tree._closed_volume = 0.0
        tree._max_depth = 0
        tree.domain_volume = domain_volume
        tree.root = 0
        return tree

    def clone(self) -> "PartitionTree":
        """Independent copy of the node arena sharing the (append-only) vertex pool
        and a snapshot of the vertex solution cache."""
        tree = PartitionTree.empty(self.domain, self.pool, self.domain_volume)
        for n in self.nodes:
            m = TreeNode(n.id, n.simplex, n.parent, n.depth, n.payload)
            m.children = list(n.children)
            m.affine = n.affine
            tree.nodes.append(m)
        tree.root = self.root
        tree.open_stack = list(self.open_stack)
        tree._open_set = set(self._open_set)
        tree.cache._data = dict(self.cache._data)
        tree.mode = self.mode
        tree.solve_counts = dict(self.solve_counts)
        tree.wall_time = self.wall_time
        tree.meta = dict(self.meta)
        tree._closed_count = self._closed_count
        tree._closed_volume = self._closed_volume
        tree._max_depth = self._max_depth
        return tree

    def _new_node(self, simplex, parent, depth, payload) -> int:
        node = TreeNode(len(self.nodes), simplex, parent, depth, payload)
        self.nodes.append(node)
        return node.id

    def __getitem__(self, i: int) -> TreeNode:
        return self.nodes[i]

    # -- mutation ---------------------------------------------------------

    def _push(self, leaf: int):
        self.open_stack.append(leaf)
        self._open_set.add(leaf)

    def pop_open(self) -> int:
        leaf = self.open_stack.pop()
        self._open_set.discard(leaf)
        return leaf

    def push_open(self, leaf: int):
        node = self.nodes[leaf]
        assert node.is_leaf and isinstance(node.payload, OpenCell)
        assert leaf not in self._open_set
        self._push(leaf)

    def push_children(self, leaf: int, cells, delta=None) -> list[int]:
        """Turn an open leaf into an internal node with open children."""
        node = self.nodes[leaf]
        assert node.is_leaf and isinstance(node.payload, OpenCell), "only open leaves can be split"
        assert leaf not in self._open_set, "pop the leaf before splitting it"
        node.payload = None
        kids = []
        for S in cells:
            child = self._new_node(S, leaf, node.depth + 1, OpenCell(delta))
            node.children.append(child)
            self._push(child)
            kids.append(child)
        self._max_depth = max(self._max_depth, node.depth + 1)
        self.progress.record("split", leaf, delta, self)
        return kids

    def close(self, leaf: int, payload):
        node = self.nodes[leaf]
        assert node.is_leaf and isinstance(node.payload, OpenCell), "only open leaves can be closed"
        assert leaf not in self._open_set, "pop the leaf before closing it"
        assert isinstance(payload, CLOSED)
        node.payload = payload
        self._closed_count += 1
        self._closed_volume += node.volume
        self.progress.record("close", leaf, payload.delta, self)

    def reassign(self, leaf: int, delta):
        """Give an open leaf a new commutation and put it back on the stack."""
        node = self.nodes[leaf]
        assert node.is_leaf and isinstance(node.payload, OpenCell)
        assert leaf not in self._open_set
        node.payload = OpenCell(tuple(delta))
        self._push(leaf)
        self.progress.record("reassign", leaf, tuple(delta), self)

    def reopen_all(self):
        """Turn every closed leaf back into an open one (leaves in preorder)."""
        leaves = [n for n in self.leaves()]
        self._closed_count = 0
        self._closed_volume = 0.0
        for node in leaves:
            delta = node.payload.delta if node.payload is not None else None
            node.payload = OpenCell(delta)
        # reverse so that the first leaf in preorder is popped first
        self.open_stack = [n.id for n in reversed(leaves)]
        self._open_set = set(self.open_stack)

    # -- queries ----------------------------------------------------------

    def leaves(self):
        """Leaves in preorder."""
        stack = [self.root]
        while stack:
            node = self.nodes[stack.pop()]
            if node.is_leaf:
                yield node
            else:
                stack.extend(reversed(node.children))

    def preorder(self):
        stack = [self.root]
        while stack:
            node = self.nodes[stack.pop()]
            yield node
            stack.extend(reversed(node.children))

    def locate(self, theta) -> TreeNode:
        """Descend to the leaf containing ``theta`` (first matching child wins)."""
        theta = np.asarray(theta, dtype=float).reshape(self.p)
        tol = self.geom_tol
        node = self.nodes[self.root]
        if node.simplex is not None or node.affine is not None:
            if np.any(node.bary(theta) < -tol):
                raise OutOfDomain(theta)
        while node.children:
            for c in node.children:
                child = self.nodes[c]
                if np.all(child.bary(theta) >= -tol):
                    node = child
                    break
            else:
                raise OutOfDomain(theta)
        return node

    def stats(self) -> TreeStats:
        tau = 0
        lam = 0
        closed_vol = 0.0
        for node in self.preorder():
            tau = max(tau, node.depth)
            if node.is_leaf:
                lam += 1
                if node.is_closed:
                    closed_vol += node.volume
        return TreeStats(tau, lam, closed_vol / self.domain_volume, self.wall_time,
                         dict(self.solve_counts), len(self.open_stack), len(self.pool))

    def leaf_volume_sum(self) -> float:
        return float(sum(n.volume for n in self.leaves()))
