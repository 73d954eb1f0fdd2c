"""Simplex primitives: triangulation, barycentric algebra, longest-edge bisection."""

from __future__ import annotations

import itertools
import math
import threading
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateChild, DegenerateDomain, SingularSimplex


@dataclass(frozen=True, eq=False)
class PolytopeV:
    """Convex polytope in vertex representation."""

    vertices: np.ndarray

    def __post_init__(self):
        V = np.atleast_2d(np.asarray(self.vertices, dtype=float))
        V.setflags(write=False)
        object.__setattr__(self, "vertices", V)

    @property
    def p(self) -> int:
        return self.vertices.shape[1]

    @classmethod
    def box(cls, lower, upper) -> "PolytopeV":
        lower = np.asarray(lower, dtype=float)
        upper = np.asarray(upper, dtype=float)
        corners = [np.where(bits, upper, lower)
                   for bits in itertools.product((False, True), repeat=lower.shape[0])]
        return cls(np.array(corners))

    def is_full_dimensional(self, tol: float = 1e-12) -> bool:
        V = self.vertices
        if V.shape[0] < self.p + 1:
            return False
        D = V[1:] - V[0]
        scale = max(1.0, float(np.max(np.abs(D))))
        return np.linalg.matrix_rank(D, tol=tol * scale) == self.p

    def bounding_box(self):
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def volume(self) -> float:
        from scipy.spatial import ConvexHull

        if self.p == 1:
            return float(np.ptp(self.vertices[:, 0]))
        return float(ConvexHull(self.vertices).volume)

    def scaled(self, s: float) -> "PolytopeV":
        return PolytopeV(s * self.vertices)


class VertexPool:
    """Global vertex table with coordinate deduplication.

    Reads are lock free; appends are serialized by a lock. Points closer than
    ``tol`` (sup norm) to an existing vertex reuse its id.
    """

    def __init__(self, p: int, tol: float = 1e-9):
        self.p = p
        self.tol = tol
        self._coords: list[np.ndarray] = []
        self._grid: dict = {}
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return len(self._coords)

    def __getitem__(self, i: int) -> np.ndarray:
        return self._coords[i]

    def array(self) -> np.ndarray:
        if not self._coords:
            return np.zeros((0, self.p))
        return np.array(self._coords)

    def _key(self, x) -> tuple:
        return tuple(int(math.floor(c / self.tol)) for c in x)

    def find(self, x) -> int | None:
        key = self._key(x)
        for off in itertools.product((-1, 0, 1), repeat=self.p):
            for i in self._grid.get(tuple(k + o for k, o in zip(key, off)), ()):
                if np.max(np.abs(self._coords[i] - x)) <= self.tol:
                    return i
        return None

    def add(self, x) -> int:
        x = np.array(x, dtype=float).reshape(self.p)
        i = self.find(x)
        if i is not None:
            return i
        with self._lock:
            i = self.find(x)
            if i is not None:
                return i
            x.setflags(write=False)
            i = len(self._coords)
            self._coords.append(x)
            self._grid.setdefault(self._key(x), []).append(i)
            return i


class Simplex:
    """Full-dimensional simplex; vertices are kept sorted by pool id."""

    __slots__ = ("vertex_ids", "vertices", "_T")

    def __init__(self, vertex_ids, vertices):
        order = np.argsort(np.asarray(vertex_ids), kind="stable")
        self.vertex_ids = tuple(int(vertex_ids[i]) for i in order)
        V = np.asarray(vertices, dtype=float)[order]
        V.setflags(write=False)
        self.vertices = V
        self._T = None
        if self.vertices.shape != (self.p + 1, self.p):
            raise ValueError("a p-simplex needs exactly p+1 vertices of dimension p")
        if len(set(self.vertex_ids)) != len(self.vertex_ids):
            raise ValueError("repeated vertex id in simplex")

    @classmethod
    def from_ids(cls, pool: VertexPool, ids) -> "Simplex":
        return cls(ids, np.array([pool[i] for i in ids]))

    @property
    def p(self) -> int:
        return self.vertices.shape[1]

    def __eq__(self, other):
        return isinstance(other, Simplex) and self.vertex_ids == other.vertex_ids \
            and np.array_equal(self.vertices, other.vertices)

    def __hash__(self):
        return hash(self.vertex_ids)

    def __repr__(self):
        return f"Simplex(ids={self.vertex_ids}, vertices={self.vertices.tolist()})"

    def affine_matrix(self) -> np.ndarray:
        """The (p+1)x(p+1) matrix mapping barycentric weights to (theta, 1)."""
        if self._T is None:
            T = np.vstack([self.vertices.T, np.ones(self.p + 1)])
            self._T = T
        return self._T


def make_simplex(points, pool: VertexPool | None = None) -> Simplex:
    """Register ``points`` in ``pool`` (a fresh one by default) and build a simplex."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if pool is None:
        pool = VertexPool(points.shape[1])
    ids = [pool.add(v) for v in points]
    return Simplex(ids, points)


def volume(S: Simplex) -> float:
    D = S.vertices[1:] - S.vertices[0]
    return abs(float(np.linalg.det(D))) / math.factorial(S.p)


def centroid(S: Simplex) -> np.ndarray:
    return S.vertices.mean(axis=0)


def diameter(S: Simplex) -> float:
    V = S.vertices
    return max(float(np.linalg.norm(V[i] - V[j]))
               for i, j in itertools.combinations(range(len(V)), 2))


def barycentric(S: Simplex, theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=float).reshape(S.p)
    rhs = np.append(theta, 1.0)
    try:
        alpha = np.linalg.solve(S.affine_matrix(), rhs)
    except np.linalg.LinAlgError:
        raise SingularSimplex(f"singular barycentric system for {S!r}") from None
    if not np.all(np.isfinite(alpha)):
        raise SingularSimplex(f"singular barycentric system for {S!r}")
    return alpha


def contains(S: Simplex, theta, geom_tol: float = 1e-9) -> bool:
    return bool(np.all(barycentric(S, theta) >= -geom_tol))


def longest_edge(S: Simplex) -> tuple[int, int]:
    """Positions (i, j), i < j, of the longest edge.

    Near-ties (relative 1e-12) go to the lexicographically smallest id pair;
    since vertices are sorted by id this is the first pair in scan order.
    """
    V = S.vertices
    pairs = list(itertools.combinations(range(S.p + 1), 2))
    lengths = [float(np.linalg.norm(V[i] - V[j])) for i, j in pairs]
    best = max(lengths)
    for pair, length in zip(pairs, lengths):
        if length >= best * (1.0 - 1e-12):
            return pair
    raise AssertionError("unreachable")


def split_longest_edge(S: Simplex, pool: VertexPool, min_cell_volume: float = 0.0):
    """Bisect ``S`` at the midpoint of its longest edge.

    Returns (S1, S2, v_mid) where S1 drops the first endpoint of the edge and
    S2 the second one.
    """
    i, j = longest_edge(S)
    v_mid = 0.5 * (S.vertices[i] + S.vertices[j])
    mid = pool.add(v_mid)
    v_mid = pool[mid]
    children = []
    for drop in (i, j):
        ids = list(S.vertex_ids)
        verts = S.vertices.copy()
        ids[drop] = mid
        verts[drop] = v_mid
        children.append(Simplex(ids, verts))
    if min_cell_volume > 0.0:
        for child in children:
            if volume(child) < min_cell_volume:
                raise DegenerateChild(f"child volume below {min_cell_volume:g}")
    return children[0], children[1], v_mid


def _is_box(V: np.ndarray) -> bool:
    p = V.shape[1]
    if V.shape[0] != 2 ** p:
        return False
    lo, hi = V.min(axis=0), V.max(axis=0)
    if np.any(hi <= lo):
        return False
    corners = {tuple(np.where(bits, hi, lo)) for bits in itertools.product((False, True), repeat=p)}
    return corners == {tuple(v) for v in V}


def _kuhn(lo, hi):
    """Kuhn/Freudenthal triangulation of a box into p! simplices."""
    p = lo.shape[0]
    cells = []
    for perm in itertools.permutations(range(p)):
        pts = [lo.copy()]
        for axis in perm:
            nxt = pts[-1].copy()
            nxt[axis] = hi[axis]
            pts.append(nxt)
        cells.append(np.array(pts))
    return cells


def initial_triangulation(domain: PolytopeV, pool: VertexPool) -> list[Simplex]:
    """Simplicial partition of the domain in a deterministic order.

    Simplex domains pass through, axis-aligned boxes get the Kuhn
    triangulation and any other polytope (p <= 4) a Delaunay triangulation.
    """
    V = domain.vertices
    p = domain.p
    if not domain.is_full_dimensional():
        raise DegenerateDomain("domain vertices are affinely dependent")
    if p == 1:
        cells = [np.array([[V[:, 0].min()], [V[:, 0].max()]])]
    elif V.shape[0] == p + 1:
        cells = [V]
    elif _is_box(V):
        cells = _kuhn(V.min(axis=0), V.max(axis=0))
    elif p <= 4:
        from scipy.spatial import Delaunay

        tri = Delaunay(V)
        cells = [V[s] for s in tri.simplices]
    else:
        raise DegenerateDomain(f"no triangulation strategy for a non-box polytope with p={p}")
    # register domain vertices first so ids follow the input order
    for v in V:
        pool.add(v)
    simplices = [Simplex([pool.add(v) for v in cell], cell) for cell in cells]
    simplices = [S for S in simplices if volume(S) > 0.0]
    simplices.sort(key=lambda S: S.vertex_ids)
    return simplices
