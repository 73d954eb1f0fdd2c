"""Binary tree files.

Two layouts, both little endian with 8-byte floats, 4-byte unsigned indices
and a CRC32 trailer over everything before it:

* M1 keeps a table of unique vertices; every node with a simplex stores the
  ``p+1`` indices of its vertices.
* M2 has no vertex table; every node stores the ``p x (p+1)`` affine map
  giving the first ``p`` barycentric coordinates, so point location needs no
  linear solve. The loader rebuilds approximate vertices from those maps.

Node records are written in preorder. Leaves store the commutation as a bitset
(least significant bit first) and, for explicit trees, the ``n_hat`` output
entries of the decision vector at each vertex.
"""

from __future__ import annotations

import io
import math
import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .errors import CorruptFile, VersionMismatch
from .geometry import PolytopeV, Simplex, VertexPool
from .tree import ClosedExplicit, ClosedFeasible, ClosedSubopt, PartitionTree, TreeNode

MAGIC = b"MPT1"
VERSION = 1
MODELS = {"M1": 1, "M2": 2}
MODES = {"feasible": 0, "semi": 1, "explicit": 2}
KIND_ROOT, KIND_INTERNAL, KIND_LEAF = 0, 1, 2

_HEAD = struct.Struct("<4sHBBIIIIIIddH")


@dataclass(frozen=True)
class TreeInfo:
    p: int
    m: int
    n_hat: int
    output_index: tuple
    mode: str
    model: str
    label: str


def _bits(delta, m) -> bytes:
    out = bytearray(math.ceil(m / 8))
    for k, b in enumerate(delta):
        if b:
            out[k // 8] |= 1 << (k % 8)
    return bytes(out)


def _unbits(raw: bytes, m) -> tuple:
    return tuple((raw[k // 8] >> (k % 8)) & 1 for k in range(m))


def _affine(S: Simplex) -> np.ndarray:
    inv = np.linalg.inv(S.affine_matrix())
    return inv[:S.p, :]


def _preorder_ids(tree: PartitionTree):
    order = [n.id for n in tree.preorder()]
    return order, {nid: k for k, nid in enumerate(order)}


def save(tree: PartitionTree, path, model: str = "M1", *, m: int | None = None,
         label: str | None = None, output_index=None) -> int:
    """Write a fully closed tree; returns the number of bytes written."""
    data = dumps(tree, model, m=m, label=label, output_index=output_index)
    with open(path, "wb") as fh:
        fh.write(data)
    return len(data)


def dumps(tree: PartitionTree, model: str = "M1", *, m: int | None = None,
          label: str | None = None, output_index=None) -> bytes:
    if model not in MODELS:
        raise ValueError(f"unknown storage model {model!r}")
    if tree.open_stack:
        raise ValueError("only fully closed trees can be saved")
    p = tree.p
    leaves = list(tree.leaves())
    if m is None:
        m = tree.meta.get("m", len(leaves[0].payload.delta))
    mode = tree.mode
    explicit = mode == "explicit"
    if output_index is None:
        output_index = tree.meta.get("output_index")
    if explicit:
        sol = leaves[0].payload
        if sol.columns is not None:
            output_index = sol.columns
        elif not output_index:
            output_index = tuple(range(sol.vertex_solutions.shape[1]))
    output_index = tuple(output_index or ())
    n_hat = len(output_index)
    label = label if label is not None else tree.meta.get("label", "")
    label_b = label.encode("utf-8")
    order, pos = _preorder_ids(tree)
    buf = io.BytesIO()
    nverts = len(tree.pool) if model == "M1" else 0
    dom = tree.domain.vertices
    buf.write(_HEAD.pack(MAGIC, VERSION, MODELS[model], MODES[mode], p, n_hat, m, nverts,
                         len(order), dom.shape[0], float(tree.meta.get("eps_a", 0.0)),
                         float(tree.meta.get("eps_r", 0.0)), len(label_b)))
    buf.write(label_b)
    buf.write(np.asarray(output_index, dtype="<u4").tobytes())
    buf.write(np.ascontiguousarray(dom, dtype="<f8").tobytes())
    if model == "M1":
        buf.write(np.ascontiguousarray(tree.pool.array(), dtype="<f8").tobytes())
    for nid in order:
        node = tree[nid]
        if node.simplex is None:
            buf.write(struct.pack("<B", KIND_ROOT))
        else:
            buf.write(struct.pack("<B", KIND_LEAF if node.is_leaf else KIND_INTERNAL))
            if model == "M1":
                buf.write(np.asarray(node.simplex.vertex_ids, dtype="<u4").tobytes())
            else:
                aff = node.affine if node.affine is not None else _affine(node.simplex)
                buf.write(np.ascontiguousarray(aff, dtype="<f8").tobytes())
        if node.children:
            buf.write(struct.pack("<B", len(node.children)))
            buf.write(np.asarray([pos[c] for c in node.children], dtype="<u4").tobytes())
        else:
            payload = node.payload
            buf.write(_bits(payload.delta, m))
            if explicit:
                X = payload.vertex_solutions
                if payload.columns is None:
                    X = X[:, list(output_index)]
                buf.write(np.ascontiguousarray(X, dtype="<f8").tobytes())
    body = buf.getvalue()
    return body + struct.pack("<I", zlib.crc32(body))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CorruptFile("truncated tree file")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        s = struct.Struct(fmt)
        return s.unpack(self.take(s.size))

    def floats(self, count: int) -> np.ndarray:
        return np.frombuffer(self.take(8 * count), dtype="<f8").astype(float)

    def ints(self, count: int) -> np.ndarray:
        return np.frombuffer(self.take(4 * count), dtype="<u4").astype(np.int64)


def load(path) -> PartitionTree:
    with open(path, "rb") as fh:
        return loads(fh.read())


def loads(data: bytes) -> PartitionTree:
    if len(data) < _HEAD.size + 4 or data[:4] != MAGIC:
        raise CorruptFile("bad magic")
    body, (crc,) = data[:-4], struct.unpack("<I", data[-4:])
    if zlib.crc32(body) != crc:
        raise CorruptFile("checksum mismatch")
    r = _Reader(body)
    (_, version, model_code, mode_code, p, n_hat, m, nverts, nnodes, ndom,
     eps_a, eps_r, label_len) = r.unpack(_HEAD.format)
    if version != VERSION:
        raise VersionMismatch(f"file version {version}, reader version {VERSION}")
    try:
        model = {v: k for k, v in MODELS.items()}[model_code]
        mode = {v: k for k, v in MODES.items()}[mode_code]
    except KeyError:
        raise CorruptFile("unknown model or mode code") from None
    label = r.take(label_len).decode("utf-8")
    output_index = tuple(int(i) for i in r.ints(n_hat))
    domain = PolytopeV(r.floats(ndom * p).reshape(ndom, p))
    pool = VertexPool(p)
    if model == "M1":
        table = r.floats(nverts * p).reshape(nverts, p)
        for k, v in enumerate(table):
            # bypass dedup so that ids are preserved exactly
            v = v.copy()
            v.setflags(write=False)
            pool._coords.append(v)
            pool._grid.setdefault(pool._key(v), []).append(k)
    nb = math.ceil(m / 8)
    tree = PartitionTree.empty(domain, pool, 0.0)
    parents: dict[int, int] = {}
    for k in range(nnodes):
        (kind,) = r.unpack("<B")
        simplex = None
        affine = None
        if kind not in (KIND_ROOT, KIND_INTERNAL, KIND_LEAF):
            raise CorruptFile(f"bad node kind {kind}")
        if kind != KIND_ROOT:
            if model == "M1":
                ids = r.ints(p + 1)
                if np.any(ids >= nverts):
                    raise CorruptFile("vertex index out of range")
                simplex = Simplex.from_ids(pool, [int(i) for i in ids])
            else:
                affine = r.floats(p * (p + 1)).reshape(p, p + 1)
                simplex = _simplex_from_affine(affine, pool)
        parent = parents.get(k)
        depth = 0 if parent is None else tree[parent].depth + 1
        node = TreeNode(k, simplex, parent, depth)
        node.affine = affine
        tree.nodes.append(node)
        if kind == KIND_LEAF:
            delta = _unbits(r.take(nb), m)
            if mode == "explicit":
                X = r.floats((p + 1) * n_hat).reshape(p + 1, n_hat)
                X.setflags(write=False)
                node.payload = ClosedExplicit(delta, X, output_index)
            elif mode == "semi":
                node.payload = ClosedSubopt(delta)
            else:
                node.payload = ClosedFeasible(delta)
        else:
            (nkids,) = r.unpack("<B")
            kids = [int(c) for c in r.ints(nkids)]
            if any(c <= k or c >= nnodes for c in kids):
                raise CorruptFile("bad child reference")
            node.children = kids
            for c in kids:
                parents[c] = k
    if r.pos != len(body):
        raise CorruptFile("trailing bytes in tree file")
    leaves = list(tree.leaves())
    tree.domain_volume = float(sum(n.volume for n in leaves))
    tree.mode = mode
    tree._closed_count = len(leaves)
    tree._closed_volume = tree.domain_volume
    tree._max_depth = max(n.depth for n in tree.nodes)
    tree.meta.update(eps_a=eps_a, eps_r=eps_r, label=label, output_index=output_index, m=m,
                     model=model)
    return tree


def _simplex_from_affine(affine: np.ndarray, pool: VertexPool) -> Simplex:
    p = affine.shape[0]
    full = np.vstack([affine, np.append(-affine[:, :p].sum(axis=0), 1.0 - affine[:, p].sum())])
    T = np.linalg.inv(full)
    V = T[:p, :].T
    return Simplex([pool.add(v) for v in V], V)


def read_info(path) -> TreeInfo:
    tree = load(path)
    return TreeInfo(tree.p, tree.meta["m"], len(tree.meta["output_index"]),
                    tree.meta["output_index"], tree.mode, tree.meta["model"], tree.meta["label"])


# -- size accounting -----------------------------------------------------------

def field_count_size(tree: PartitionTree, model: str = "M1", *, m: int | None = None,
                     n_hat: int | None = None, label: str | None = None) -> int:
    """Exact byte count of the layout computed from node and vertex counts."""
    p = tree.p
    nodes = list(tree.preorder())
    leaves = [n for n in nodes if n.is_leaf]
    if m is None:
        m = tree.meta.get("m", len(leaves[0].payload.delta))
    explicit = tree.mode == "explicit"
    if n_hat is None:
        if explicit:
            sol = leaves[0].payload
            n_hat = len(sol.columns) if sol.columns is not None else \
                len(tree.meta.get("output_index") or range(sol.vertex_solutions.shape[1]))
        else:
            n_hat = len(tree.meta.get("output_index") or ())
    label = label if label is not None else tree.meta.get("label", "")
    size = _HEAD.size + len(label.encode("utf-8")) + 4 * n_hat + 8 * p * tree.domain.vertices.shape[0]
    if model == "M1":
        size += 8 * p * len(tree.pool)
    per_simplex = 4 * (p + 1) if model == "M1" else 8 * p * (p + 1)
    for n in nodes:
        size += 1
        if n.simplex is not None:
            size += per_simplex
        if n.children:
            size += 1 + 4 * len(n.children)
        else:
            size += math.ceil(m / 8)
            if explicit:
                size += 8 * n_hat * (p + 1)
    return size + 4


def reference_size(lam: int, p: int, m: int, n_hat: int, model: str, mode: str,
                   mu_f: int = 8, mu_i: int = 4, mu_b: int = 1) -> float:
    """Idealized sizes assuming a perfect binary tree over a simplex domain.

    Commutation bits are counted at ``mu_b`` bytes each.
    """
    if model == "M1":
        if mode == "explicit":
            return lam * (mu_f * p + (p + 1) * (1.5 * mu_i + mu_f * n_hat)) + mu_f * p * p
        return lam * (mu_f * p + mu_i * (p + 1) + mu_b * m) + mu_f * p * p
    if mode == "explicit":
        return 1.5 * lam * mu_f * p * (p + 1) + lam * (p + 1) * n_hat * mu_f
    return lam * mu_f * p * (p + 1) + lam * m * mu_b
