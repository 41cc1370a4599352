"""
Communication graphs and symmetric mixing matrices.
"""

from __future__ import annotations

import heapq
import json
from collections import deque
from dataclasses import dataclass, field
from typing import Optional

import numpy as np


class GraphError(ValueError):
    pass


@dataclass(frozen=True)
class CommGraph:
    """Undirected simple graph on nodes ``0..n-1``.

    Edges are stored as sorted ``(i, j)`` pairs with ``i < j``.
    """

    n: int
    edges: frozenset
    kind: str = "custom"
    seed: Optional[int] = None

    def __post_init__(self):
        if self.n < 1:
            raise GraphError("a graph needs at least one node")
        norm = set()
        for e in self.edges:
            i, j = (int(v) for v in e)
            if i == j:
                raise GraphError(f"self-loop at node {i}")
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise GraphError(f"edge {(i, j)} outside [0, {self.n})")
            norm.add((min(i, j), max(i, j)))
        object.__setattr__(self, "edges", frozenset(norm))
        if not self.connected():
            raise GraphError("communication graph must be connected")

    def neighbors(self):
        nbrs = [[] for _ in range(self.n)]
        for i, j in sorted(self.edges):
            nbrs[i].append(j)
            nbrs[j].append(i)
        return nbrs

    def degrees(self):
        deg = np.zeros(self.n, dtype=int)
        for i, j in self.edges:
            deg[i] += 1
            deg[j] += 1
        return deg

    def connected(self):
        nbrs = self.neighbors()
        seen = {0}
        queue = deque([0])
        while queue:
            for v in nbrs[queue.popleft()]:
                if v not in seen:
                    seen.add(v)
                    queue.append(v)
        return len(seen) == self.n

    def to_dict(self):
        return {
            "n": self.n,
            "kind": self.kind,
            "seed": self.seed,
            "edges": [list(e) for e in sorted(self.edges)],
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            n=int(d["n"]),
            edges=frozenset(tuple(e) for e in d["edges"]),
            kind=d.get("kind", "custom"),
            seed=d.get("seed"),
        )

    def dumps(self):
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def loads(cls, text):
        return cls.from_dict(json.loads(text))


def _prufer_decode(seq, n):
    degree = [1] * n
    for v in seq:
        degree[v] += 1
    leaves = [v for v in range(n) if degree[v] == 1]
    heapq.heapify(leaves)
    edges = []
    for v in seq:
        leaf = heapq.heappop(leaves)
        edges.append((leaf, v))
        degree[v] -= 1
        if degree[v] == 1:
            heapq.heappush(leaves, v)
    u, w = heapq.heappop(leaves), heapq.heappop(leaves)
    edges.append((u, w))
    return edges


def generate_tree(n, rng) -> CommGraph:
    """Uniformly random labeled tree, decoded from a random Pruefer sequence.

    ``rng`` is a ``numpy.random.Generator`` or an integer seed.
    """
    if n < 1:
        raise GraphError("a tree needs at least one node")
    seed = None
    if not isinstance(rng, np.random.Generator):
        seed = int(rng)
        rng = np.random.default_rng(seed)
    if n == 1:
        return CommGraph(1, frozenset(), kind="tree", seed=seed)
    if n == 2:
        return CommGraph(2, frozenset({(0, 1)}), kind="tree", seed=seed)
    seq = [int(v) for v in rng.integers(0, n, size=n - 2)]
    return CommGraph(n, frozenset(_prufer_decode(seq, n)), kind="tree", seed=seed)


def generate_named(kind, n) -> CommGraph:
    if kind == "complete":
        if n < 1:
            raise GraphError("complete graph needs n >= 1")
        edges = {(i, j) for i in range(n) for j in range(i + 1, n)}
    elif kind == "path":
        if n < 1:
            raise GraphError("path graph needs n >= 1")
        edges = {(i, i + 1) for i in range(n - 1)}
    elif kind == "ring":
        if n < 3:
            raise GraphError(f"ring graph needs n >= 3, got {n}")
        edges = {(i, (i + 1) % n) for i in range(n)}
    else:
        raise GraphError(f"unknown graph kind {kind!r}")
    return CommGraph(n, frozenset(edges), kind=kind)


@dataclass(frozen=True)
class MixingMatrix:
    """Symmetric, nonnegative, row-stochastic W with cached spectral data.

    ``sigma`` is the second largest singular value of W and
    ``norm_i_minus_w`` the spectral norm of ``I - W``.
    """

    W: np.ndarray
    sigma: float = field(init=False)
    norm_i_minus_w: float = field(init=False)

    def __post_init__(self):
        W = np.array(self.W, dtype=float)
        if W.ndim != 2 or W.shape[0] != W.shape[1]:
            raise GraphError("mixing matrix must be square")
        if not np.array_equal(W, W.T):
            raise GraphError("mixing matrix must be symmetric")
        if np.any(W < 0):
            raise GraphError("mixing matrix must be nonnegative")
        if np.max(np.abs(W.sum(axis=1) - 1.0)) > 1e-12:
            raise GraphError("mixing matrix rows must sum to one")
        W.flags.writeable = False
        eig = np.linalg.eigvalsh(W)
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "sigma", _second_abs(eig))
        object.__setattr__(self, "norm_i_minus_w", float(np.max(np.abs(1.0 - eig))))

    @property
    def n(self):
        return self.W.shape[0]

    @property
    def q(self):
        """Squared spectral norm of ``I - W``."""
        return self.norm_i_minus_w ** 2


def _second_abs(eig):
    if eig.size < 2:
        return 0.0
    # the Perron eigenvalue 1 is always present; drop one copy of it
    mags = np.sort(np.abs(eig))[::-1]
    return float(mags[1])


def second_singular_value(W) -> float:
    """Second largest singular value of a symmetric stochastic matrix.

    Equal to the second largest eigenvalue magnitude.  A 1x1 matrix has
    no second value and gets 0 by convention.
    """
    W = np.asarray(W.W if isinstance(W, MixingMatrix) else W, dtype=float)
    if not np.array_equal(W, W.T):
        raise GraphError("second_singular_value expects a symmetric matrix")
    return _second_abs(np.linalg.eigvalsh(W))


def metropolis_weights(g: CommGraph) -> MixingMatrix:
    """Metropolis-Hastings weights ``w_ij = 1 / (1 + max(deg_i, deg_j))``."""
    if not g.connected():
        raise GraphError("metropolis_weights needs a connected graph")
    deg = g.degrees()
    W = np.zeros((g.n, g.n))
    for i, j in g.edges:
        W[i, j] = W[j, i] = 1.0 / (1.0 + max(deg[i], deg[j]))
    # diagonal last so the off-diagonal entries stay bit-symmetric
    np.fill_diagonal(W, 0.0)
    np.fill_diagonal(W, 1.0 - W.sum(axis=1))
    return MixingMatrix(W)


def lazy_laplacian_weights(g: CommGraph, eps=None) -> MixingMatrix:
    """``W = I - eps * Laplacian``; ``eps`` defaults to ``1 / (1 + max degree)``."""
    deg = g.degrees()
    if eps is None:
        eps = 1.0 / (1.0 + deg.max()) if g.n > 1 else 0.0
    if not 0 <= eps * deg.max() <= 1:
        raise GraphError("eps too large: W would have negative diagonal entries")
    A = np.zeros((g.n, g.n))
    for i, j in g.edges:
        A[i, j] = A[j, i] = 1.0
    W = eps * A
    np.fill_diagonal(W, 1.0 - W.sum(axis=1))
    return MixingMatrix(W)


def mix(W, X):
    """One round of neighbor averaging, ``W @ X``."""
    Wm = W.W if isinstance(W, MixingMatrix) else np.asarray(W)
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] != Wm.shape[1]:
        raise GraphError(f"cannot mix a {X.shape} matrix with a {Wm.shape} mixing matrix")
    return Wm @ X
