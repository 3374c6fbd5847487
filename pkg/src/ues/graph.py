"""Weighted digraphs, Laplacians and the orthonormal complement pair (r, R)."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

BALANCE_TOL = 1e-12


class GraphError(ValueError):
    pass


@dataclass(frozen=True)
class Digraph:
    """Directed graph given by its adjacency matrix.

    ``weights[i, j] > 0`` means agent ``i`` receives information from agent ``j``.
    """

    weights: np.ndarray

    def __post_init__(self) -> None:
        w = np.array(self.weights, dtype=float)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise GraphError(f"adjacency must be square, got shape {w.shape}")
        if w.shape[0] < 2:
            raise GraphError("digraph needs at least 2 nodes")
        if not np.all(np.isfinite(w)):
            raise GraphError("adjacency weights must be finite")
        if np.any(w < 0):
            raise GraphError("adjacency weights must be nonnegative")
        if np.any(np.diag(w) != 0):
            raise GraphError("adjacency diagonal must be zero (a_ii = 0)")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def n(self) -> int:
        return self.weights.shape[0]

    @property
    def out_degree(self) -> np.ndarray:
        return self.weights.sum(axis=1)

    @property
    def in_degree(self) -> np.ndarray:
        return self.weights.sum(axis=0)

    @classmethod
    def from_edges(cls, n: int, edges) -> Digraph:
        """Build from ``[i, j, w]`` triples with 1-based node indices."""
        w = np.zeros((n, n))
        for edge in edges:
            if len(edge) not in (2, 3):
                raise GraphError(f"edge must be [i, j] or [i, j, w], got {edge!r}")
            i, j = int(edge[0]), int(edge[1])
            weight = float(edge[2]) if len(edge) == 3 else 1.0
            if not (1 <= i <= n and 1 <= j <= n):
                raise GraphError(f"edge {edge!r} out of range for n={n}")
            w[i - 1, j - 1] = weight
        return cls(w)


def ring(n: int = 5) -> Digraph:
    """Directed ring: node i receives from node i+1 (mod n)."""
    w = np.zeros((n, n))
    for i in range(n):
        w[i, (i + 1) % n] = 1.0
    return Digraph(w)


def complete(n: int) -> Digraph:
    return Digraph(np.ones((n, n)) - np.eye(n))


def circulant(n: int, offsets) -> Digraph:
    """Node i receives from i + o (mod n) for every offset o."""
    w = np.zeros((n, n))
    for i in range(n):
        for o in offsets:
            if o % n == 0:
                raise GraphError(f"offset {o} is a self-loop for n={n}")
            w[i, (i + o) % n] = 1.0
    return Digraph(w)


# circulant5 is the default: unlike ring5, its PI-consensus modes stay
# stable at gamma = 10.
PRESETS = {
    "circulant5": lambda: circulant(5, (1, 2, 3)),
    "ring5": lambda: ring(5),
    "complete": lambda: complete(5),
}
DEFAULT_GRAPH = "circulant5"


def preset(name: str) -> Digraph:
    try:
        return PRESETS[name]()
    except KeyError:
        raise GraphError(f"unknown graph preset {name!r}; choose from {sorted(PRESETS)}") from None


@dataclass(frozen=True)
class LaplacianPair:
    L: np.ndarray
    r: np.ndarray
    R: np.ndarray = field(repr=False)

    @property
    def reduced(self) -> np.ndarray:
        """R^T L R, the Laplacian restricted to the disagreement subspace."""
        return self.R.T @ self.L @ self.R


def complement_basis(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Return r = 1/sqrt(n) and an orthonormal R with R^T r = 0.

    Modified Gram-Schmidt over e_2..e_n after projecting off r, so the result
    depends only on n.
    """
    r = np.full(n, 1.0 / np.sqrt(n))
    basis = [r]
    for k in range(1, n):
        v = np.zeros(n)
        v[k] = 1.0
        for _ in range(2):  # reorthogonalize once
            for b in basis:
                v = v - (b @ v) * b
        v /= np.linalg.norm(v)
        basis.append(v)
    return r, np.column_stack(basis[1:])


def laplacian(g: Digraph) -> LaplacianPair:
    L = np.diag(g.out_degree) - g.weights
    r, R = complement_basis(g.n)
    return LaplacianPair(L=L, r=r, R=R)


def is_weight_balanced(g: Digraph, tol: float = BALANCE_TOL) -> bool:
    return bool(np.max(np.abs(g.in_degree - g.out_degree)) <= tol)


def _reachable(adj: np.ndarray, start: int) -> np.ndarray:
    seen = np.zeros(adj.shape[0], dtype=bool)
    seen[start] = True
    stack = [start]
    while stack:
        u = stack.pop()
        for v in np.flatnonzero(adj[u]):
            if not seen[v]:
                seen[v] = True
                stack.append(v)
    return seen


def is_strongly_connected(g: Digraph) -> bool:
    adj = g.weights > 0
    return bool(_reachable(adj, 0).all() and _reachable(adj.T, 0).all())


def kron_expand(L: np.ndarray, d: int) -> np.ndarray:
    if d < 1:
        raise ValueError("dimension must be >= 1")
    return np.kron(L, np.eye(d))
