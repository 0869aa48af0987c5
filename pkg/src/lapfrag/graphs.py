"""Undirected weighted graphs and their Laplacians.

Graphs are immutable after construction: node count plus a canonical,
duplicate-free edge list with strictly positive weights. The Laplacian is
built densely (desk scale); row sums are zero by construction.
"""

from __future__ import annotations

import io
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError

__all__ = [
    "Graph",
    "LaplacianMatrix",
    "build_laplacian",
    "gen_banded_path",
    "is_connected",
    "graph_distance",
    "read_graph",
    "write_graph",
]


@dataclass(frozen=True)
class Graph:
    """Undirected weighted graph on nodes 0..n-1.

    Edges are stored as (i, j, w) with i < j, sorted, no duplicates, w > 0.
    """

    n: int
    edges: tuple[tuple[int, int, float], ...]

    def __post_init__(self):
        if self.n < 1:
            raise ValidationError(f"node count must be >= 1, got {self.n}")
        seen = set()
        canon = []
        for (i, j, w) in self.edges:
            if i == j:
                raise ValidationError(f"self-loop on node {i}")
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise ValidationError(f"edge ({i},{j}) out of range for n={self.n}")
            if not (w > 0):
                raise ValidationError(f"edge ({i},{j}) has non-positive weight {w}")
            key = (min(i, j), max(i, j))
            if key in seen:
                raise ValidationError(f"duplicate edge ({i},{j})")
            seen.add(key)
            canon.append((key[0], key[1], float(w)))
        canon.sort()
        object.__setattr__(self, "edges", tuple(canon))

    @property
    def m(self) -> int:
        return len(self.edges)

    def adjacency_lists(self) -> list[list[int]]:
        adj = [[] for _ in range(self.n)]
        for (i, j, _) in self.edges:
            adj[i].append(j)
            adj[j].append(i)
        return adj

    def degrees(self) -> np.ndarray:
        """Weighted degree of every node."""
        deg = np.zeros(self.n)
        for (i, j, w) in self.edges:
            deg[i] += w
            deg[j] += w
        return deg


@dataclass(frozen=True)
class LaplacianMatrix:
    """Dense symmetric PSD Laplacian with zero row sums."""

    n: int
    entries: np.ndarray = field(repr=False)

    def __post_init__(self):
        a = np.asarray(self.entries, dtype=float)
        if a.shape != (self.n, self.n):
            raise ValidationError(f"Laplacian shape {a.shape} != ({self.n},{self.n})")
        a = a.copy()
        a.setflags(write=False)
        object.__setattr__(self, "entries", a)

    @property
    def max_degree(self) -> float:
        return float(np.max(np.diag(self.entries))) if self.n else 0.0


def build_laplacian(g: Graph) -> LaplacianMatrix:
    """L = D - A, assembled symmetrically so row sums vanish exactly."""
    L = np.zeros((g.n, g.n))
    for (i, j, w) in g.edges:
        L[i, j] -= w
        L[j, i] -= w
        L[i, i] += w
        L[j, j] += w
    return LaplacianMatrix(g.n, L)


def gen_banded_path(n: int, b: int) -> Graph:
    """Path-like band graph: unit-weight edges between all pairs with |i-j| <= b.

    Interior nodes have degree 2b; the degree ramps from b to 2b across the
    first and last b indices (the boundary heterogeneity strips).
    """
    if not (1 <= b < n):
        raise ValidationError(f"band half-width must satisfy 1 <= b < n, got b={b}, n={n}")
    edges = []
    for i in range(n):
        for j in range(i + 1, min(i + b + 1, n)):
            edges.append((i, j, 1.0))
    return Graph(n, tuple(edges))


def is_connected(g: Graph) -> bool:
    """Breadth-first reachability from node 0."""
    if g.n == 1:
        return True
    adj = g.adjacency_lists()
    seen = np.zeros(g.n, dtype=bool)
    seen[0] = True
    queue = deque([0])
    count = 1
    while queue:
        u = queue.popleft()
        for v in adj[u]:
            if not seen[v]:
                seen[v] = True
                count += 1
                queue.append(v)
    return count == g.n


def graph_distance(g: Graph, sources) -> np.ndarray:
    """Unweighted shortest-hop distance from every node to the nearest source."""
    sources = sorted(set(int(s) for s in sources))
    if not sources:
        raise ValidationError("source set is empty")
    for s in sources:
        if not (0 <= s < g.n):
            raise ValidationError(f"source {s} out of range for n={g.n}")
    adj = g.adjacency_lists()
    dist = np.full(g.n, -1, dtype=np.int64)
    queue = deque()
    for s in sources:
        dist[s] = 0
        queue.append(s)
    while queue:
        u = queue.popleft()
        du = dist[u]
        for v in adj[u]:
            if dist[v] < 0:
                dist[v] = du + 1
                queue.append(v)
    return dist


# ---------------------------------------------------------------------------
# File formats
# ---------------------------------------------------------------------------

def _parse_edge_list(text: str) -> Graph:
    n_declared = None
    raw = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        parts = body.split()
        if parts[0] == "n":
            if len(parts) != 2:
                raise ValidationError(f"line {lineno}: malformed header {line!r}")
            try:
                n_declared = int(parts[1])
            except ValueError:
                raise ValidationError(f"line {lineno}: bad node count {parts[1]!r}") from None
            continue
        if len(parts) not in (2, 3):
            raise ValidationError(f"line {lineno}: expected 'i j [w]', got {line!r}")
        try:
            i, j = int(parts[0]), int(parts[1])
            w = float(parts[2]) if len(parts) == 3 else 1.0
        except ValueError:
            raise ValidationError(f"line {lineno}: malformed edge {line!r}") from None
        if i == j:
            raise ValidationError(f"line {lineno}: self-loop on node {i}")
        if not (w > 0):
            raise ValidationError(f"line {lineno}: non-positive weight {w}")
        key = (min(i, j), max(i, j))
        if key in raw:
            if raw[key] != w:
                raise ValidationError(
                    f"line {lineno}: edge ({i},{j}) repeated with conflicting weight"
                )
            continue
        raw[key] = w
    if not raw and n_declared is None:
        raise ValidationError("no edges and no node count header")
    max_idx = max((k[1] for k in raw), default=-1)
    n = n_declared if n_declared is not None else max_idx + 1
    if max_idx >= n:
        raise ValidationError(f"edge index {max_idx} out of declared range n={n}")
    return Graph(n, tuple((i, j, w) for (i, j), w in sorted(raw.items())))


def _parse_matrix_market(text: str) -> Graph:
    import scipy.io

    try:
        mat = scipy.io.mmread(io.StringIO(text))
    except Exception as exc:
        raise ValidationError(f"Matrix Market parse failure: {exc}") from exc
    A = np.asarray(mat.todense() if hasattr(mat, "todense") else mat, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValidationError(f"Matrix Market input is not square: {A.shape}")
    n = A.shape[0]
    if not np.allclose(A, A.T, rtol=0, atol=1e-12 * max(1.0, np.abs(A).max())):
        raise ValidationError("Matrix Market input has asymmetric weights")
    off = A - np.diag(np.diag(A))
    if np.any(off < 0):
        # Laplacian stored: adjacency is the negated off-diagonal part
        W = -off
        if np.any(W < 0):
            raise ValidationError("mixed-sign off-diagonals: neither adjacency nor Laplacian")
    else:
        W = off
    edges = []
    for i in range(n):
        for j in range(i + 1, n):
            if W[i, j] != 0.0:
                if W[i, j] < 0:
                    raise ValidationError(f"negative weight on edge ({i},{j})")
                edges.append((i, j, float(W[i, j])))
    return Graph(n, tuple(edges))


def read_graph(path: str, format: str | None = None) -> Graph:
    """Read a graph from an edge-list or Matrix Market file.

    Format is inferred from the extension (.mtx / .mm for Matrix Market)
    when not given explicitly.
    """
    if format is None:
        lowered = str(path).lower()
        format = "matrix-market" if lowered.endswith((".mtx", ".mm")) else "edge-list"
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    if format == "edge-list":
        return _parse_edge_list(text)
    if format == "matrix-market":
        return _parse_matrix_market(text)
    raise ValidationError(f"unknown graph format {format!r}")


def write_graph(g: Graph, path: str, format: str | None = None) -> None:
    """Write a graph as an edge list or Matrix Market symmetric adjacency."""
    if format is None:
        lowered = str(path).lower()
        format = "matrix-market" if lowered.endswith((".mtx", ".mm")) else "edge-list"
    if format == "edge-list":
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"n {g.n}\n")
            for (i, j, w) in g.edges:
                fh.write(f"{i} {j} {w!r}\n")
        return
    if format == "matrix-market":
        import scipy.io
        import scipy.sparse as sp

        rows = [e[0] for e in g.edges]
        cols = [e[1] for e in g.edges]
        vals = [e[2] for e in g.edges]
        A = sp.coo_matrix((vals, (rows, cols)), shape=(g.n, g.n))
        A = A + A.T
        with open(path, "wb") as fh:
            scipy.io.mmwrite(fh, A, symmetry="symmetric")
        return
    raise ValidationError(f"unknown graph format {format!r}")
