"""Graph discriminants: spanning-tree generating polynomials.

The discriminant of a connected graph assigns one variable per edge and sums,
over all spanning trees, the product of the tree's edge variables.  It is a
homogeneous positive polynomial of degree V-1, so it drops straight into the
optimizer; it is also log-concave, which the diagnostics probes exercise.

Two independent evaluation routes are kept deliberately separate so they can
cross-check each other: explicit enumeration of spanning trees (exponential,
guarded) and the weighted-Laplacian cofactor (matrix-tree), which for integer
weights uses exact fraction-free elimination.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .expr import SparsePolynomial

__all__ = [
    "Graph",
    "enumerate_spanning_trees",
    "discriminant_polynomial",
    "eval_matrix_tree",
    "eval_matrix_tree_log",
]

# Enumeration is Theta(C(E, V-1)); past this many edges callers should use the
# matrix-tree route instead.
_MAX_ENUM_EDGES = 24


@dataclass(eq=False)
class Graph:
    """Undirected multigraph with one variable index per edge.

    ``edges`` lists (u, v) endpoint pairs; parallel edges are allowed,
    self-loops are not (they lie in no spanning tree and would make the
    discriminant vacuously independent of their variable).  ``var_indices``
    maps each edge to its variable; by default edge k owns variable k, but
    indices may repeat, in which case monomials can merge with coefficient
    greater than one.
    """

    vertices: int
    edges: tuple[tuple[int, int], ...]
    var_indices: tuple[int, ...] = None  # type: ignore[assignment]

    def __post_init__(self):
        if isinstance(self.vertices, bool) or not isinstance(self.vertices, int) or self.vertices < 2:
            raise ValueError(f"vertex count must be an integer >= 2, got {self.vertices!r}")
        edges = []
        for i, e in enumerate(tuple(self.edges)):
            try:
                u, v = e
            except (TypeError, ValueError):
                raise ValueError(f"edge {i} must be a (u, v) pair, got {e!r}") from None
            for w in (u, v):
                if isinstance(w, bool) or not isinstance(w, int) or not 0 <= w < self.vertices:
                    raise ValueError(
                        f"edge {i} endpoint {w!r} is not a vertex in [0, {self.vertices})"
                    )
            if u == v:
                raise ValueError(f"edge {i} is a self-loop at vertex {u}; self-loops are not allowed")
            edges.append((u, v))
        self.edges = tuple(edges)
        m = len(self.edges)
        if m == 0:
            raise ValueError("graph has no edges")
        if self.var_indices is None:
            self.var_indices = tuple(range(m))
        else:
            vi = tuple(self.var_indices)
            if len(vi) != m:
                raise ValueError(f"var_indices must have one entry per edge ({m}), got {len(vi)}")
            for k in vi:
                if isinstance(k, bool) or not isinstance(k, int) or not 0 <= k < m:
                    raise ValueError(f"edge variable index {k!r} is not in [0, {m})")
            self.var_indices = vi
        # Connectivity: union-find over the edge list.
        parent = list(range(self.vertices))

        def find(a: int) -> int:
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        components = self.vertices
        for u, v in self.edges:
            ru, rv = find(u), find(v)
            if ru != rv:
                parent[ru] = rv
                components -= 1
        if components != 1:
            raise ValueError("graph is not connected; the discriminant is zero")

    @property
    def n_vars(self) -> int:
        return len(self.edges)

    @classmethod
    def from_json_dict(cls, data, path: str = "graph") -> "Graph":
        if not isinstance(data, dict):
            raise ValueError(f"{path}: expected an object, got {type(data).__name__}")
        extra = set(data) - {"vertices", "edges"}
        if extra:
            raise ValueError(f"{path}: unexpected field(s) {sorted(extra)!r}")
        if "vertices" not in data or "edges" not in data:
            raise ValueError(f"{path}: requires 'vertices' and 'edges'")
        edges = data["edges"]
        if not isinstance(edges, list):
            raise ValueError(f"{path}.edges: expected a list of [u, v] pairs")
        try:
            return cls(data["vertices"], tuple(tuple(e) for e in edges))
        except ValueError as err:
            raise ValueError(f"{path}: {err}") from None

    def to_json_dict(self) -> dict:
        return {"vertices": self.vertices, "edges": [list(e) for e in self.edges]}


def enumerate_spanning_trees(graph: Graph) -> list[tuple[int, ...]]:
    """All spanning trees, as sorted tuples of edge positions.

    Complete and duplicate-free; deterministic lexicographic order.  Guarded
    to at most 24 edges - beyond that use :func:`eval_matrix_tree`, which
    computes the same total weight without enumeration.
    """
    m = len(graph.edges)
    if m > _MAX_ENUM_EDGES:
        raise ValueError(
            f"enumeration over {m} edges is intractable (limit {_MAX_ENUM_EDGES}); "
            "use eval_matrix_tree for large graphs"
        )
    V = graph.vertices
    need = V - 1
    trees = []
    for combo in itertools.combinations(range(m), need):
        parent = list(range(V))

        def find(a: int) -> int:
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        merges = 0
        ok = True
        for ei in combo:
            u, v = graph.edges[ei]
            ru, rv = find(u), find(v)
            if ru == rv:
                ok = False  # cycle
                break
            parent[ru] = rv
            merges += 1
        if ok and merges == need:
            trees.append(combo)
    return trees


def discriminant_polynomial(graph: Graph) -> SparsePolynomial:
    """The spanning-tree generating polynomial over the edge variables.

    Homogeneous of degree V-1 with positive integer coefficients; every
    coefficient is 1 unless edges sharing a variable index let distinct trees
    produce the same monomial.
    """
    trees = enumerate_spanning_trees(graph)
    n = graph.n_vars
    terms = []
    for tree in trees:
        exps = [0] * n
        for ei in tree:
            exps[graph.var_indices[ei]] += 1
        terms.append((1.0, tuple(exps)))
    return SparsePolynomial(n, tuple(terms))


def _bareiss_det(mat: list[list[int]]) -> int:
    """Exact determinant of an integer matrix by fraction-free elimination."""
    a = [row[:] for row in mat]
    n = len(a)
    if n == 0:
        return 1
    sign = 1
    prev = 1
    for k in range(n - 1):
        if a[k][k] == 0:
            pivot = next((i for i in range(k + 1, n) if a[i][k] != 0), None)
            if pivot is None:
                return 0
            a[k], a[pivot] = a[pivot], a[k]
            sign = -sign
        for i in range(k + 1, n):
            for j in range(k + 1, n):
                a[i][j] = (a[i][j] * a[k][k] - a[i][k] * a[k][j]) // prev
            a[i][k] = 0
        prev = a[k][k]
    return sign * a[n - 1][n - 1]


def _validated_weights(graph: Graph, weights) -> list:
    w = list(weights)
    if len(w) != graph.n_vars:
        raise ValueError(f"expected {graph.n_vars} edge weights, got {len(w)}")
    for i, v in enumerate(w):
        if isinstance(v, bool):
            raise ValueError(f"weight {i} must be a number, got {v!r}")
        if not (isinstance(v, (int, float)) or isinstance(v, (np.integer, np.floating))):
            raise ValueError(f"weight {i} must be a number, got {v!r}")
        if not math.isfinite(float(v)) or float(v) <= 0.0:
            raise ValueError(f"edge weights must be finite and positive; weight {i} = {v!r}")
    return w


def _laplacian_minor(graph: Graph, w: list, as_int: bool):
    V = graph.vertices
    if as_int:
        L = [[0] * V for _ in range(V)]
    else:
        L = np.zeros((V, V))
    for (u, v), vi in zip(graph.edges, graph.var_indices):
        wt = w[vi] if as_int else float(w[vi])
        L[u][u] += wt
        L[v][v] += wt
        L[u][v] -= wt
        L[v][u] -= wt
    if as_int:
        return [row[:-1] for row in L[:-1]]
    return L[:-1, :-1]


def eval_matrix_tree(graph: Graph, weights):
    """Discriminant value at positive edge weights via the weighted-Laplacian
    cofactor - no tree enumeration.

    Integer weights take an exact fraction-free elimination path and return a
    Python int; float weights go through LU with partial pivoting
    (``numpy.linalg.det``) and return a float.
    """
    w = _validated_weights(graph, weights)
    if all(isinstance(v, (int, np.integer)) for v in w):
        minor = _laplacian_minor(graph, [int(v) for v in w], as_int=True)
        return _bareiss_det(minor)
    minor = _laplacian_minor(graph, w, as_int=False)
    return float(np.linalg.det(minor))


def eval_matrix_tree_log(graph: Graph, weights) -> float:
    """``log`` of the discriminant value, stable for graphs whose tree totals
    overflow a float.  The cofactor of a positively weighted connected graph
    is positive definite, so a nonpositive sign indicates numerical breakdown
    and raises."""
    w = _validated_weights(graph, weights)
    minor = _laplacian_minor(graph, [float(v) for v in w], as_int=False)
    sign, logdet = np.linalg.slogdet(minor)
    if sign <= 0.0:
        raise ValueError("Laplacian cofactor lost positive-definiteness numerically")
    return float(logdet)
