"""Expression trees for positive objectives with overflow-safe log evaluation.

The node set (variables, positive constants, sums, products, positive powers)
is closed under exactly the operations that keep an objective smooth,
increasing, and log-log-convex on the positive orthant, so every tree built
from these constructors is a valid objective for the multiplicative update in
:mod:`kneejerk.mapping` by construction.

Evaluation works entirely in the log domain: one downward pass computes the
log-value of every node, one upward pass accumulates softmax-weighted adjoints.
This keeps objectives such as ``x**34 * y**38 * (1 + 2x)**125`` finite where a
direct evaluation would overflow or underflow, and it returns the gradient
weights ``g_i = x_i * dZ/dx_i / Z`` as exact nonnegative numbers (the tree
contains no subtraction).

Expressions are immutable by convention: construct them, never mutate them.
All functions here are pure, so sharing trees across threads is safe.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = [
    "KneeJerkExpr",
    "Var",
    "Const",
    "Sum",
    "Prod",
    "Pow",
    "LogEval",
    "SparsePolynomial",
    "construct_expression",
    "expression_to_json_dict",
    "polynomial_to_expression",
    "eval_log",
    "hessian_log_u",
]

_NEG_INF = float("-inf")


@dataclass
class KneeJerkExpr:
    """Base class for objective expression nodes."""

    def children(self) -> tuple["KneeJerkExpr", ...]:
        return ()

    @property
    def n_vars(self) -> int:
        """1 + the largest variable index in the tree (0 for constant trees)."""
        n = 0
        for node in _postorder(self):
            if type(node) is Var:
                n = max(n, node.index + 1)
        return n


@dataclass
class Var(KneeJerkExpr):
    """A single coordinate ``x_i``."""

    index: int

    def __post_init__(self):
        if not isinstance(self.index, int) or isinstance(self.index, bool) or self.index < 0:
            raise ValueError(
                f"variable index must be a nonnegative integer, got {self.index!r}"
            )


@dataclass
class Const(KneeJerkExpr):
    """A positive constant."""

    value: float

    def __post_init__(self):
        v = self.value
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ValueError(f"constant value must be a number, got {v!r}")
        v = float(v)
        if not math.isfinite(v) or v <= 0.0:
            raise ValueError(f"constant must be finite and positive, got {v!r}")
        self.value = v


@dataclass
class Sum(KneeJerkExpr):
    """Sum of one or more subexpressions."""

    terms: tuple[KneeJerkExpr, ...]

    def __post_init__(self):
        self.terms = tuple(self.terms)
        if not self.terms:
            raise ValueError("sum node requires at least one term")
        for t in self.terms:
            if not isinstance(t, KneeJerkExpr):
                raise ValueError(f"sum term must be an expression node, got {t!r}")

    def children(self):
        return self.terms


@dataclass
class Prod(KneeJerkExpr):
    """Product of one or more subexpressions."""

    factors: tuple[KneeJerkExpr, ...]

    def __post_init__(self):
        self.factors = tuple(self.factors)
        if not self.factors:
            raise ValueError("product node requires at least one factor")
        for f in self.factors:
            if not isinstance(f, KneeJerkExpr):
                raise ValueError(f"product factor must be an expression node, got {f!r}")

    def children(self):
        return self.factors


@dataclass
class Pow(KneeJerkExpr):
    """A subexpression raised to a positive (possibly fractional) power."""

    base: KneeJerkExpr
    exponent: float

    def __post_init__(self):
        if not isinstance(self.base, KneeJerkExpr):
            raise ValueError(f"power base must be an expression node, got {self.base!r}")
        p = self.exponent
        if isinstance(p, bool) or not isinstance(p, (int, float)):
            raise ValueError(f"power exponent must be a number, got {p!r}")
        p = float(p)
        if not math.isfinite(p) or p <= 0.0:
            raise ValueError(f"power exponent must be finite and positive, got {p!r}")
        self.exponent = p

    def children(self):
        return (self.base,)


@dataclass(eq=False)
class LogEval:
    """Result of a log-domain evaluation.

    Attributes
    ----------
    W : float
        ``log Z(x)``.
    g : numpy.ndarray
        Gradient weights ``g_i = x_i * dZ/dx_i / Z``, one per coordinate of
        the evaluated point.  Nonnegative exactly.
    """

    W: float
    g: np.ndarray


def _postorder(root: KneeJerkExpr) -> list[KneeJerkExpr]:
    """Children-before-parents node order; shared subtrees appear once."""
    order = []
    seen = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for child in node.children():
            stack.append((child, False))
    return order


def _eval_log_raw(expr: KneeJerkExpr, x: np.ndarray) -> tuple[float, np.ndarray]:
    """Two-pass log-domain evaluation; assumes ``x`` is a validated
    nonnegative 1-D array of sufficient length.

    Zero coordinates are handled as limits: they carry log-value -inf, get
    softmax weight exactly 0.0 at every sum node, and therefore contribute
    exactly 0.0 to the gradient weights.  If the objective itself vanishes on
    the support of ``x`` the returned W is -inf and g is meaningless; callers
    must check W before using g.
    """
    order = _postorder(expr)
    with np.errstate(divide="ignore"):
        u = np.log(x)

    vals: dict[int, float] = {}
    for node in order:
        t = type(node)
        if t is Var:
            if node.index >= x.size:
                raise ValueError(
                    f"expression references variable {node.index} but the point "
                    f"has only {x.size} coordinates"
                )
            v = float(u[node.index])
        elif t is Const:
            v = math.log(node.value)
        elif t is Prod:
            v = 0.0
            for c in node.factors:
                v += vals[id(c)]
        elif t is Pow:
            v = node.exponent * vals[id(node.base)]
        else:  # Sum
            m = _NEG_INF
            for c in node.terms:
                cv = vals[id(c)]
                if cv > m:
                    m = cv
            if m == _NEG_INF:
                v = _NEG_INF
            else:
                acc = 0.0
                for c in node.terms:
                    acc += math.exp(vals[id(c)] - m)
                v = m + math.log(acc)
        if math.isnan(v):
            raise ValueError(f"evaluation produced NaN at node {node!r}")
        vals[id(node)] = v

    root_id = id(order[-1])
    W = vals[root_id]
    g = np.zeros(x.size)
    adj: dict[int, float] = {id(node): 0.0 for node in order}
    adj[root_id] = 1.0
    for node in reversed(order):
        a = adj[id(node)]
        if a == 0.0:
            continue
        t = type(node)
        if t is Var:
            g[node.index] += a
        elif t is Prod:
            for c in node.factors:
                adj[id(c)] += a
        elif t is Pow:
            adj[id(node.base)] += a * node.exponent
        elif t is Sum:
            L = vals[id(node)]
            if L == _NEG_INF:
                continue  # dead subtree: every child weight is exactly zero
            for c in node.terms:
                cv = vals[id(c)]
                if cv != _NEG_INF:
                    adj[id(c)] += a * math.exp(cv - L)
    return W, g


def eval_log(expr: KneeJerkExpr, x) -> LogEval:
    """Evaluate ``log Z`` and the gradient weights at a strictly positive point.

    Parameters
    ----------
    expr : KneeJerkExpr
        The objective.
    x : array_like
        Strictly positive coordinates.  Length must cover every variable the
        expression references; surplus coordinates get gradient weight 0.

    Returns
    -------
    LogEval
        ``W = log Z(x)`` and ``g`` with ``g_i = x_i Z_xi / Z >= 0``.

    Notes
    -----
    Boundary points (coordinates equal to 0) are rejected here; the limit
    convention for them lives in :func:`kneejerk.mapping.knee_jerk_step` only.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError(f"expected a 1-D point, got shape {x.shape}")
    if expr.n_vars > x.size:
        raise ValueError(
            f"expression references variable {expr.n_vars - 1} but the point "
            f"has only {x.size} coordinates"
        )
    bad = np.where(~(x > 0.0) | ~np.isfinite(x))[0]
    if bad.size:
        i = int(bad[0])
        raise ValueError(
            f"eval_log requires strictly positive finite coordinates; x[{i}] = {x[i]}"
        )
    W, g = _eval_log_raw(expr, x)
    return LogEval(W=W, g=g)


def _eval_log_values(expr: KneeJerkExpr, X: np.ndarray) -> np.ndarray:
    """Vectorized log-values for a batch of nonnegative points (rows of X).

    Values only, no gradients; zero coordinates produce -inf cleanly.  Used by
    the exhaustive grid search in :mod:`kneejerk.cli`.
    """
    with np.errstate(divide="ignore"):
        U = np.log(X)
    npts = X.shape[0]
    vals: dict[int, np.ndarray] = {}
    order = _postorder(expr)
    for node in order:
        t = type(node)
        if t is Var:
            v = U[:, node.index]
        elif t is Const:
            v = np.full(npts, math.log(node.value))
        elif t is Prod:
            v = np.zeros(npts)
            for c in node.factors:
                v = v + vals[id(c)]
        elif t is Pow:
            v = node.exponent * vals[id(node.base)]
        else:  # Sum
            v = vals[id(node.terms[0])]
            for c in node.terms[1:]:
                v = np.logaddexp(v, vals[id(c)])
        vals[id(node)] = v
    return vals[id(order[-1])]


def _central_hessian_from_grad(
    grad: Callable[[np.ndarray], np.ndarray], u: np.ndarray, h: float
) -> np.ndarray:
    """Symmetrized central-difference Hessian from a gradient callable.

    Row i of the raw stencil is (grad(u + h e_i) - grad(u - h e_i)) / 2h; the
    result averages the (i, j) and (j, i) stencils so it is symmetric by
    construction.
    """
    n = u.size
    rows = np.empty((n, n))
    for i in range(n):
        up = u.copy()
        up[i] += h
        um = u.copy()
        um[i] -= h
        rows[i] = (grad(up) - grad(um)) / (2.0 * h)
    return (rows + rows.T) / 2.0


def hessian_log_u(expr: KneeJerkExpr, x, h: float = 1e-4) -> np.ndarray:
    """Hessian of ``W = log Z`` with respect to ``u = log x``, by central
    differences of the exact gradient weights.

    The returned matrix is symmetric by construction and accurate to O(h^2).
    For any valid expression its smallest eigenvalue is nonnegative up to
    stencil error (that is what the convexity probe in
    :mod:`kneejerk.diagnostics` checks).
    """
    x = np.asarray(x, dtype=float)
    ev = eval_log(expr, x)  # validates the point
    del ev
    u = np.log(x)

    def grad(uv: np.ndarray) -> np.ndarray:
        return eval_log(expr, np.exp(uv)).g

    return _central_hessian_from_grad(grad, u, h)


# ---------------------------------------------------------------------------
# sparse polynomials


@dataclass(frozen=True)
class SparsePolynomial:
    """Positive-coefficient polynomial in ``n`` variables, stored sparsely.

    ``terms`` holds ``(coefficient, exponent_vector)`` pairs in canonical
    order (sorted lexicographically by exponent vector).  Construction merges
    duplicate exponent vectors by summing their coefficients and rejects
    nonpositive coefficients, so zero terms are never stored.
    """

    n: int
    terms: tuple[tuple[float, tuple[int, ...]], ...]

    def __post_init__(self):
        if isinstance(self.n, bool) or not isinstance(self.n, int) or self.n < 1:
            raise ValueError(f"polynomial dimension must be a positive integer, got {self.n!r}")
        merged: dict[tuple[int, ...], float] = {}
        for item in self.terms:
            try:
                c, e = item
            except (TypeError, ValueError):
                raise ValueError(f"polynomial term must be a (coefficient, exponents) pair, got {item!r}") from None
            if isinstance(c, bool) or not isinstance(c, (int, float)):
                raise ValueError(f"coefficient must be a number, got {c!r}")
            c = float(c)
            if not math.isfinite(c) or c <= 0.0:
                raise ValueError(f"coefficient must be finite and positive, got {c!r}")
            e = tuple(e)
            if len(e) != self.n:
                raise ValueError(
                    f"exponent vector {e!r} has length {len(e)}, expected {self.n}"
                )
            for k in e:
                if isinstance(k, bool) or not isinstance(k, int) or k < 0:
                    raise ValueError(f"exponents must be nonnegative integers, got {k!r} in {e!r}")
            merged[e] = merged.get(e, 0.0) + c
        if not merged:
            raise ValueError("polynomial requires at least one term")
        canon = tuple((merged[e], e) for e in sorted(merged))
        object.__setattr__(self, "terms", canon)

    @property
    def degree(self) -> int:
        return max(sum(e) for _, e in self.terms)

    def homogeneous_degree(self):
        """Common total degree of all terms, or None if inhomogeneous."""
        degrees = {sum(e) for _, e in self.terms}
        return degrees.pop() if len(degrees) == 1 else None

    def to_json_dict(self) -> dict:
        return {
            "n": self.n,
            "terms": [{"c": c, "e": list(e)} for c, e in self.terms],
        }

    @classmethod
    def from_json_dict(cls, data, path: str = "polynomial") -> "SparsePolynomial":
        if not isinstance(data, dict):
            raise ValueError(f"{path}: expected an object, got {type(data).__name__}")
        _check_keys(data, {"n", "terms"}, path)
        n = data.get("n")
        terms = data.get("terms")
        if not isinstance(terms, list):
            raise ValueError(f"{path}.terms: expected a list")
        pairs = []
        for i, t in enumerate(terms):
            tp = f"{path}.terms[{i}]"
            if not isinstance(t, dict):
                raise ValueError(f"{tp}: expected an object with 'c' and 'e'")
            _check_keys(t, {"c", "e"}, tp)
            if "c" not in t or "e" not in t:
                raise ValueError(f"{tp}: missing 'c' or 'e'")
            if not isinstance(t["e"], list):
                raise ValueError(f"{tp}.e: expected a list of integers")
            pairs.append((t["c"], tuple(t["e"])))
        try:
            return cls(n, tuple(pairs))
        except ValueError as err:
            raise ValueError(f"{path}: {err}") from None


def polynomial_to_expression(poly: SparsePolynomial) -> KneeJerkExpr:
    """Convert a sparse polynomial to an expression tree.

    Trivial wrappers collapse: single-term polynomials skip the sum node,
    unit coefficients and first powers are omitted, and a bare monomial
    ``1 * x_i`` becomes ``Var(i)``.
    """
    terms = []
    for c, e in poly.terms:
        factors: list[KneeJerkExpr] = []
        if c != 1.0:
            factors.append(Const(c))
        for i, k in enumerate(e):
            if k == 0:
                continue
            factors.append(Var(i) if k == 1 else Pow(Var(i), k))
        if not factors:
            term: KneeJerkExpr = Const(c)
        elif len(factors) == 1:
            term = factors[0]
        else:
            term = Prod(tuple(factors))
        terms.append(term)
    return terms[0] if len(terms) == 1 else Sum(tuple(terms))


# ---------------------------------------------------------------------------
# serialization


def _check_keys(data: dict, allowed: set, path: str) -> None:
    extra = set(data) - allowed
    if extra:
        raise ValueError(f"{path}: unexpected field(s) {sorted(extra)!r}")


def construct_expression(data, path: str = "expression") -> KneeJerkExpr:
    """Build an expression tree from its JSON form.

    Nodes are objects tagged by ``op``: ``{"op": "var", "index": i}``,
    ``{"op": "const", "value": c}``, ``{"op": "sum", "terms": [...]}``,
    ``{"op": "prod", "factors": [...]}``,
    ``{"op": "pow", "base": {...}, "exponent": p}``.  Validation errors name
    the offending node by its path.
    """
    if not isinstance(data, dict):
        raise ValueError(f"{path}: expression node must be an object, got {type(data).__name__}")
    op = data.get("op")
    try:
        if op == "var":
            _check_keys(data, {"op", "index"}, path)
            if "index" not in data:
                raise ValueError("missing field 'index'")
            return Var(data["index"])
        if op == "const":
            _check_keys(data, {"op", "value"}, path)
            if "value" not in data:
                raise ValueError("missing field 'value'")
            return Const(data["value"])
        if op == "sum":
            _check_keys(data, {"op", "terms"}, path)
            terms = data.get("terms")
            if not isinstance(terms, list):
                raise ValueError("field 'terms' must be a list")
            return Sum(
                tuple(
                    construct_expression(t, f"{path}.terms[{i}]")
                    for i, t in enumerate(terms)
                )
            )
        if op == "prod":
            _check_keys(data, {"op", "factors"}, path)
            factors = data.get("factors")
            if not isinstance(factors, list):
                raise ValueError("field 'factors' must be a list")
            return Prod(
                tuple(
                    construct_expression(f, f"{path}.factors[{i}]")
                    for i, f in enumerate(factors)
                )
            )
        if op == "pow":
            _check_keys(data, {"op", "base", "exponent"}, path)
            if "base" not in data:
                raise ValueError("missing field 'base'")
            if "exponent" not in data:
                raise ValueError("missing field 'exponent'")
            base = construct_expression(data["base"], f"{path}.base")
            return Pow(base, data["exponent"])
    except ValueError as err:
        msg = str(err)
        if msg.startswith(f"{path}.") or msg.startswith(f"{path}:"):
            raise  # already carries a node path
        raise ValueError(f"{path}: {msg}") from None
    raise ValueError(f"{path}: unknown op {op!r}; expected var|const|sum|prod|pow")


def expression_to_json_dict(expr: KneeJerkExpr) -> dict:
    """Inverse of :func:`construct_expression`."""
    t = type(expr)
    if t is Var:
        return {"op": "var", "index": expr.index}
    if t is Const:
        return {"op": "const", "value": expr.value}
    if t is Sum:
        return {"op": "sum", "terms": [expression_to_json_dict(c) for c in expr.terms]}
    if t is Prod:
        return {"op": "prod", "factors": [expression_to_json_dict(c) for c in expr.factors]}
    if t is Pow:
        return {
            "op": "pow",
            "base": expression_to_json_dict(expr.base),
            "exponent": expr.exponent,
        }
    raise ValueError(f"not an expression node: {expr!r}")
