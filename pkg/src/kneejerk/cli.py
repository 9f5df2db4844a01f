"""Problem files and the command-line front end.

A problem file is JSON with an objective (inline expression tree, sparse
polynomial, or graph whose discriminant becomes the objective), a block
structure, optional weights, an initial point, and optional stopping-rule
overrides::

    {
      "expression": {"op": ...} | {"polynomial": {...}} | {"graph": {...}},
      "blocks": [2, 3],
      "weights": [1, 1, 1, 1, 1],          // optional
      "init": [0.5, 0.5, ...] | "barycenter",
      "config": {"max_iters": 5000, "tol_div": 1e-18, "tol_w": 1e-16}  // optional
    }

Subcommands: ``optimize`` (iterate, write trace CSV + JSON summary),
``verify`` (seeded randomized certificate sweeps; deterministic given the
seed), ``discriminant`` (graph file to polynomial JSON), ``oracle``
(exhaustive grid search, reports the gap to the iteration's terminal value).

Exit codes: 0 success / converged, 1 verification failure or iteration cap
reached, 2 input error, 3 degenerate terminal status.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .diagnostics import (
    check_log_concavity,
    check_log_log_convexity,
    raw_u_function_for_tests,
    verify_argmax_property,
    verify_step_inequality,
)
from .discriminant import Graph, discriminant_polynomial
from .expr import (
    KneeJerkExpr,
    SparsePolynomial,
    construct_expression,
    expression_to_json_dict,
    polynomial_to_expression,
    _eval_log_raw,
    _eval_log_values,
)
from .mapping import IterationConfig, Trace, _support_residual, iterate
from .simplex import BlockPoint, BlockStructure, barycenter, random_interior

__all__ = [
    "Problem",
    "OracleResult",
    "parse_problem",
    "serialize_problem",
    "run_optimize",
    "run_verify",
    "run_oracle",
    "main",
]

_ORACLE_POINT_GUARD = 10**8
_ARGMAX_COMPETITORS = 1000


@dataclass(eq=False)
class Problem:
    expression: KneeJerkExpr
    structure: BlockStructure
    init: BlockPoint
    config: IterationConfig


@dataclass(eq=False)
class OracleResult:
    """Exhaustive grid search outcome.

    ``gap`` is ``terminal W - best grid W`` for the iteration started at the
    problem's init point; ``error_bound`` is a first-order estimate
    ``L * h`` of how far the grid optimum can sit below the true one
    (gradient norm at the two candidate optima times the grid spacing).
    """

    best_point: np.ndarray
    best_W: float
    resolution: int
    gap: float
    error_bound: float

    def to_json_dict(self) -> dict:
        return {
            "best_point": [float(v) for v in self.best_point],
            "best_W": self.best_W,
            "resolution": self.resolution,
            "gap": self.gap,
            "error_bound": self.error_bound,
        }


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ValueError(msg)


def parse_problem(text: str) -> Problem:
    """Parse and validate a problem from JSON text.

    Raises ValueError naming the offending field on any schema violation.
    """
    try:
        data = json.loads(text)
    except json.JSONDecodeError as err:
        raise ValueError(f"problem file is not valid JSON: {err}") from None
    _require(isinstance(data, dict), "problem: top level must be a JSON object")
    extra = set(data) - {"expression", "blocks", "weights", "init", "config"}
    _require(not extra, f"problem: unexpected field(s) {sorted(extra)!r}")
    for name in ("expression", "blocks", "init"):
        _require(name in data, f"problem: missing required field '{name}'")

    src = data["expression"]
    _require(isinstance(src, dict), "expression: must be an object")
    declared_n = None
    if "op" in src:
        expr = construct_expression(src, path="expression")
    elif "polynomial" in src:
        _require(set(src) == {"polynomial"}, "expression: 'polynomial' must be the only key")
        poly = SparsePolynomial.from_json_dict(src["polynomial"], path="expression.polynomial")
        declared_n = poly.n
        expr = polynomial_to_expression(poly)
    elif "graph" in src:
        _require(set(src) == {"graph"}, "expression: 'graph' must be the only key")
        graph = Graph.from_json_dict(src["graph"], path="expression.graph")
        declared_n = graph.n_vars
        expr = polynomial_to_expression(discriminant_polynomial(graph))
    else:
        raise ValueError(
            "expression: must be an inline tree ({'op': ...}), {'polynomial': ...}, "
            "or {'graph': ...}"
        )

    blocks = data["blocks"]
    _require(
        isinstance(blocks, list) and blocks,
        "blocks: must be a nonempty list of positive integers",
    )
    weights = data.get("weights")
    if weights is not None:
        _require(isinstance(weights, list), "weights: must be a list of positive numbers")
    try:
        structure = BlockStructure(tuple(blocks), None if weights is None else np.asarray(weights, dtype=float))
    except (ValueError, TypeError) as err:
        raise ValueError(f"blocks/weights: {err}") from None

    n = structure.n
    if declared_n is not None:
        _require(
            declared_n == n,
            f"blocks: sum to {n} but the objective declares {declared_n} variables",
        )
    else:
        _require(
            expr.n_vars <= n,
            f"blocks: sum to {n} but the expression references variable {expr.n_vars - 1}",
        )

    init = data["init"]
    if init == "barycenter":
        init_point = barycenter(structure)
    else:
        _require(isinstance(init, list), "init: must be a coordinate list or \"barycenter\"")
        try:
            init_point = BlockPoint(np.asarray(init, dtype=float), structure)
        except ValueError as err:
            raise ValueError(f"init: {err}") from None

    cfg_data = data.get("config", {})
    _require(isinstance(cfg_data, dict), "config: must be an object")
    extra = set(cfg_data) - {"max_iters", "tol_div", "tol_w"}
    _require(not extra, f"config: unexpected field(s) {sorted(extra)!r}")
    try:
        config = IterationConfig(**cfg_data)
    except (ValueError, TypeError) as err:
        raise ValueError(f"config: {err}") from None

    return Problem(expression=expr, structure=structure, init=init_point, config=config)


def serialize_problem(problem: Problem) -> dict:
    """JSON form of a problem; parsing it back reproduces the problem
    structurally (graph/polynomial sources are resolved to the expression)."""
    out = {
        "expression": expression_to_json_dict(problem.expression),
        "blocks": list(problem.structure.blocks),
        "init": [float(v) for v in problem.init.x],
        "config": {
            "max_iters": problem.config.max_iters,
            "tol_div": problem.config.tol_div,
            "tol_w": problem.config.tol_w,
        },
    }
    if not np.all(problem.structure.weights == 1.0):
        out["weights"] = [float(w) for w in problem.structure.weights]
    return out


def _terminal_residual(problem: Problem, point: BlockPoint) -> float:
    _, g = _eval_log_raw(problem.expression, point.x)
    return _support_residual(g, point.x, point.structure)


def run_optimize(problem: Problem, out_dir: Path | None = None) -> tuple[Trace, dict]:
    """Iterate from the problem's init point; return the trace and summary,
    optionally writing ``trace.csv`` and ``summary.json``."""
    trace = iterate(problem.expression, problem.init, problem.config)
    summary = {
        "status": trace.status,
        "iterations": trace.iterations,
        "W": float(trace.W_final),
        "terminal_point": [float(v) for v in trace.x_final.x],
        "residual": float(_terminal_residual(problem, trace.x_final)),
    }
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "trace.csv").write_text(trace.to_csv())
        (out_dir / "summary.json").write_text(_dumps(summary))
    return trace, summary


def run_verify(
    problem: Problem,
    samples: int = 100,
    seed: int = 0,
    include_concavity: bool = False,
    inject_negative: bool = False,
) -> dict:
    """Seeded randomized sweeps of every certificate; deterministic per seed.

    Checks the step inequality and the argmax property at ``samples`` random
    interior points, then runs the curvature probes.  ``inject_negative``
    additionally runs the convexity probe on a raw non-convex fixture, which
    must fail - proving the pipeline detects violations.
    """
    rng = np.random.default_rng(seed)
    e = problem.expression
    s = problem.structure

    worst_margin = math.inf
    min_rhs = math.inf
    ineq_ok = True
    for _ in range(samples):
        pt = random_interior(s, rng)
        rep = verify_step_inequality(e, pt)
        worst_margin = min(worst_margin, rep.margin)
        min_rhs = min(min_rhs, rep.rhs)
        ineq_ok = ineq_ok and rep.passed
    ineq_ok = ineq_ok and min_rhs >= -1e-12

    argmax_margin = math.inf
    argmax_ok = True
    for _ in range(samples):
        pt = random_interior(s, rng)
        rep = verify_argmax_property(e, pt, _ARGMAX_COMPETITORS, rng)
        argmax_margin = min(argmax_margin, rep.margin)
        argmax_ok = argmax_ok and rep.passed

    convexity = check_log_log_convexity(e, samples=samples, rng=rng)

    report = {
        "seed": seed,
        "samples": samples,
        "inequality": {
            "worst_margin": worst_margin,
            "min_rhs": min_rhs,
            "pass": ineq_ok,
        },
        "argmax": {
            "worst_margin": argmax_margin,
            "competitors": _ARGMAX_COMPETITORS,
            "pass": argmax_ok,
        },
        "log_log_convexity": convexity.to_json_dict(),
    }
    overall = ineq_ok and argmax_ok and convexity.passed

    if include_concavity:
        concavity = check_log_concavity(e, samples=samples, rng=rng)
        report["log_concavity"] = concavity.to_json_dict()
        overall = overall and concavity.passed

    if inject_negative:
        fixture = raw_u_function_for_tests(
            2,
            lambda u: float(u[0] ** 2 + u[1] ** 2 - 3.0 * u[0] * u[1]),
            lambda u: np.array([2.0 * u[0] - 3.0 * u[1], 2.0 * u[1] - 3.0 * u[0]]),
        )
        negative = check_log_log_convexity(fixture, samples=samples, rng=rng)
        report["negative_control"] = negative.to_json_dict()
        overall = overall and negative.passed

    report["pass"] = overall
    return report


def _compositions(total: int, k: int):
    """Nonnegative integer k-tuples summing to total, lexicographic."""
    if k == 1:
        yield (total,)
        return
    for head in range(total + 1):
        for rest in _compositions(total - head, k - 1):
            yield (head,) + rest


def _grid_points(structure: BlockStructure, resolution: int):
    """Lazy product of per-block compositions, as flat count tuples."""

    def rec(i: int, prefix: tuple):
        if i == len(structure.blocks):
            yield prefix
            return
        for c in _compositions(resolution, structure.blocks[i]):
            yield from rec(i + 1, prefix + c)

    yield from rec(0, ())


def _grid_size(structure: BlockStructure, resolution: int) -> int:
    size = 1
    for b in structure.blocks:
        size *= math.comb(resolution + b - 1, b - 1)
    return size


def _lipschitz_estimate(problem: Problem, x: np.ndarray) -> float:
    """sum of |d log Z / d x_j| over the support, a local slope scale."""
    _, g = _eval_log_raw(problem.expression, x)
    pos = x > 0.0
    return float(np.sum(g[pos] / x[pos]))


def run_oracle(problem: Problem, resolution: int) -> OracleResult:
    """Exhaustively score the uniform grid of the given resolution (plus the
    exact barycenter) and compare against the iteration's terminal value."""
    if not isinstance(resolution, int) or resolution < 1:
        raise ValueError(f"resolution must be a positive integer, got {resolution!r}")
    s = problem.structure
    size = _grid_size(s, resolution)
    if size > _ORACLE_POINT_GUARD:
        raise ValueError(
            f"grid has {size} points, over the {_ORACLE_POINT_GUARD} guard; "
            "lower the resolution"
        )

    inv = 1.0 / (resolution * s.weights)  # count -> coordinate scaling
    best_W = -math.inf
    best_point = None
    batch: list[tuple] = []

    def flush():
        nonlocal best_W, best_point
        if not batch:
            return
        X = np.asarray(batch, dtype=float) * inv
        W = _eval_log_values(problem.expression, X)
        i = int(np.argmax(W))
        if W[i] > best_W:
            best_W = float(W[i])
            best_point = X[i].copy()
        batch.clear()

    for counts in _grid_points(s, resolution):
        batch.append(counts)
        if len(batch) >= 65536:
            flush()
    flush()

    # The exact barycenter need not lie on the grid (resolution not divisible
    # by a block size); include it so the oracle never scores below it.
    bc = barycenter(s).x
    Wbc = float(_eval_log_values(problem.expression, bc[None, :])[0])
    if Wbc > best_W:
        best_W = Wbc
        best_point = bc.copy()

    trace = iterate(problem.expression, problem.init, problem.config)
    terminal_W = float(trace.W_final)

    h = float(np.max(inv))
    lip = max(
        _lipschitz_estimate(problem, best_point),
        _lipschitz_estimate(problem, trace.x_final.x),
    )
    return OracleResult(
        best_point=best_point,
        best_W=best_W,
        resolution=resolution,
        gap=terminal_W - best_W,
        error_bound=lip * h + 1e-12,
    )


# ---------------------------------------------------------------------------
# command-line front end


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _load_problem(path: str) -> Problem:
    return parse_problem(Path(path).read_text())


def _cmd_optimize(args) -> int:
    problem = _load_problem(args.problem)
    overrides = {}
    if args.max_iters is not None:
        overrides["max_iters"] = args.max_iters
    if args.tol_div is not None:
        overrides["tol_div"] = args.tol_div
    if args.tol_w is not None:
        overrides["tol_w"] = args.tol_w
    if overrides:
        problem.config = replace(problem.config, **overrides)
    _, summary = run_optimize(problem, Path(args.out) if args.out else None)
    sys.stdout.write(_dumps(summary))
    if summary["status"] == "degenerate":
        sys.stderr.write(
            "degenerate: a block had zero gradient mass; its renormalized point "
            "is reported as terminal\n"
        )
        return 3
    if summary["status"] == "max-iterations":
        sys.stderr.write("did not converge within the iteration cap\n")
        return 1
    return 0


def _cmd_verify(args) -> int:
    problem = _load_problem(args.problem)
    report = run_verify(
        problem,
        samples=args.samples,
        seed=args.seed,
        include_concavity=args.concavity,
        inject_negative=args.inject_negative,
    )
    text = _dumps(report)
    sys.stdout.write(text)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "verify.json").write_text(text)
    if not report["pass"]:
        sys.stderr.write(
            "verification FAILED: worst inequality margin "
            f"{report['inequality']['worst_margin']!r}, worst argmax margin "
            f"{report['argmax']['worst_margin']!r}\n"
        )
        return 1
    return 0


def _cmd_discriminant(args) -> int:
    data = json.loads(Path(args.graph).read_text())
    graph = Graph.from_json_dict(data)
    poly = discriminant_polynomial(graph)
    text = _dumps(poly.to_json_dict())
    sys.stdout.write(text)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "discriminant.json").write_text(text)
    return 0


def _cmd_oracle(args) -> int:
    problem = _load_problem(args.problem)
    result = run_oracle(problem, args.resolution)
    text = _dumps(result.to_json_dict())
    sys.stdout.write(text)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "oracle.json").write_text(text)
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kneejerk",
        description="Monotone multiplicative ascent on products of weighted simplices.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    opt = sub.add_parser("optimize", help="iterate the update from the problem's init point")
    opt.add_argument("--problem", required=True, help="problem JSON file")
    opt.add_argument("--out", help="directory for trace.csv and summary.json")
    opt.add_argument("--max-iters", type=int, default=None, help="override the iteration cap")
    opt.add_argument("--tol-div", type=float, default=None, help="override the step-divergence tolerance")
    opt.add_argument("--tol-w", type=float, default=None, help="override the improvement tolerance")
    opt.set_defaults(func=_cmd_optimize)

    ver = sub.add_parser("verify", help="randomized certificate sweeps (deterministic per seed)")
    ver.add_argument("--problem", required=True, help="problem JSON file")
    ver.add_argument("--out", help="directory for verify.json")
    ver.add_argument("--samples", type=int, default=100, help="random points per probe")
    ver.add_argument("--seed", type=int, default=0, help="RNG seed (part of the report)")
    ver.add_argument("--concavity", action="store_true", help="also probe log-concavity in x")
    ver.add_argument(
        "--inject-negative",
        action="store_true",
        help="also run the convexity probe on a known-bad fixture; the run then fails loudly",
    )
    ver.set_defaults(func=_cmd_verify)

    dis = sub.add_parser("discriminant", help="spanning-tree polynomial of a graph file")
    dis.add_argument("--graph", required=True, help='graph JSON file: {"vertices": V, "edges": [[u, v], ...]}')
    dis.add_argument("--out", help="directory for discriminant.json")
    dis.set_defaults(func=_cmd_discriminant)

    orc = sub.add_parser("oracle", help="exhaustive grid search vs the iteration's terminal value")
    orc.add_argument("--problem", required=True, help="problem JSON file")
    orc.add_argument("--resolution", type=int, required=True, help="grid subdivisions per block")
    orc.add_argument("--out", help="directory for oracle.json")
    orc.set_defaults(func=_cmd_oracle)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, json.JSONDecodeError) as err:
        sys.stderr.write(f"error: {err}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
