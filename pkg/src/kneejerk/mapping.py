"""The multiplicative fixed-point update and its iteration driver.

One step sends a feasible point ``x`` to ``x'`` with

    x'_{i,j} = (g_{i,j} / a_{i,j}) / m_i,      m_i = sum_j g_{i,j},

where ``g`` are the gradient weights ``x_j Z_xj / Z`` from
:func:`kneejerk.expr.eval_log` and ``i`` ranges over blocks.  The same rule
covers the plain simplex (one block, unit weights), weighted simplices, and
products of simplices.  Each step certifies the objective increase

    log Z(x') - log Z(x)  >=  sum_i m_i * I_i(x'; x)  >=  0,

with ``I_i`` the per-block I-divergence of the weight-rescaled vectors, so the
iteration ascends monotonically.  No line search, no acceleration, no damping:
the bare update is already monotone.

A block whose gradient weights are all zero has no preferred direction; the
conventional treatment renormalizes that block (the identity on feasible
points) and flags it degenerate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .expr import KneeJerkExpr, _eval_log_raw
from .simplex import BlockPoint, BlockStructure, i_divergence, i_divergence_blocks

__all__ = [
    "StepResult",
    "IterationConfig",
    "TraceRecord",
    "Trace",
    "knee_jerk_step",
    "criticality_residual",
    "iterate",
]


@dataclass(eq=False)
class StepResult:
    """One application of the update.

    ``bound`` is the certified lower bound ``sum_i m_i I_i`` on
    ``W_new - W``; ``masses`` holds the per-block gradient masses ``m_i``;
    ``degenerate`` flags blocks that fell back to renormalization.
    ``gradient`` is the gradient-weight vector at the starting point.
    """

    x_new: BlockPoint
    W: float
    W_new: float
    masses: np.ndarray
    bound: float
    degenerate: tuple[bool, ...]
    gradient: np.ndarray


@dataclass
class IterationConfig:
    """Stopping rules for :func:`iterate`.

    The driver stops when the per-step I-divergence drops below ``tol_div``,
    when the objective improvement drops below ``tol_w``, or after
    ``max_iters`` steps, whichever comes first.  ``trace_stride`` thins the
    recorded trace; the final step is always recorded.
    """

    max_iters: int = 100_000
    tol_div: float = 1e-12
    tol_w: float = 1e-14
    trace_stride: int = 1

    def __post_init__(self):
        if not isinstance(self.max_iters, int) or self.max_iters < 1:
            raise ValueError(f"max_iters must be a positive integer, got {self.max_iters!r}")
        if not isinstance(self.trace_stride, int) or self.trace_stride < 1:
            raise ValueError(f"trace_stride must be a positive integer, got {self.trace_stride!r}")
        for name in ("tol_div", "tol_w"):
            v = float(getattr(self, name))
            if math.isnan(v):
                raise ValueError(f"{name} must be a number, got NaN")
            setattr(self, name, v)


@dataclass
class TraceRecord:
    """One recorded step: the objective after the step, plus the certified
    bound, I-divergence, and criticality residual of/at the step's origin."""

    iteration: int
    W: float
    bound: float
    divergence: float
    residual: float


@dataclass(eq=False)
class Trace:
    records: list[TraceRecord]
    status: str  # "converged" | "max-iterations" | "degenerate"
    x_final: BlockPoint

    @property
    def W_final(self) -> float:
        return self.records[-1].W

    @property
    def iterations(self) -> int:
        return self.records[-1].iteration

    def to_csv(self) -> str:
        """CSV with header (iter, W, bound, divergence, residual); the
        terminal status goes on a trailing metadata line."""
        lines = ["iter,W,bound,divergence,residual"]
        for r in self.records:
            lines.append(
                f"{r.iteration},{r.W!r},{r.bound!r},{r.divergence!r},{r.residual!r}"
            )
        lines.append(f"# status={self.status}")
        return "\n".join(lines) + "\n"


def _checked_eval(expr: KneeJerkExpr, x: np.ndarray) -> tuple[float, np.ndarray]:
    W, g = _eval_log_raw(expr, x)
    if W == -math.inf:
        raise ValueError(
            "objective vanishes on the support of the given point; "
            "the update is undefined there"
        )
    return W, g


def _support_residual(g: np.ndarray, x: np.ndarray, structure: BlockStructure) -> float:
    """max_i max_j |g_j/(a_j x_j) - m_i| / (m_i + 1) over coordinates with
    x_j > 0.  Agrees with criticality_residual on interior points."""
    w = structure.weights
    worst = 0.0
    for sl in structure.slices:
        gb = g[sl]
        xb = x[sl]
        m = float(np.sum(gb))
        pos = xb > 0.0
        dev = np.abs(gb[pos] / (w[sl][pos] * xb[pos]) - m)
        r = float(np.max(dev)) / (m + 1.0) if dev.size else 0.0
        worst = max(worst, r)
    return worst


def knee_jerk_step(expr: KneeJerkExpr, point: BlockPoint) -> StepResult:
    """Apply the multiplicative update once.

    The input may touch the boundary: coordinates equal to zero have gradient
    weight exactly zero and stay at zero.  The output is feasible by
    construction (each block is renormalized by its actual weighted sum).
    """
    s = point.structure
    x = point.x
    if expr.n_vars > s.n:
        raise ValueError(
            f"expression references variable {expr.n_vars - 1} but the structure "
            f"has only {s.n} coordinates"
        )
    W, g = _checked_eval(expr, x)
    w = s.weights
    x_new = np.empty_like(x)
    masses = np.empty(s.k)
    degenerate = []
    for i, sl in enumerate(s.slices):
        gb = g[sl]
        m = float(np.sum(gb))
        masses[i] = m
        if m <= 0.0:
            # No gradient signal in this block: renormalize and flag.  On a
            # feasible input the weighted sum is 1, so this is the identity.
            degenerate.append(True)
            total = float(np.sum(w[sl] * x[sl]))
            x_new[sl] = x[sl] / total
        elif sl.stop - sl.start == 1:
            # A single-coordinate block admits exactly one feasible point,
            # so the update is the identity; copying avoids renormalization
            # round-off on a point that cannot move.
            degenerate.append(False)
            x_new[sl] = x[sl]
        else:
            degenerate.append(False)
            raw = gb / w[sl]
            total = float(np.sum(w[sl] * raw))
            x_new[sl] = raw / total
    new_point = BlockPoint(x_new, s)
    per_block = i_divergence_blocks(new_point.x, x, s)
    bound = 0.0
    for i in range(s.k):
        if masses[i] > 0.0:
            bound += float(masses[i]) * float(per_block[i])
    W_new, _ = _checked_eval(expr, new_point.x)
    return StepResult(
        x_new=new_point,
        W=W,
        W_new=W_new,
        masses=masses,
        bound=bound,
        degenerate=tuple(degenerate),
        gradient=g,
    )


def criticality_residual(expr: KneeJerkExpr, point: BlockPoint) -> float:
    """Scale-free distance from fixedness at an interior point.

    Zero (up to round-off) exactly when the update leaves the point unchanged,
    i.e. when every coordinate of a block satisfies ``g_j = m_i a_j x_j``.
    """
    if not point.interior:
        raise ValueError("criticality residual requires an interior point")
    if expr.n_vars > point.structure.n:
        raise ValueError(
            f"expression references variable {expr.n_vars - 1} but the structure "
            f"has only {point.structure.n} coordinates"
        )
    _, g = _checked_eval(expr, point.x)
    return _support_residual(g, point.x, point.structure)


def iterate(
    expr: KneeJerkExpr, x0: BlockPoint, config: IterationConfig | None = None
) -> Trace:
    """Run the update to convergence, a degenerate block, or the iteration cap.

    Stops with status "converged" when the per-step I-divergence falls below
    ``config.tol_div`` or the objective improvement falls below
    ``config.tol_w``; with status "degenerate" on the first degenerate block
    (after its conventional renormalization step); with "max-iterations" at
    the cap.  The objective column of the trace is nondecreasing.
    """
    cfg = config if config is not None else IterationConfig()
    s = x0.structure
    records: list[TraceRecord] = []
    x = x0
    status = "max-iterations"
    last: TraceRecord | None = None
    last_recorded = False
    for k in range(1, cfg.max_iters + 1):
        res = knee_jerk_step(expr, x)
        div = i_divergence(res.x_new.x, x.x, s)
        r0 = _support_residual(res.gradient, x.x, s)
        last = TraceRecord(k, res.W_new, res.bound, div, r0)
        last_recorded = k % cfg.trace_stride == 0
        if last_recorded:
            records.append(last)
        x = res.x_new
        if any(res.degenerate):
            status = "degenerate"
            break
        if div < cfg.tol_div or (res.W_new - res.W) < cfg.tol_w:
            status = "converged"
            break
    if last is not None and not last_recorded:
        records.append(last)
    return Trace(records=records, status=status, x_final=x)
