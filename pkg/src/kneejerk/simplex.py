"""Products of weighted simplices: block structures, feasible points,
normalization, and the I-divergence.

A ``BlockStructure`` splits ``n`` coordinates into contiguous blocks and
attaches a positive weight to every coordinate.  Feasibility means each block
satisfies ``sum_j a_j x_j = 1`` with nonnegative coordinates; the plain
probability simplex is the single-block, unit-weight case.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "BlockStructure",
    "BlockPoint",
    "barycenter",
    "normalize",
    "i_divergence",
    "i_divergence_blocks",
    "random_interior",
]

# |sum(a*x) - 1| accepted by operations that take already-normalized input.
_SUM_TOL = 1e-9
# Tighter tolerance enforced on constructed BlockPoints.
_POINT_TOL = 1e-12


@dataclass(eq=False)
class BlockStructure:
    """Block sizes plus per-coordinate positive weights (default all ones)."""

    blocks: tuple[int, ...]
    weights: np.ndarray | None = None
    slices: tuple[slice, ...] = field(init=False, repr=False)

    def __post_init__(self):
        self.blocks = tuple(self.blocks)
        if not self.blocks:
            raise ValueError("block structure requires at least one block")
        for b in self.blocks:
            if isinstance(b, bool) or not isinstance(b, int) or b < 1:
                raise ValueError(f"block sizes must be positive integers, got {b!r}")
        n = sum(self.blocks)
        if self.weights is None:
            self.weights = np.ones(n)
        else:
            w = np.asarray(self.weights, dtype=float)
            if w.shape != (n,):
                raise ValueError(f"weights must have length {n}, got shape {w.shape}")
            if not np.all(np.isfinite(w)) or np.any(w <= 0.0):
                raise ValueError("weights must be finite and strictly positive")
            self.weights = w
        out = []
        start = 0
        for b in self.blocks:
            out.append(slice(start, start + b))
            start += b
        self.slices = tuple(out)

    @property
    def n(self) -> int:
        return sum(self.blocks)

    @property
    def k(self) -> int:
        return len(self.blocks)

    def __eq__(self, other):
        if not isinstance(other, BlockStructure):
            return NotImplemented
        return self.blocks == other.blocks and np.array_equal(self.weights, other.weights)

    def to_json_dict(self) -> dict:
        out = {"blocks": list(self.blocks)}
        if not np.all(self.weights == 1.0):
            out["weights"] = [float(w) for w in self.weights]
        return out


@dataclass(eq=False)
class BlockPoint:
    """A feasible point: nonnegative, each block weighted-summing to 1.

    Coordinates are stored block-major as one flat vector.
    """

    x: np.ndarray
    structure: BlockStructure

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        s = self.structure
        if x.shape != (s.n,):
            raise ValueError(f"point must have length {s.n}, got shape {x.shape}")
        if not np.all(np.isfinite(x)):
            raise ValueError("point coordinates must be finite")
        if np.any(x < 0.0):
            i = int(np.where(x < 0.0)[0][0])
            raise ValueError(f"point coordinates must be nonnegative; x[{i}] = {x[i]}")
        for i, sl in enumerate(s.slices):
            total = float(np.sum(s.weights[sl] * x[sl]))
            if abs(total - 1.0) > _POINT_TOL:
                raise ValueError(
                    f"block {i} weighted sum is {total!r}, violates normalization "
                    f"beyond {_POINT_TOL}"
                )
        self.x = x

    @property
    def interior(self) -> bool:
        return bool(np.all(self.x > 0.0))


def barycenter(structure: BlockStructure) -> BlockPoint:
    """Center of the feasible set: ``x_j = 1 / (block_size * a_j)``."""
    x = np.empty(structure.n)
    for b, sl in zip(structure.blocks, structure.slices):
        x[sl] = 1.0 / (b * structure.weights[sl])
    return BlockPoint(x, structure)


def normalize(raw, structure: BlockStructure) -> BlockPoint:
    """Scale each block of a nonnegative raw vector onto its weighted simplex.

    Raises if any coordinate is negative or a whole block sums to zero.
    Idempotent on already-feasible points up to one rounding.
    """
    raw = np.asarray(raw, dtype=float)
    if raw.shape != (structure.n,):
        raise ValueError(f"raw vector must have length {structure.n}, got shape {raw.shape}")
    if not np.all(np.isfinite(raw)):
        raise ValueError("raw coordinates must be finite")
    if np.any(raw < 0.0):
        i = int(np.where(raw < 0.0)[0][0])
        raise ValueError(f"cannot normalize negative coordinates; raw[{i}] = {raw[i]}")
    x = np.empty_like(raw)
    for i, sl in enumerate(structure.slices):
        total = float(np.sum(structure.weights[sl] * raw[sl]))
        if total <= 0.0:
            raise ValueError(f"block {i} sums to zero, cannot normalize")
        x[sl] = raw[sl] / total
    return BlockPoint(x, structure)


def _block_divergence(y: np.ndarray, x: np.ndarray, w: np.ndarray) -> float:
    # Conventions: 0*log 0 = 0; support of y outside support of x gives +inf.
    pos = y > 0.0
    if np.any(pos & (x == 0.0)):
        return math.inf
    yp = y[pos]
    return float(np.sum(w[pos] * yp * np.log(yp / x[pos])))


def _unwrap_points(y, x, structure):
    """Accept BlockPoint or raw-array arguments interchangeably."""
    for p in (y, x):
        if isinstance(p, BlockPoint):
            if structure is None:
                structure = p.structure
            elif structure != p.structure:
                raise ValueError("arguments carry different block structures")
    if isinstance(y, BlockPoint):
        y = y.x
    if isinstance(x, BlockPoint):
        x = x.x
    return y, x, structure


def i_divergence_blocks(y, x, structure: BlockStructure | None = None) -> np.ndarray:
    """Per-block I-divergence of the weight-rescaled block vectors.

    Block ``i`` contributes ``sum_j (a_j y_j) log((a_j y_j)/(a_j x_j))``,
    which simplifies to ``sum_j a_j y_j log(y_j / x_j)``.  Both arguments must
    already be feasible for ``structure`` (within a loose tolerance); ``y``
    may touch the boundary.  Arguments may be ``BlockPoint`` instances, in
    which case the structure is taken from them.
    """
    y, x, structure = _unwrap_points(y, x, structure)
    if structure is None:
        raise ValueError("a block structure is required when passing raw arrays")
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    n = structure.n
    if y.shape != (n,) or x.shape != (n,):
        raise ValueError(
            f"arguments must match the structure length {n}, got shapes {y.shape} and {x.shape}"
        )
    if np.any(y < 0.0) or not np.all(np.isfinite(y)):
        raise ValueError("first argument must be finite and nonnegative")
    if np.any(x < 0.0) or not np.all(np.isfinite(x)):
        raise ValueError("second argument must be finite and nonnegative")
    w = structure.weights
    for i, sl in enumerate(structure.slices):
        sy = float(np.sum(w[sl] * y[sl]))
        sx = float(np.sum(w[sl] * x[sl]))
        if abs(sy - 1.0) > _SUM_TOL or abs(sx - 1.0) > _SUM_TOL:
            raise ValueError(
                f"block {i} is not normalized (weighted sums {sy!r} and {sx!r}); "
                "divergence is only defined on the weighted simplex"
            )
    return np.array(
        [_block_divergence(y[sl], x[sl], w[sl]) for sl in structure.slices]
    )


def i_divergence(y, x, structure: BlockStructure | None = None) -> float:
    """Total I-divergence ``sum_j y_j log(y_j / x_j)`` (weighted, per block).

    Arguments may be ``BlockPoint`` instances (structures must agree) or raw
    arrays; raw arrays without a structure are treated as plain probability
    vectors.  Returns ``inf`` when ``y`` puts mass where ``x`` has none.
    Mathematically nonnegative on normalized inputs; floating-point round-off
    can produce values a few ulp below zero, which callers should tolerate
    rather than clamp.
    """
    y, x, structure = _unwrap_points(y, x, structure)
    y = np.asarray(y, dtype=float)
    if structure is None:
        structure = BlockStructure((int(y.size),))
    total = 0.0
    for v in i_divergence_blocks(y, x, structure):
        total += float(v)
    return total


def random_interior(
    structure: BlockStructure, rng: np.random.Generator, alpha: float = 1.0
) -> BlockPoint:
    """Draw an interior feasible point, Dirichlet per block, rescaled by the
    weights so each block's weighted sum is exactly one."""
    x = np.empty(structure.n)
    for b, sl in zip(structure.blocks, structure.slices):
        p = rng.dirichlet(np.full(b, alpha))
        # Guard against exact zeros from gamma underflow in extreme draws.
        p = np.clip(p, 1e-300, None)
        p = p / p.sum()
        x[sl] = p / structure.weights[sl]
    return BlockPoint(x, structure)
