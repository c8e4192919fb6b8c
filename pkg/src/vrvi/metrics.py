"""Convergence measures: duality gap, restricted merit gap, Lyapunov values.

The matrix-game gap is exact: on the simplex product the merit function
reduces to max_i (Ax)_i - min_j (A^T y)_j.  The restricted gap over a
compact set C is reported as a candidate-based LOWER bound of
max_{z' in C} { <F(z'), z - z'> + g(z) - g(z') }; exact maximization over
C is itself an optimization problem and is out of scope.  Candidate sets
are nested across radii, which makes the reported value monotone
nondecreasing in the radius.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional

import numpy as np

from .errors import DomainError
from .geometry import Point, SimplexIndicator

NEGATIVE_CLIP = 1e-12

_gap_clips = 0


def gap_clip_count() -> int:
    """How many tiny negative gap values have been clipped to zero."""
    return _gap_clips


def _clip_gap(value: float) -> float:
    global _gap_clips
    if -NEGATIVE_CLIP <= value < 0.0:
        _gap_clips += 1
        return 0.0
    return value


# ---------------------------------------------------------------------------
# run traces
# ---------------------------------------------------------------------------

class TraceRow(NamedTuple):
    cost: float
    epoch: float
    gap: float
    dist_sq: Optional[float]
    wall_ns: int


@dataclass
class RunTrace:
    """The (cost, gap) time series of one run plus its metadata echo."""

    rows: List[TraceRow]
    metadata: dict = field(default_factory=dict)

    @property
    def costs(self) -> np.ndarray:
        return np.array([r.cost for r in self.rows])

    @property
    def epochs(self) -> np.ndarray:
        return np.array([r.epoch for r in self.rows])

    @property
    def gaps(self) -> np.ndarray:
        return np.array([r.gap for r in self.rows])

    def epochs_to(self, gap_target: float) -> float:
        """First recorded epoch at which the gap is at or below the target."""
        for r in self.rows:
            if r.gap <= gap_target:
                return r.epoch
        return np.inf

    def validate(self) -> None:
        costs = self.costs
        if np.any(np.diff(costs) <= 0):
            raise DomainError("trace cost column must be strictly increasing")
        if self.metadata.get("gap_kind") == "simplex-duality" and np.any(self.gaps < -NEGATIVE_CLIP):
            raise DomainError("simplex duality gap fell below -1e-12")


# ---------------------------------------------------------------------------
# gaps
# ---------------------------------------------------------------------------

def simplex_duality_gap(game, z: Point, tol: float = 1e-9) -> float:
    """Exact duality gap of a simplex-constrained matrix game.

    gap(x, y) = max_i (Ax)_i - min_j (A^T y)_j; nonnegative on the
    simplex product and zero exactly at saddle points.
    """
    A = game.A
    if z.n != A.shape[1] or z.m != A.shape[0]:
        raise DomainError("point dimensions do not match the game")
    for block in (z.x, z.y):
        if np.any(block < -tol) or abs(block.sum() - 1.0) > tol:
            raise DomainError("point is not on the simplex product")
    return _clip_gap(float(np.max(A @ z.x) - np.min(A.T @ z.y)))


def _candidate_points(problem, C_radius: float, budget: int):
    """Nested candidate family for the restricted gap.

    The master sample list is fixed (internal seed) and ordered by
    radius, so the set for a smaller radius is a subset of the set for a
    larger one and the reported lower bound is monotone in the radius.
    """
    z0 = problem.z0
    out = [z0]
    g = problem.g

    def in_ball(point: Point) -> bool:
        return float(np.linalg.norm(point.coords - z0.coords)) <= C_radius + 1e-12

    if problem.known_solution is not None and in_ball(problem.known_solution):
        out.append(problem.known_solution)
    if budget <= 0:
        return out

    if isinstance(g, SimplexIndicator) and g.n * g.m <= 512:
        for j in range(g.n):
            for i in range(g.m):
                x = np.zeros(g.n)
                x[j] = 1.0
                y = np.zeros(g.m)
                y[i] = 1.0
                vertex = Point.of_blocks(x, y)
                if in_ball(vertex):
                    out.append(vertex)

    rng = np.random.default_rng(99173)
    taken = 0
    for mag in np.logspace(-3.0, 3.0, 25):
        for _ in range(4):
            d = rng.standard_normal(z0.dim)
            d /= np.linalg.norm(d)
            if mag > C_radius or taken >= budget:
                continue  # keep consuming the stream so the list stays nested
            raw = z0.with_coords(z0.coords + mag * d)
            cand = raw if np.isfinite(g.value(raw)) else g.prox(raw, 1.0)
            if np.isfinite(g.value(cand)) and in_ball(cand):
                out.append(cand)
                taken += 1
    return out


def restricted_gap(problem, z: Point, C_radius: float, budget: int = 64) -> float:
    """Candidate-based lower bound on the restricted merit gap at z.

    C is the ball of radius ``C_radius`` around the start point
    intersected with dom g.  ``budget`` caps the number of sampled
    candidates; the start point and a known solution (when inside C) are
    always evaluated, simplex vertices are added for small games.
    """
    if C_radius <= 0:
        raise DomainError("C_radius must be positive")
    gz = problem.g.value(z)
    best = -np.inf
    for cand in _candidate_points(problem, C_radius, budget):
        val = float(problem.operator(cand) @ (z.coords - cand.coords)) \
            + gz - problem.g.value(cand)
        best = max(best, val)
    return _clip_gap(best)


def evaluate_gap(problem, z: Point) -> float:
    """The gap measure a problem declares for its traces."""
    from .problems import GapKind

    if problem.gap_kind is GapKind.SIMPLEX_DUALITY:
        return simplex_duality_gap(problem.game, z)
    radius = 10.0 * max(1.0, float(np.linalg.norm(problem.z0.coords)))
    return restricted_gap(problem, z, radius, budget=64)


# ---------------------------------------------------------------------------
# Lyapunov evaluators (test harness support)
# ---------------------------------------------------------------------------

def lyapunov_phi(kind: str, state, z_star: Point, config, problem=None) -> float:
    """Exact Lyapunov value at the current state.

    ``kind``:
      * ``"eg-fbf"``: alpha ||z - z*||^2 + ((1-alpha)/p) ||w - z*||^2.
      * ``"forb"``:  the same plus 2 tau <F(z) - F(w_prev), z* - z> +
        (1-alpha) ||z - w_prev||^2 (needs ``problem`` for F).
    """
    alpha, p = config.alpha, config.p
    dz = state.z.coords - z_star.coords
    dw = state.w.coords - z_star.coords
    base = alpha * float(dz @ dz) + (1.0 - alpha) / p * float(dw @ dw)
    if kind == "eg-fbf":
        return base
    if kind == "forb":
        if problem is None:
            raise DomainError("forb Lyapunov needs the problem for full operator values")
        dF = problem.operator(state.z) - problem.operator(state.prev_w)
        drift = 2.0 * config.tau * float(dF @ (z_star.coords - state.z.coords))
        dzw = state.z.coords - state.prev_w.coords
        return base + drift + (1.0 - alpha) * float(dzw @ dzw)
    raise DomainError(f"unknown Lyapunov kind {kind!r}")
