"""Unbiased stochastic oracles for finite-sum operators and matrix games.

An oracle produces, per iteration, an index xi and a cheap evaluator for
F_xi(.) with E[F_xi(z)] = F(z).  Distributions are either fixed (chosen
once from the data) or variable (rebuilt each iteration from the pair of
anchor points whose difference drives the mean-Lipschitz bound).

Sampling machinery: fixed distributions use an alias table built once
(one uniform per draw); variable distributions use prefix sums with a
binary search, rebuilt per draw in O(m + n).  Matrix-game indices are
pairs (i, j) drawn as row first, column second.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from . import _kernels
from .errors import ConfigError, DomainError, SupportTooLargeError
from .geometry import Geometry, Point, dual_norm_sq, primal_norm_sq

MAX_ENUM_SUPPORT = 250_000


# ---------------------------------------------------------------------------
# instrumentation
# ---------------------------------------------------------------------------

@dataclass
class OpMeter:
    """Mutable counters threaded through oracles and solver steps."""

    units: float = 0.0
    full_calls: int = 0
    component_calls: int = 0
    prox_calls: int = 0
    resolvent_calls: int = 0
    rows_touched: list = field(default_factory=list)
    cols_touched: list = field(default_factory=list)


# ---------------------------------------------------------------------------
# weighted discrete sampling
# ---------------------------------------------------------------------------

class DiscreteSampler:
    """Prefix-sum sampler over a nonnegative weight vector.

    Weights are normalized at build time; one uniform is consumed per
    draw via binary search on the cumulative sums.  A seeded generator
    may be attached at construction and is used when ``sample`` is
    called without an explicit stream.
    """

    def __init__(self, weights, rng=None):
        w = np.asarray(weights, dtype=float)
        if w.ndim != 1 or w.size == 0:
            raise ConfigError("sampler needs a nonempty weight vector")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ConfigError("sampler weights must be finite and nonnegative")
        total = w.sum()
        if total <= 0:
            raise ConfigError("sampler weights must not all be zero")
        self.weights = w / total
        self.cumulative = np.cumsum(self.weights)
        self.cumulative[-1] = 1.0
        self.rng = rng

    def _stream(self, rng):
        stream = rng if rng is not None else self.rng
        if stream is None:
            raise ConfigError("no generator attached and none supplied")
        return stream

    def sample(self, rng=None) -> int:
        return int(np.searchsorted(self.cumulative, self._stream(rng).random(),
                                   side="right"))

    def sample_many(self, rng=None, size: int = 1) -> np.ndarray:
        return np.searchsorted(self.cumulative, self._stream(rng).random(size),
                               side="right")


class AliasSampler:
    """Walker alias table; O(1) draws from a fixed distribution.

    A single uniform u is split into the bucket floor(u*K) and the coin
    frac(u*K), so each draw consumes exactly one stream value, the same
    budget as :class:`DiscreteSampler`.
    """

    def __init__(self, weights):
        w = np.asarray(weights, dtype=float)
        total = w.sum()
        if np.any(w < 0) or total <= 0:
            raise ConfigError("alias table needs nonnegative weights with positive mass")
        self.weights = w / total
        k = w.size
        scaled = self.weights * k
        self.accept = np.ones(k)
        self.alias = np.arange(k)
        small = [i for i in range(k) if scaled[i] < 1.0]
        large = [i for i in range(k) if scaled[i] >= 1.0]
        scaled = scaled.copy()
        while small and large:
            s, l = small.pop(), large.pop()
            self.accept[s] = scaled[s]
            self.alias[s] = l
            scaled[l] -= 1.0 - scaled[s]
            (small if scaled[l] < 1.0 else large).append(l)

    def sample(self, rng) -> int:
        u = rng.random() * self.weights.size
        k = int(u)
        return k if (u - k) < self.accept[k] else int(self.alias[k])

    def sample_many(self, rng, size: int) -> np.ndarray:
        u = rng.random(size) * self.weights.size
        k = u.astype(np.int64)
        frac = u - k
        return np.where(frac < self.accept[k], k, self.alias[k])


# ---------------------------------------------------------------------------
# oracle base
# ---------------------------------------------------------------------------

class StochasticOracle:
    """Interface shared by every oracle.

    Attributes
    ----------
    L : mean-Lipschitz constant of the oracle.
    is_variable : whether the distribution depends on an anchor pair.
    is_full : True for the degenerate oracle F_xi = F.
    entropic_norms : which primal/dual norm pairing the L bound uses.
    """

    L: float = np.nan
    is_variable = False
    is_full = False
    entropic_norms = False

    def full(self, z: Point) -> np.ndarray:
        raise NotImplementedError

    def sample(self, rng, u: Optional[Point] = None, v: Optional[Point] = None,
               meter: Optional[OpMeter] = None):
        """Draw xi and return ``(xi, evaluator)``.

        Variable schemes require the anchor pair ``(u, v)``; fixed
        schemes ignore it.  The evaluator is deterministic given xi.
        """
        raise NotImplementedError

    def sample_correction(self, rng, u: Point, v: Point,
                          meter: Optional[OpMeter] = None):
        """Draw xi and return ``(xi, F_xi(u) - F_xi(v))``.

        Semantically identical to sampling and evaluating twice (and
        consumes the same stream values); subclasses may fuse the two
        evaluations.
        """
        xi, ev = self.sample(rng, u=u, v=v, meter=meter)
        return xi, ev(u) - ev(v)

    def support(self, u: Optional[Point] = None, v: Optional[Point] = None):
        """All ``(probability, evaluator)`` pairs of the distribution."""
        raise NotImplementedError

    def support_size(self) -> int:
        raise NotImplementedError

    def _check_support(self):
        size = self.support_size()
        if size > MAX_ENUM_SUPPORT:
            raise SupportTooLargeError(
                f"support of size {size} exceeds the enumeration bound {MAX_ENUM_SUPPORT}")


class FullOracle(StochasticOracle):
    """F_xi = F: eliminates sampling noise entirely.

    ``cost_units`` is what one evaluator call should be charged (a full
    operator pass).
    """

    is_full = True

    def __init__(self, operator: Callable[[Point], np.ndarray], L: float):
        self._operator = operator
        self.L = float(L)

    def full(self, z: Point) -> np.ndarray:
        return self._operator(z)

    def sample(self, rng, u=None, v=None, meter=None):
        if meter is not None:
            meter.full_calls += 1
        return None, self._operator

    def support(self, u=None, v=None):
        return [(1.0, self._operator)]

    def support_size(self) -> int:
        return 1


# ---------------------------------------------------------------------------
# finite sums
# ---------------------------------------------------------------------------

class AffineComponent:
    """One affine component F_i(z) = M z + b.

    ``L`` defaults to the exact spectral norm of M; pass a value to
    declare a different bound.
    """

    def __init__(self, M, b=None, L: Optional[float] = None):
        self.M = np.asarray(M, dtype=float)
        self.b = np.zeros(self.M.shape[0]) if b is None else np.asarray(b, dtype=float)
        self.L = float(np.linalg.norm(self.M, 2)) if L is None else float(L)

    def __call__(self, z: Point) -> np.ndarray:
        return self.M @ z.coords + self.b


class CallbackComponent:
    """User-supplied component with a declared Lipschitz bound.

    Estimating L_i is the caller's duty; nothing is inferred here.
    """

    def __init__(self, fn: Callable[[Point], np.ndarray], L: float):
        self.fn = fn
        self.L = float(L)

    def __call__(self, z: Point) -> np.ndarray:
        return self.fn(z)


class SamplingMode(Enum):
    UNIFORM = "uniform"
    IMPORTANCE = "importance"


class FiniteSumOracle(StochasticOracle):
    """Oracle for F = sum_i F_i with uniform or importance sampling.

    Uniform:    F_xi = N F_i,      q_i = 1/N,              L = sqrt(N sum L_i^2).
    Importance: F_xi = F_i / q_i,  q_i = L_i / sum_j L_j,  L = sum_i L_i.
    """

    def __init__(self, components: Sequence, mode: SamplingMode = SamplingMode.UNIFORM):
        if not components:
            raise ConfigError("finite sum needs at least one component")
        self.components = list(components)
        self.mode = mode
        self.N = len(self.components)
        Ls = np.array([c.L for c in self.components], dtype=float)
        if mode is SamplingMode.UNIFORM:
            self.q = np.full(self.N, 1.0 / self.N)
            self.L = float(np.sqrt(self.N * np.sum(Ls ** 2)))
        elif mode is SamplingMode.IMPORTANCE:
            if np.any(Ls <= 0):
                raise ConfigError("importance sampling needs strictly positive L_i")
            self.q = Ls / Ls.sum()
            self.L = float(Ls.sum())
        else:
            raise ConfigError(f"unknown sampling mode {mode}")
        self._alias = AliasSampler(self.q)

    def full(self, z: Point) -> np.ndarray:
        out = self.components[0](z)
        for c in self.components[1:]:
            out = out + c(z)
        return out

    def _evaluator(self, i: int, meter: Optional[OpMeter] = None):
        inv_q = 1.0 / self.q[i]
        comp = self.components[i]

        def ev(z: Point) -> np.ndarray:
            if meter is not None:
                meter.component_calls += 1
            return inv_q * comp(z)

        return ev

    def sample(self, rng, u=None, v=None, meter=None):
        i = self._alias.sample(rng)
        return i, self._evaluator(i, meter)

    def support(self, u=None, v=None):
        self._check_support()
        return [(float(self.q[i]), self._evaluator(i)) for i in range(self.N)]

    def support_size(self) -> int:
        return self.N


# ---------------------------------------------------------------------------
# matrix games
# ---------------------------------------------------------------------------

class GameScheme(Enum):
    FIXED_ROWCOL = "fixed"
    VAR_EUCLIDEAN = "var-eucl"
    VAR_ENTROPIC = "var-ent"


class MatrixGameOracle(StochasticOracle):
    """Row/column oracle for the bilinear operator F(x, y) = (A^T y; -A x).

    F_xi picks one row i and one column j:

        F_(i,j)(z) = ( A_{i:} y_i / r_i ; -A_{:j} x_j / c_j ).

    Fixed scheme: r_i, c_j proportional to squared row/column norms,
    L = Frobenius norm of A.  Variable Euclidean: weights are squared
    coordinate differences of the anchors, same L.  Variable entropic:
    absolute differences, L = max |A_ij|, with the l1/l-inf norm pairing.
    When an anchor difference vanishes on a block, that block falls back
    to the fixed marginal (any distribution keeps the oracle unbiased and
    the Lipschitz bound is vacuous there).
    """

    def __init__(self, game, scheme: GameScheme):
        self.game = game
        self.scheme = scheme
        A = game.A
        self.m, self.n = A.shape
        frob_sq = game.frob_norm ** 2
        if frob_sq <= 0:
            raise ConfigError("matrix game oracle needs a nonzero matrix")
        self._r_fixed = game.row_sq_norms / frob_sq
        self._c_fixed = game.col_sq_norms / frob_sq
        if scheme is GameScheme.FIXED_ROWCOL:
            self.L = game.frob_norm
            self._row_alias = AliasSampler(self._r_fixed)
            self._col_alias = AliasSampler(self._c_fixed)
        elif scheme is GameScheme.VAR_EUCLIDEAN:
            self.L = game.frob_norm
            self.is_variable = True
        elif scheme is GameScheme.VAR_ENTROPIC:
            self.L = game.max_norm
            self.is_variable = True
            self.entropic_norms = True
        else:
            raise ConfigError(f"unknown matrix game scheme {scheme}")

    def full(self, z: Point) -> np.ndarray:
        A = self.game.A
        return np.concatenate([A.T @ z.y, -(A @ z.x)])

    def _marginals(self, u: Optional[Point], v: Optional[Point]):
        if not self.is_variable:
            return self._r_fixed, self._c_fixed
        if u is None or v is None:
            raise ConfigError("variable oracle needs the anchor pair (u, v)")
        power = 1 if self.scheme is GameScheme.VAR_ENTROPIC else 2
        wr = np.abs(u.y - v.y) ** power
        wc = np.abs(u.x - v.x) ** power
        r = wr / wr.sum() if wr.sum() > 0 else self._r_fixed
        c = wc / wc.sum() if wc.sum() > 0 else self._c_fixed
        return r, c

    def _evaluator(self, i: int, j: int, r_i: float, c_j: float,
                   meter: Optional[OpMeter] = None):
        A = self.game.A
        n = self.n
        inv_r, inv_c = 1.0 / r_i, 1.0 / c_j

        def ev(z: Point) -> np.ndarray:
            if meter is not None:
                meter.component_calls += 1
                meter.rows_touched.append(i)
                meter.cols_touched.append(j)
            coords = z.coords
            return _kernels.rowcol_eval(A, i, j, inv_r * coords[n + i], -inv_c * coords[j])

        return ev

    def _draw(self, rng, u, v):
        if self.scheme is GameScheme.FIXED_ROWCOL:
            return (self._row_alias.sample(rng), self._col_alias.sample(rng),
                    self._r_fixed, self._c_fixed)
        r, c = self._marginals(u, v)
        i = int(_kernels.weighted_index(r, rng.random()))
        j = int(_kernels.weighted_index(c, rng.random()))
        return i, j, r, c

    def sample(self, rng, u=None, v=None, meter=None):
        i, j, r, c = self._draw(rng, u, v)
        return (i, j), self._evaluator(i, j, r[i], c[j], meter)

    def sample_correction(self, rng, u, v, meter=None):
        i, j, r, c = self._draw(rng, u, v)
        if meter is not None:
            meter.component_calls += 2
            meter.rows_touched += [i, i]
            meter.cols_touched += [j, j]
        n = self.n
        uc, vc = u.coords, v.coords
        dy = (uc[n + i] - vc[n + i]) / r[i]
        dx = -(uc[j] - vc[j]) / c[j]
        return (i, j), _kernels.rowcol_eval(self.game.A, i, j, dy, dx)

    def support(self, u=None, v=None):
        self._check_support()
        r, c = self._marginals(u, v)
        out = []
        for i in range(self.m):
            if r[i] == 0:
                continue
            for j in range(self.n):
                if c[j] == 0:
                    continue
                out.append((float(r[i] * c[j]), self._evaluator(i, j, r[i], c[j])))
        return out

    def support_size(self) -> int:
        return self.m * self.n


# ---------------------------------------------------------------------------
# operator evaluation and oracle laws
# ---------------------------------------------------------------------------

def full_operator(problem, z: Point, meter: Optional[OpMeter] = None) -> np.ndarray:
    """Evaluate the full operator F(z) of a problem, charging full cost."""
    out = problem.operator(z)
    if out.shape != z.coords.shape:
        raise DomainError("operator output dimension mismatch")
    if meter is not None:
        meter.full_calls += 1
        meter.units += problem.cost_full
    return out


def _oracle_geometry(oracle: StochasticOracle, z: Point) -> Geometry:
    if oracle.entropic_norms:
        return Geometry.entropic(z.n, z.m)
    return Geometry.euclidean()


def verify_unbiased(oracle: StochasticOracle, z: Point,
                    u: Optional[Point] = None, v: Optional[Point] = None) -> float:
    """Max coordinate of | E_xi[F_xi(z)] - F(z) | by exact enumeration.

    Variable schemes need the anchor pair that fixes the distribution.
    """
    mean = np.zeros_like(z.coords)
    for prob, ev in oracle.support(u, v):
        mean += prob * ev(z)
    return float(np.max(np.abs(mean - oracle.full(z))))


def verify_mean_lipschitz(oracle: StochasticOracle, u: Point, v: Point) -> Tuple[float, float]:
    """Exact (E ||F_xi(u) - F_xi(v)||_*^2, L^2 ||u - v||^2) pair.

    Norms follow the oracle's pairing: plain l2 for Euclidean oracles,
    the block l1 primal / l-inf dual pair for entropic ones.  The first
    element never exceeding the second is the mean-Lipschitz law.
    """
    geom = _oracle_geometry(oracle, u)
    lhs = 0.0
    for prob, ev in oracle.support(u, v):
        lhs += prob * dual_norm_sq(geom, ev(u) - ev(v), u.split)
    rhs = oracle.L ** 2 * primal_norm_sq(geom, u, v)
    return lhs, rhs
