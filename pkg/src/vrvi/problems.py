"""Problem instances: matrix games, linearly constrained minimization,
nonbilinear constrained min-max, and the strongly convex test problem.

Benchmark generators are deterministic per seed.  The two families of
structured test matrices used by the convergence figures are pinned here
as documented formulas (see ``NEMIROVSKI_FAMILY2_EXPONENT``); the
policeman-burglar instance uses half-normal wealths with decay 0.8.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, replace
from enum import Enum
from typing import Callable, List, Optional, Sequence

import numpy as np
import scipy.io
import scipy.sparse

from .errors import ConfigError
from .geometry import (
    Geometry,
    LinearPlusIndicator,
    Point,
    ProxFriendlyG,
    BoxNonneg,
    SimplexIndicator,
    StronglyConvexQuadratic,
)
from .oracles import (
    AffineComponent,
    CallbackComponent,
    FiniteSumOracle,
    FullOracle,
    GameScheme,
    MatrixGameOracle,
    SamplingMode,
    StochasticOracle,
)

# Exponent of the second structured test family, pinned from the robust
# stochastic approximation literature and kept as a versioned constant so
# generated instances stay reproducible.
NEMIROVSKI_FAMILY2_EXPONENT = 2.0

POLICEMAN_BURGLAR_DECAY = 0.8


# ---------------------------------------------------------------------------
# matrix games
# ---------------------------------------------------------------------------

def _spectral_norm(A: np.ndarray, iters: int = 200, tol: float = 1e-8) -> float:
    """Largest singular value by power iteration with a seed-fixed start."""
    rng = np.random.default_rng(0)
    v = rng.standard_normal(A.shape[1])
    v /= np.linalg.norm(v)
    sigma = 0.0
    for _ in range(iters):
        w = A @ v
        u = A.T @ w
        nu = np.linalg.norm(u)
        if nu == 0:
            return 0.0
        v = u / nu
        new_sigma = float(np.linalg.norm(A @ v))
        if abs(new_sigma - sigma) <= tol * max(new_sigma, 1e-30):
            return new_sigma
        sigma = new_sigma
    return sigma


class MatrixGame:
    """A payoff matrix with its norms, nonzero count and index lists."""

    def __init__(self, A):
        A = np.asarray(A, dtype=float)
        if A.ndim != 2 or min(A.shape) < 1:
            raise ConfigError("payoff matrix must be 2-dimensional and nonempty")
        if not np.all(np.isfinite(A)):
            raise ConfigError("payoff matrix must be finite")
        A = A.copy()
        A.flags.writeable = False
        self.A = A
        self.m, self.n = A.shape
        mask = A != 0
        self.nnz = int(mask.sum())
        self.row_index = [np.flatnonzero(mask[i]) for i in range(self.m)]
        self.col_index = [np.flatnonzero(mask[:, j]) for j in range(self.n)]
        self.row_sq_norms = np.sum(A ** 2, axis=1)
        self.col_sq_norms = np.sum(A ** 2, axis=0)
        self.frob_norm = float(np.sqrt(A.ravel() @ A.ravel()))
        self.max_norm = float(np.max(np.abs(A)))
        self.spectral_norm = _spectral_norm(A)

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.A).tobytes())
        h.update(str(self.A.shape).encode())
        return h.hexdigest()[:12]


# ---------------------------------------------------------------------------
# the VI container
# ---------------------------------------------------------------------------

class GapKind(Enum):
    SIMPLEX_DUALITY = "simplex-duality"
    RESTRICTED_MERIT = "restricted-merit"


@dataclass
class VIProblem:
    """Everything a solver needs: F, its oracle, g, the geometry and costs.

    ``cost_full`` is the unit charge of one full operator pass (nnz of A
    for bilinear problems, N for finite sums) and also the epoch unit;
    ``cost_component`` is the charge of one stochastic oracle call.
    """

    name: str
    operator: Callable[[Point], np.ndarray]
    oracle: StochasticOracle
    g: ProxFriendlyG
    geometry: Geometry
    z0: Point
    L_F: float
    cost_full: float
    cost_component: float
    gap_kind: GapKind
    known_solution: Optional[Point] = None
    game: Optional[MatrixGame] = None

    @property
    def epoch_units(self) -> float:
        return self.cost_full

    @property
    def split(self) -> int:
        return self.z0.split

    def with_oracle(self, oracle: StochasticOracle) -> "VIProblem":
        return replace(self, oracle=oracle)

    def fingerprint(self) -> str:
        if self.game is not None:
            return self.game.fingerprint()
        h = hashlib.sha256()
        h.update(self.name.encode())
        h.update(np.ascontiguousarray(self.z0.coords).tobytes())
        return h.hexdigest()[:12]


# ---------------------------------------------------------------------------
# constructors
# ---------------------------------------------------------------------------

_SCHEMES = {
    "fixed": GameScheme.FIXED_ROWCOL,
    "var-eucl": GameScheme.VAR_EUCLIDEAN,
    "var-ent": GameScheme.VAR_ENTROPIC,
}


def _bilinear_operator(A: np.ndarray) -> Callable[[Point], np.ndarray]:
    def op(z: Point) -> np.ndarray:
        return np.concatenate([A.T @ z.y, -(A @ z.x)])

    return op


def make_matrix_game(A, geometry: str = "euclidean", oracle_scheme: Optional[str] = None,
                     known_solution: Optional[Point] = None, z0: Optional[Point] = None,
                     name: Optional[str] = None) -> VIProblem:
    """Simplex-constrained bilinear game min_x max_y <Ax, y>.

    Euclidean geometry pairs with the ``fixed`` or ``var-eucl`` oracle,
    the entropic geometry with ``var-ent`` (the fixed distribution has no
    mean-Lipschitz bound in the entropic norm pairing and is rejected).
    The start point defaults to the uniform pair.
    """
    game = A if isinstance(A, MatrixGame) else MatrixGame(A)
    m, n = game.m, game.n
    entropic = geometry == "entropic"
    if oracle_scheme is None:
        oracle_scheme = "var-ent" if entropic else "fixed"
    if oracle_scheme == "full":
        L_F = game.max_norm if entropic else game.spectral_norm
        oracle: StochasticOracle = FullOracle(_bilinear_operator(game.A), L_F)
        if entropic:
            oracle.entropic_norms = True
    else:
        if oracle_scheme not in _SCHEMES:
            raise ConfigError(f"unknown oracle scheme {oracle_scheme!r}")
        scheme = _SCHEMES[oracle_scheme]
        if entropic and scheme is not GameScheme.VAR_ENTROPIC:
            raise ConfigError("entropic geometry requires the var-ent oracle")
        if not entropic and scheme is GameScheme.VAR_ENTROPIC:
            raise ConfigError("the var-ent oracle requires the entropic geometry")
        oracle = MatrixGameOracle(game, scheme)
    geom = Geometry.entropic(n, m) if entropic else Geometry.euclidean()
    if z0 is None:
        z0 = Point.of_blocks(np.full(n, 1.0 / n), np.full(m, 1.0 / m))
    return VIProblem(
        name=name or f"game-{m}x{n}",
        operator=_bilinear_operator(game.A),
        oracle=oracle,
        g=SimplexIndicator(n, m),
        geometry=geom,
        z0=z0,
        L_F=game.max_norm if entropic else game.spectral_norm,
        cost_full=float(game.nnz),
        cost_component=float(m + n),
        gap_kind=GapKind.SIMPLEX_DUALITY,
        known_solution=known_solution,
        game=game,
    )


def matching_pennies() -> MatrixGame:
    return MatrixGame([[1.0, -1.0], [-1.0, 1.0]])


def rock_paper_scissors() -> MatrixGame:
    return MatrixGame([[0.0, -1.0, 1.0], [1.0, 0.0, -1.0], [-1.0, 1.0, 0.0]])


def uniform_point(n: int, m: int) -> Point:
    return Point.of_blocks(np.full(n, 1.0 / n), np.full(m, 1.0 / m))


def gen_policeman_burglar(n: int, seed: int) -> MatrixGame:
    """Pursuit game on a line of n houses.

    A_ij = w_i (1 - exp(-theta |i - j|)) with half-normal wealths w_i and
    theta = 0.8; the diagonal is zero.
    """
    if n < 2:
        raise ConfigError("policeman-burglar needs n >= 2")
    rng = np.random.default_rng(seed)
    w = np.abs(rng.standard_normal(n))
    idx = np.arange(n)
    dist = np.abs(idx[:, None] - idx[None, :])
    return MatrixGame(w[:, None] * (1.0 - np.exp(-POLICEMAN_BURGLAR_DECAY * dist)))


def gen_nemirovski_test(n: int, family: int, seed: int = 0) -> MatrixGame:
    """Structured test matrices with entries in (0, 1].

    Family 1: A_ij = (i + j - 1) / (2n - 1) (1-based indices).
    Family 2: the same ratio raised to ``NEMIROVSKI_FAMILY2_EXPONENT``.
    Both are deterministic; the seed argument is accepted for interface
    uniformity with the random generators.
    """
    if n < 2:
        raise ConfigError("test matrices need n >= 2")
    if family not in (1, 2):
        raise ConfigError("family must be 1 or 2")
    i = np.arange(1, n + 1)
    base = (i[:, None] + i[None, :] - 1) / (2 * n - 1)
    return MatrixGame(base if family == 1 else base ** NEMIROVSKI_FAMILY2_EXPONENT)


def gen_standard_normal(n: int, seed: int) -> MatrixGame:
    rng = np.random.default_rng(seed)
    return MatrixGame(rng.standard_normal((n, n)))


def make_lin_constrained(f_prox, A, b, oracle_scheme: str = "fixed",
                         name: str = "lin-constrained") -> VIProblem:
    """min f(x) subject to A x = b, as the saddle problem with
    g(z) = f(x) + <b, y> and the bilinear coupling F(z) = (A^T y; -A x).

    ``f_prox`` must expose ``value`` and ``prox`` on the x block.  The y
    block is a free multiplier; the geometry is Euclidean.
    """
    game = MatrixGame(A)
    b = np.asarray(b, dtype=float)
    if b.size != game.m:
        raise ConfigError(f"b has dimension {b.size}, expected {game.m}")
    if oracle_scheme == "full":
        oracle: StochasticOracle = FullOracle(_bilinear_operator(game.A), game.spectral_norm)
    else:
        if oracle_scheme not in ("fixed", "var-eucl"):
            raise ConfigError("linearly constrained problems use fixed or var-eucl oracles")
        oracle = MatrixGameOracle(game, _SCHEMES[oracle_scheme])
    z0 = Point.of_blocks(np.zeros(game.n), np.zeros(game.m))
    return VIProblem(
        name=name,
        operator=_bilinear_operator(game.A),
        oracle=oracle,
        g=LinearPlusIndicator(f_prox, b),
        geometry=Geometry.euclidean(),
        z0=z0,
        L_F=game.spectral_norm,
        cost_full=float(game.nnz),
        cost_component=float(game.m + game.n),
        gap_kind=GapKind.RESTRICTED_MERIT,
        game=game,
    )


class SmoothFunction:
    """A smooth convex function given by value/gradient callbacks."""

    def __init__(self, value: Callable[[np.ndarray], float],
                 grad: Callable[[np.ndarray], np.ndarray]):
        self.value = value
        self.grad = grad


def make_nonbilinear_constrained(f: SmoothFunction, h_list: Sequence[SmoothFunction],
                                 component_lipschitz: Sequence[float],
                                 dim_x: int, x_lo=None, x_hi=None,
                                 name: str = "nonbilinear") -> VIProblem:
    """min f(x) over x in X subject to h_i(x) <= 0 for i in [N].

    The KKT operator is F(z) = (grad f(x) + sum_i y_i grad h_i(x);
    -(h_1(x), ..., h_N(x))) with g the indicator of X x R_+^N.  The
    stochastic oracle picks one constraint uniformly:

        F_i(z) = ( grad f(x) + N y_i grad h_i(x) ; -N h_i(x) e_i ),

    which averages back to F.  Lipschitz bounds of the components are
    declared by the caller.
    """
    if f.grad is None or any(h.grad is None for h in h_list):
        raise ConfigError("nonbilinear problems need gradient callbacks")
    N = len(h_list)
    if len(component_lipschitz) != N:
        raise ConfigError("one Lipschitz bound per constraint is required")

    def operator(z: Point) -> np.ndarray:
        x, y = z.x, z.y
        gx = np.array(f.grad(x), dtype=float)
        hvals = np.empty(N)
        for i, h in enumerate(h_list):
            gx += y[i] * h.grad(x)
            hvals[i] = h.value(x)
        return np.concatenate([gx, -hvals])

    def make_component(i: int):
        h = h_list[i]

        def comp(z: Point) -> np.ndarray:
            x = z.x
            gx = f.grad(x) + N * z.y[i] * h.grad(x)
            yblock = np.zeros(N)
            yblock[i] = -N * h.value(x)
            return np.concatenate([gx, yblock])

        # comp is the pre-scaled F_i above; the uniform oracle multiplies
        # stored pieces by N, so store comp / N to sample exactly F_i
        return CallbackComponent(lambda z, c=comp: c(z) / N, component_lipschitz[i] / N)

    oracle = FiniteSumOracle([make_component(i) for i in range(N)], SamplingMode.UNIFORM)
    z0 = Point.of_blocks(np.zeros(dim_x), np.zeros(N))
    return VIProblem(
        name=name,
        operator=operator,
        oracle=oracle,
        g=BoxNonneg(x_lo, x_hi),
        geometry=Geometry.euclidean(),
        z0=z0,
        L_F=oracle.L,
        cost_full=float(N),
        cost_component=1.0,
        gap_kind=GapKind.RESTRICTED_MERIT,
    )


def make_finite_sum(components, g: ProxFriendlyG, z0: Point,
                    mode: SamplingMode = SamplingMode.UNIFORM,
                    known_solution: Optional[Point] = None, L_F: Optional[float] = None,
                    gap_kind: GapKind = GapKind.RESTRICTED_MERIT,
                    game: Optional[MatrixGame] = None,
                    name: str = "finite-sum") -> VIProblem:
    """Generic finite-sum VI with F = sum_i F_i and a prox-friendly g."""
    oracle = FiniteSumOracle(components, mode)
    return VIProblem(
        name=name,
        operator=oracle.full,
        oracle=oracle,
        g=g,
        geometry=Geometry.euclidean(),
        z0=z0,
        L_F=oracle.L if L_F is None else float(L_F),
        cost_full=float(oracle.N),
        cost_component=1.0,
        gap_kind=gap_kind,
        known_solution=known_solution,
        game=game,
    )


def split_game_by_rows(game: MatrixGame, parts: int) -> List[AffineComponent]:
    """Write the bilinear operator of a game as a sum of row-block pieces.

    Piece k keeps rows k, k+parts, k+2*parts, ... of A and zeros the
    rest, so the components sum back to the full operator exactly.
    """
    m, n = game.m, game.n
    comps = []
    for k in range(parts):
        Ak = np.zeros_like(game.A)
        rows = np.arange(k, m, parts)
        Ak[rows] = game.A[rows]
        M = np.zeros((n + m, n + m))
        M[:n, n:] = Ak.T
        M[n:, :n] = -Ak
        comps.append(AffineComponent(M))
    return comps


def make_strongly_convex_instance(mu: float, scale: float = 1.0) -> VIProblem:
    """Rotation coupling with a strongly convex quadratic g.

    F(z) = (A^T y; -A x) with A a scaled planar rotation and
    g(z) = (mu/2) ||z||^2; the unique solution is z* = 0 because the map
    F + mu I is an invertible linear operator vanishing only at zero.
    """
    c, s = np.cos(np.pi / 3), np.sin(np.pi / 3)
    game = MatrixGame(scale * np.array([[c, -s], [s, c]]))
    z0 = Point.of_blocks(np.array([1.0, -0.5]), np.array([0.75, 1.25]))
    zstar = Point.of_blocks(np.zeros(2), np.zeros(2))
    return VIProblem(
        name="strongly-convex-rotation",
        operator=_bilinear_operator(game.A),
        oracle=MatrixGameOracle(game, GameScheme.FIXED_ROWCOL),
        g=StronglyConvexQuadratic(mu),
        geometry=Geometry.euclidean(),
        z0=z0,
        L_F=game.spectral_norm,
        cost_full=float(game.nnz),
        cost_component=float(game.m + game.n),
        gap_kind=GapKind.RESTRICTED_MERIT,
        known_solution=zstar,
        game=game,
    )


# ---------------------------------------------------------------------------
# MatrixMarket import/export
# ---------------------------------------------------------------------------

def save_matrix_market(path, A, fmt: str = "coordinate") -> None:
    """Write a matrix in MatrixMarket coordinate or array format."""
    A = A.A if isinstance(A, MatrixGame) else np.asarray(A, dtype=float)
    if fmt == "coordinate":
        scipy.io.mmwrite(str(path), scipy.sparse.coo_matrix(A))
    elif fmt == "array":
        scipy.io.mmwrite(str(path), A)
    else:
        raise ConfigError(f"unknown MatrixMarket format {fmt!r}")


def load_matrix_market(path) -> MatrixGame:
    """Read a MatrixMarket file (either format) as a game matrix."""
    M = scipy.io.mmread(str(path))
    if scipy.sparse.issparse(M):
        M = M.toarray()
    return MatrixGame(np.asarray(M, dtype=float))


GENERATORS = {
    "policeman-burglar": gen_policeman_burglar,
    "nemirovski1": lambda n, seed: gen_nemirovski_test(n, 1, seed),
    "nemirovski2": lambda n, seed: gen_nemirovski_test(n, 2, seed),
    "standard-normal": gen_standard_normal,
}
