"""Self-contained property suites behind ``vrvi verify``.

Each suite re-derives a law the library promises (oracle unbiasedness,
mean-Lipschitz bounds, exact Lyapunov decrease, the prox-inequality,
simplex invariants) by enumeration or randomized trial and reports a
single pass/fail record.  Suites accept injection hooks (an oracle
transform, a step-size override) so that deliberately broken inputs are
seen to fail.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, List, Optional

import numpy as np
import scipy.optimize

from .errors import VrviError
from .geometry import (
    BoxNonneg,
    Geometry,
    L1Norm,
    LinearPlusIndicator,
    Point,
    SimplexIndicator,
    SquaredDistance,
    StronglyConvexQuadratic,
    bregman_div,
    entropic_dual,
    primal_norm_sq,
    project_simplex,
    prox_step_euclidean,
)
from .metrics import lyapunov_phi
from .oracles import (
    FiniteSumOracle,
    GameScheme,
    MatrixGameOracle,
    SamplingMode,
    verify_mean_lipschitz,
    verify_unbiased,
)
from .problems import (
    MatrixGame,
    VIProblem,
    make_finite_sum,
    make_matrix_game,
    rock_paper_scissors,
    split_game_by_rows,
)
from .solvers import Algo, SolverConfig, init_state, make_rng, step_vr_eg, step_vr_fbf, step_vr_mp


@dataclass
class SuiteResult:
    name: str
    passed: bool
    detail: str


# ---------------------------------------------------------------------------
# reference solves
# ---------------------------------------------------------------------------

def solve_game_lp(A: np.ndarray):
    """Equilibrium of the simplex-constrained game by linear programming.

    Returns (x*, y*, value); accuracy is that of the LP solver, far below
    the tolerances used by the harnesses.
    """
    A = np.asarray(A, dtype=float)
    m, n = A.shape
    # min t  s.t.  A x <= t 1,  sum x = 1,  x >= 0
    res_x = scipy.optimize.linprog(
        c=np.r_[np.zeros(n), 1.0],
        A_ub=np.c_[A, -np.ones(m)], b_ub=np.zeros(m),
        A_eq=np.r_[np.ones(n), 0.0].reshape(1, -1), b_eq=[1.0],
        bounds=[(0, None)] * n + [(None, None)], method="highs")
    # max s  s.t.  A^T y >= s 1,  sum y = 1,  y >= 0
    res_y = scipy.optimize.linprog(
        c=np.r_[np.zeros(m), -1.0],
        A_ub=np.c_[-A.T, np.ones(n)], b_ub=np.zeros(n),
        A_eq=np.r_[np.ones(m), 0.0].reshape(1, -1), b_eq=[1.0],
        bounds=[(0, None)] * m + [(None, None)], method="highs")
    if not (res_x.success and res_y.success):
        raise VrviError("LP reference solve failed")
    return res_x.x[:n], res_y.x[:m], float(res_x.x[n])


# ---------------------------------------------------------------------------
# shared random instances
# ---------------------------------------------------------------------------

def _random_game(rng, m=6, n=5) -> MatrixGame:
    return MatrixGame(rng.standard_normal((m, n)))


def _random_simplex_point(rng, n, m) -> Point:
    x = rng.random(n) + 1e-3
    y = rng.random(m) + 1e-3
    return Point.of_blocks(x / x.sum(), y / y.sum())


def _finite_sum_oracles(rng):
    comps = split_game_by_rows(_random_game(rng, 4, 4), 3)
    return [
        ("uniform-finite-sum", FiniteSumOracle(comps, SamplingMode.UNIFORM), (4, 4)),
        ("importance-finite-sum", FiniteSumOracle(comps, SamplingMode.IMPORTANCE), (4, 4)),
    ]


# ---------------------------------------------------------------------------
# suites
# ---------------------------------------------------------------------------

def suite_unbiasedness(n_points: int = 50, seed: int = 91,
                       oracle_transform: Optional[Callable] = None) -> SuiteResult:
    """E_xi[F_xi(z)] must equal F(z) to 1e-12 by exact enumeration."""
    rng = np.random.default_rng(seed)
    game = _random_game(rng)
    oracles = [
        ("fixed-rowcol", MatrixGameOracle(game, GameScheme.FIXED_ROWCOL), (game.n, game.m)),
        ("var-euclidean", MatrixGameOracle(game, GameScheme.VAR_EUCLIDEAN), (game.n, game.m)),
        ("var-entropic", MatrixGameOracle(game, GameScheme.VAR_ENTROPIC), (game.n, game.m)),
    ] + _finite_sum_oracles(rng)
    worst, worst_name = 0.0, ""
    for name, oracle, (n, m) in oracles:
        if oracle_transform is not None:
            oracle = oracle_transform(oracle)
        for _ in range(n_points):
            z = _random_simplex_point(rng, n, m)
            u = _random_simplex_point(rng, n, m)
            v = _random_simplex_point(rng, n, m)
            dev = verify_unbiased(oracle, z, u=u, v=v)
            if dev > worst:
                worst, worst_name = dev, name
    ok = worst <= 1e-12
    return SuiteResult("unbiasedness", ok, f"max deviation {worst:.3e} ({worst_name})")


def suite_mean_lipschitz(n_pairs: int = 100, seed: int = 92) -> SuiteResult:
    """E||F_xi(u)-F_xi(v)||_*^2 <= L^2 ||u-v||^2, plus the fixed-oracle
    second-moment identity E||F_xi(z)||^2 = ||A||_F^2 ||z||^2 at v = 0."""
    rng = np.random.default_rng(seed)
    game = _random_game(rng)
    zero = Point.of_blocks(np.zeros(game.n), np.zeros(game.m))
    fixed = MatrixGameOracle(game, GameScheme.FIXED_ROWCOL)
    oracles = [
        ("fixed-rowcol", fixed, (game.n, game.m)),
        ("var-euclidean", MatrixGameOracle(game, GameScheme.VAR_EUCLIDEAN), (game.n, game.m)),
        ("var-entropic", MatrixGameOracle(game, GameScheme.VAR_ENTROPIC), (game.n, game.m)),
    ] + _finite_sum_oracles(rng)
    worst_slack, worst_name = -np.inf, ""
    for name, oracle, (n, m) in oracles:
        for _ in range(n_pairs):
            u = _random_simplex_point(rng, n, m)
            v = _random_simplex_point(rng, n, m)
            lhs, rhs = verify_mean_lipschitz(oracle, u, v)
            slack = lhs - rhs
            if slack > worst_slack:
                worst_slack, worst_name = slack, name
    eq_err = 0.0
    for _ in range(20):
        u = _random_simplex_point(rng, game.n, game.m)
        lhs, rhs = verify_mean_lipschitz(fixed, u, zero)
        eq_err = max(eq_err, abs(lhs - rhs))
    ok = worst_slack <= 1e-10 and eq_err <= 1e-10
    return SuiteResult(
        "mean-lipschitz", ok,
        f"max (lhs-rhs) {worst_slack:.3e} ({worst_name}); equality witness err {eq_err:.3e}")


def lyapunov_test_problem() -> VIProblem:
    """N = 3 affine finite sum over a small game with simplex constraints."""
    game = rock_paper_scissors()
    comps = split_game_by_rows(game, 3)
    xs, ys, _ = solve_game_lp(game.A)
    z0 = Point.of_blocks(np.array([0.7, 0.2, 0.1]), np.array([0.2, 0.3, 0.5]))
    return make_finite_sum(comps, SimplexIndicator(3, 3), z0,
                           known_solution=Point.of_blocks(xs, ys),
                           game=game, name="lyapunov-rps")


def lyapunov_decrease_check(algo: Algo, tau: Optional[float] = None, iters: int = 200,
                            seeds=range(5), tol: float = 1e-9):
    """Exact conditional Lyapunov decrease along real trajectories.

    At each visited state the expectation over the index xi and both
    snapshot branches is enumerated exactly and compared against the
    current value; returns (max violation, count of violations).
    """
    problem = lyapunov_test_problem()
    z_star = problem.known_solution
    oracle = problem.oracle
    p = 2.0 / 3.0
    alpha = 1.0 - p
    if tau is None:
        tau = 0.5 * np.sqrt(1.0 - alpha) / oracle.L
    cfg = SolverConfig(algo=algo, p=p, alpha=alpha, tau=tau, budget_epochs=1e9)
    # bypass the admissibility gate: injected step sizes must run, not raise
    from .solvers import ResolvedConfig
    rcfg = ResolvedConfig(algo=algo, p=p, alpha=alpha, gamma=0.5, tau=float(tau),
                          K_inner=1, budget_epochs=np.inf, seed=0, eval_every=1.0,
                          L=oracle.L)
    stepper = step_vr_eg if algo is Algo.VR_EG else step_vr_fbf
    worst, violations = -np.inf, 0
    for seed in seeds:
        rng = make_rng(seed)
        state = init_state(problem, rcfg)
        for _ in range(iters):
            phi_k = lyapunov_phi("eg-fbf", state, z_star, rcfg)
            zbar = alpha * state.z.coords + (1 - alpha) * state.w.coords
            z_half = prox_step_euclidean(
                problem.g, state.z.with_coords(zbar - tau * state.cached_Fw), tau)
            expected = 0.0
            for q, ev in oracle.support():
                corr = state.cached_Fw + ev(z_half) - ev(state.w)
                if algo is Algo.VR_EG:
                    z_next = prox_step_euclidean(
                        problem.g, state.z.with_coords(zbar - tau * corr), tau)
                else:
                    z_next = z_half.with_coords(
                        z_half.coords - tau * (ev(z_half) - ev(state.w)))
                dz = z_next.coords - z_star.coords
                dw = state.w.coords - z_star.coords
                znn = float(dz @ dz)
                # both snapshot branches, exactly weighted
                expected += q * (alpha * znn + (1 - alpha) / p *
                                 (p * znn + (1 - p) * float(dw @ dw)))
            gap = expected - phi_k
            worst = max(worst, gap)
            if gap > tol:
                violations += 1
            stepper(state, problem, rcfg, rng)
    return worst, violations


def suite_lyapunov(tau: Optional[float] = None, iters: int = 200,
                   seeds=range(5)) -> SuiteResult:
    """Conditional decrease of the snapshot Lyapunov function, enumerated
    exactly for the extragradient and FBF variants."""
    worst_eg, bad_eg = lyapunov_decrease_check(Algo.VR_EG, tau=tau, iters=iters, seeds=seeds)
    worst_fbf, bad_fbf = lyapunov_decrease_check(Algo.VR_FBF, tau=tau, iters=iters, seeds=seeds)
    ok = bad_eg == 0 and bad_fbf == 0
    return SuiteResult(
        "lyapunov-decrease", ok,
        f"max E[Phi+]-Phi: eg {worst_eg:.3e}, fbf {worst_fbf:.3e}; "
        f"violations {bad_eg}+{bad_fbf}")


def _g_variants(rng):
    n, m = 3, 2
    return [
        ("simplex", SimplexIndicator(n, m),
         lambda: _random_simplex_point(rng, n, m)),
        ("linear+l1", LinearPlusIndicator(L1Norm(0.5), rng.standard_normal(m)),
         lambda: Point(rng.standard_normal(n + m), n)),
        ("linear+quad+nonneg",
         LinearPlusIndicator(SquaredDistance(rng.standard_normal(n)),
                             rng.standard_normal(m), nonneg_y=True),
         lambda: Point.of_blocks(rng.standard_normal(n), np.abs(rng.standard_normal(m)))),
        ("strongly-convex", StronglyConvexQuadratic(0.7),
         lambda: Point(rng.standard_normal(n + m), n)),
        ("box-nonneg", BoxNonneg(-np.ones(n), np.ones(n)),
         lambda: Point.of_blocks(np.clip(rng.standard_normal(n), -1, 1),
                                 np.abs(rng.standard_normal(m)))),
    ]


def suite_prox_inequality(n_trials: int = 100, seed: int = 93) -> SuiteResult:
    """<zbar - anchor, u - zbar> >= tau (g(zbar) - g(u)) for every variant."""
    rng = np.random.default_rng(seed)
    worst, worst_name = -np.inf, ""
    for name, g, draw_u in _g_variants(rng):
        for _ in range(n_trials):
            anchor = Point(rng.standard_normal(5) * 2.0, 3)
            tau = float(rng.uniform(0.05, 2.0))
            u = draw_u()
            zbar = prox_step_euclidean(g, anchor, tau)
            lhs = float((zbar.coords - anchor.coords) @ (u.coords - zbar.coords))
            rhs = tau * (g.value(zbar) - g.value(u))
            slack = rhs - lhs
            if slack > worst:
                worst, worst_name = slack, name
    ok = worst <= 1e-9
    return SuiteResult("prox-inequality", ok, f"max violation {worst:.3e} ({worst_name})")


def suite_simplex(n_trials: int = 100, seed: int = 94) -> SuiteResult:
    """Projection laws, Pinsker, the three-point identity, and strict
    positivity of entropic iterates along a short mirror-prox run."""
    rng = np.random.default_rng(seed)
    problems = []
    for _ in range(n_trials):
        v = rng.standard_normal(6) * 3.0
        w = rng.standard_normal(6) * 3.0
        pv, pw = project_simplex(v), project_simplex(w)
        if abs(pv.sum() - 1.0) > 1e-12 or np.any(pv < 0):
            problems.append("projection feasibility")
        if np.linalg.norm(project_simplex(pv) - pv) > 1e-12:
            problems.append("projection idempotence")
        if np.linalg.norm(pv - pw) > np.linalg.norm(v - w) + 1e-12:
            problems.append("projection expansiveness")

    geom = Geometry.entropic(4, 3)
    for _ in range(n_trials):
        u = _random_simplex_point(rng, 4, 3)
        v = _random_simplex_point(rng, 4, 3)
        if bregman_div(geom, u, v) < 0.5 * primal_norm_sq(geom, u, v) - 1e-12:
            problems.append("pinsker")

    for g_kind, geo in (("euclidean", Geometry.euclidean()), ("entropic", geom)):
        for _ in range(n_trials):
            z = _random_simplex_point(rng, 4, 3)
            zp = _random_simplex_point(rng, 4, 3)
            z1 = _random_simplex_point(rng, 4, 3)
            lhs = bregman_div(geo, z, z1)
            grad_diff = (entropic_dual(zp) - entropic_dual(z1)) if geo.is_entropic \
                else (zp.coords - z1.coords)
            rhs = bregman_div(geo, z, zp) + bregman_div(geo, zp, z1) \
                + float(grad_diff @ (z.coords - zp.coords))
            if abs(lhs - rhs) > 1e-9:
                problems.append(f"three-point ({g_kind})")

    pennies = make_matrix_game([[1.0, -1.0], [-1.0, 1.0]], geometry="entropic")
    cfg = SolverConfig(algo=Algo.VR_MP, budget_epochs=np.inf).resolved(pennies)
    rng2 = make_rng(7)
    state = init_state(pennies, cfg, z0=Point.of_blocks([0.9, 0.1], [0.3, 0.7]))
    for _ in range(200):
        step_vr_mp(state, pennies, cfg, rng2)
        z = state.z
        if np.any(z.coords <= 0) or abs(z.x.sum() - 1) > 1e-9 or abs(z.y.sum() - 1) > 1e-9:
            problems.append("entropic positivity")
    ok = not problems
    uniq = sorted(set(problems))
    return SuiteResult("simplex-invariants", ok, "all hold" if ok else "; ".join(uniq))


def run_all_suites(lyapunov_tau: Optional[float] = None,
                   oracle_transform: Optional[Callable] = None) -> List[SuiteResult]:
    return [
        suite_unbiasedness(oracle_transform=oracle_transform),
        suite_mean_lipschitz(),
        suite_lyapunov(tau=lyapunov_tau),
        suite_prox_inequality(),
        suite_simplex(),
    ]
