"""Variance-reduced splitting methods and the deterministic baseline.

All stochastic steppers share the loopless snapshot pattern: a rarely
refreshed anchor w with a cached full operator value F(w), cheap
correction terms F_xi(.) - F_xi(w), and a retracted iterate
zbar = alpha z + (1 - alpha) w.  Per iteration the RNG stream is consumed
in a fixed order: (1) the oracle index draw (row then column for matrix
games), (2) the snapshot coin with probability p.  The double-loop
mirror-prox variant replaces the coin with K inner steps per snapshot and
performs its updates in the dual (log) domain under the entropic
geometry.

Averaged iterates are maintained with Kahan-compensated running sums; the
reported point is sum/count materialized only at evaluation instants.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from . import _kernels
from .errors import ConfigError, NumericError, VrviError
from .geometry import Point, blended_prox, entropic_dual, mirror_argmin
from .metrics import RunTrace, TraceRow, evaluate_gap
from .oracles import OpMeter, full_operator
from .problems import VIProblem


class Algo(Enum):
    VR_EG = "vr-eg"
    VR_MP = "vr-mp"
    VR_FBF = "vr-fbf"
    VR_FORB = "vr-forb"
    DET_EG = "det-eg"


_EUCLIDEAN_ONLY = {Algo.VR_EG, Algo.VR_FBF, Algo.VR_FORB}


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ResolvedConfig:
    """Fully determined parameters of one run."""

    algo: Algo
    p: float
    alpha: float
    gamma: float
    tau: float
    K_inner: int
    budget_epochs: float
    seed: int
    eval_every: float
    L: float


@dataclass
class SolverConfig:
    """User-facing parameters; anything omitted is derived from the problem.

    Defaults follow the practical recommendations: p = 2/N for finite
    sums, p = (m+n)/nnz(A) for bilinear problems, alpha = 1 - p,
    tau = gamma sqrt(p)/L for the extragradient and forward splitting
    variants and gamma sqrt(p(1-p))/L for the reflected one.  The
    double-loop variant uses K = round(1/p) inner steps with
    alpha = 1 - 1/K.  Admissibility: tau L < sqrt(1-alpha), respectively
    tau L < sqrt(alpha(1-alpha)).
    """

    algo: Algo
    budget_epochs: float = 10.0
    seed: int = 0
    p: Optional[float] = None
    alpha: Optional[float] = None
    gamma: float = 0.99
    tau: Optional[float] = None
    K_inner: Optional[int] = None
    eval_every: Optional[float] = None

    def resolved(self, problem: VIProblem) -> ResolvedConfig:
        algo = self.algo if isinstance(self.algo, Algo) else Algo(self.algo)
        if self.budget_epochs <= 0:
            raise ConfigError("budget_epochs must be positive")
        if algo in _EUCLIDEAN_ONLY and problem.geometry.is_entropic:
            raise ConfigError(f"{algo.value} supports only the Euclidean geometry")

        L = problem.L_F if algo is Algo.DET_EG else problem.oracle.L
        p = self.p
        if p is None:
            if problem.cost_component == 1.0:
                p = min(1.0, 2.0 / problem.cost_full)
            else:
                p = min(1.0, problem.cost_component / problem.cost_full)
            if algo is Algo.VR_FORB:
                # the reflected variant needs alpha = 1-p > 0 for an
                # admissible step; cap the default at the alpha = 1/2 regime
                p = min(p, 0.5)
        if not (0.0 < p <= 1.0):
            raise ConfigError(f"p={p} outside (0, 1]")
        if not (0.0 < self.gamma < 1.0):
            raise ConfigError("gamma must lie in (0, 1)")

        K = self.K_inner if self.K_inner is not None else max(1, round(1.0 / p))
        if algo is Algo.VR_MP:
            p = 1.0 / K
        alpha = self.alpha
        if alpha is None:
            alpha = 1.0 - 1.0 / K if algo is Algo.VR_MP else 1.0 - p
        if not (0.0 <= alpha < 1.0):
            raise ConfigError(f"alpha={alpha} outside [0, 1)")

        tau = self.tau
        if algo is Algo.DET_EG:
            if tau is None:
                tau = 0.99 / L
            if tau > 0.99 / L * (1 + 1e-12):
                raise ConfigError(f"deterministic step size {tau} exceeds 0.99/L_F")
        else:
            if tau is None:
                if algo is Algo.VR_FORB:
                    tau = self.gamma * np.sqrt(alpha * (1 - alpha)) / L
                else:
                    tau = self.gamma * np.sqrt(1 - alpha) / L
            bound = np.sqrt(alpha * (1 - alpha)) if algo is Algo.VR_FORB else np.sqrt(1 - alpha)
            if tau * L >= bound:
                raise ConfigError(
                    f"step size {tau} inadmissible: tau*L={tau * L:.6g} "
                    f"must stay below {bound:.6g}")
        if tau <= 0:
            raise ConfigError("tau must be positive")

        eval_every = self.eval_every if self.eval_every is not None else problem.epoch_units
        if eval_every <= 0:
            raise ConfigError("eval_every must be positive")
        return ResolvedConfig(algo=algo, p=float(p), alpha=float(alpha), gamma=float(self.gamma),
                              tau=float(tau), K_inner=int(K),
                              budget_epochs=float(self.budget_epochs), seed=int(self.seed),
                              eval_every=float(eval_every), L=float(L))


def make_rng(seed: int) -> np.random.Generator:
    """The per-run stream: a counter-based generator keyed by the seed."""
    return np.random.Generator(np.random.Philox(seed))


# ---------------------------------------------------------------------------
# state
# ---------------------------------------------------------------------------

class _KahanSum:
    """Compensated running vector sum for long low-tolerance averages."""

    def __init__(self, dim: int):
        self.total = np.zeros(dim)
        self.comp = np.zeros(dim)
        self.count = 0

    def add(self, v: np.ndarray) -> None:
        _kernels.kahan_add(self.total, self.comp, v)
        self.count += 1

    def mean(self) -> np.ndarray:
        if self.count == 0:
            raise VrviError("empty average")
        return self.total / self.count


@dataclass
class SolverState:
    """Mutable per-run state shared by all steppers.

    ``cached_Fw`` always equals the full operator at the snapshot; it is
    refreshed exactly when the snapshot changes and full-pass cost is
    charged only then.  The double-loop fields (duals, epoch sums,
    counters) are unused by the loopless methods.
    """

    z: Point
    w: Point
    cached_Fw: np.ndarray
    prev_w: Optional[Point] = None
    z_dual: Optional[np.ndarray] = None
    wbar_dual: Optional[np.ndarray] = None
    inner_k: int = 0
    outer_s: int = 0
    epoch_sum_z: Optional[_KahanSum] = None
    epoch_sum_dual: Optional[_KahanSum] = None
    average: _KahanSum = None
    cost: float = 0.0
    iters: int = 0

    def averaged_point(self) -> Point:
        if self.average.count == 0:
            return self.z
        return self.z.with_coords(self.average.mean())


def init_state(problem: VIProblem, cfg: ResolvedConfig,
               z0: Optional[Point] = None, meter: Optional[OpMeter] = None) -> SolverState:
    """Build the initial state and charge the first full pass.

    Snapshot, iterate and dual-averaged anchor all start at z0.
    """
    z0 = problem.z0 if z0 is None else z0
    Fw = full_operator(problem, z0, meter)
    state = SolverState(z=z0, w=z0, cached_Fw=Fw, prev_w=z0,
                        average=_KahanSum(z0.dim))
    state.cost = problem.cost_full
    if cfg.algo is Algo.VR_MP or problem.geometry.is_entropic:
        dual = entropic_dual(z0) if problem.geometry.is_entropic else z0.coords.copy()
        state.z_dual = dual
        state.wbar_dual = dual.copy()
        state.epoch_sum_z = _KahanSum(z0.dim)
        state.epoch_sum_dual = _KahanSum(z0.dim)
    return state


def _coin(rng, p: float) -> bool:
    return rng.random() < p


def _refresh_snapshot(state: SolverState, problem: VIProblem, z_new: Point,
                      meter: Optional[OpMeter]) -> None:
    state.w = z_new
    state.cached_Fw = full_operator(problem, z_new, meter)
    state.cost += problem.cost_full


# ---------------------------------------------------------------------------
# steppers
# ---------------------------------------------------------------------------

def step_vr_eg(state: SolverState, problem: VIProblem, cfg: ResolvedConfig, rng,
               meter: Optional[OpMeter] = None) -> SolverState:
    """One variance-reduced extragradient iteration.

    zbar    = alpha z + (1-alpha) w
    z_half  = prox_{tau g}(zbar - tau F(w))
    z_next  = prox_{tau g}(zbar - tau [F(w) + F_xi(z_half) - F_xi(w)])
    w       = z_next with probability p (refreshing F(w))

    The half point enters the running average.  With the degenerate full
    oracle the correction collapses to F(z_half) and one full pass is
    charged, which reproduces the deterministic method exactly at p = 1.
    """
    g, tau, alpha = problem.g, cfg.tau, cfg.alpha
    split = state.z.split
    z_half = blended_prox(g, alpha, state.z.coords, state.w.coords, tau,
                          state.cached_Fw, split)
    if meter is not None:
        meter.prox_calls += 1
    if problem.oracle.is_full:
        xi, ev = problem.oracle.sample(rng, u=z_half, v=state.w, meter=meter)
        Fhat = ev(z_half)
        state.cost += problem.cost_full
    else:
        xi, corr = problem.oracle.sample_correction(rng, z_half, state.w, meter)
        Fhat = state.cached_Fw + corr
        state.cost += 2 * problem.cost_component
    z_next = blended_prox(g, alpha, state.z.coords, state.w.coords, tau, Fhat, split)
    if meter is not None:
        meter.prox_calls += 1
    state.average.add(z_half.coords)
    heads = _coin(rng, cfg.p)
    state.z = z_next
    if heads:
        _refresh_snapshot(state, problem, z_next, meter)
    state.iters += 1
    return state


def step_vr_fbf(state: SolverState, problem: VIProblem, cfg: ResolvedConfig, rng,
                meter: Optional[OpMeter] = None) -> SolverState:
    """One variance-reduced forward-backward-forward iteration.

    z_half  = J_{tau G}(zbar - tau F(w))            (one resolvent)
    z_next  = z_half - tau (F_xi(z_half) - F_xi(w))

    The corrected point is not projected back and may leave dom g; that
    is intrinsic to the scheme.
    """
    g, tau, alpha = problem.g, cfg.tau, cfg.alpha
    split = state.z.split
    z_half = blended_prox(g, alpha, state.z.coords, state.w.coords, tau,
                          state.cached_Fw, split)
    if meter is not None:
        meter.resolvent_calls += 1
    if problem.oracle.is_full:
        xi, ev = problem.oracle.sample(rng, u=z_half, v=state.w, meter=meter)
        corr = ev(z_half) - state.cached_Fw
        state.cost += problem.cost_full
    else:
        xi, corr = problem.oracle.sample_correction(rng, z_half, state.w, meter)
        state.cost += 2 * problem.cost_component
    z_next = Point._wrap(z_half.coords - tau * corr, split)
    state.average.add(z_half.coords)
    heads = _coin(rng, cfg.p)
    state.z = z_next
    if heads:
        _refresh_snapshot(state, problem, z_next, meter)
    state.iters += 1
    return state


def step_vr_forb(state: SolverState, problem: VIProblem, cfg: ResolvedConfig, rng,
                 meter: Optional[OpMeter] = None) -> SolverState:
    """One variance-reduced forward-reflected-backward iteration.

    z_next = J_{tau G}(zbar - tau F(w_k) - tau [F_xi(z_k) - F_xi(w_{k-1})])

    Both stochastic terms share the iteration's single index; the stale
    snapshot w_{k-1} is kept on the state (initialized to w_0, so the
    reflection term vanishes on the first step).  The running average
    collects z_k, the pre-update iterate.
    """
    g, tau, alpha = problem.g, cfg.tau, cfg.alpha
    split = state.z.split
    xi, refl = problem.oracle.sample_correction(rng, state.z, state.prev_w, meter)
    state.cost += 2 * (problem.cost_full if problem.oracle.is_full
                       else problem.cost_component)
    z_next = blended_prox(g, alpha, state.z.coords, state.w.coords, tau,
                          state.cached_Fw + refl, split)
    if meter is not None:
        meter.resolvent_calls += 1
    state.average.add(state.z.coords)
    heads = _coin(rng, cfg.p)
    state.prev_w = state.w
    state.z = z_next
    if heads:
        _refresh_snapshot(state, problem, z_next, meter)
    state.iters += 1
    return state


def step_vr_mp(state: SolverState, problem: VIProblem, cfg: ResolvedConfig, rng,
               meter: Optional[OpMeter] = None) -> SolverState:
    """One inner iteration of double-loop mirror-prox with variance reduction.

    Both half and full steps blend two Bregman anchors, the running
    iterate and the dual-averaged point wbar of the previous epoch:

        z_half = argmin g + <F(w), .> + (alpha/tau) D(., z_k)
                                      + ((1-alpha)/tau) D(., wbar)

    After K inner steps the snapshot moves to the primal average of the
    epoch's iterates, wbar to their dual average, and F(w) is recomputed
    at full cost.
    """
    g, geom, tau, alpha = problem.g, problem.geometry, cfg.tau, cfg.alpha
    z_half, half_dual = mirror_argmin(geom, g, state.cached_Fw, alpha, tau,
                                      state.z, state.z_dual, state.wbar_dual)
    if meter is not None:
        meter.prox_calls += 1
    xi, ev = problem.oracle.sample(rng, u=z_half, v=state.w, meter=meter)
    if problem.oracle.is_full:
        Fhat = ev(z_half)
        state.cost += problem.cost_full
    else:
        Fhat = state.cached_Fw + ev(z_half) - ev(state.w)
        state.cost += 2 * problem.cost_component
    z_next, next_dual = mirror_argmin(geom, g, Fhat, alpha, tau,
                                      state.z, state.z_dual, state.wbar_dual)
    if meter is not None:
        meter.prox_calls += 1
    state.average.add(z_half.coords)
    state.epoch_sum_z.add(z_next.coords)
    state.epoch_sum_dual.add(next_dual)
    state.z, state.z_dual = z_next, next_dual
    state.inner_k += 1
    if state.inner_k == cfg.K_inner:
        state.w = state.z.with_coords(state.epoch_sum_z.mean())
        state.wbar_dual = state.epoch_sum_dual.mean()
        state.cached_Fw = full_operator(problem, state.w, meter)
        state.cost += problem.cost_full
        state.epoch_sum_z = _KahanSum(state.z.dim)
        state.epoch_sum_dual = _KahanSum(state.z.dim)
        state.inner_k = 0
        state.outer_s += 1
    state.iters += 1
    return state


def step_det_eg(state: SolverState, problem: VIProblem, cfg: ResolvedConfig,
                rng=None, meter: Optional[OpMeter] = None) -> SolverState:
    """Classical extragradient (mirror-prox under the entropic geometry).

    Two full operator evaluations per iteration; the value at the
    current iterate is cached across the update so the cost stream of
    the p = 1 reduction matches exactly.
    """
    g, geom, tau = problem.g, problem.geometry, cfg.tau
    if geom.is_entropic:
        z_half, _ = mirror_argmin(geom, g, state.cached_Fw, 1.0, tau,
                                  state.z, state.z_dual, state.z_dual)
        F_half = full_operator(problem, z_half, meter)
        state.cost += problem.cost_full
        z_next, next_dual = mirror_argmin(geom, g, F_half, 1.0, tau,
                                          state.z, state.z_dual, state.z_dual)
        state.z_dual = next_dual
    else:
        split = state.z.split
        z_half = blended_prox(g, 1.0, state.z.coords, state.z.coords, tau,
                              state.cached_Fw, split)
        F_half = full_operator(problem, z_half, meter)
        state.cost += problem.cost_full
        z_next = blended_prox(g, 1.0, state.z.coords, state.z.coords, tau,
                              F_half, split)
        if meter is not None:
            meter.prox_calls += 2
    state.average.add(z_half.coords)
    state.z = z_next
    _refresh_snapshot(state, problem, z_next, meter)  # cached value at the new iterate
    state.iters += 1
    return state


STEPPERS = {
    Algo.VR_EG: step_vr_eg,
    Algo.VR_MP: step_vr_mp,
    Algo.VR_FBF: step_vr_fbf,
    Algo.VR_FORB: step_vr_forb,
    Algo.DET_EG: step_det_eg,
}


# ---------------------------------------------------------------------------
# the run loop
# ---------------------------------------------------------------------------

def run(problem: VIProblem, config: SolverConfig, z0: Optional[Point] = None,
        meter: Optional[OpMeter] = None) -> RunTrace:
    """Iterate the configured stepper under a cost budget.

    The trace gets one row at cost zero for the start point and one row
    whenever cumulative cost crosses an ``eval_every`` checkpoint.  The
    gap column evaluates the running average, the optional distance
    column the last iterate against the known solution.  Runs are
    deterministic given the seed; on numeric failure the partial trace is
    returned with the error recorded in its metadata.
    """
    cfg = config.resolved(problem)
    rng = make_rng(cfg.seed)
    stepper = STEPPERS[cfg.algo]
    budget_units = cfg.budget_epochs * problem.epoch_units
    rows = []
    t0 = time.monotonic_ns()

    def emit(cost: float, point: Point, last: Point) -> None:
        gap = evaluate_gap(problem, point)
        dist = None
        if problem.known_solution is not None:
            d = last.coords - problem.known_solution.coords
            dist = float(d @ d)
        rows.append(TraceRow(cost=cost, epoch=cost / problem.epoch_units, gap=gap,
                             dist_sq=dist, wall_ns=time.monotonic_ns() - t0))

    start = problem.z0 if z0 is None else z0
    error = None
    emit(0.0, start, start)
    try:
        state = init_state(problem, cfg, z0=z0, meter=meter)
        next_ckpt = cfg.eval_every
        while state.cost < budget_units:
            stepper(state, problem, cfg, rng, meter)
            if state.cost >= next_ckpt:
                emit(state.cost, state.averaged_point(), state.z)
                while next_ckpt <= state.cost:
                    next_ckpt += cfg.eval_every
    except NumericError as exc:
        error = str(exc)

    meta = {
        "algo": cfg.algo.value,
        "seed": cfg.seed,
        "p": cfg.p,
        "alpha": cfg.alpha,
        "gamma": cfg.gamma,
        "tau": cfg.tau,
        "K_inner": cfg.K_inner,
        "budget_epochs": cfg.budget_epochs,
        "eval_every": cfg.eval_every,
        "epoch_units": problem.epoch_units,
        "problem": problem.name,
        "fingerprint": problem.fingerprint(),
        "geometry": problem.geometry.kind.value,
        "gap_kind": problem.gap_kind.value,
    }
    if error is not None:
        meta["error"] = error
    return RunTrace(rows=rows, metadata=meta)
