"""Variance-reduced splitting methods for monotone variational inequalities.

The library solves problems of the form

    find z* with  <F(z*), z - z*> + g(z) - g(z*) >= 0  for all z,

where F is monotone with a cheap unbiased stochastic oracle and g is
prox-friendly.  Four variance-reduced methods (extragradient, double-loop
mirror-prox, forward-backward-forward, forward-reflected-backward) are
provided next to a deterministic baseline, in Euclidean and
entropic-simplex geometries, together with matrix-game benchmark
generators and a CLI (``vrvi``) reproducing the convergence experiments.
"""

from .errors import ConfigError, DomainError, NumericError, SupportTooLargeError, VrviError
from .geometry import (
    Geometry,
    GeometryKind,
    Point,
    ProxFriendlyG,
    SimplexIndicator,
    LinearPlusIndicator,
    StronglyConvexQuadratic,
    BoxNonneg,
    bregman_div,
    mirror_argmin,
    project_simplex,
    prox_step_euclidean,
)
from .metrics import RunTrace, lyapunov_phi, restricted_gap, simplex_duality_gap
from .oracles import (
    AffineComponent,
    AliasSampler,
    CallbackComponent,
    DiscreteSampler,
    FiniteSumOracle,
    FullOracle,
    GameScheme,
    MatrixGameOracle,
    OpMeter,
    SamplingMode,
    full_operator,
    verify_mean_lipschitz,
    verify_unbiased,
)
from .problems import (
    GapKind,
    MatrixGame,
    VIProblem,
    gen_nemirovski_test,
    gen_policeman_burglar,
    gen_standard_normal,
    load_matrix_market,
    make_finite_sum,
    make_lin_constrained,
    make_matrix_game,
    make_nonbilinear_constrained,
    make_strongly_convex_instance,
    matching_pennies,
    rock_paper_scissors,
    save_matrix_market,
    split_game_by_rows,
    uniform_point,
)
from .solvers import Algo, SolverConfig, SolverState, init_state, make_rng, run, STEPPERS

__version__ = "0.1.0"
