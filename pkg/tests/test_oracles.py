import numpy as np
import pytest

from vrvi.errors import ConfigError, SupportTooLargeError
from vrvi.geometry import Point
from vrvi.oracles import (
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
from vrvi.problems import MatrixGame, make_matrix_game, matching_pennies, split_game_by_rows
from vrvi.solvers import make_rng


def simplex_point(rng, n, m):
    x = rng.random(n) + 1e-3
    y = rng.random(m) + 1e-3
    return Point.of_blocks(x / x.sum(), y / y.sum())


class TestSamplers:
    @pytest.mark.parametrize("cls", [DiscreteSampler, AliasSampler])
    def test_frequencies_within_multinomial_bounds(self, cls):
        rng = make_rng(123)
        w = np.array([0.5, 0.2, 0.15, 0.1, 0.05])
        sampler = cls(w)
        draws = 1_000_000
        idx = sampler.sample_many(rng, draws)
        counts = np.bincount(idx, minlength=w.size)
        for i, wi in enumerate(w):
            sigma = np.sqrt(draws * wi * (1 - wi))
            assert abs(counts[i] - draws * wi) <= 4 * sigma

    def test_normalization(self):
        s = DiscreteSampler([2.0, 6.0])
        np.testing.assert_allclose(s.weights, [0.25, 0.75])
        assert abs(s.weights.sum() - 1.0) <= 1e-12

    def test_rejects_bad_weights(self):
        with pytest.raises(ConfigError):
            DiscreteSampler([0.0, 0.0])
        with pytest.raises(ConfigError):
            DiscreteSampler([-1.0, 2.0])

    def test_single_draw_matches_distribution_support(self):
        rng = make_rng(3)
        s = AliasSampler([0.0, 1.0, 0.0])
        assert all(s.sample(rng) == 1 for _ in range(50))

    def test_attached_generator_handle(self):
        s = DiscreteSampler([0.3, 0.7], rng=make_rng(11))
        t = DiscreteSampler([0.3, 0.7])
        r = make_rng(11)
        assert [s.sample() for _ in range(20)] == [t.sample(r) for _ in range(20)]
        with pytest.raises(ConfigError):
            t.sample()


def pennies_problem():
    return make_matrix_game(matching_pennies(), "euclidean", "fixed")


class TestFullOperator:
    def test_equilibrium_annihilates(self):
        prob = pennies_problem()
        z = Point.of_blocks([0.5, 0.5], [0.5, 0.5])
        np.testing.assert_allclose(full_operator(prob, z), np.zeros(4), atol=1e-15)

    def test_hand_product(self):
        prob = pennies_problem()
        z = Point.of_blocks([1.0, 0.0], [0.0, 1.0])
        np.testing.assert_allclose(full_operator(prob, z), [-1.0, 1.0, -1.0, 1.0])

    def test_single_component_sum(self):
        game = MatrixGame(np.array([[2.0, -1.0], [0.5, 3.0]]))
        comps = split_game_by_rows(game, 1)
        oracle = FiniteSumOracle(comps, SamplingMode.UNIFORM)
        rng = np.random.default_rng(0)
        z = simplex_point(rng, 2, 2)
        direct = np.concatenate([game.A.T @ z.y, -(game.A @ z.x)])
        np.testing.assert_allclose(oracle.full(z), direct, atol=1e-15)

    def test_meter_counts_full_cost(self):
        prob = pennies_problem()
        meter = OpMeter()
        full_operator(prob, prob.z0, meter)
        assert meter.full_calls == 1
        assert meter.units == prob.cost_full


class TestMatrixGameOracle:
    def test_fixed_marginals_matching_pennies(self):
        oracle = MatrixGameOracle(matching_pennies(), GameScheme.FIXED_ROWCOL)
        np.testing.assert_allclose(oracle._r_fixed, [0.5, 0.5])
        np.testing.assert_allclose(oracle._c_fixed, [0.5, 0.5])
        assert oracle.L == pytest.approx(2.0)

    def test_variable_entropic_l1_weights(self):
        game = matching_pennies()
        oracle = MatrixGameOracle(game, GameScheme.VAR_ENTROPIC)
        u = Point.of_blocks([0.5, 0.5], [0.4, 0.2])
        v = Point.of_blocks([0.5, 0.5], [0.1, 0.1])
        r, c = oracle._marginals(u, v)
        np.testing.assert_allclose(r, [0.75, 0.25])  # |dy| = (0.3, 0.1)
        np.testing.assert_allclose(c, oracle._c_fixed)  # zero x difference falls back

    def test_variable_euclidean_squared_weights(self):
        game = matching_pennies()
        oracle = MatrixGameOracle(game, GameScheme.VAR_EUCLIDEAN)
        u = Point.of_blocks([0.9, 0.1], [0.5, 0.5])
        v = Point.of_blocks([0.5, 0.5], [0.5, 0.5])
        r, c = oracle._marginals(u, v)
        np.testing.assert_allclose(c, [0.5, 0.5])  # equal squared diffs
        np.testing.assert_allclose(r, oracle._r_fixed)

    def test_marginals_are_probabilities(self):
        rng = np.random.default_rng(1)
        game = MatrixGame(rng.standard_normal((6, 5)))
        for scheme in (GameScheme.VAR_EUCLIDEAN, GameScheme.VAR_ENTROPIC):
            oracle = MatrixGameOracle(game, scheme)
            for _ in range(50):
                u, v = simplex_point(rng, 5, 6), simplex_point(rng, 5, 6)
                r, c = oracle._marginals(u, v)
                assert abs(r.sum() - 1.0) <= 1e-12
                assert abs(c.sum() - 1.0) <= 1e-12

    def test_variable_needs_anchors(self):
        oracle = MatrixGameOracle(matching_pennies(), GameScheme.VAR_EUCLIDEAN)
        with pytest.raises(ConfigError):
            oracle.sample(make_rng(0))

    def test_evaluator_touches_one_row_one_column(self):
        rng = np.random.default_rng(2)
        game = MatrixGame(rng.standard_normal((7, 4)))
        oracle = MatrixGameOracle(game, GameScheme.FIXED_ROWCOL)
        meter = OpMeter()
        gen = make_rng(5)
        (i, j), ev = oracle.sample(gen, meter=meter)
        z = simplex_point(rng, 4, 7)
        ev(z)
        assert meter.component_calls == 1
        assert meter.rows_touched == [i] and meter.cols_touched == [j]

    def test_evaluator_deterministic_given_xi(self):
        rng = np.random.default_rng(3)
        game = MatrixGame(rng.standard_normal((3, 3)))
        oracle = MatrixGameOracle(game, GameScheme.FIXED_ROWCOL)
        (i, j), ev = oracle.sample(make_rng(1))
        z = simplex_point(rng, 3, 3)
        np.testing.assert_array_equal(ev(z), ev(z))


class TestUnbiasedness:
    def test_all_schemes_enumeration(self):
        rng = np.random.default_rng(4)
        game = MatrixGame(rng.standard_normal((5, 4)))
        comps = split_game_by_rows(game, 3)
        oracles = [
            MatrixGameOracle(game, GameScheme.FIXED_ROWCOL),
            MatrixGameOracle(game, GameScheme.VAR_EUCLIDEAN),
            MatrixGameOracle(game, GameScheme.VAR_ENTROPIC),
            FiniteSumOracle(comps, SamplingMode.UNIFORM),
            FiniteSumOracle(comps, SamplingMode.IMPORTANCE),
        ]
        for oracle in oracles:
            for _ in range(50):
                z = simplex_point(rng, 4, 5)
                u, v = simplex_point(rng, 4, 5), simplex_point(rng, 4, 5)
                assert verify_unbiased(oracle, z, u=u, v=v) <= 1e-12

    def test_matching_pennies_exact_at_uniform(self):
        oracle = MatrixGameOracle(matching_pennies(), GameScheme.FIXED_ROWCOL)
        z = Point.of_blocks([0.5, 0.5], [0.5, 0.5])
        assert verify_unbiased(oracle, z) <= 1e-15

    def test_importance_affine_components(self):
        rng = np.random.default_rng(5)
        comps = [AffineComponent(rng.standard_normal((4, 4)), rng.standard_normal(4))
                 for _ in range(3)]
        oracle = FiniteSumOracle(comps, SamplingMode.IMPORTANCE)
        for _ in range(20):
            z = Point(rng.standard_normal(4), 2)
            assert verify_unbiased(oracle, z) <= 1e-12

    def test_support_refusal(self):
        rng = np.random.default_rng(6)
        game = MatrixGame(rng.standard_normal((600, 600)))
        oracle = MatrixGameOracle(game, GameScheme.FIXED_ROWCOL)
        with pytest.raises(SupportTooLargeError):
            oracle.support()


class TestMeanLipschitz:
    def test_zero_at_equal_points(self):
        oracle = MatrixGameOracle(matching_pennies(), GameScheme.FIXED_ROWCOL)
        z = Point.of_blocks([0.7, 0.3], [0.4, 0.6])
        lhs, rhs = verify_mean_lipschitz(oracle, z, z)
        assert lhs == 0.0 and rhs == 0.0

    def test_fixed_oracle_second_moment_identity(self):
        # at v = 0 the bound is an identity: E||F_xi(z)||^2 = ||A||_F^2 ||z||^2
        rng = np.random.default_rng(7)
        game = MatrixGame(rng.standard_normal((6, 5)))
        oracle = MatrixGameOracle(game, GameScheme.FIXED_ROWCOL)
        zero = Point.of_blocks(np.zeros(5), np.zeros(6))
        for _ in range(50):
            u = Point(rng.standard_normal(11), 5)
            lhs, rhs = verify_mean_lipschitz(oracle, u, zero)
            assert lhs == pytest.approx(rhs, abs=1e-10 * max(1.0, rhs))

    @pytest.mark.parametrize("scheme,expected_L", [
        (GameScheme.FIXED_ROWCOL, "frob"),
        (GameScheme.VAR_EUCLIDEAN, "frob"),
        (GameScheme.VAR_ENTROPIC, "max"),
    ])
    def test_bound_holds_on_random_pairs(self, scheme, expected_L):
        rng = np.random.default_rng(8)
        game = MatrixGame(rng.standard_normal((6, 5)))
        oracle = MatrixGameOracle(game, scheme)
        assert oracle.L == pytest.approx(
            game.frob_norm if expected_L == "frob" else game.max_norm)
        for _ in range(100):
            u, v = simplex_point(rng, 5, 6), simplex_point(rng, 5, 6)
            lhs, rhs = verify_mean_lipschitz(oracle, u, v)
            assert lhs <= rhs + 1e-10

    def test_finite_sum_constants(self):
        rng = np.random.default_rng(9)
        comps = [AffineComponent(rng.standard_normal((5, 5))) for _ in range(4)]
        Ls = np.array([c.L for c in comps])
        uni = FiniteSumOracle(comps, SamplingMode.UNIFORM)
        imp = FiniteSumOracle(comps, SamplingMode.IMPORTANCE)
        assert uni.L == pytest.approx(np.sqrt(4 * np.sum(Ls ** 2)))
        assert imp.L == pytest.approx(Ls.sum())
        np.testing.assert_allclose(imp.q, Ls / Ls.sum())
        for oracle in (uni, imp):
            for _ in range(100):
                u, v = Point(rng.standard_normal(5), 2), Point(rng.standard_normal(5), 2)
                lhs, rhs = verify_mean_lipschitz(oracle, u, v)
                assert lhs <= rhs + 1e-10


class TestFullOracle:
    def test_degenerate_support(self):
        prob = pennies_problem()
        oracle = FullOracle(prob.operator, prob.L_F)
        z = Point.of_blocks([0.6, 0.4], [0.2, 0.8])
        assert verify_unbiased(oracle, z) == 0.0
        xi, ev = oracle.sample(make_rng(0))
        np.testing.assert_array_equal(ev(z), prob.operator(z))


class TestComponents:
    def test_callback_requires_declared_L(self):
        comp = CallbackComponent(lambda z: z.coords * 2, L=2.0)
        assert comp.L == 2.0

    def test_affine_default_L_is_spectral(self):
        M = np.diag([3.0, 1.0])
        assert AffineComponent(M).L == pytest.approx(3.0)
