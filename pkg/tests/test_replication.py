import numpy as np
import pytest

from knightian import (
    ControlSpec,
    GridFunction,
    GridSpec,
    Mode,
    PriorSpec,
    SimulationError,
    VolBounds,
    exp_martingale_transform,
    expectation,
    hedge_field,
    net_trades,
    replicate,
    simulate_paths,
    solve_equilibrium,
    strategy_gains,
)
from knightian.dsl import parse

from helpers import BAND, example_economy, linear_split_economy

GRID = GridSpec(-6.0, 6.0, 401, 800)


@pytest.fixture(scope="module")
def example_hedge():
    return hedge_field(parse("min(exp(x), 1)"), BAND, GRID)


class TestHedgeField:
    def test_linear_payoff_delta_one(self):
        h = hedge_field(parse("x"), BAND, GRID)
        assert np.max(np.abs(h.eta.values - 1.0)) < 1e-9
        assert np.max(np.abs(h.phi_hat.values)) < 1e-8

    def test_quadratic_payoff_fields(self):
        # boundary rows are frozen, so edge error diffuses a little way in;
        # away from the edges the deltas match the smooth solution
        h = hedge_field(parse("x^2"), BAND, GRID)
        mid = slice(GRID.nx // 4, 3 * GRID.nx // 4)
        assert np.max(np.abs(h.eta.values[:, mid] - 2.0 * GRID.nodes[None, mid])) < 5e-3
        assert np.max(np.abs(h.phi_hat.values[:, mid] - 1.0)) < 5e-3

    def test_terminal_delta_of_kinked_payoff(self, example_hedge):
        eta_T = example_hedge.eta.values[-1]
        nodes = GRID.nodes
        left = nodes < -0.1
        right = nodes > 0.1
        assert np.max(np.abs(eta_T[left] - np.exp(nodes[left]))) < 1e-2
        assert np.max(np.abs(eta_T[right])) < 1e-12

    def test_sampling_conventions(self, example_hedge):
        gf = example_hedge.eta
        # scalar and vector queries agree
        v = gf.at(0.25, 0.3)
        vv = gf.at(0.25, np.array([0.3, -0.2]))
        assert v == vv[0]
        # time sampling takes the stored layer at or below t
        k = int(np.floor(0.25 / (BAND.horizon / GRID.nt) + 1e-9))
        expect = float(np.interp(0.3, GRID.nodes, gf.values[k]))
        assert v == expect


class TestSimulatePaths:
    def test_binary_increments_structure(self):
        p = simulate_paths(ControlSpec.constant(1.0), BAND, 64, 16, seed=1)
        db = np.diff(p.b, axis=1)
        step = np.sqrt(BAND.horizon / 16)
        assert np.allclose(np.abs(db), step)
        assert p.b.shape == (64, 17)
        assert np.all(p.b[:, 0] == 0.0)
        assert np.all(p.sigmas == 1.0)

    def test_gaussian_increments_moments(self):
        p = simulate_paths(
            ControlSpec.constant(0.5), BAND, 4000, 8, seed=2, increments="gaussian"
        )
        db = np.diff(p.b, axis=1)
        sd = 0.5 * np.sqrt(BAND.horizon / 8)
        assert abs(db.mean()) < 4 * sd / np.sqrt(db.size)
        assert np.std(db) == pytest.approx(sd, rel=0.05)

    def test_deterministic_per_seed(self):
        a = simulate_paths(ControlSpec.constant(0.8), BAND, 16, 32, seed=9)
        b = simulate_paths(ControlSpec.constant(0.8), BAND, 16, 32, seed=9)
        c = simulate_paths(ControlSpec.constant(0.8), BAND, 16, 32, seed=10)
        assert np.array_equal(a.b, b.b)
        assert not np.array_equal(a.b, c.b)

    def test_path_substreams_stable_under_batch_growth(self):
        small = simulate_paths(ControlSpec.constant(0.8), BAND, 3, 32, seed=9)
        big = simulate_paths(ControlSpec.constant(0.8), BAND, 7, 32, seed=9)
        assert np.array_equal(small.b, big.b[:3])

    def test_constant_sigma_validated(self):
        with pytest.raises(ValueError):
            simulate_paths(ControlSpec.constant(2.0), BAND, 4, 4)
        with pytest.raises(ValueError):
            simulate_paths(ControlSpec.constant(0.5), BAND, 0, 4)

    def test_extremal_on_convex_payoff_pins_high_vol(self):
        h = hedge_field(parse("x^2"), BAND, GRID)
        p = simulate_paths(ControlSpec.extremal(h), BAND, 32, 16, seed=4)
        assert np.all(p.sigmas == BAND.sigma_hi)

    def test_extremal_needs_matching_bounds(self):
        h = hedge_field(parse("x^2"), BAND, GRID)
        other = VolBounds(0.4, 1.0, 1.0)
        with pytest.raises(ValueError):
            simulate_paths(ControlSpec.extremal(h), other, 4, 4)


class TestReplicate:
    def test_linear_payoff_exact(self):
        h = hedge_field(parse("x"), BAND, GRID)
        p = simulate_paths(ControlSpec.constant(1.0), BAND, 2000, 128, seed=3)
        rep = replicate(parse("x"), h, p)
        assert np.max(np.abs(rep.gaps)) < 1e-9
        assert np.max(np.abs(rep.k_terminal)) < 1e-10
        assert rep.min_k_increment >= 0.0

    def test_quadratic_under_worst_case_prior(self):
        # at sigma_hi the compensator of a convex payoff vanishes and with
        # binary increments the discrete gains telescope exactly
        h = hedge_field(parse("x^2"), BAND, GRID)
        p = simulate_paths(ControlSpec.constant(1.0), BAND, 500, 64, seed=8)
        rep = replicate(parse("x^2"), h, p)
        assert np.max(np.abs(rep.k_terminal)) < 1e-10
        assert abs(rep.mean_gap) < 1e-6

    def test_compensator_identity_moderate_batch(self, example_hedge):
        expr = parse("min(exp(x), 1)")
        p = simulate_paths(ControlSpec.constant(0.75), BAND, 20000, 256, seed=21)
        rep = replicate(expr, example_hedge, p)
        fixed = expectation(expr, BAND, GRID, Mode.fixed(0.75))
        target = rep.upper_value - fixed
        assert rep.mean_k == pytest.approx(target, abs=3 * rep.se_k + 5e-3)
        assert rep.min_k_increment >= 0.0

    def test_extremal_control_kills_compensator(self, example_hedge):
        p = simulate_paths(ControlSpec.extremal(example_hedge), BAND, 3000, 128, seed=13)
        rep = replicate(parse("min(exp(x), 1)"), example_hedge, p)
        assert np.max(np.abs(rep.k_terminal)) == 0.0
        assert abs(rep.mean_gap) < 3 * rep.se_gap + 2e-3

    def test_kink_payoff_nonnegative_increments(self, example_hedge):
        for sigma in (0.5, 1.0):
            p = simulate_paths(ControlSpec.constant(sigma), BAND, 1000, 64, seed=5)
            rep = replicate(parse("min(exp(x), 1)"), example_hedge, p)
            assert rep.min_k_increment >= 0.0

    def test_bounds_mismatch_rejected(self, example_hedge):
        other = VolBounds(0.4, 1.0, 1.0)
        p = simulate_paths(ControlSpec.constant(0.5), other, 8, 8)
        with pytest.raises(ValueError):
            replicate(parse("x"), example_hedge, p)

    def test_path_exclusion_counted(self):
        tight = GridSpec(-0.5, 0.5, 201, 800)
        h = hedge_field(parse("x"), BAND, tight)
        p = simulate_paths(ControlSpec.constant(1.0), BAND, 500, 64, seed=6)
        rep = replicate(parse("x"), h, p)
        assert rep.n_excluded > 0
        assert rep.gaps.size == 500 - rep.n_excluded

    def test_all_paths_excluded_raises(self):
        tiny = GridSpec(-0.01, 0.01, 11, 800)
        h = hedge_field(parse("x"), BAND, tiny)
        p = simulate_paths(ControlSpec.constant(1.0), BAND, 50, 64, seed=6)
        with pytest.raises(SimulationError):
            replicate(parse("x"), h, p)

    def test_report_dict_serializable(self, example_hedge):
        import json

        p = simulate_paths(ControlSpec.constant(0.5), BAND, 100, 16, seed=1)
        rep = replicate(parse("min(exp(x), 1)"), example_hedge, p)
        payload = rep.to_dict()
        assert "gaps" not in payload
        json.dumps(payload)


class TestNetTradeReplication:
    def test_example_witness_gap(self, example_hedge):
        # the non-implementable net trade leaves a statistically significant
        # pure-trading shortfall equal to the compensator mean
        econ = example_economy(grid=GRID)
        res = solve_equilibrium(econ, PriorSpec.constant(1.0))
        trade = net_trades(res, econ).values[0]
        from knightian.dsl import BinOp, Lit

        c0 = float(res.allocations[0][0])
        expr = BinOp("*", Lit(float(res.psi[0])), BinOp("-", Lit(c0), econ.agents[0].endowment))
        h = hedge_field(expr, BAND, GRID)
        p = simulate_paths(ControlSpec.constant(0.5), BAND, 20000, 256, seed=31)
        rep = replicate(expr, h, p)
        fixed = expectation(expr, BAND, GRID, Mode.fixed(0.5))
        target = rep.upper_value - fixed
        # sanity: the shortfall matches the PDE value difference, about 0.106
        assert target == pytest.approx(0.1061, abs=5e-3)
        pure = rep.gaps + rep.k_terminal
        se = float(np.std(pure, ddof=1) / np.sqrt(pure.size))
        assert pure.mean() == pytest.approx(target, abs=3 * se + 5e-3)
        assert pure.mean() > 5 * se
        # and the grid trade row is the expression evaluated on the nodes
        from knightian.dsl import evaluate

        assert np.max(np.abs(evaluate(expr, GRID.nodes) - trade)) < 1e-12

    def test_linear_split_mean_af_under_both_priors(self):
        econ = linear_split_economy(grid=GRID)
        res = solve_equilibrium(econ, PriorSpec.constant(1.0))
        from knightian.dsl import BinOp, Lit

        c0 = float(res.allocations[0][0])
        expr = BinOp("*", Lit(float(res.psi[0])), BinOp("-", Lit(c0), econ.agents[0].endowment))
        h = hedge_field(expr, BAND, GRID)
        for sigma in (0.5, 1.0):
            p = simulate_paths(ControlSpec.constant(sigma), BAND, 4000, 128, seed=17)
            rep = replicate(expr, h, p)
            pure = rep.gaps + rep.k_terminal
            se = float(np.std(pure, ddof=1) / np.sqrt(pure.size))
            assert abs(pure.mean()) < 3 * se + 1e-3

    def test_portfolio_deltas_clear(self):
        econ = linear_split_economy(grid=GRID)
        res = solve_equilibrium(econ, PriorSpec.constant(1.0))
        from knightian.dsl import BinOp, Lit

        hs = []
        for i in range(2):
            c0 = float(res.allocations[i][0])
            expr = BinOp(
                "*", Lit(float(res.psi[0])), BinOp("-", Lit(c0), econ.agents[i].endowment)
            )
            hs.append(hedge_field(expr, BAND, GRID))
        total = hs[0].eta.values + hs[1].eta.values
        interior = total[:, 1:-1]
        assert np.max(np.abs(interior)) < 1e-8


class TestTransform:
    def _paths(self):
        return simulate_paths(ControlSpec.constant(0.8), BAND, 800, 128, seed=12)

    def _loading(self, fn):
        t = np.linspace(0.0, BAND.horizon, GRID.nt + 1)
        vals = fn(t[:, None], GRID.nodes[None, :])
        return GridFunction(np.asarray(vals, dtype=float), GRID, BAND.horizon)

    def test_unit_loading_identity(self, example_hedge):
        load = self._loading(lambda t, x: np.ones_like(x + t))
        ts = exp_martingale_transform(example_hedge.eta, load, floor=1e-6)
        p = self._paths()
        g1 = strategy_gains(example_hedge.eta, p)
        g2 = strategy_gains(ts, p, loading=load)
        assert np.max(np.abs(g1 - g2)) < 1e-14

    def test_exponential_loading_reproduces_gains(self, example_hedge):
        load = self._loading(lambda t, x: np.exp(x - 0.5 * t))
        ts = exp_martingale_transform(example_hedge.eta, load, floor=1e-6)
        p = self._paths()
        g1 = strategy_gains(example_hedge.eta, p)
        g2 = strategy_gains(ts, p, loading=load)
        assert np.max(np.abs(g1 - g2)) < 1e-12

    def test_quotient_grid_exposed(self, example_hedge):
        load = self._loading(lambda t, x: np.exp(x - 0.5 * t))
        ts = exp_martingale_transform(example_hedge.eta, load, floor=1e-6)
        assert np.array_equal(ts.node_values, example_hedge.eta.values / load.values)

    def test_floor_violation_rejected(self, example_hedge):
        load = self._loading(lambda t, x: x + t * 0.0)  # crosses zero
        with pytest.raises(ValueError):
            exp_martingale_transform(example_hedge.eta, load, floor=1e-6)
        with pytest.raises(ValueError):
            exp_martingale_transform(example_hedge.eta, load, floor=-1.0)
