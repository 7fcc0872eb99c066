import numpy as np
import pytest

from eqmerton.model import MarketParams, ParameterError, TimeGrid
from eqmerton.policy import EquilibriumPolicy, equilibrium_policy
from eqmerton.simulate import (
    SimConfig,
    Spike,
    _pairwise_combine,
    martingale_check,
    moment_check,
    perturbation_test,
    simulate_equilibrium,
    verify_value_identity,
)
from eqmerton.solver import growth_constant, picard_solve, solve_no_consumption


@pytest.fixture(scope="module")
def sim_grid():
    return TimeGrid(horizon=1.0, n_steps=200)


@pytest.fixture(scope="module")
def hyp_policy(market, utility, hyp_discount, sim_grid):
    sol = picard_solve(market, utility, hyp_discount, sim_grid)
    return sol, equilibrium_policy(sol, market, utility, verify=False)


def sim_cfg(sim_grid, n_paths=20000, seed=7, **kw):
    return SimConfig(n_paths=n_paths, seed=seed, grid=sim_grid, x0=1.0, **kw)


class TestDeterminism:
    def test_bit_identical_across_worker_counts(self, market, utility,
                                                hyp_discount, sim_grid, hyp_policy):
        _, pol = hyp_policy
        # n_paths deliberately not a multiple of block_size
        kw = dict(n_paths=10_001, seed=3, block_size=1024)
        one = simulate_equilibrium(pol, sim_cfg(sim_grid, n_workers=1, **kw),
                                   market, utility, hyp_discount)
        four = simulate_equilibrium(pol, sim_cfg(sim_grid, n_workers=4, **kw),
                                    market, utility, hyp_discount)
        assert one.j_estimate == four.j_estimate
        assert one.j_std_error == four.j_std_error
        np.testing.assert_array_equal(one.mean_wealth, four.mean_wealth)

    def test_bit_identical_across_runs(self, market, utility, hyp_discount,
                                       sim_grid, hyp_policy):
        _, pol = hyp_policy
        a = simulate_equilibrium(pol, sim_cfg(sim_grid, n_paths=5000),
                                 market, utility, hyp_discount)
        b = simulate_equilibrium(pol, sim_cfg(sim_grid, n_paths=5000),
                                 market, utility, hyp_discount)
        assert a.j_estimate == b.j_estimate
        np.testing.assert_array_equal(a.mean_value_over_h, b.mean_value_over_h)

    def test_pairwise_combine_matches_direct_sum(self):
        rng = np.random.default_rng(0)
        parts = [{"s": rng.normal(size=3)} for _ in range(7)]
        combined = _pairwise_combine(parts)
        direct = sum(p["s"] for p in parts)
        np.testing.assert_allclose(combined["s"], direct, rtol=1e-12)


class TestWealthDynamics:
    def test_riskless_limit(self, utility, exp_discount, sim_grid):
        # vanishing excess return with zero consumption: wealth compounds at r
        m = MarketParams.from_excess_return(r=0.05, mu=1e-12, sigma=0.2)
        nc = solve_no_consumption(m, utility, exp_discount, sim_grid)
        pol = EquilibriumPolicy(
            stock_fraction=m.mu / (m.sigma**2 * (1.0 - utility.p)),
            consumption_rate=np.zeros(sim_grid.n_steps + 1),
            curve=nc,
        )
        batch = simulate_equilibrium(pol, sim_cfg(sim_grid, n_paths=500),
                                     m, utility, exp_discount)
        assert abs(batch.mean_wealth[-1] - np.exp(0.05)) <= 1e-10

    def test_positivity_of_mean_wealth(self, market, utility, hyp_discount,
                                       sim_grid, hyp_policy):
        _, pol = hyp_policy
        batch = simulate_equilibrium(pol, sim_cfg(sim_grid, n_paths=2000),
                                     market, utility, hyp_discount)
        assert np.all(batch.mean_wealth > 0)

    def test_off_grid_start_time_rejected(self, market, utility, hyp_discount,
                                          sim_grid, hyp_policy):
        _, pol = hyp_policy
        with pytest.raises(ParameterError):
            simulate_equilibrium(pol, sim_cfg(sim_grid), market, utility,
                                 hyp_discount, start_time=0.0033)

    def test_config_validation(self, sim_grid):
        with pytest.raises(ParameterError):
            SimConfig(n_paths=0, seed=1, grid=sim_grid, x0=1.0)
        with pytest.raises(ParameterError):
            SimConfig(n_paths=10, seed=1, grid=sim_grid, x0=0.0)
        with pytest.raises(ParameterError):
            SimConfig(n_paths=10, seed=1, grid=sim_grid, x0=1.0, n_workers=0)


class TestValueIdentity:
    def test_terminal_time_exact(self, market, utility, hyp_discount, sim_grid,
                                 hyp_policy):
        sol, pol = hyp_policy
        v = verify_value_identity(sol, sim_cfg(sim_grid), market, utility,
                                  hyp_discount, t=1.0, x=2.0, policy=pol)
        assert v.passed and v.statistic == 0.0

    def test_passes_at_start(self, market, utility, hyp_discount, sim_grid,
                             hyp_policy):
        sol, pol = hyp_policy
        v = verify_value_identity(sol, sim_cfg(sim_grid), market, utility,
                                  hyp_discount, t=0.0, x=1.0, policy=pol)
        assert v.passed, v.details

    def test_power_against_scaled_target(self, market, utility, hyp_discount,
                                         sim_grid, hyp_policy):
        sol, pol = hyp_policy
        v = verify_value_identity(sol, sim_cfg(sim_grid), market, utility,
                                  hyp_discount, t=0.0, x=1.0, policy=pol,
                                  target_scale=1.05)
        assert not v.passed and abs(v.statistic) > 3.0

    def test_std_error_scaling(self, market, utility, hyp_discount, sim_grid,
                               hyp_policy):
        _, pol = hyp_policy
        batches = [
            simulate_equilibrium(pol, sim_cfg(sim_grid, n_paths=n),
                                 market, utility, hyp_discount)
            for n in (1000, 4000)
        ]
        ratio = batches[0].j_std_error / batches[1].j_std_error
        assert 1.6 <= ratio <= 2.4  # 1/sqrt(n) within 20%


class TestMartingale:
    def test_flat_and_decreasing(self, market, utility, hyp_discount, sim_grid):
        nc = solve_no_consumption(market, utility, hyp_discount, sim_grid)
        flat, decreasing = martingale_check(nc, sim_cfg(sim_grid), market,
                                            utility, hyp_discount)
        assert flat.passed, flat.details
        assert decreasing.passed, decreasing.details

    def test_single_checkpoint_vacuous(self, market, utility, hyp_discount,
                                       sim_grid):
        nc = solve_no_consumption(market, utility, hyp_discount, sim_grid)
        flat, decreasing = martingale_check(nc, sim_cfg(sim_grid, n_paths=200),
                                            market, utility, hyp_discount,
                                            n_checkpoints=1)
        assert flat.passed and decreasing.passed


class TestMomentLaw:
    def test_growth_at_rate_k(self, market, utility, sim_grid):
        K = growth_constant(market, utility)
        verdicts = moment_check(sim_cfg(sim_grid), market, utility,
                                exponent_q=utility.p, growth_rate=K)
        assert all(v.passed for v in verdicts), [v.details for v in verdicts]


class TestPerturbation:
    def test_identical_spike_exactly_zero(self, market, utility, hyp_discount,
                                          sim_grid, hyp_policy):
        _, pol = hyp_policy
        rows = perturbation_test(pol, sim_cfg(sim_grid, n_paths=2000), market,
                                 utility, hyp_discount, t=0.0, epsilons=[0.1],
                                 spike=Spike(zeta=pol.stock_fraction))
        assert rows[0].d_estimate == 0.0
        assert rows[0].std_error == 0.0
        assert rows[0].z == 0.0

    def test_gross_spike_detected(self, market, utility, hyp_discount, sim_grid,
                                  hyp_policy):
        _, pol = hyp_policy
        rows = perturbation_test(
            pol, sim_cfg(sim_grid, n_paths=60000), market, utility, hyp_discount,
            t=0.0, epsilons=[0.25],
            spike=Spike(zeta=pol.stock_fraction + 2.0),
        )
        assert rows[0].d_estimate > 0
        assert rows[0].z > 3.0

    def test_small_spike_first_order_stationary(self, market, utility,
                                                hyp_discount, sim_grid,
                                                hyp_policy):
        _, pol = hyp_policy
        rows = perturbation_test(
            pol, sim_cfg(sim_grid), market, utility, hyp_discount,
            t=0.0, epsilons=[0.1],
            spike=Spike(zeta=pol.stock_fraction + 0.01),
        )
        assert abs(rows[0].z) <= 3.0

    def test_bad_epsilon_rejected(self, market, utility, hyp_discount, sim_grid,
                                  hyp_policy):
        _, pol = hyp_policy
        with pytest.raises(ParameterError):
            perturbation_test(pol, sim_cfg(sim_grid, n_paths=200), market,
                              utility, hyp_discount, t=0.0, epsilons=[-0.1],
                              spike=Spike(zeta=0.0))
