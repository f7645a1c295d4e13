import numpy as np
import pytest

from contagion_sim.errors import ConvergenceError, ValidationError
from contagion_sim.fixed_point import simulate_fixed_point_loss, solve_fixed_point
from contagion_sim.model import SimConfig, TimeGrid
from contagion_sim.risk_factors import trial_risk_path

from .conftest import SEED, make_pool


@pytest.fixture
def path(cir, grid):
    return trial_risk_path(cir, grid, SEED, 0)


def test_no_contagion_converges_in_one_sweep(cir, grid, path):
    solution = solve_fixed_point(make_pool(beta_c=0.0), cir, path, grid, 500, master_seed=SEED)
    assert solution.rate.iterations == 1
    assert np.all(solution.rate.q == 0)


def test_rate_is_nonnegative_and_sweeps_contract(base_pool, cir, grid, path):
    solution = solve_fixed_point(base_pool, cir, path, grid, 2000, tol=1e-4, master_seed=SEED)
    rate = solution.rate
    assert rate.final_change < 1e-4
    assert np.all(rate.q >= 0)
    assert np.all(np.isfinite(rate.q))
    changes = np.array(rate.changes)
    assert np.all(np.diff(changes[1:]) < 0)


def test_loss_equals_integrated_rate(base_pool, cir, grid, path):
    solution = solve_fixed_point(base_pool, cir, path, grid, 2000, master_seed=SEED)
    beta_c = base_pool.entries[0].params.beta_c
    integrated = grid.delta * np.cumsum(solution.rate.q) / beta_c
    assert np.max(np.abs(solution.loss - integrated)) <= 5 * grid.delta
    assert np.all(np.diff(solution.loss) >= 0)


def test_frozen_inner_noise_makes_solution_deterministic(base_pool, cir, grid, path):
    a = solve_fixed_point(base_pool, cir, path, grid, 300, master_seed=SEED, path_index=3)
    b = solve_fixed_point(base_pool, cir, path, grid, 300, master_seed=SEED, path_index=3)
    np.testing.assert_array_equal(a.rate.q, b.rate.q)
    np.testing.assert_array_equal(a.loss, b.loss)


def test_gives_up_after_max_iter(base_pool, cir, grid, path):
    with pytest.raises(ConvergenceError, match="no convergence"):
        solve_fixed_point(base_pool, cir, path, grid, 200, tol=1e-12, max_iter=2, master_seed=SEED)


def test_rejects_bad_inputs(base_pool, cir, grid, path):
    with pytest.raises(ValidationError, match="tol"):
        solve_fixed_point(base_pool, cir, path, grid, 10, tol=0.0)
    with pytest.raises(ValidationError, match="inner_trials"):
        solve_fixed_point(base_pool, cir, path, grid, 0)
    with pytest.raises(ValidationError, match="step counts"):
        solve_fixed_point(base_pool, cir, path, TimeGrid(0.02, 1.0), 10)


def test_monte_carlo_wrapper(base_pool, cir):
    grid = TimeGrid(0.01, 0.5, (0.25, 0.5))
    sample = simulate_fixed_point_loss(base_pool, cir, grid, SimConfig(4, SEED, 2), inner_trials=200)
    assert sample.losses.shape == (4, 2)
    assert sample.solver == "fixed-point"
    assert np.all(sample.losses[:, 1] >= sample.losses[:, 0])
    assert sample.diagnostics["inner_trials"] == 200


def test_survival_counts_intensity_before_each_grid_point(cir, grid, path):
    solution = solve_fixed_point(make_pool(beta_c=0.0), cir, path, grid, 100, master_seed=SEED)
    assert solution.loss[0] == 0.0
    assert solution.loss[1] == pytest.approx(1 - np.exp(-0.2 * grid.delta), rel=1e-12)
