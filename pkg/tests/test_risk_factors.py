import numpy as np
import pytest

from contagion_sim.errors import ValidationError
from contagion_sim.model import RiskKind, SystematicRiskModel, TimeGrid
from contagion_sim.risk_factors import euler_paths, simulate_risk_path, trial_risk_path, trial_risk_paths

from .conftest import SEED


def test_cir_path_is_nonnegative(cir, grid, rng):
    path = simulate_risk_path(cir, grid, rng)
    assert len(path.x) == grid.steps + 1
    assert len(path.dv) == grid.steps
    assert path.x[0] == 0.5
    assert np.all(path.x >= 0)


def test_cir_floors_at_zero():
    model = SystematicRiskModel(RiskKind.CIR, x0=0.01, kappa=0.0, theta=0.0, epsilon=5.0)
    x = euler_paths(model, np.full((1, 50), -0.1), 0.01)
    assert np.all(x >= 0)
    assert x[0, 1] == 0.0


def test_zero_vol_cir_follows_ode():
    model = SystematicRiskModel(RiskKind.CIR, x0=0.1, kappa=4.0, theta=0.5, epsilon=0.0)
    path = simulate_risk_path(model, TimeGrid(0.01, 1.0), np.random.default_rng(1))
    exact = 0.5 + (0.1 - 0.5) * np.exp(-4.0)
    assert abs(path.x[-1] - exact) < 5e-3


def test_inert_factor_is_constant_but_draws_noise(rng):
    model = SystematicRiskModel(RiskKind.NONE, x0=0.5)
    path = simulate_risk_path(model, TimeGrid(0.01, 1.0), rng)
    assert np.all(path.x == 0.5)
    assert np.any(path.dv != 0)


def test_brownian_path_is_cumulative_noise(rng):
    model = SystematicRiskModel(RiskKind.BROWNIAN, x0=1.0)
    path = simulate_risk_path(model, TimeGrid(0.01, 1.0), rng)
    np.testing.assert_allclose(path.x, 1.0 + np.concatenate([[0.0], np.cumsum(path.dv)]))


def test_ou_reverts_to_theta():
    model = SystematicRiskModel(RiskKind.ORNSTEIN_UHLENBECK, x0=2.0, kappa=4.0, theta=0.5, epsilon=0.0)
    x = euler_paths(model, np.zeros(200), 0.01)
    assert x[-1] == pytest.approx(0.5, abs=1e-3)


def test_cir_rejects_negative_coefficients():
    with pytest.raises(ValidationError, match="epsilon"):
        SystematicRiskModel(RiskKind.CIR, x0=0.5, kappa=4.0, theta=0.5, epsilon=-0.5)


def test_stacked_paths_match_single_trials(cir, grid):
    x, dv = trial_risk_paths(cir, grid, SEED, 3, 6)
    for row, trial in enumerate(range(3, 6)):
        single = trial_risk_path(cir, grid, SEED, trial)
        np.testing.assert_array_equal(x[row], single.x)
        np.testing.assert_array_equal(dv[row], single.dv)


def test_brownian_terminal_variance():
    grid = TimeGrid(0.01, 1.0)
    dv = np.random.default_rng(SEED).standard_normal((100_000, grid.steps)) * np.sqrt(grid.delta)
    v_t = dv.sum(axis=1)
    assert v_t.var() == pytest.approx(grid.horizon, rel=0.05)


def test_cir_mean_matches_euler_mean(cir):
    grid = TimeGrid(0.01, 1.0)
    trials = 40_000
    dv = np.random.default_rng(SEED).standard_normal((trials, grid.steps)) * np.sqrt(grid.delta)
    x1 = euler_paths(cir, dv, grid.delta)[:, -1]
    # mean of the untruncated Euler recursion; the Feller condition keeps X away from zero
    expected = cir.theta + (cir.x0 - cir.theta) * (1 - cir.kappa * grid.delta) ** grid.steps
    se = x1.std(ddof=1) / np.sqrt(trials)
    assert abs(x1.mean() - expected) < 3 * se
