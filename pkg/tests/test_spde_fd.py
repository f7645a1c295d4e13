import logging

import numpy as np
import pytest

from contagion_sim.deterministic import DensityGrid, solve_pde_predictor_corrector
from contagion_sim.errors import InstabilityError, ValidationError
from contagion_sim.model import RiskKind, SimConfig, SystematicRiskModel, TimeGrid
from contagion_sim.risk_factors import trial_risk_path
from contagion_sim.spde_fd import (
    SpdeFdConfig,
    cost_ratio_estimate,
    simulate_spde_loss,
    solve_spde_explicit,
    stability_threshold,
)

from .conftest import SEED, make_pool

BROWNIAN = SystematicRiskModel(RiskKind.BROWNIAN, x0=0.0)


def timing_pool(beta_s=5.0):
    return make_pool(sigma=1.0, alpha=4.0, lambda_bar=1.0, beta_c=1.5, beta_s=beta_s, lambda0=2.0)


@pytest.mark.parametrize(
    "delta,beta_s,lambda_max,expected",
    [(0.1, 5.0, 10.0, 4e-6), (0.2, 5.0, 10.0, 1.6e-5), (0.1, 1.0, 1.0, 1e-2)],
)
def test_stability_threshold(delta, beta_s, lambda_max, expected):
    assert stability_threshold(delta, beta_s, lambda_max) == pytest.approx(expected, rel=1e-12)


def test_stability_threshold_needs_systematic_risk():
    with pytest.raises(ValidationError, match="beta_s != 0"):
        stability_threshold(0.1, 0.0, 10.0)


@pytest.mark.parametrize(
    "mesh_points,moments,target,beta_s,expected",
    [(100, 100, 1e-5, 5.0, 1.0), (100, 10, 1e-5, 5.0, 10.0), (100, 100, 1e-2, 2.0, 1.0), (100, 100, 1e-6, 5.0, 0.25)],
)
def test_cost_ratio(mesh_points, moments, target, beta_s, expected):
    ratio = cost_ratio_estimate(mesh_points, moments, target, 0.1, beta_s, 10.0)
    assert ratio == pytest.approx(expected, rel=1e-12)


def test_same_risk_path_gives_same_density(base_pool, cir):
    cfg = SpdeFdConfig(DensityGrid(0.1, 5.0), TimeGrid(1e-4, 0.05))
    risk = trial_risk_path(cir, cfg.time, SEED, 0)
    a = solve_spde_explicit(base_pool, cfg, risk, cir)
    b = solve_spde_explicit(base_pool, cfg, risk, cir)
    np.testing.assert_array_equal(a.density, b.density)
    np.testing.assert_array_equal(a.loss, b.loss)
    assert np.all((a.loss >= -1e-12) & (a.loss <= 1))
    assert a.clipped == 0


def test_large_step_is_unstable():
    cfg = SpdeFdConfig(DensityGrid(0.1, 10.0), TimeGrid(4e-4, 0.1))
    risk = trial_risk_path(BROWNIAN, cfg.time, SEED, 0)
    with pytest.raises(InstabilityError, match="instability detected"):
        solve_spde_explicit(timing_pool(), cfg, risk, BROWNIAN)


def test_step_above_threshold_is_logged(caplog):
    cfg = SpdeFdConfig(DensityGrid(0.1, 10.0), TimeGrid(1e-4, 1e-4))
    risk = trial_risk_path(BROWNIAN, cfg.time, SEED, 0)
    with caplog.at_level(logging.WARNING, logger="contagion_sim"):
        solve_spde_explicit(timing_pool(), cfg, risk, BROWNIAN)
    assert "exceeds the stability threshold" in caplog.text


def test_without_systematic_terms_matches_predictor_corrector(no_risk):
    pool = make_pool(beta_s=0.0, beta_c=2.0)
    density = DensityGrid(0.05, 5.0)
    cfg = SpdeFdConfig(density, TimeGrid(1e-4, 1.0))
    risk = trial_risk_path(no_risk, cfg.time, SEED, 0)
    explicit = solve_spde_explicit(pool, cfg, risk, no_risk)
    implicit = solve_pde_predictor_corrector(pool, density, TimeGrid(0.01, 1.0))
    assert explicit.loss[-1] == pytest.approx(implicit.loss[-1], abs=1e-2)


def test_rejects_mismatched_grids(base_pool, cir):
    cfg = SpdeFdConfig(DensityGrid(0.1, 5.0), TimeGrid(1e-3, 0.1))
    risk = trial_risk_path(cir, TimeGrid(1e-3, 0.2), SEED, 0)
    with pytest.raises(ValidationError, match="step counts"):
        solve_spde_explicit(base_pool, cfg, risk, cir)
    with pytest.raises(ValidationError, match="time grid"):
        SpdeFdConfig(DensityGrid())


def test_monte_carlo_wrapper_is_thread_independent(base_pool, cir):
    cfg = SpdeFdConfig(DensityGrid(0.1, 5.0), TimeGrid(1e-4, 0.02, (0.01, 0.02)))
    one = simulate_spde_loss(base_pool, cir, cfg, SimConfig(6, SEED, 1))
    two = simulate_spde_loss(base_pool, cir, cfg, SimConfig(6, SEED, 2))
    np.testing.assert_array_equal(one.losses, two.losses)
    assert one.losses.shape == (6, 2)
    assert one.solver == "spde-fd"


def test_contagion_raises_the_explicit_loss(no_risk):
    cfg = SpdeFdConfig(DensityGrid(0.05, 5.0), TimeGrid(1e-4, 0.5))
    risk = trial_risk_path(no_risk, cfg.time, SEED, 0)
    calm = solve_spde_explicit(make_pool(beta_c=0.0, beta_s=0.0), cfg, risk, no_risk)
    contagious = solve_spde_explicit(make_pool(beta_c=2.0, beta_s=0.0), cfg, risk, no_risk)
    assert np.all(np.diff(calm.loss) > 0)
    assert contagious.loss[-1] > calm.loss[-1] > 0
    assert contagious.loss[-1] < 1
