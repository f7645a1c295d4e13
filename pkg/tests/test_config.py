import json
from pathlib import Path

import pytest
import yaml

from contagion_sim.config import SolverName, load_config, parse_config
from contagion_sim.errors import ValidationError
from contagion_sim.model import RiskKind

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

MINIMAL = {
    "model": {"buckets": [{"alpha": 4, "lambda_bar": 0.2, "sigma": 0.9, "beta_c": 2, "beta_s": 2, "lambda0": 0.2}]},
    "grid": {"delta": 0.01, "horizon": 1.0},
}


def with_changes(**sections):
    data = json.loads(json.dumps(MINIMAL))
    for key, value in sections.items():
        data[key] = {**data.get(key, {}), **value}
    return data


def test_loads_truncation_config():
    cfg = load_config(CONFIGS / "truncation.yaml")
    assert cfg.solver.name is SolverName.MOMENTS
    assert cfg.solver.K == 15
    assert cfg.risk_model().kind is RiskKind.CIR
    pool = cfg.pool()
    assert pool.is_homogeneous and pool.entries[0].params.beta_c == 2
    assert cfg.time_grid().steps == 100
    assert cfg.sim_config().master_seed == 20240601


@pytest.mark.parametrize("path", sorted(CONFIGS.glob("*.yaml")), ids=lambda p: p.stem)
def test_every_shipped_config_parses(path):
    cfg = load_config(path)
    cfg.pool()
    cfg.time_grid()


def test_defaults():
    cfg = parse_config(MINIMAL)
    assert cfg.risk.kind is RiskKind.NONE
    assert cfg.sim.trials == 1000 and cfg.sim.seed == 0
    assert cfg.solver.levels == [0.95, 0.99]
    assert cfg.lgd().is_unit


def test_unknown_key_is_reported_with_its_path():
    data = with_changes(solver={"Kay": 5})
    with pytest.raises(ValidationError, match=r"solver\.Kay"):
        parse_config(data)


def test_negative_parameter_is_rejected():
    data = json.loads(json.dumps(MINIMAL))
    data["model"]["buckets"][0]["sigma"] = -1
    with pytest.raises(ValidationError, match=r"model\.buckets\.0\.sigma"):
        parse_config(data)


def test_off_grid_horizon_is_rejected():
    with pytest.raises(ValidationError, match="not a point of the time grid"):
        parse_config(with_changes(grid={"sample_horizons": [0.255]}))


def test_var_levels_must_be_probabilities():
    with pytest.raises(ValidationError, match="levels"):
        parse_config(with_changes(solver={"levels": [0.5, 1.0]}))


def test_pool_size_rescales_weights():
    data = json.loads(json.dumps(MINIMAL))
    bucket = data["model"]["buckets"][0]
    data["model"]["buckets"] = [{**bucket, "weight": 1}, {**bucket, "lambda0": 0.4, "weight": 2}]
    data["model"]["pool_size"] = 100
    pool = parse_config(data).pool()
    assert [e.weight for e in pool.entries] == [33, 67]
    assert pool.size == 100


def test_pool_size_too_small():
    data = json.loads(json.dumps(MINIMAL))
    bucket = data["model"]["buckets"][0]
    data["model"]["buckets"] = [bucket, bucket, bucket]
    data["model"]["pool_size"] = 2
    with pytest.raises(ValidationError, match="pool_size"):
        parse_config(data).pool()


def test_overrides_leave_original_untouched():
    cfg = parse_config(MINIMAL)
    other = cfg.with_overrides(seed=5, trials=10, solver="finite")
    assert (other.sim.seed, other.sim.trials, other.solver.name) == (5, 10, SolverName.FINITE)
    assert (cfg.sim.seed, cfg.sim.trials, cfg.solver.name) == (0, 1000, SolverName.MOMENTS)


def test_sidecar_loads_back_to_same_config(tmp_path):
    cfg = parse_config(with_changes(sim={"seed": 7, "trials": 20}))
    path = tmp_path / "run.json"
    path.write_text(json.dumps(cfg.sidecar(version="x")))
    loaded = load_config(path)
    assert loaded.meta == {"version": "x"}
    assert loaded.model_dump(exclude={"meta"}) == cfg.model_dump(exclude={"meta"})


def test_unreadable_and_malformed_files(tmp_path):
    with pytest.raises(ValidationError, match="cannot read"):
        load_config(tmp_path / "missing.yaml")
    bad = tmp_path / "bad.yaml"
    bad.write_text("model: [unclosed\n")
    with pytest.raises(ValidationError, match="not valid YAML"):
        load_config(bad)
    scalar = tmp_path / "scalar.yaml"
    scalar.write_text(yaml.safe_dump([1, 2]))
    with pytest.raises(ValidationError, match="mapping"):
        load_config(scalar)


def test_sweep_points_substitute_every_bucket():
    data = json.loads(json.dumps(MINIMAL))
    bucket = data["model"]["buckets"][0]
    data["model"]["buckets"] = [bucket, {**bucket, "lambda0": 0.4}]
    data["sweep"] = {"parameter": "beta_c", "values": [0, 1.5]}
    points = parse_config(data).sweep_points()
    assert [label for label, _ in points] == ["beta_c_0", "beta_c_1.5"]
    for (_, point), value in zip(points, (0, 1.5)):
        assert point.sweep is None
        assert {e.params.beta_c for e in point.pool().entries} == {value}


def test_config_without_sweep_is_a_single_point():
    cfg = parse_config(MINIMAL)
    assert cfg.sweep_points() == [("", cfg)]


def test_sweep_values_are_validated():
    with pytest.raises(ValidationError, match="sweep"):
        parse_config(with_changes(sweep={"parameter": "sigma", "values": [0.5, -1]}))
    with pytest.raises(ValidationError, match=r"sweep\.parameter"):
        parse_config(with_changes(sweep={"parameter": "kappa", "values": [1]}))
    cfg = parse_config(with_changes(sweep={"parameter": "beta_s", "values": [-1, 1]}))
    assert [p.model.buckets[0].beta_s for _, p in cfg.sweep_points()] == [-1, 1]


def test_shipped_sweeps_cover_several_values():
    for name, parameter in (("contagion_sweep", "beta_c"), ("systematic_sweep", "beta_s"), ("spearman_trend", "beta_c")):
        cfg = load_config(CONFIGS / f"{name}.yaml")
        assert cfg.sweep.parameter.value == parameter
        assert len(cfg.sweep_points()) >= 2
