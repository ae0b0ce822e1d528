import json

import pytest

from shapeinv.config import ConfigError, RunConfig


def test_defaults_validate_and_round_trip():
    cfg = RunConfig().validate()
    back = RunConfig.from_json(cfg.to_json())
    assert back == cfg
    assert cfg.n_modes == 6
    assert cfg.measurement.K == 100 and cfg.noise.variance == 0.01


def test_resolved_materializes_derived_values():
    cfg = RunConfig.from_dict({"geometry": {"mesh_rule": "pollution"}, "physics": {"frequency": 2e9}})
    res = cfg.resolved()
    assert res.prior.J == 6
    assert res.geometry.mesh_rule == "fixed"
    assert res.geometry.h == pytest.approx(cfg.mesh_size)
    assert cfg.mesh_size < cfg.geometry.h


@pytest.mark.parametrize("data, fragment", [
    ({"physcs": {}}, "unknown section"),
    ({"prior": {"rr0": 1}}, "unknown key"),
    ({"prior": {"r0": -1}}, "prior.r0"),
    ({"measurement": {"r1": 0.02}}, "measurement.r1"),
    ({"geometry": {"R": 0.012}}, "geometry.R"),
    ({"geometry": {"rho_a": 0.006}}, "geometry.rho_a"),
    ({"smc": {"ess_factor": 1.5}}, "smc.ess_factor"),
    ({"smc": {"resampling": "stratified"}}, "smc.resampling"),
    ({"noise": {"matrix": [[1, 0], [0, 1]]}}, "noise.matrix"),
    ({"truth": {"y": [0.1, 0.2]}}, "truth.y"),
    ({"physics": {"direction": [1, 1]}}, "physics.direction"),
    ({"prior": {"J": "lots"}}, "prior.J"),
    ({"prior": {"r0": "big"}}, "invalid value type"),
])
def test_validation_names_constraint(data, fragment):
    with pytest.raises(ConfigError, match=fragment):
        RunConfig.from_dict(data)


def test_invalid_json():
    with pytest.raises(ConfigError, match="invalid JSON"):
        RunConfig.from_json("{not json")


def test_with_seed_is_deterministic_and_distinct():
    a = RunConfig().with_seed(7)
    b = RunConfig().with_seed(7)
    assert a == b
    seeds = {a.prior.seed, a.noise.seed, a.truth.seed, a.smc.seed}
    assert len(seeds) == 4


def test_factories(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"prior": {"J": 3}, "measurement": {"K": 5}, "smc": {"n_particles": 50}}))
    cfg = RunConfig.load(path)
    assert cfg.coefficients().n_modes == 3
    assert cfg.noise_model().dim == 5
    assert cfg.smc_config().n_particles == 50
    assert cfg.physics_params(2.0).kappa0 == pytest.approx(2 * cfg.physics_params().kappa0)
    assert RunConfig.from_dict({"noise": {"enabled": False}}).noise_model() is None
