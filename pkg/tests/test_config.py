"""Tests for configuration parsing and validation."""

import pytest

from simdm.config import load_config, parse_config_text, parse_flat, validate_config
from simdm.errors import ConfigError
from simdm.models import ExperimentConfig, GMMPredictorBlock

TOML_CONFIG = """
[predictor]
kind = "gaussian"
mean = 0.5
variance = [1.0, 2.0, 0.5]

[grid]
N_samp = 20
spacing = "uniform-lambda"

[link]
kind = "cubic"
sigma = 0.1

[recovery]
method = "sim_dmis"
C_s = 1.5
C_s_prime = 2.0

[run]
n = 3
m = [16, 64]
trials = 4
"""

FLAT_CONFIG = """
# same experiment, flat form
predictor.kind = gaussian
predictor.mean = 0.5
predictor.variance = [1.0, 2.0, 0.5]
grid.N_samp = 20
grid.spacing = "uniform-lambda"
link.kind = cubic
link.sigma = 0.1
recovery.method = sim_dmis
recovery.C_s = 1.5
recovery.C_s_prime = 2.0
run.n = 3
run.m = [16, 64]
run.trials = 4
"""


def test_toml_and_flat_forms_agree():
    """Test both file formats validate to the same configuration."""
    from_toml = validate_config(parse_config_text(TOML_CONFIG))
    from_flat = validate_config(parse_config_text(FLAT_CONFIG))
    assert from_toml == from_flat
    assert from_toml.recovery.method == ["sim_dmis"]
    assert from_toml.run.m_list == [16, 64]
    assert from_toml.grid.n_inv is None
    assert from_toml.link.position == "post"


def test_parse_flat_values():
    """Test JSON literals, bare strings and nested keys."""
    text = "run.n = 32\nlink.kind = sign\nverify.lemma1.C = 2.5\nrun.dump_vectors = true"
    data = parse_flat(text)
    assert data == {
        "run": {"n": 32, "dump_vectors": True},
        "link": {"kind": "sign"},
        "verify": {"lemma1": {"C": 2.5}},
    }


def test_parse_flat_rejects_malformed_lines():
    """Test lines without '=' and keys that collide with values."""
    with pytest.raises(ConfigError, match="line 2"):
        parse_flat("run.n = 3\nrun.m 64")
    with pytest.raises(ConfigError, match="not a block"):
        parse_flat("run = 3\nrun.n = 4")


def test_missing_c_s_prime_names_the_field(base_config_data):
    """Test C_s_prime has no default for the scaled estimators."""
    del base_config_data["recovery"]["C_s_prime"]
    with pytest.raises(ConfigError, match="recovery.C_s_prime is required"):
        validate_config(base_config_data)


def test_constants_optional_for_full_inversion(base_config_data):
    """Test SIM-DMFIS alone needs neither constant."""
    base_config_data["recovery"] = {"method": "sim_dmfis"}
    config = validate_config(base_config_data)
    assert config.recovery.c_s is None


def test_swept_constants_need_no_default(base_config_data):
    """Test a sweep axis stands in for a missing constant."""
    del base_config_data["recovery"]["C_s_prime"]
    base_config_data["sweep"] = {"C_s_prime": [1.0, 2.0]}
    assert validate_config(base_config_data).sweep.c_s_prime == [1.0, 2.0]


def test_field_paths_are_reported(base_config_data):
    """Test errors carry dotted field paths without discriminator tags."""
    base_config_data["predictor"]["variance"] = -1.0
    base_config_data["run"]["trials"] = 0
    with pytest.raises(ConfigError) as excinfo:
        validate_config(base_config_data)
    assert "predictor.variance" in excinfo.value.field_paths
    assert "run.trials" in excinfo.value.field_paths
    assert excinfo.value.exit_code == 2


def test_dimension_mismatch(base_config_data):
    """Test predictor vectors must match run.n."""
    base_config_data["predictor"] = {"kind": "constant", "c": [1.0, 2.0]}
    with pytest.raises(ConfigError, match="predictor.c has length 2"):
        validate_config(base_config_data)


def test_step_count_requirements(base_config_data):
    """Test dm2m sampling and second-order inversion need at least two steps."""
    base_config_data["grid"] = {"N_samp": 1, "N_inv": 1, "sampler": "dm2m"}
    with pytest.raises(ConfigError) as excinfo:
        validate_config(base_config_data)
    assert "dm2m" in str(excinfo.value)
    assert "second-order" in str(excinfo.value)


def test_unknown_keys_rejected(base_config_data):
    """Test misspelled keys are not silently ignored."""
    base_config_data["run"]["trails"] = 3
    with pytest.raises(ConfigError, match="run.trails"):
        validate_config(base_config_data)


def test_gmm_block_builds_predictor(base_config_data):
    """Test the gmm block builds a mixture in dimension run.n."""
    config = ExperimentConfig.model_validate(base_config_data)
    assert isinstance(config.predictor, GMMPredictorBlock)
    predictor = config.build_predictor()
    assert predictor.dim == 8
    assert predictor.components == 2


def test_load_config_with_overrides(tmp_path):
    """Test dotted overrides apply before validation and None values are skipped."""
    path = tmp_path / "experiment.toml"
    path.write_text(TOML_CONFIG)
    config = load_config(path, {"run.base_seed": 11, "run.output": None})
    assert config.run.base_seed == 11
    assert config.run.output == "results.csv"


def test_load_config_missing_file(tmp_path):
    """Test an unreadable file raises a configuration error."""
    with pytest.raises(ConfigError, match="Cannot read"):
        load_config(tmp_path / "absent.toml")


def test_schedule_rejects_unknown_keys(base_config_data):
    """Test a misspelled schedule key is an error rather than a silent default."""
    base_config_data["schedule"] = {"beta_mx": 30.0, "eps": 0.01}
    with pytest.raises(ConfigError) as excinfo:
        validate_config(base_config_data)
    assert "schedule.beta_mx" in excinfo.value.field_paths
    assert excinfo.value.exit_code == 2


def test_per_method_grid_blocks(base_config_data):
    """Test grid.<method> blocks override step counts for that method only."""
    base_config_data["grid"] = {
        "N_samp": 20,
        "sim_dms": {"N_samp": 50},
        "sim_dmis": {"N_samp": 100, "N_inv": 50},
    }
    grid = validate_config(base_config_data).grid
    assert grid.steps_for("sim_dms") == (50, None)
    assert grid.steps_for("sim_dmis") == (100, 50)
    assert grid.steps_for("sim_dmfis") == (20, None)
    assert grid.steps_for(None) == (20, None)


def test_per_method_step_counts_are_validated(base_config_data):
    """Test the dm2m step requirement applies to each method block."""
    base_config_data["grid"] = {"sampler": "dm2m", "sim_dms": {"N_samp": 1}}
    with pytest.raises(ConfigError, match="grid.sim_dms.N_samp must be >= 2"):
        validate_config(base_config_data)
