import json
import os

import pytest

from backend.config import RunConfig, effective_config, load_config, write_effective_config
from backend.errors import ConfigError
from backend.experiment import Method
from backend.model import RNG_IDENTITY
from conftest import CONFIGS_DIR


@pytest.fixture
def no_dotenv(tmp_path):
    return str(tmp_path / "missing.env")


def test_defaults_are_the_base_study(no_dotenv):
    cfg = load_config(dotenv_path=no_dotenv)
    plan = cfg.plan_for(Method.FF)
    assert len(plan.environments) == 9
    assert len(plan.grid) == 288
    assert (plan.replications, plan.horizon, plan.warmup) == (20, 8760.0, 760.0)
    rates = cfg.cost_rates()
    assert (rates.wip_rate, rates.fgi_rate, rates.tardiness_rate) == (0.5, 1.0, 19.0)
    assert cfg.mode == "reproducible"


def test_sbm_plan_uses_configured_bounds(no_dotenv):
    cfg = load_config(dotenv_path=no_dotenv)
    settings = cfg.plan_for(Method.S3).sbm
    assert (settings.lb, settings.ub, settings.init_iterations, settings.min_replications) \
        == (0.02, 0.8, 5, 3)
    assert settings.replications_per_iteration == 20


def test_reduced_config_file(no_dotenv):
    cfg = load_config(os.path.join(CONFIGS_DIR, "reduced.json"), dotenv_path=no_dotenv)
    plan = cfg.plan_for(Method.S4)
    assert len(plan.grid) == 8 * 16
    assert cfg.experiment.methods == [Method.FF, Method.S1, Method.S2, Method.S3, Method.S4]
    assert (plan.horizon, plan.warmup, plan.replications) == (3000.0, 300.0, 10)


def test_degenerate_config_file(no_dotenv):
    cfg = load_config(os.path.join(CONFIGS_DIR, "degenerate.json"), dotenv_path=no_dotenv)
    (env,) = cfg.environments()
    assert env.mean_interarrival == 1.0
    assert cfg.model_constants().due_date_exp_mean == 0.0


def test_environment_overrides(monkeypatch, no_dotenv):
    monkeypatch.setenv("DBR_MASTER_SEED", "77")
    monkeypatch.setenv("DBR_LOG_LEVEL", "debug")
    cfg = load_config(dotenv_path=no_dotenv)
    assert cfg.experiment.master_seed == 77
    assert cfg.verbosity == "DEBUG"


def test_dotenv_file_is_read(tmp_path):
    dotenv = tmp_path / ".env"
    dotenv.write_text("DBR_OUTPUT_DIR=from_dotenv\n", encoding="utf-8")
    assert load_config(dotenv_path=str(dotenv)).output_dir == "from_dotenv"


def test_shell_environment_beats_dotenv(monkeypatch, tmp_path):
    dotenv = tmp_path / ".env"
    dotenv.write_text("DBR_OUTPUT_DIR=from_dotenv\n", encoding="utf-8")
    monkeypatch.setenv("DBR_OUTPUT_DIR", "from_shell")
    assert load_config(dotenv_path=str(dotenv)).output_dir == "from_shell"


def test_environment_ignored_when_disabled(monkeypatch):
    monkeypatch.setenv("DBR_MASTER_SEED", "77")
    assert load_config(use_env=False).experiment.master_seed == RunConfig().experiment.master_seed


def test_bad_master_seed(monkeypatch, no_dotenv):
    monkeypatch.setenv("DBR_MASTER_SEED", "seven")
    with pytest.raises(ConfigError):
        load_config(dotenv_path=no_dotenv)


@pytest.mark.parametrize("content", [
    "{not json",
    "[1, 2]",
    json.dumps({"experiment": {"replications": 0}}),
    json.dumps({"experiment": {"c_min": 5, "c_max": 2}}),
    json.dumps({"unknown_section": {}}),
    json.dumps({"verbosity": "LOUD"}),
])
def test_invalid_config_files(tmp_path, no_dotenv, content):
    path = tmp_path / "cfg.json"
    path.write_text(content, encoding="utf-8")
    with pytest.raises(ConfigError):
        load_config(path, dotenv_path=no_dotenv)


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.json", use_env=False)


def test_invalid_model_section_surfaces_as_config_error():
    cfg = RunConfig.model_validate({"model": {"upstream_mean": -1.0}})
    with pytest.raises(ConfigError):
        cfg.model_constants()


def test_overrides():
    cfg = RunConfig().with_overrides(methods="ff,S4", replications=3, output_dir="x",
                                     horizon=None, mode="parallel")
    assert cfg.experiment.methods == [Method.FF, Method.S4]
    assert cfg.experiment.replications == 3
    assert cfg.output_dir == "x"
    assert cfg.experiment.horizon == 8760.0
    assert cfg.mode == "parallel"
    with pytest.raises(ConfigError):
        RunConfig().with_overrides(colour="blue")
    with pytest.raises(ConfigError):
        RunConfig().with_overrides(warmup=9000.0)


def test_effective_config_echo(tmp_path):
    path = write_effective_config(RunConfig(), tmp_path / "out")
    data = json.loads(path.read_text(encoding="utf-8"))
    assert data["rng"] == RNG_IDENTITY
    assert data["experiment"]["c_max"] == 12
    assert data["costs"]["tardiness_rate"] == 19.0


def test_environment_overrides_are_remembered(monkeypatch, no_dotenv):
    monkeypatch.setenv("DBR_MASTER_SEED", "77")
    cfg = load_config(dotenv_path=no_dotenv).with_overrides(replications=3)
    assert cfg.env_overrides == {"DBR_MASTER_SEED": "77"}
    assert load_config(use_env=False).env_overrides == {}


def test_with_environments_narrows_the_grid():
    cfg = RunConfig()
    envs = cfg.environments()[:2]
    narrowed = cfg.with_environments(envs)
    assert narrowed.experiment.shop_loads == [0.85]
    assert narrowed.experiment.cv_ppts == [0.3, 0.6]
    data = effective_config(narrowed, envs, run={"command": "sweep"})
    assert [(e["shop_load"], e["cv_ppt"]) for e in data["environments"]] == [(0.85, 0.3), (0.85, 0.6)]
    assert data["environment_overrides"] == {}
