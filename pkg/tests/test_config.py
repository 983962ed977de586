import json

import pytest

from mixtrack.config import CONFIG_VERSION, RunConfig
from mixtrack.core import DataError
from mixtrack.models import ModelKind


def test_defaults_round_trip():
    cfg = RunConfig()
    doc = json.loads(json.dumps(cfg.to_json()))
    assert doc["version"] == CONFIG_VERSION
    assert RunConfig.from_json(doc) == cfg


def test_partial_document_overrides_defaults():
    cfg = RunConfig.from_json({"version": 1, "k": 6, "optimizer": {"budget": 4},
                               "model_constants": {"v_cap": 3.0}, "forced_model": "SocialForces"})
    assert cfg.k == 6 and cfg.optimizer.budget == 4 and cfg.optimizer.method == "genetic"
    assert cfg.model_constants.v_cap == 3.0
    t = cfg.tracker()
    assert t.forced_model == ModelKind.SOCIAL_FORCES and t.constants.v_cap == 3.0


def test_version_and_unknown_keys_rejected():
    with pytest.raises(ValueError):
        RunConfig.from_json({"k": 3})
    with pytest.raises(ValueError):
        RunConfig.from_json({"version": 2})
    with pytest.raises(ValueError):
        RunConfig.from_json({"version": 1, "particles": 5})


def test_out_of_range_values_rejected():
    with pytest.raises(ValueError):
        RunConfig(n_min=300)
    with pytest.raises(ValueError):
        RunConfig(mode="mixed")
    with pytest.raises(ValueError):
        RunConfig(forced_model="kalman")


def test_override_ignores_unset_flags():
    cfg = RunConfig(seed=4).override(seed=None, threads=3)
    assert cfg.seed == 4 and cfg.threads == 3


def test_load(tmp_path):
    p = tmp_path / "run.json"
    p.write_text(json.dumps({"version": 1, "recalibrate_every": 3}))
    assert RunConfig.load(p).recalibrate_every == 3
    with pytest.raises(DataError):
        RunConfig.load(tmp_path / "missing.json")
    (tmp_path / "bad.json").write_text("{")
    with pytest.raises(ValueError):
        RunConfig.load(tmp_path / "bad.json")
