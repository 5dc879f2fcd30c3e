"""Config round-trips, strictness, and content hashing."""

import json
from pathlib import Path

import pytest

from randomout.config import (
    HASH_CHARS,
    DatasetCfg,
    ModelCfg,
    RandomOutCfg,
    TrainConfig,
    load_config,
)


def test_defaults_valid():
    cfg = TrainConfig()
    assert cfg.condition == "base"
    assert cfg.randomout is None
    assert cfg.model.name == "cratercnn"
    assert cfg.dataset.kind == "synth"


def test_unknown_fields_rejected_at_every_level():
    with pytest.raises(ValueError, match="unknown train field.*typo"):
        TrainConfig.from_dict({"typo": 1})
    with pytest.raises(ValueError, match="unknown model field.*depth"):
        TrainConfig.from_dict({"model": {"depth": 3}})
    with pytest.raises(ValueError, match="unknown dataset field.*n"):
        TrainConfig.from_dict({"dataset": {"n": 10}})
    with pytest.raises(ValueError, match="unknown randomout field.*threshold"):
        TrainConfig.from_dict({"condition": "randomout", "randomout": {"threshold": 0.1}})


def test_round_trip_preserves_everything():
    cfg = TrainConfig.from_dict(
        {
            "seed": 3,
            "epochs": 5,
            "lr": 0.01,
            "optimizer": "adam",
            "condition": "randomout",
            "model": {"name": "cratercnn", "width": 6},
            "dataset": {"kind": "synth", "n_pos": 32, "n_neg": 32},
            "randomout": {"tau": 1e-6, "p_active": 0.5, "check_every": 2},
        }
    )
    again = TrainConfig.from_dict(cfg.to_dict())
    assert again == cfg
    assert again.config_hash() == cfg.config_hash()


def test_hash_ignores_key_order_in_source_dict():
    d1 = {"seed": 1, "epochs": 2}
    d2 = {"epochs": 2, "seed": 1}
    assert TrainConfig.from_dict(d1).config_hash() == TrainConfig.from_dict(d2).config_hash()


def test_hash_changes_with_any_value():
    base = TrainConfig()
    assert len(base.config_hash()) == HASH_CHARS
    assert base.config_hash() != TrainConfig(seed=1).config_hash()
    assert base.config_hash() != TrainConfig(lr=0.051).config_hash()
    ro = TrainConfig(condition="randomout")
    assert ro.config_hash() != base.config_hash()
    assert (
        ro.config_hash()
        != TrainConfig(condition="randomout", randomout={"tau": 1e-7}).config_hash()
    )


def test_hash_stable_across_processes():
    # sha256 of canonical JSON: same content, same hash, every time
    cfg = TrainConfig(seed=5)
    assert cfg.config_hash() == TrainConfig(seed=5).config_hash()
    payload = json.loads(cfg.canonical_json())
    assert payload["seed"] == 5


def test_randomout_autofilled_for_condition():
    cfg = TrainConfig(condition="randomout")
    assert cfg.randomout == RandomOutCfg()


def test_randomout_settings_rejected_off_condition():
    with pytest.raises(ValueError, match="only valid with condition='randomout'"):
        TrainConfig(condition="base", randomout={"tau": 0.1})
    with pytest.raises(ValueError, match="only valid"):
        TrainConfig(condition="batchnorm", randomout={"tau": 0.1})


def test_replace_updates_and_drops_stale_randomout():
    ro = TrainConfig(condition="randomout", randomout={"tau": 1e-5})
    base = ro.replace(condition="base")
    assert base.condition == "base" and base.randomout is None
    deeper = ro.replace(randomout={"tau": 1e-9, "p_active": 0.25, "check_every": 1})
    assert deeper.randomout.tau == 1e-9 and deeper.randomout.p_active == 0.25
    assert deeper.seed == ro.seed


def test_field_validation_messages():
    with pytest.raises(ValueError, match="unknown optimizer"):
        TrainConfig(optimizer="lbfgs")
    with pytest.raises(ValueError, match="unknown condition"):
        TrainConfig(condition="dropout")
    with pytest.raises(ValueError, match="lr must be > 0"):
        TrainConfig(lr=0.0)
    with pytest.raises(ValueError, match="seed must be >= 0"):
        TrainConfig(seed=-1)
    with pytest.raises(ValueError, match="unknown model"):
        ModelCfg(name="vgg")
    with pytest.raises(ValueError, match="unknown dataset kind"):
        DatasetCfg(kind="imagenet")
    with pytest.raises(ValueError, match="n_pos and n_neg"):
        DatasetCfg(kind="synth", n_pos=1)
    with pytest.raises(ValueError, match=r"paths=\(images, labels\)"):
        DatasetCfg(kind="idx", paths=("only-one",))
    with pytest.raises(ValueError, match="batch_file"):
        DatasetCfg(kind="cifar10", paths=())


def test_load_config_reads_json(tmp_path):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps({"seed": 9, "condition": "randomout", "randomout": {"tau": 1e-4}}))
    cfg = load_config(p)
    assert cfg.seed == 9 and cfg.randomout.tau == 1e-4


def test_load_config_reports_json_position(tmp_path):
    p = tmp_path / "broken.json"
    p.write_text('{\n  "seed": 1,\n}')
    with pytest.raises(ValueError, match=r"broken\.json: invalid JSON at line 3"):
        load_config(p)


def test_load_config_rejects_non_object(tmp_path):
    p = tmp_path / "list.json"
    p.write_text("[1, 2]")
    with pytest.raises(ValueError, match="must be an object"):
        load_config(p)


def test_load_config_wraps_field_errors_with_path(tmp_path):
    p = tmp_path / "bad_field.json"
    p.write_text('{"optimizer": "sgdm"}')
    with pytest.raises(ValueError, match=r"bad_field\.json: unknown optimizer"):
        load_config(p)


def test_shipped_configs_parse():
    configs = sorted((Path(__file__).parent.parent / "configs").glob("*.json"))
    assert len(configs) >= 3
    for path in configs:
        cfg = load_config(path)
        assert cfg.config_hash()  # parses and hashes
    ro = load_config(Path(__file__).parent.parent / "configs" / "cratercnn-synth-randomout.json")
    assert ro.randomout.tau == 1e-12 and ro.randomout.p_active == 1.0
