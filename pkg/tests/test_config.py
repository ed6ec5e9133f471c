"""Config model defaults, coercion, and validation messages."""

import pytest

from mcdimpute.config import ExperimentConfig, config_items, make_config
from mcdimpute.errors import UsageError


def test_defaults():
    cfg = ExperimentConfig()
    assert cfg.model_kinds == ("ae", "vae", "mcd-ae", "mcd-vae")
    assert cfg.missing_rates == (0.1, 0.3, 0.5)
    assert cfg.epochs == 300
    assert cfg.dropout_p == 0.2
    assert cfg.mc_samples == 100
    assert cfg.folds == 5
    assert cfg.batch_size == 32
    assert cfg.lr == 1e-3
    assert cfg.kl_weight == 1e-3
    assert cfg.seed == 0
    assert cfg.jobs == 1
    assert cfg.dataset == ()


def test_single_values_become_tuples():
    cfg = make_config({"dataset": "wisc", "model_kinds": "mcd-vae", "missing_rates": 0.3})
    assert cfg.dataset == ("wisc",)
    assert cfg.model_kinds == ("mcd-vae",)
    assert cfg.missing_rates == (0.3,)
    cfg = make_config({"missing_rates": [0.1, 0.5]})
    assert cfg.missing_rates == (0.1, 0.5)


def test_validation_names_the_key():
    with pytest.raises(UsageError, match="missing_rates"):
        make_config({"missing_rates": 1.5})
    with pytest.raises(UsageError, match="missing_rates"):
        make_config({"missing_rates": 0.0})
    with pytest.raises(UsageError, match="folds"):
        make_config({"folds": 1})
    with pytest.raises(UsageError, match="mc_samples"):
        make_config({"mc_samples": 0})
    with pytest.raises(UsageError, match="model_kinds"):
        make_config({"model_kinds": ["gan"]})
    with pytest.raises(UsageError, match="model_kinds"):
        make_config({"model_kinds": ["ae", "ae"]})
    with pytest.raises(UsageError, match="dropout_p"):
        make_config({"dropout_p": 1.0})
    with pytest.raises(UsageError, match="epochs"):
        make_config({"epochs": 0})
    with pytest.raises(UsageError, match="kl_weight"):
        make_config({"kl_weight": 0.0})
    with pytest.raises(UsageError):
        make_config({"no_such_key": 1})


def test_config_items_order_and_round_trip():
    cfg = make_config({"dataset": "synth-milk", "seed": 9})
    items = config_items(cfg)
    keys = [k for k, _ in items]
    assert keys[0] == "dataset"
    assert set(keys) == set(type(cfg).model_fields)
    again = make_config(dict(items))
    assert again == cfg
