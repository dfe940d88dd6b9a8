import json

import numpy as np
import pytest

import stain_trainer as st

SMALL = dict(depth=3, base_filters=4)


def test_toy_validation_mse_under_bound(toy_run):
    val = toy_run["curves"]["validation"]
    assert len(val) == 50
    assert val[-1] < 1e-3
    assert min(val) < 1e-3


def test_loss_strictly_decreases_early(toy_run):
    tr = toy_run["curves"]["train"]
    for a, b in zip(tr[:5], tr[1:5]):
        assert b < a


def test_empty_training_split_rejected():
    pairs = st.toy_pairs({"validation": 3}, size=48, seed=0)
    with pytest.raises(ValueError, match="training split"):
        st.train(pairs, st.TrainConfig(epochs=1, **SMALL))


def test_zero_epochs_rejected():
    with pytest.raises(ValueError, match="epochs"):
        st.TrainConfig(epochs=0)
    with pytest.raises(ValueError, match="learning_rate"):
        st.TrainConfig(learning_rate=0.0)


def test_identical_seed_identical_loss():
    pairs = st.toy_pairs({"train": 6, "validation": 2}, size=48, seed=3)
    cfg = st.TrainConfig(epochs=3, seed=21, **SMALL)
    _, first = st.train(pairs, cfg)
    _, second = st.train(pairs, cfg)
    assert abs(first["train"][-1] - second["train"][-1]) < 1e-6
    assert abs(first["validation"][-1] - second["validation"][-1]) < 1e-6


def test_save_run_artifacts(tmp_path, toy_run):
    weights = st.save_run(tmp_path / "run", toy_run["model"],
                          toy_run["curves"], toy_run["cfg"])
    records = st.load_weight_records(weights)
    assert "head.weight" in records
    metrics = json.loads((tmp_path / "run" / "metrics.json").read_text())
    assert metrics["epochs_run"] == 50
    assert metrics["final_validation_mse"] < 1e-3
    assert metrics["config"]["learning_rate"] == pytest.approx(1e-4)
    assert len(metrics["curves"]["train"]) == 50


def test_validation_curve_tracks_eval_mode(toy_run):
    # the recorded final value must equal a fresh eval-mode pass
    pairs = [p for p in toy_run["pairs"] if p.split == "validation"]
    cfg = toy_run["cfg"]
    model = toy_run["model"]
    preds = np.stack([st.predict(model, p.phase, cfg.rho_min, cfg.rho_max)
                      for p in pairs])
    truth = np.stack([p.stain for p in pairs])
    direct = float(np.mean((preds - truth) ** 2))
    assert direct == pytest.approx(toy_run["curves"]["validation"][-1], rel=0.2)
