import math

import numpy as np
import pytest

import glmotion as gm


def test_configs_and_parameter_count():
    cfg = gm.ModelConfig()
    assert (cfg.joints, cfg.persons, cfg.embed_dim, cfg.blocks) == (25, 2, 6, 4)
    assert cfg.parameter_count() == 5123772
    assert gm.MpdpConfig().intervals == [1, 5, 10]
    assert len(gm.MpdpConfig().edges()) == 7


def test_class_construction():
    assert gm.direction_class([0.0, 0.0, 0.0]) == 13
    assert gm.direction_class([0.05, -0.03, 0.001]) == 19
    assert gm.magnitude_class([0.0, 0.0, 0.0]) == 0
    e = gm.MpdpConfig().edges()
    assert gm.magnitude_class([e[1], 0.0, 0.0]) == 2


def test_sequence_round_trip():
    coords = np.random.default_rng(0).normal(size=(4, 1, 3, 3))
    s = gm.Sequence(coords, id="x", label=2)
    back = gm.Sequence.from_canonical(s.to_canonical())
    assert back.label == 2 and back.id == "x"
    np.testing.assert_array_equal(back.coords, coords)
    with pytest.raises(gm.ShapeError):
        gm.Sequence(np.zeros((4, 3)))


def test_pretrain_and_probe_end_to_end(tmp_path):
    data = gm.synth_generate(seed=1, per_class=6)
    assert len(data) == 24 and data[0].joints == 5
    model_cfg = gm.ModelConfig()
    model_cfg.joints, model_cfg.persons, model_cfg.blocks, model_cfg.t_max = 5, 1, 1, 64
    run = gm.RunConfig()
    run.epochs, run.batch_size, run.probe_epochs = 2, 8, 5
    model = gm.init_model(model_cfg, seed=3)
    epochs = gm.pretrain(model, data, run)
    assert [e.epoch for e in epochs] == [1, 2]
    assert all(math.isfinite(e.loss) for e in epochs)
    feats = model.features(data, run)
    assert feats.shape == (24, 30)
    result = model.probe(data, data, run)
    assert 0.0 <= result["test_accuracy"] <= 1.0

    path = tmp_path / "m.glm"
    model.save(path)
    loaded = gm.load_model(path)
    assert loaded.checksum() == model.checksum()
    np.testing.assert_array_equal(loaded.features(data, run), feats)

    gm.write_dataset(tmp_path / "ds", data)
    again = gm.read_dataset(tmp_path / "ds")
    np.testing.assert_array_equal(again[5].coords, data[5].coords)


def test_uniform_heads_loss_closed_form():
    data = gm.synth_generate(seed=2, per_class=2)
    cfg = gm.ModelConfig()
    cfg.joints, cfg.persons, cfg.blocks, cfg.t_max = 5, 1, 1, 64
    model = gm.init_model(cfg, seed=0)
    # random heads are near uniform; the closed form is checked in C++ with zero heads
    assert abs(model.mpdp_loss(data, gm.RunConfig()) - (math.log(27) + math.log(8))) < 0.5


def test_gradcheck_and_analysis():
    r = gm.gradcheck()
    assert r["passed"] and r["max_rel_error"] < 1e-3
    assert gm.mean_attended_distance(np.eye(5)) == 0.0
    assert abs(gm.mean_attended_distance(np.full((3, 3), 1 / 3)) - 8 / 9) < 1e-12
    sim = gm.posemb_similarity(np.zeros((3, 2, 4)))
    assert np.isnan(sim).all()


def test_errors_are_typed(tmp_path):
    with pytest.raises(gm.DataError):
        gm.read_dataset(tmp_path / "missing")
    with pytest.raises(gm.UsageError):
        gm.RunConfig().input_mode = "sampled:1"
