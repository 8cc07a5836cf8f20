import math

import numpy as np
import pytest

import dse


def small_configs(epochs=3):
    ec = dse.EncoderConfig()
    ec.vocab_size = 2000
    ec.embed_dim = 16
    ec.head_hidden = 16
    ec.head_out = 8
    tc = dse.TrainConfig()
    tc.batch_size = 32
    tc.epochs = epochs
    return ec, dse.LossConfig(), tc


def test_tokenize_reserves_low_ids():
    ids, words = dse.tokenize("Hello hello there", 100, 0)
    assert words == 3
    assert ids[0] == ids[1]
    assert all(3 <= i < 100 for i in ids)


def test_consecutive_pairs_count():
    corpus = dse.gen_synthetic(topics=2, dialogues_per_topic=3, turns=5, words=4)
    pairs = dse.build_pairs(corpus, "consec")
    assert len(pairs) == 6 * 4
    assert pairs[0].response == corpus[0].turns[1].text


def test_batch_loss_matches_ntxent_without_hard_negatives():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(6, 5))
    cfg = dse.LossConfig()
    cfg.hard_negatives = False
    cfg.temperature = 0.2
    loss, grad = dse.batch_loss(x, cfg)
    assert grad.shape == x.shape
    assert loss == pytest.approx(dse.ntxent(x, 0.2), rel=1e-12)


def test_loss_gradient_by_finite_differences():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(4, 3))
    cfg = dse.LossConfig()
    cfg.hard_negatives = False
    cfg.temperature = 0.5
    _, grad = dse.batch_loss(x, cfg)
    h = 1e-5
    for i, j in [(0, 0), (2, 1), (3, 2)]:
        xp, xm = x.copy(), x.copy()
        xp[i, j] += h
        xm[i, j] -= h
        fd = (dse.batch_loss(xp, cfg)[0] - dse.batch_loss(xm, cfg)[0]) / (2 * h)
        assert fd == pytest.approx(grad[i, j], rel=1e-5, abs=1e-8)


def test_train_encode_and_round_trip(tmp_path):
    corpus = dse.gen_synthetic(topics=4, dialogues_per_topic=10, turns=6, words=6, seed=3)
    pairs = dse.build_pairs(corpus)
    model, losses = dse.train(pairs, *small_configs())
    assert len(losses) == 3
    assert all(math.isfinite(v) for v in losses)
    emb = model.encode(["t0w1 t0w2 t0w3", "t1w4 t1w5"])
    assert emb.shape == (2, 16)
    assert emb.dtype == np.float32

    path = tmp_path / "m.ckpt"
    model.save(str(path))
    again = dse.Model.load(str(path))
    assert np.array_equal(again.encode(["t0w1 t0w2 t0w3"]), emb[:1])
    assert again.epoch == 3


def test_eval_intent_on_synthetic_topics():
    corpus = dse.gen_synthetic(topics=4, dialogues_per_topic=10, seed=5)
    model, _ = dse.train(dse.build_pairs(corpus), *small_configs(epochs=5))
    texts, labels = dse.synthetic_intent_set(dse.gen_synthetic(topics=4, dialogues_per_topic=3, seed=6))
    metrics = dse.eval_intent(model, texts, labels, shots=1, seed=0, rounds=2)
    assert 0.0 <= metrics["Accuracy"] <= 1.0
    intra, inter = dse.cluster_separation(model.encode(texts).astype(np.float64), labels)
    assert intra > inter


def test_errors_surface_as_value_error(tmp_path):
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"nope")
    with pytest.raises(ValueError, match="DSECKPT1"):
        dse.Model.load(str(bad))
    with pytest.raises(dse.DseError):
        dse.build_pairs([], "mlm")
