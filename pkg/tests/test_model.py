import json
import math

import numpy as np
import pytest

from crossdial.corpus import Corpus, DialoguePair, SyntheticSpec, generate_synthetic_bilingual
from crossdial.metrics import language_legality
from crossdial.model import (
    AdamW,
    AttentiveSeq2Seq,
    Batch,
    Checkpoint,
    ModelConfig,
    ModelError,
    OptimizerConfig,
    PAD_ID,
    PRETRAIN_DEFAULTS,
    SOURCE_TRAIN_DEFAULTS,
    TARGET_ADAPT_DEFAULTS,
    TrainingDivergedError,
    Vocabulary,
    evaluate_nll,
    generate_corpus,
    generate_greedy,
    gradient_check,
    load_model,
    make_training_batch,
    pretrain_span_corruption,
    restore_checkpoint,
    save_model,
    select_best_checkpoint,
    train,
)


def _vocab(extra=()):
    ca = Corpus(pairs=(DialoguePair("a1 a2 a3 a4", "a4 a3 a2", "aa"),), split="train", language="aa")
    cb = Corpus(pairs=(DialoguePair("b1 b2 b3", "b3 b1", "ba"),), split="train", language="ba")
    return Vocabulary.build([ca, cb], extra_texts=extra)


def _model(emb=8, hid=10, seed=3, extra=()):
    return AttentiveSeq2Seq(_vocab(extra), ModelConfig(embedding_size=emb, hidden_size=hid, seed=seed))


def _batch(model, data=None, max_length=16):
    data = data or [("a1 a2 a3 a4", "a4 a3 a2"), ("b1 b2", "b3 b1 b2")]
    return make_training_batch(model.vocabulary, data, max_length=max_length)


# -- vocabulary ------------------------------------------------------------


def test_vocabulary_layout():
    vocab = _vocab()
    assert vocab.tokens[:4] == ("<pad>", "<bos>", "<eos>", "<unk>")
    content = vocab.tokens[4:]
    assert list(content) == sorted(content)
    assert "a1" in vocab and "zz" not in vocab


def test_vocabulary_encode_decode():
    vocab = _vocab()
    ids = vocab.encode("a1 zz a2")
    assert ids[1] == 3  # unknown token
    assert vocab.decode(ids) == "a1 <unk> a2"


def test_vocabulary_build_deterministic():
    assert _vocab().tokens == _vocab().tokens


# -- batching --------------------------------------------------------------


def test_batch_padding_and_masks():
    model = _model()
    batch = _batch(model)
    assert batch.src.shape == batch.src_mask.shape
    assert (batch.src[batch.src_mask == 0.0] == PAD_ID).all()
    # target-in starts with BOS, target-out ends with EOS where unmasked
    assert (batch.tgt_in[:, 0] == 1).all()
    row_lengths = batch.tgt_mask.sum(axis=1).astype(int)
    for b, n in enumerate(row_lengths):
        assert batch.tgt_out[b, n - 1] == 2
    assert batch.token_count == int(batch.tgt_mask.sum())


def test_empty_source_rejected():
    model = _model()
    with pytest.raises(ModelError):
        make_training_batch(model.vocabulary, [("", "a1")], max_length=8)


def test_max_length_truncates():
    model = _model()
    batch = make_training_batch(model.vocabulary, [("a1 a2 a3 a4", "a4 a3 a2")], max_length=2)
    assert batch.src.shape[1] == 2
    assert batch.tgt_in.shape[1] == 3  # BOS + 2 tokens


# -- forward/backward ------------------------------------------------------


def test_uniform_logits_give_log_vocab_loss():
    model = _model()
    model.params["W_out"][:] = 0.0
    model.params["b_out"][:] = 0.0
    loss, _ = model.forward(_batch(model))
    assert loss == pytest.approx(math.log(len(model.vocabulary)), abs=1e-12)


def test_loss_is_token_mean():
    # duplicating the batch rows must not change the mean loss
    model = _model()
    data = [("a1 a2 a3", "a3 a1")]
    single, _ = model.forward(make_training_batch(model.vocabulary, data, max_length=8))
    double, _ = model.forward(make_training_batch(model.vocabulary, data * 2, max_length=8))
    assert single == pytest.approx(double, abs=1e-12)


def test_gradient_check_passes():
    model = _model()
    report = gradient_check(model, _batch(model), probe_count=50, seed=0)
    assert len(report.probes) == 50
    assert report.max_relative_error <= 1e-4


def test_gradient_check_catches_sign_flip():
    model = _model()
    batch = _batch(model)
    _, cache = model.forward(batch)
    grads = model.backward(cache)
    grads["W_out"] = -grads["W_out"]  # sabotage one parameter's gradient
    slices = model.flat_slices()
    start, stop = slices["W_out"]
    # probe inside the flipped parameter where the gradient is nonzero
    flat = np.abs(grads["W_out"]).ravel()
    idx = start + int(np.argmax(flat))
    report = gradient_check(model, batch, flat_indices=[idx], analytic=grads)
    assert report.max_relative_error > 1.5  # sign flip reads ~2.0


def test_gradients_cover_all_parameters():
    model = _model()
    _, cache = model.forward(_batch(model))
    grads = model.backward(cache)
    assert set(grads) == set(model.params)
    for name, grad in grads.items():
        assert grad.shape == model.params[name].shape
        assert np.isfinite(grad).all(), name


def test_pad_positions_get_no_gradient():
    model = _model()
    batch = _batch(model, data=[("a1 a2 a3 a4", "a4"), ("a1", "a2 a3")])
    _, cache = model.forward(batch)
    grads = model.backward(cache)
    # the pad embedding row can only accumulate from masked positions
    assert np.allclose(grads["E"][PAD_ID], 0.0)


# -- optimizer -------------------------------------------------------------


def _reference_adamw_step(param, grad, m, v, t, lr, b1, b2, eps, wd):
    # textbook update, scalar loop
    out = param.copy()
    m = b1 * m + (1 - b1) * grad
    v = b2 * v + (1 - b2) * grad * grad
    mhat = m / (1 - b1**t)
    vhat = v / (1 - b2**t)
    out -= lr * wd * param  # decoupled decay on the incoming parameter
    out -= lr * mhat / (np.sqrt(vhat) + eps)
    return out, m, v


def test_adamw_matches_reference_steps():
    rng = np.random.default_rng(0)
    params = {"w": rng.normal(size=(4, 3)), "b": rng.normal(size=(3,))}
    mine = {k: p.copy() for k, p in params.items()}
    opt = AdamW(mine, learning_rate=0.01, weight_decay=0.1)
    ref = {k: p.copy() for k, p in params.items()}
    state = {k: (np.zeros_like(p), np.zeros_like(p)) for k, p in params.items()}
    for t in range(1, 6):
        grads = {k: rng.normal(size=p.shape) for k, p in params.items()}
        opt.step(grads)
        for k in ref:
            m, v = state[k]
            ref[k], m, v = _reference_adamw_step(ref[k], grads[k], m, v, t, 0.01, 0.9, 0.999, 1e-8, 0.1)
            state[k] = (m, v)
    for k in ref:
        np.testing.assert_allclose(mine[k], ref[k], rtol=0, atol=1e-12)


def test_weight_decay_is_decoupled():
    # with zero gradient, AdamW still shrinks the parameter by lr*wd exactly
    params = {"w": np.full((2,), 10.0)}
    opt = AdamW(params, learning_rate=0.1, weight_decay=0.5)
    opt.step({"w": np.zeros(2)})
    np.testing.assert_allclose(params["w"], 10.0 - 0.1 * 0.5 * 10.0, atol=1e-12)


def test_optimizer_config_defaults():
    assert (PRETRAIN_DEFAULTS.learning_rate, PRETRAIN_DEFAULTS.epochs, PRETRAIN_DEFAULTS.batch_size) == (5e-5, 5, 8)
    assert (SOURCE_TRAIN_DEFAULTS.learning_rate, SOURCE_TRAIN_DEFAULTS.epochs, SOURCE_TRAIN_DEFAULTS.batch_size) == (5e-5, 5, 8)
    assert (TARGET_ADAPT_DEFAULTS.learning_rate, TARGET_ADAPT_DEFAULTS.epochs, TARGET_ADAPT_DEFAULTS.batch_size) == (1e-4, 6, 4)
    for cfg in (PRETRAIN_DEFAULTS, SOURCE_TRAIN_DEFAULTS, TARGET_ADAPT_DEFAULTS):
        assert (cfg.beta1, cfg.beta2, cfg.eps, cfg.max_length) == (0.9, 0.999, 1e-8, 64)


def test_optimizer_config_validation():
    with pytest.raises(ModelError):
        OptimizerConfig(learning_rate=0.0, epochs=1, batch_size=1)
    with pytest.raises(ModelError):
        OptimizerConfig(learning_rate=0.1, epochs=-1, batch_size=1)
    with pytest.raises(ModelError):
        OptimizerConfig(learning_rate=0.1, epochs=1, batch_size=0)


# -- training loop ---------------------------------------------------------


def test_overfit_single_pair():
    model = _model(emb=16, hid=24, seed=0)
    data = [("a1 a2 a3 a4", "a4 a3 a2")]
    cfg = OptimizerConfig(learning_rate=0.01, epochs=200, batch_size=1, max_length=16)
    result = train(model, data, data, cfg, eval_every=50)
    batch = make_training_batch(model.vocabulary, data, max_length=16)
    assert result.model.nll(batch) < 0.1
    assert generate_greedy(result.model, "a1 a2 a3 a4", max_length=16).text == "a4 a3 a2"


def test_train_is_deterministic():
    def run():
        model = _model(seed=1)
        cfg = OptimizerConfig(learning_rate=0.01, epochs=3, batch_size=2, max_length=16)
        result = train(model, [("a1 a2", "a2"), ("b1 b2", "b2 b1")], [("a1", "a1")], cfg)
        return result.model.parameters_flat()

    np.testing.assert_array_equal(run(), run())


def test_train_checkpoints_and_restore():
    model = _model()
    cfg = OptimizerConfig(learning_rate=0.01, epochs=3, batch_size=1, max_length=16)
    result = train(model, [("a1 a2", "a2")], [("a1 a2", "a2")], cfg)
    steps = [c.step for c in result.checkpoints]
    assert steps[0] == 0
    assert steps[-1] == 3  # 1 step per epoch
    best = select_best_checkpoint(result.checkpoints)
    restore_checkpoint(model, best)
    batch = make_training_batch(model.vocabulary, [("a1 a2", "a2")], max_length=16)
    assert model.nll(batch) == pytest.approx(best.valid_loss)


def test_train_epochs_zero_is_noop_with_baseline_checkpoint():
    model = _model()
    before = model.parameters_flat()
    cfg = OptimizerConfig(learning_rate=0.01, epochs=0, batch_size=1)
    result = train(model, [("a1", "a1")], [("a1", "a1")], cfg)
    assert [c.step for c in result.checkpoints] == [0]
    np.testing.assert_array_equal(before, model.parameters_flat())


def test_train_requires_validation_data():
    model = _model()
    cfg = OptimizerConfig(learning_rate=0.01, epochs=1, batch_size=1)
    with pytest.raises(ModelError):
        train(model, [("a1", "a1")], [], cfg)


def test_divergence_tripwire():
    model = _model()
    model.params["W_out"][:] = np.nan
    cfg = OptimizerConfig(learning_rate=0.01, epochs=1, batch_size=1)
    with pytest.raises(TrainingDivergedError) as err:
        train(model, [("a1", "a1")], [("a1", "a1")], cfg)
    assert err.value.step == 0


def test_evaluate_nll_matches_forward():
    model = _model()
    data = [("a1 a2", "a2"), ("b1", "b1 b2")]
    cfg = OptimizerConfig(learning_rate=0.01, epochs=1, batch_size=2, max_length=16)
    loss = evaluate_nll(model, data, cfg)
    batch = make_training_batch(model.vocabulary, data, max_length=16)
    assert loss == pytest.approx(model.nll(batch))


# -- checkpoint selection --------------------------------------------------


def test_select_best_checkpoint_earliest_tie():
    history = [(0, 2.0), (5, 1.5), (10, 1.5), (15, 1.7)]
    cps = [Checkpoint(step=s, valid_loss=l, params={}) for s, l in history]
    assert select_best_checkpoint(cps).step == 5


def test_select_best_checkpoint_matches_exhaustive_scan():
    rng = np.random.default_rng(42)
    for _ in range(200):
        n = int(rng.integers(1, 30))
        losses = rng.choice([0.5, 1.0, 1.5, 2.0], size=n)  # coarse grid forces ties
        steps = np.cumsum(rng.integers(1, 5, size=n))
        cps = [Checkpoint(step=int(s), valid_loss=float(l), params={}) for s, l in zip(steps, losses)]
        best = select_best_checkpoint(cps)
        # exhaustive scan: strictly better loss, or equal loss at earlier step
        expected = cps[0]
        for c in cps[1:]:
            if c.valid_loss < expected.valid_loss or (
                c.valid_loss == expected.valid_loss and c.step < expected.step
            ):
                expected = c
        assert (best.step, best.valid_loss) == (expected.step, expected.valid_loss)


def test_select_best_checkpoint_empty():
    with pytest.raises(ModelError):
        select_best_checkpoint([])


# -- generation ------------------------------------------------------------


def test_greedy_deterministic_and_distributions_normalized():
    model = _model()
    out1 = generate_greedy(model, "a1 a2 a3", max_length=8)
    out2 = generate_greedy(model, "a1 a2 a3", max_length=8)
    assert out1.text == out2.text
    assert out1.token_ids == out2.token_ids
    for dist in out1.distributions:
        assert dist.shape == (len(model.vocabulary),)
        assert dist.sum() == pytest.approx(1.0, abs=1e-12)


def test_greedy_respects_max_length():
    model = _model()
    out = generate_greedy(model, "a1 a2", max_length=3)
    assert len(out.token_ids) <= 3


def test_generate_corpus_order():
    model = _model()
    sources = ["a1 a2", "b1 b2", "a1 a2"]
    outs = generate_corpus(model, sources, max_length=5)
    assert len(outs) == 3
    assert outs[0] == outs[2]  # same source, same greedy output


# -- serialization ---------------------------------------------------------


def test_save_load_bit_exact(tmp_path):
    model = _model(seed=9)
    path = tmp_path / "m.model"
    save_model(model, path)
    back = load_model(path)
    assert back.vocabulary.tokens == model.vocabulary.tokens
    assert back.config == model.config
    for name in model.params:
        assert np.array_equal(back.params[name], model.params[name]), name
    # behavior identical
    b = _batch(model)
    assert back.nll(b) == model.nll(b)


def test_save_is_byte_stable(tmp_path):
    model = _model(seed=9)
    p1, p2 = tmp_path / "a.model", tmp_path / "b.model"
    save_model(model, p1)
    save_model(model, p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_load_rejects_other_formats(tmp_path):
    path = tmp_path / "bad.model"
    path.write_text(json.dumps({"format": "something-else"}))
    with pytest.raises(ModelError):
        load_model(path)


# -- span-corruption pretraining -------------------------------------------

_SENTINELS = ("<extra_id_0>", "<extra_id_1>")


def _tiny_bundle(seed=0):
    spec = SyntheticSpec(
        vocab_size_per_language=12,
        n_train_aux=24,
        n_fewshot_tgt=4,
        n_valid=8,
        n_test=8,
        template_count=2,
        seed=seed,
    )
    return generate_synthetic_bilingual(spec)


def test_pretrain_improves_denoising_loss():
    bundle = _tiny_bundle()
    vocab = Vocabulary.build([bundle.aux_train, bundle.tgt_valid], extra_texts=_SENTINELS)
    model = AttentiveSeq2Seq(vocab, ModelConfig(embedding_size=12, hidden_size=16, seed=0))
    cfg = OptimizerConfig(learning_rate=5e-3, epochs=4, batch_size=8, max_length=32)
    result = pretrain_span_corruption(model, [bundle.aux_train, bundle.tgt_valid], cfg, seed=0)
    losses = [loss for _, loss in result.valid_losses]
    assert losses[-1] < losses[0]


def test_pretrain_single_language_stays_in_language():
    # control: pretraining on one language only must keep generations legal
    bundle = _tiny_bundle()
    vocab = Vocabulary.build([bundle.aux_train], extra_texts=_SENTINELS)
    model = AttentiveSeq2Seq(vocab, ModelConfig(embedding_size=12, hidden_size=16, seed=1))
    cfg = OptimizerConfig(learning_rate=8e-3, epochs=10, batch_size=8, max_length=32)
    pretrain_span_corruption(model, [bundle.aux_train], cfg, seed=1)
    sources = [p.context for p in bundle.aux_test.pairs[:8]]
    outs = generate_corpus(model, sources, max_length=16)
    outs = [o for o in outs if o.strip()]
    assert outs, "model generated nothing"
    legal = language_legality(outs, frozenset(bundle.aux_vocabulary) | set(_SENTINELS))
    assert legal.legality == 100.0


def test_pretrain_deterministic():
    bundle = _tiny_bundle()
    cfg = OptimizerConfig(learning_rate=5e-3, epochs=2, batch_size=8, max_length=32)

    def run():
        vocab = Vocabulary.build([bundle.aux_train], extra_texts=_SENTINELS)
        model = AttentiveSeq2Seq(vocab, ModelConfig(embedding_size=12, hidden_size=16, seed=2))
        pretrain_span_corruption(model, [bundle.aux_train], cfg, seed=7)
        return model.parameters_flat()

    np.testing.assert_array_equal(run(), run())
