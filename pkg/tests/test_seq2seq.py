import json
import math

import numpy as np
import pytest

from drgtfa import nncore as nn
from drgtfa.encoders import EncoderConfig
from drgtfa.experiments import graphs_for
from drgtfa.nncore import grad_check
from drgtfa.pipeline import convert_text
from drgtfa.seq2seq import (
    BOS,
    EOS,
    PAD,
    UNK,
    ModelConfig,
    NonFiniteLoss,
    Seq2Seq,
    TrainConfig,
    Vocabulary,
    decode_step,
    detokenize,
    generate,
    perplexity,
    run_multi_seed,
    tokenize,
    train,
)
from drgtfa.templates import template_corpus

SMALL = ModelConfig(EncoderConfig("ggnn", "deep", hidden=16), embedding=12, dropout=0.0, max_len=20)
TARO = 'male.n.02 Name "Taro~Akagawa"\ntime.n.08 TPR now\nwrite.v.01 Agent -2 Time -1 Result +1\nbook.n.01'


def _pairs(n, seed=0, strategy="ctc"):
    insts = [convert_text(it.sbn, it.reference, it.source_id) for it in template_corpus(n, seed)]
    return list(zip(graphs_for(insts, strategy), [i.tokens for i in insts]))


def _model(pairs, cfg=SMALL, seed=0, drop=()):
    src = Vocabulary.build(g.tokens for g, _ in pairs)
    tgt = Vocabulary.build([t for t in toks if t not in drop] for _, toks in pairs)
    return Seq2Seq(cfg, src, tgt, seed)


def test_tokenize():
    assert tokenize("The wolf killed two sheep.") == ["the", "wolf", "killed", "two", "sheep", "."]
    assert tokenize("Bill's dog-house, isn't it?") == ["bill's", "dog-house", ",", "isn't", "it", "?"]
    assert detokenize(["a", "b", "."]) == "a b ."


def test_vocabulary():
    v = Vocabulary.build([["b", "a", "b"], ["c"]])
    assert v.itos[:4] == ["<pad>", "<s>", "</s>", "<unk>"]
    assert v.itos[4:] == ["b", "a", "c"]
    assert v.id("zzz") == UNK and "a" in v
    assert Vocabulary.from_json(v.to_json()).itos == v.itos
    assert Vocabulary.build([["a", "b", "a"]], min_count=2).itos[4:] == ["a"]


def _state(model, graph, tokens=None):
    ex = model.prepare(graph, tokens)
    return ex, model.start([ex])


def test_gate_fully_open_is_vocabulary_distribution():
    pairs = _pairs(10)
    model = _model(pairs)
    _, state = _state(model, pairs[0][0])
    dist, new, alpha = decode_step(state, model, p_gen_override=1.0)
    V = len(model.tgt_vocab)
    # rebuild the vocabulary softmax by hand from the same state
    context = (state.memory.data * alpha.data[:, :, None]).sum(axis=1)
    logits = np.concatenate([new.h.data, context], axis=-1) @ model.W_out.data + model.b_out.data
    p_vocab = np.exp(logits - logits.max()) / np.exp(logits - logits.max()).sum()
    assert dist.data.shape == (1, state.width)
    assert np.allclose(dist.data[:, :V], p_vocab, atol=1e-12)
    assert np.all(dist.data[:, V:] == 0.0)


def test_gate_closed_with_one_hot_attention_copies_name():
    graph = convert_text(TARO, "Taro Akagawa wrote a book.").graph
    model = _model([(graph, tokenize("Taro Akagawa wrote a book."))], drop=("taro",))
    ex, state = _state(model, graph)
    assert "taro" in ex.oov
    taro = graph.tokens.index("Taro")
    state.mask_bias[:] = -1e30
    state.mask_bias[0, taro] = 0.0
    dist, _, alpha = decode_step(state, model, p_gen_override=0.0)
    assert alpha.data[0, taro] == 1.0
    taro_id = len(model.tgt_vocab) + ex.oov.index("taro")
    assert dist.data[0, taro_id] == pytest.approx(1.0, abs=1e-12)


def test_mixture_is_a_distribution():
    pairs = _pairs(20, seed=3)
    model = _model(pairs[:10])
    batch = [model.prepare(g, t) for g, t in pairs]
    state = model.start(batch)
    rng = np.random.default_rng(0)
    for _ in range(6):
        dist, state, alpha = model.step(state)
        assert np.allclose(dist.data.sum(axis=1), 1.0, atol=1e-12)
        assert np.all(dist.data >= 0)
        assert np.allclose(alpha.data.sum(axis=1), 1.0, atol=1e-12)
        state.prev = rng.integers(0, state.width, size=len(batch))


def test_decoder_step_gradient():
    cfg = ModelConfig(EncoderConfig("ggnn", "deep", hidden=3), embedding=2, dropout=0.0)
    graph = convert_text(TARO, "x").graph
    model = _model([(graph, ["taro", "wrote", "a", "book"])], cfg, drop=("taro",))
    ex = model.prepare(graph, ["taro", "wrote", "book"])
    params = model.parameters()
    for p in params:
        if p.name in ("out.b", "copy.b") or p.name.endswith(".b"):
            p.data[:] = np.random.default_rng(1).normal(0, 0.3, size=p.shape)

    def fn():
        state = model.start([ex])
        state.prev = np.array([model.tgt_vocab.id("wrote")])
        dist, _, _ = model.step(state)
        return nn.log(nn.pick(dist, [len(model.tgt_vocab)]))

    assert grad_check(fn, params) < 1e-4


def test_first_batch_loss_near_uniform():
    pairs = _pairs(64)
    model = _model(pairs, ModelConfig(EncoderConfig("ggnn", "deep", hidden=32), embedding=32))
    batch = [model.prepare(g, t) for g, t in pairs[:32]]
    loss, n = model.batch_loss(batch)
    per_token = float(loss.data) / n
    assert abs(per_token - math.log(len(model.tgt_vocab))) < 0.1 * math.log(len(model.tgt_vocab))


def test_oov_name_is_generable():
    graph = convert_text(TARO, "x").graph
    ref = tokenize("Taro Akagawa wrote a book.")
    model = _model([(graph, ref)], drop=("taro", "akagawa"))
    ex = model.prepare(graph, ref)
    assert "taro" not in model.tgt_vocab and {"taro", "akagawa"} <= set(ex.oov)
    V = len(model.tgt_vocab)
    assert ex.tgt_ids[:2].tolist() == [V + ex.oov.index("taro"), V + ex.oov.index("akagawa")]


def _toy(n=100):
    pairs = _pairs(n + 20, seed=11)
    return pairs[:n], pairs[n:]


def test_dev_perplexity_improves_first_epochs():
    tr, dev = _toy()
    _, history = train(tr, dev, SMALL, TrainConfig(epochs=3, batch_size=16), seed=2)
    ppl = [h["dev_ppl"] for h in history]
    assert ppl[0] > ppl[1] > ppl[2]


def test_same_seed_same_curve():
    tr, dev = _toy(40)
    hyper = TrainConfig(epochs=2, batch_size=8)
    cfg = ModelConfig(SMALL.encoder, 12, 0.5, 20)
    m1, h1 = train(tr, dev, cfg, hyper, seed=4)
    m2, h2 = train(tr, dev, cfg, hyper, seed=4)
    assert h1 == h2
    assert all(np.array_equal(a, b) for a, b in zip(m1.state_dict().values(), m2.state_dict().values()))
    graphs = [g for g, _ in dev]
    assert m1.generate(graphs) == m2.generate(graphs)


def test_untrained_generation_deterministic_and_max_len():
    pairs = _pairs(10)
    a = _model(pairs, seed=5)
    b = _model(pairs, seed=5)
    g = pairs[0][0]
    assert generate(g, a) == generate(g, b)
    assert len(a.generate([g], max_len=1)[0]) <= 1
    assert all(len(h) <= 20 for h in a.generate([p[0] for p in pairs]))


def test_max_len_one_emits_one_token():
    pairs = _pairs(10)
    model = _model(pairs)
    model.b_out.data[EOS] = -50.0
    model.b_gen.data[:] = 50.0
    out = model.generate([p[0] for p in pairs], max_len=1)
    assert all(len(h) == 1 for h in out)


def test_overfit_single_pair():
    graph = convert_text(TARO, "x").graph
    ref = tokenize("Taro Akagawa wrote a book.")
    model, _ = train([(graph, ref)], [], SMALL, TrainConfig(epochs=60, batch_size=1, patience=60), seed=0)
    assert model.generate([graph]) == [ref]


def test_training_stops_on_patience_and_restores_best():
    tr, dev = _toy(20)
    hyper = TrainConfig(epochs=30, batch_size=4, learning_rate=40.0, patience=2)
    model, history = train(tr, dev, SMALL, hyper, seed=0)
    best = min(h["dev_ppl"] for h in history)
    assert len(history) < 30
    ex = [model.prepare(g, t) for g, t in dev]
    assert perplexity(model, ex) == pytest.approx(best, rel=1e-12)


def test_non_finite_loss_aborts(monkeypatch):
    tr, dev = _toy(8)

    def bad(self, batch, training=False, rng=None):
        return nn.Tensor(np.array(np.nan)), 1

    monkeypatch.setattr(Seq2Seq, "batch_loss", bad)
    with pytest.raises(NonFiniteLoss):
        train(tr, dev, SMALL, TrainConfig(epochs=1), seed=0)


def test_checkpoints_per_epoch_and_round_trip(tmp_path):
    tr, dev = _toy(12)
    hyper = TrainConfig(epochs=2, batch_size=4, checkpoint_dir=str(tmp_path / "ck"))
    model, _ = train(tr, dev, SMALL, hyper, seed=0)
    assert sorted(p.name for p in (tmp_path / "ck").iterdir()) == ["epoch_001.json", "epoch_002.json"]
    model.save(tmp_path / "m.json")
    again = Seq2Seq.load(tmp_path / "m.json")
    assert again.cfg == model.cfg
    for a, b in zip(model.parameters(), again.parameters()):
        assert a.name == b.name and a.data.tobytes() == b.data.tobytes()
    graphs = [g for g, _ in dev]
    assert again.generate(graphs) == model.generate(graphs)


def test_multi_seed_report():
    tr, dev = _toy(16)
    test = dev[:6]
    hyper = TrainConfig(epochs=1, batch_size=8)
    same = run_multi_seed(tr, dev, test, SMALL, hyper, seeds=(3, 3, 3))
    assert all(v == 0.0 for v in same["variance"].values())
    diff = run_multi_seed(tr, dev, test, SMALL, hyper, seeds=(1, 2, 3))
    for k, m in diff["mean"].items():
        vals = [r[k] for r in diff["per_seed"]]
        assert min(vals) - 1e-9 <= m <= max(vals) + 1e-9
    assert json.loads(json.dumps(diff)) == diff


def test_reserved_ids():
    assert (PAD, BOS, EOS, UNK) == (0, 1, 2, 3)
