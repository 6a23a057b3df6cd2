import math

import numpy as np
import pytest
from scipy.optimize import brentq
from hypothesis import given, settings, strategies as st

from nmst.core import Vocabulary
from nmst.heads import HeadKind, half_life
from nmst.net import autodiff as ad
from nmst.net.backbone import Architecture, forward_step, init_params, initial_state, param_shapes
from nmst.net.lm import (HeadSpec, RecurrentLM, as_tensors, batch_nll, corpus_nll, make_batch,
                         sequence_nll, teacher_forced_log_probs)
from nmst.net.optim import AdamWState, adamw_step, clip_by_global_norm, global_norm
from nmst.net.train import TrainConfig, TrainingDiverged, train


def sigmoid(x):
    return 1.0 / (1.0 + math.exp(-x))


def python_cell(cell, x, state, w_x, w_h, b):
    """Independent loop-based reference for one layer step."""
    H = len(b) // (4 if cell == "lstm" else 1)
    pre = [sum(x[i] * w_x[i][j] for i in range(len(x))) + b[j] for j in range(len(b))]
    h_prev = state if cell == "rnn" else state[0]
    pre = [pre[j] + sum(h_prev[i] * w_h[i][j] for i in range(H)) for j in range(len(b))]
    if cell == "rnn":
        return [math.tanh(a) for a in pre], None
    c_prev = state[1]
    c = [sigmoid(pre[H + j]) * c_prev[j] + sigmoid(pre[j]) * math.tanh(pre[2 * H + j]) for j in range(H)]
    h = [sigmoid(pre[3 * H + j]) * math.tanh(c[j]) for j in range(H)]
    return h, c


def make_model(cell="rnn", kind="va", V=5, H=3, layers=1, tie=True, seed=0, scale=None):
    eps = None if kind == "va" else 0.1
    arch = Architecture(cell, V, H, layers, tie)
    return RecurrentLM.init(Vocabulary.of_size(V), arch, HeadSpec(kind, eps), np.random.default_rng(seed), scale)


class TestBackbone:
    def test_param_shapes(self):
        shapes = param_shapes(Architecture("lstm", 7, 4, 2, tie_weights=False))
        assert shapes == {"embedding": (7, 4), "lstm0.w_x": (4, 16), "lstm0.w_h": (4, 16), "lstm0.b": (16,),
                          "lstm1.w_x": (4, 16), "lstm1.w_h": (4, 16), "lstm1.b": (16,), "output": (7, 4)}

    def test_lstm_forget_bias(self):
        p = init_params(Architecture("lstm", 3, 2), np.random.default_rng(0))
        np.testing.assert_array_equal(p["lstm0.b"], [0, 0, 1, 1, 0, 0, 0, 0])

    @pytest.mark.parametrize("bad", [dict(cell="gru", vocab_size=3), dict(cell="rnn", vocab_size=1),
                                     dict(cell="rnn", vocab_size=3, hidden_size=0)])
    def test_bad_architecture(self, bad):
        with pytest.raises(ValueError):
            Architecture(**bad)

    def test_zero_weights_give_tanh_bias(self):
        arch = Architecture("rnn", 3, 2)
        p = {k: np.zeros(s) for k, s in param_shapes(arch).items()}
        p["rnn0.b"] = np.array([0.3, -1.2])
        h, _ = forward_step(arch, p, 1, initial_state(arch))
        np.testing.assert_allclose(h, np.tanh([0.3, -1.2]))

    def test_one_unit_fixed_point(self):
        """h = tanh(w h + b) with w=0.5, b=0.1 converges to its fixed point."""
        arch = Architecture("rnn", 2, 1)
        p = {"embedding": np.zeros((2, 1)), "rnn0.w_x": np.zeros((1, 1)),
             "rnn0.w_h": np.array([[0.5]]), "rnn0.b": np.array([0.1])}
        state = initial_state(arch)
        for _ in range(200):
            h, state = forward_step(arch, p, 0, state)
        assert h[0] == pytest.approx(math.tanh(0.5 * h[0] + 0.1), abs=1e-14)
        root = brentq(lambda v: math.tanh(0.5 * v + 0.1) - v, 0.0, 1.0, xtol=1e-15)
        assert h[0] == pytest.approx(root, abs=1e-12)

    @pytest.mark.parametrize("cell", ["rnn", "lstm"])
    def test_matches_python_reference(self, cell, rng):
        arch = Architecture(cell, 4, 3, num_layers=2)
        p = init_params(arch, rng, scale=0.9)
        state = initial_state(arch)
        ref = [([0.0] * 3 if cell == "rnn" else ([0.0] * 3, [0.0] * 3)) for _ in range(2)]
        for tok in [1, 3, 0, 2, 2]:
            h, state = forward_step(arch, p, tok, state)
            x = list(p["embedding"][tok])
            for layer in range(2):
                pre = f"{cell}{layer}"
                hh, cc = python_cell(cell, x, ref[layer], p[pre + ".w_x"].tolist(), p[pre + ".w_h"].tolist(),
                                     p[pre + ".b"].tolist())
                ref[layer] = hh if cell == "rnn" else (hh, cc)
                x = hh
            np.testing.assert_allclose(h, x, rtol=1e-12, atol=1e-14)

    def test_taped_forward_matches_step(self, rng):
        model = make_model("lstm", "nmst", V=6, H=4, layers=2, seed=3)
        examples = [((1, 2), (3, 4, 0)), ((5,), (0,))]
        for (ctx, y), lp in zip(examples, teacher_forced_log_probs(model, examples)):
            state = model.start(ctx)
            for j, tok in enumerate(y):
                dist, state = model.next_distribution(state)
                np.testing.assert_allclose(lp[j], dist.log_probs, rtol=1e-10, atol=1e-12)
                state = model.advance(state, tok)

    def test_token_out_of_range(self):
        arch = Architecture("rnn", 3, 2)
        with pytest.raises(ValueError):
            forward_step(arch, init_params(arch, np.random.default_rng(0)), 3, initial_state(arch))

    def test_wrong_hidden_size(self):
        arch = Architecture("lstm", 3, 2)
        state = ((np.zeros(3), np.zeros(3)),)
        with pytest.raises(ValueError):
            forward_step(arch, init_params(arch, np.random.default_rng(0)), 1, state)


class TestLM:
    def test_head_spec_validation(self):
        with pytest.raises(ValueError):
            HeadSpec("va", 0.1)
        with pytest.raises(ValueError):
            HeadSpec("nmst", None)
        with pytest.raises(ValueError):
            HeadSpec("st", 1.0)
        assert HeadSpec("st", 0.5).kind is HeadKind.ST

    def test_vocab_mismatch(self):
        with pytest.raises(ValueError):
            RecurrentLM(Vocabulary.of_size(3), Architecture("rnn", 4, 2), HeadSpec("va"),
                        init_params(Architecture("rnn", 4, 2), np.random.default_rng(0)))

    def test_make_batch_layout(self):
        b = make_batch([((1, 2), (3, 0)), ((), (0,))], eos_id=0)
        np.testing.assert_array_equal(b.inputs, [[0, 1, 2, 3], [0, 0, 0, 0]])
        np.testing.assert_array_equal(b.targets, [[1, 2, 3, 0], [0, 0, 0, 0]])
        np.testing.assert_array_equal(b.mask, [[False, False, True, True], [True, False, False, False]])
        np.testing.assert_array_equal(b.steps[0, 2:], [1, 2])
        assert b.num_tokens == 3

    def test_uniform_model_nll(self):
        """Zero weights under VA give a uniform next-token law: NLL = n log V."""
        model = make_model(V=5)
        model = RecurrentLM(model.vocab, model.arch, model.head, {k: np.zeros_like(v) for k, v in model.params.items()})
        nll, n = sequence_nll(model, (1,), (2, 3, 0))
        assert n == 3 and nll == pytest.approx(3 * math.log(5))

    def test_sequence_nll_requires_eos(self):
        with pytest.raises(ValueError):
            sequence_nll(make_model(), (), (1, 2))

    @pytest.mark.parametrize("kind", ["va", "st", "nmst"])
    def test_batch_nll_equals_stepwise(self, kind):
        model = make_model("rnn", kind, V=5, H=3, seed=7, scale=1.5)
        examples = [((1,), (2, 3, 0)), ((), (4, 4, 4, 4, 0)), ((2, 2, 2), (0,))]
        taped = batch_nll(model, as_tensors(model.params), make_batch(examples, 0)).item()
        stepwise = sum(sequence_nll(model, c, y)[0] for c, y in examples)
        assert taped == pytest.approx(stepwise, rel=1e-12)
        assert corpus_nll(model, examples) == (pytest.approx(stepwise, rel=1e-12), 9)

    def test_context_does_not_advance_head_step(self):
        """The eos lower bound at the first generated token is f_lb(1) = eps
        however long the context is."""
        model = make_model("rnn", "nmst", seed=1)
        for ctx in [(), (1, 2, 3, 4, 1, 2)]:
            dist, _ = model.next_distribution(model.start(ctx))
            assert dist.probs[0] >= 0.1 - 1e-15


class TestOptim:
    def test_first_step_is_signed_lr(self):
        """With bias correction the first Adam step is lr * g/|g| (plus decay)."""
        p = {"w": np.array([1.0, -2.0, 3.0])}
        g = {"w": np.array([0.5, -4.0, 0.0])}
        new, state = adamw_step(p, g, AdamWState(), lr=0.1, weight_decay=0.0)
        np.testing.assert_allclose(new["w"], [0.9, -1.9, 3.0], atol=1e-7)
        assert state.step == 1

    def test_decoupled_weight_decay(self):
        p = {"w": np.array([2.0])}
        new, _ = adamw_step(p, {"w": np.zeros(1)}, AdamWState(), lr=0.1, weight_decay=0.5)
        assert new["w"][0] == pytest.approx(2.0 * (1 - 0.05))

    def test_inputs_untouched(self):
        p = {"w": np.ones(2)}
        adamw_step(p, {"w": np.ones(2)}, AdamWState(), lr=0.1)
        np.testing.assert_array_equal(p["w"], np.ones(2))

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            adamw_step({"w": np.ones(2)}, {"w": np.ones(3)}, AdamWState(), lr=0.1)

    def test_minimizes_quadratic(self):
        p, state = {"w": np.array([3.0, -2.0])}, AdamWState()
        for _ in range(2000):
            p, state = adamw_step(p, {"w": 2 * p["w"]}, state, lr=0.01, weight_decay=0.0)
        np.testing.assert_allclose(p["w"], 0.0, atol=1e-2)

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(-100, 100), min_size=1, max_size=6), st.floats(0.01, 10))
    def test_clip_bounds_norm(self, values, max_norm):
        g = {"a": np.array(values)}
        clipped = clip_by_global_norm(g, max_norm)
        assert global_norm(clipped) <= max_norm * (1 + 1e-12) or global_norm(g) <= max_norm


MEMORIZE = [((1,), (2, 3, 0)), ((2,), (3, 1, 1, 0)), ((3,), (0,))]


class TestTrain:
    def config(self, **kw):
        base = dict(learning_rate=0.05, batch_size=8, max_epochs=40, patience=40, lr_decay=1.0,
                    weight_decay=0.0, context_length=1, seed=0)
        return TrainConfig(**{**base, **kw})

    @pytest.mark.parametrize("kind", ["va", "st", "nmst"])
    def test_memorizes_tiny_set(self, kind):
        eps = None if kind == "va" else 1e-3
        res = train(MEMORIZE, MEMORIZE, Vocabulary.of_size(4), Architecture("rnn", 4, 8), HeadSpec(kind, eps),
                    self.config(max_epochs=150, patience=150))
        losses = [m.train_nll for m in res.history[1:]]
        assert losses[-1] < 0.25 * losses[0]
        assert res.best_valid_ppl < 1.3

    def test_deterministic(self):
        args = (MEMORIZE, MEMORIZE, Vocabulary.of_size(4), Architecture("lstm", 4, 4), HeadSpec("nmst", 0.01))
        a, b = train(*args, self.config(max_epochs=5)), train(*args, self.config(max_epochs=5))
        assert [m.valid_ppl for m in a.history] == [m.valid_ppl for m in b.history]
        for k in a.model.params:
            np.testing.assert_array_equal(a.model.params[k], b.model.params[k])

    def test_returns_best_checkpoint(self):
        res = train(MEMORIZE, MEMORIZE[:2], Vocabulary.of_size(4), Architecture("rnn", 4, 4), HeadSpec("va"),
                    self.config(learning_rate=0.5, max_epochs=30))
        best = res.history[res.best_epoch]
        assert best.valid_ppl == res.best_valid_ppl
        nll, n = corpus_nll(res.model, MEMORIZE[:2])
        assert math.exp(nll / n) == pytest.approx(best.valid_ppl, rel=1e-12)

    def test_epoch_zero_is_untrained(self):
        res = train(MEMORIZE, MEMORIZE, Vocabulary.of_size(4), Architecture("rnn", 4, 4), HeadSpec("va"),
                    self.config(max_epochs=0))
        assert len(res.history) == 1 and math.isnan(res.history[0].train_nll)

    def test_lr_halving_and_patience(self):
        res = train(MEMORIZE, MEMORIZE, Vocabulary.of_size(4), Architecture("rnn", 4, 4), HeadSpec("va"),
                    self.config(learning_rate=5.0, max_epochs=100, patience=3, lr_decay=0.5))
        for prev, cur in zip(res.history, res.history[1:]):
            expect = prev.learning_rate if (prev.improved or prev.epoch == 0) else prev.learning_rate * 0.5
            assert cur.learning_rate == pytest.approx(expect)
        tail = res.history[-3:]
        assert len(res.history) < 101 and not any(m.improved for m in tail)

    def test_frozen_parameters_unchanged(self):
        cfg = self.config(max_epochs=3)
        args = (MEMORIZE, MEMORIZE, Vocabulary.of_size(4), Architecture("rnn", 4, 4, tie_weights=False),
                HeadSpec("nmst", 0.1))
        init = RecurrentLM.init(*args[2:], np.random.default_rng(cfg.seed))
        res = train(*args, cfg, frozen=("output",))
        np.testing.assert_array_equal(res.model.params["output"], init.params["output"])

    def test_divergence_raises(self):
        bad = TrainConfig(learning_rate=1e300, clip_norm=0.0, context_length=1, max_epochs=3, weight_decay=0.0)
        with pytest.raises(TrainingDiverged):
            train(MEMORIZE, MEMORIZE, Vocabulary.of_size(4), Architecture("rnn", 4, 4), HeadSpec("va"), bad)

    @pytest.mark.parametrize("bad", [dict(learning_rate=0), dict(patience=0), dict(dropout_prob=1.0),
                                     dict(context_length=-1)])
    def test_bad_config(self, bad):
        with pytest.raises(ValueError):
            TrainConfig(**bad)

    def test_empty_sets(self):
        with pytest.raises(ValueError):
            train([], MEMORIZE, Vocabulary.of_size(4), Architecture("rnn", 4, 4), HeadSpec("va"), self.config())
