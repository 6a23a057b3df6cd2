import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nmst.core import (EOS, UNK, ConditionalDistribution, Context, Sequence, TableModel, Vocabulary,
                       VocabularyError, build_vocabulary, decode, detokenize, encode,
                       random_table_model, tokenize, validate_distribution)


class TestVocabulary:
    def test_all_tokens_kept(self):
        v = build_vocabulary([["a", "b"], ["a"]])
        assert v.tokens == (EOS, "a", "b")
        assert len(v) == 3 and v.unk_id is None

    def test_frequency_cutoff_maps_to_unk(self):
        v = build_vocabulary([["a", "b"], ["a"]], min_freq=2, add_unk=True)
        assert v.tokens == (EOS, UNK, "a")
        assert encode(v, ["b"]).token_ids == (v.unk_id,)

    def test_thousand_distinct_tokens(self):
        corpus = [[f"w{i}"] for i in range(1000)]
        assert len(build_vocabulary(corpus)) == 1001

    def test_canonical_order_frequency_then_lexical(self):
        v = build_vocabulary([["b", "c", "a"], ["c"], ["b"]])
        assert v.tokens == (EOS, "b", "c", "a")

    def test_order_independent_of_line_order(self):
        lines = [["x", "y"], ["y", "z", "z"], ["q"]]
        assert build_vocabulary(lines) == build_vocabulary(lines[::-1])

    def test_empty_corpus(self):
        with pytest.raises(VocabularyError):
            build_vocabulary([])

    @pytest.mark.parametrize("tokens,kw", [
        (("a",), {}),
        (("a", "a"), {}),
        (("a", "b"), {"eos_id": 2}),
        (("a", "b"), {"unk_id": 0}),
    ])
    def test_invalid(self, tokens, kw):
        with pytest.raises(VocabularyError):
            Vocabulary(tokens, **kw)

    def test_dict_round_trip(self):
        v = build_vocabulary([["a", "b"]], add_unk=True)
        assert Vocabulary.from_dict(v.to_dict()) == v


class TestEncode:
    def test_append_eos(self):
        v = build_vocabulary([["a", "b"]])
        assert encode(v, ["a", "b"], append_eos=True).token_ids == (v.id("a"), v.id("b"), v.eos_id)

    def test_empty_body(self):
        v = build_vocabulary([["a"]])
        s = encode(v, [], append_eos=True)
        assert s.token_ids == (v.eos_id,) and s.terminated and len(s) == 1

    def test_unknown_without_unk(self):
        with pytest.raises(VocabularyError):
            encode(build_vocabulary([["a"]]), ["zzz"])

    @given(st.lists(st.sampled_from(["a", "b", "c", "d"]), max_size=30))
    def test_decode_inverts_encode(self, toks):
        v = build_vocabulary([["a", "b", "c", "d"]])
        assert decode(v, encode(v, toks, append_eos=True).token_ids) == toks

    @pytest.mark.parametrize("mode,line,tokens", [
        ("char", "ab c", ["a", "b", " ", "c"]),
        ("word", " the  cat ", ["the", "cat"]),
        ("char", "héllo", ["h", "é", "l", "l", "o"]),
    ])
    def test_tokenize(self, mode, line, tokens):
        assert tokenize(line, mode) == tokens

    def test_word_detokenize(self):
        assert detokenize(tokenize("a b c", "word"), "word") == "a b c"


class TestSequence:
    def test_eos_only_at_end(self):
        with pytest.raises(ValueError):
            Sequence((1, 0, 2), eos_id=0)

    def test_unterminated(self):
        s = Sequence((1, 2), eos_id=0)
        assert not s.terminated and len(s) == 2

    def test_context_rejects_eos(self):
        with pytest.raises(ValueError):
            Context((1, 0), eos_id=0)


class TestValidateDistribution:
    @pytest.mark.parametrize("probs,ok", [
        ([0.5, 0.3, 0.2], True),
        ([1.0, 0.0, 0.0], True),
        ([0.5, 0.6], False),
    ])
    def test_examples(self, probs, ok):
        chk = validate_distribution(ConditionalDistribution.from_probs(probs))
        assert chk.ok is ok

    def test_reports_normalization_error(self):
        chk = validate_distribution(ConditionalDistribution.from_probs([0.5, 0.6]))
        assert chk.normalization_error == pytest.approx(0.1)

    def test_log_mismatch_detected(self):
        d = ConditionalDistribution(np.array([0.5, 0.5]), np.log([0.5, 0.4]))
        assert not validate_distribution(d).ok

    def test_arrays_read_only(self):
        d = ConditionalDistribution.from_probs([0.25, 0.75])
        with pytest.raises(ValueError):
            d.probs[0] = 1.0


class TestTableModel:
    def test_uniform_sequence_log_prob(self):
        m = TableModel.uniform(4)
        assert m.sequence_log_prob((), (1, 2, 0)) == pytest.approx(-3 * np.log(4))

    def test_missing_prefix_without_default(self, vocab3):
        m = TableModel(vocab3, {(): [0.2, 0.3, 0.5]})
        with pytest.raises(KeyError):
            m.step((), (1,))

    def test_step_with_cached_state(self, rng):
        m = random_table_model(3, 3, rng)
        d_full, _ = m.step((), (1, 2))
        _, s = m.step((), (1,))
        d_cached, _ = m.step((), (1, 2), state=s)
        np.testing.assert_array_equal(d_full.log_probs, d_cached.log_probs)

    def test_deterministic(self, rng):
        m = random_table_model(4, 3, rng)
        a, _ = m.step((), (2, 1))
        b, _ = m.step((), (2, 1))
        assert a.log_probs.tobytes() == b.log_probs.tobytes()

    @settings(max_examples=30)
    @given(st.integers(2, 5), st.integers(1, 4), st.integers(0, 2**32 - 1))
    def test_random_rows_valid_and_forced_eos(self, V, depth, seed):
        m = random_table_model(V, depth, np.random.default_rng(seed))
        d, _ = m.step((), (1,) * depth)
        assert d.probs[0] == 1.0
        for prefix in [(), (1,) * (depth - 1)]:
            assert validate_distribution(m.step((), prefix)[0]).ok
