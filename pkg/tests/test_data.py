import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nmst.core import EOS, UNK, build_vocabulary
from nmst.data import make_examples, prepare_corpus, read_corpus, split_lines, synthetic_corpus


def test_read_corpus_skips_blank_lines(tmp_path):
    path = tmp_path / "c.txt"
    path.write_text("ab\n\n  \nc d\n", encoding="utf-8")
    assert read_corpus(path, "char") == [["a", "b"], ["c", " ", "d"]]
    assert read_corpus(path, "word") == [["ab"], ["c", "d"]]


class TestSplit:
    def test_sizes(self):
        parts = split_lines(list(range(100)), (0.8, 0.1, 0.1), seed=0)
        assert [len(p) for p in parts] == [80, 10, 10]
        assert sorted(sum(parts, [])) == list(range(100))

    def test_seeded(self):
        assert split_lines(list(range(20)), seed=3) == split_lines(list(range(20)), seed=3)
        assert split_lines(list(range(20)), seed=3) != split_lines(list(range(20)), seed=4)

    @pytest.mark.parametrize("fractions", [(0.5, 0.6), (1.2, -0.2)])
    def test_bad_fractions(self, fractions):
        with pytest.raises(ValueError):
            split_lines([1, 2], fractions)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 200), st.floats(0.0, 1.0))
    def test_partition(self, n, a):
        parts = split_lines(list(range(n)), (a, 1.0 - a))
        assert sorted(parts[0] + parts[1]) == list(range(n))


class TestExamples:
    def test_context_split_and_drop(self):
        vocab = build_vocabulary([["a", "b", "c"]])
        ex = make_examples([["a", "b", "c"], ["a"], ["b", "c"]], vocab, 1)
        a, b, c = vocab.id("a"), vocab.id("b"), vocab.id("c")
        assert ex == [((a,), (b, c, 0)), ((b,), (c, 0))]
        assert make_examples([["a"]], vocab, 1) == []

    def test_negative_context(self):
        with pytest.raises(ValueError):
            make_examples([], build_vocabulary([["a"]]), -1)

    def test_prepare_adds_unk(self):
        lines = [["a", "b", "x"]] * 8 + [["a", "b", "y"]] * 2
        vocab, parts = prepare_corpus(lines, 1, (0.8, 0.1, 0.1), seed=0)
        assert vocab.tokens[:2] == (EOS, UNK)
        assert all(t[-1] == 0 for part in parts for _, t in part)


class TestSynthetic:
    def test_shape(self):
        lines = synthetic_corpus(200, seed=1)
        assert len(lines) == 200 and all(line.endswith(".") for line in lines)
        vocab = build_vocabulary([line.split() for line in lines])
        assert 35 <= len(vocab) <= 50

    def test_deterministic(self):
        assert synthetic_corpus(20, seed=5) == synthetic_corpus(20, seed=5)

    def test_clause_count_bounded(self):
        for line in synthetic_corpus(100, seed=2, max_clauses=2):
            assert 1 <= line.count(".") <= 2
