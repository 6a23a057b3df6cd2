import json
import math
from collections import Counter

import numpy as np
import pytest

from nmst.core import TableModel, Vocabulary
from nmst.decoding import decode_greedy
from nmst.heads import half_life
from nmst.net.lm import HeadSpec
from nmst.verify import (AXIOM_SPECS, SUITES, SuiteResult, TwoSequenceConfig, brute_force_beam,
                         build_vanilla_nontermination_witness, check_heads, check_incomplete_probable,
                         check_nmst_consistency, check_oracle_equivalence, check_st_consistency,
                         check_vanilla_witness, chi_square_against, constant_hidden_model,
                         random_distribution, run_suite, two_sequence_data, two_sequence_experiment)


class TestSuiteResult:
    def test_aggregation_and_json(self):
        res = SuiteResult("x")
        res.add("a", True, seed=1, value=np.float64(0.5))
        assert res.passed
        res.add("b", False, arr=np.arange(2))
        assert not res.passed and [c.name for c in res.failures()] == ["b"]
        d = json.loads(res.to_json())
        assert d["checks"][0]["details"]["value"] == 0.5 and d["checks"][1]["details"]["arr"] == [0, 1]


class TestInputs:
    def test_random_distribution_valid(self, rng):
        for _ in range(500):
            p = random_distribution(rng)
            assert np.all(p >= 0) and p.sum() == pytest.approx(1.0, abs=1e-12)

    def test_constant_hidden_model_is_constant(self):
        m = constant_hidden_model(HeadSpec("va"), eos_logit=0.3, vocab_size=4, lead=2.0)
        d0, _ = m.step((), ())
        d1, _ = m.step((2, 3), (1, 1, 2))
        np.testing.assert_allclose(d0.probs, d1.probs)
        logits = np.array([0.3, 2.0, 0.0, 0.0])
        np.testing.assert_allclose(d0.probs, np.exp(logits) / np.exp(logits).sum())


class TestSmallSuites:
    def test_heads(self):
        res = check_heads(trials=300, seed=1)
        assert res.passed, res.failures()

    @pytest.mark.parametrize("spec", AXIOM_SPECS)
    def test_axioms(self, spec):
        res = check_incomplete_probable(spec, trials=500, seed=2)
        assert res.passed, res.failures()

    def test_oracle_equivalence(self):
        res = check_oracle_equivalence(models=5, samples=5000, seed=3)
        assert res.passed, res.failures()

    def test_nmst_consistency(self):
        res = check_nmst_consistency(eps_list=(0.1, 0.01), trials=5, seed=4)
        assert res.passed, res.failures()
        worst = res.checks[1].details["max_length"]
        assert worst["greedy"] >= half_life(0.01) - 1

    def test_st_consistency(self):
        res = check_st_consistency(eps_list=(0.5, 0.1), trials=5, seed=5, cap=500)
        assert res.passed, res.failures()

    def test_unknown_suite(self):
        with pytest.raises(ValueError):
            run_suite("nope")
        assert "all" in SUITES


class TestWitness:
    def test_never_terminates_greedily(self):
        w = build_vanilla_nontermination_witness()
        c = w.verify(2000)
        assert c.passed and c.details["max_eos_minus_top"] < 0
        assert not decode_greedy(w.model, (), 2000).terminated

    def test_suite(self):
        res = check_vanilla_witness(cap=1000, side_cap=200)
        assert res.passed, res.failures()

    def test_detects_a_terminating_model(self):
        w = build_vanilla_nontermination_witness()
        w.model = constant_hidden_model(HeadSpec("va"), eos_logit=3.0, vocab_size=3, lead=1.0)
        c = w.verify(100)
        assert not c.passed and c.details["terminated_at"] == 1


class TestChiSquare:
    def test_exact_counts_pass(self):
        probs = {(0,): 0.5, (1, 0): 0.3, (2, 0): 0.2}
        stat, p, dof = chi_square_against(Counter({(0,): 500, (1, 0): 300, (2, 0): 200}), probs, 1000)
        assert stat == pytest.approx(0.0) and p == pytest.approx(1.0) and dof == 2

    def test_unexpected_sequence_fails(self):
        assert chi_square_against(Counter({(1, 0): 1}), {(0,): 1.0}, 1)[1] == 0.0

    def test_biased_counts_fail(self):
        probs = {(0,): 0.5, (1, 0): 0.5}
        assert chi_square_against(Counter({(0,): 600, (1, 0): 400}), probs, 1000)[1] < 1e-8

    def test_small_cells_pooled(self):
        probs = {(0,): 0.98, (1, 0): 0.01, (2, 0): 0.01}
        _, _, dof = chi_square_against(Counter({(0,): 98, (1, 0): 1, (2, 0): 1}), probs, 100)
        assert dof == 1


class TestBruteForceBeam:
    def test_trap(self):
        table = {(): [0.0, 0.6, 0.4], (1,): [0.35, 0.33, 0.32], (2,): [0.9, 0.05, 0.05]}
        m = TableModel(Vocabulary.of_size(3), table, default=[1.0, 0.0, 0.0])
        assert brute_force_beam(m, (), 1, 5) == ((1, 0), [(1, 0)])
        assert brute_force_beam(m, (), 2, 5) == ((2, 0), [(2, 0), (1, 0)])


class TestTwoSequence:
    def test_data(self):
        vocab, data = two_sequence_data(TwoSequenceConfig(t0=3, length=5))
        assert len(vocab) == 5
        assert data == [((), (1, 2, 0)), ((), (1, 2, 3, 4, 0))]

    def test_bad_config(self):
        with pytest.raises(ValueError):
            TwoSequenceConfig(t0=5, length=5)

    def test_va_learns_the_optimum(self):
        res = two_sequence_experiment("va", TwoSequenceConfig(max_epochs=600))
        art = res.artifacts["va"]
        assert res.passed, res.failures()
        assert art["nll"] == pytest.approx(2 * math.log(2), abs=0.05)
