"""Reward component oracles and invariants."""

import math

import numpy as np
import pytest

from tailsynth.domain import Query, QueryType, Rewrite, RewriteList
from tailsynth.language_model import NGramLM
from tailsynth.rewards import (
    RewardWeights,
    char_ngrams,
    diversity_reward,
    pda_reward,
    qsr_reward,
    response_reward,
    total_reward,
)


def brute_force_diversity(texts, n=2):
    """Independent all-pairs recomputation used as the oracle."""
    k = len(texts)
    grams = [set(t[i : i + n] for i in range(len(t) - n + 1)) for t in texts]
    total = 0.0
    pairs = 0
    for i in range(k):
        for j in range(i + 1, k):
            pairs += 1
            union = grams[i] | grams[j]
            if union:
                total += 1.0 - len(grams[i] & grams[j]) / len(union)
    return total / pairs


def uniform_lm_over_4():
    """Zero-count model whose every conditional is exactly 1/4."""
    return NGramLM(order=1, delta=1.0, vocab=("</s>", "<s>", "<unk>", "a"))


class TestQsrReward:
    def test_symmetric_logits(self):
        assert qsr_reward(0.0, 0.0) == 0.5

    def test_hand_softmax(self):
        assert abs(qsr_reward(math.log(3), 0.0) - 0.75) < 1e-12

    def test_shift_invariance(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            a, b, c = rng.normal(0, 10, size=3)
            assert abs(qsr_reward(a + c, b + c) - qsr_reward(a, b)) < 1e-12

    def test_complement_identity(self):
        rng = np.random.default_rng(4)
        for _ in range(200):
            a, b = rng.normal(0, 20, size=2)
            assert abs(qsr_reward(a, b) + qsr_reward(b, a) - 1.0) < 1e-12

    def test_extreme_logits_stable(self):
        assert 0.0 < qsr_reward(1000.0, -1000.0) <= 1.0

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError):
            qsr_reward(float("nan"), 0.0)
        with pytest.raises(ValueError):
            qsr_reward(0.0, float("inf"))


class TestPdaReward:
    def test_certainty_case(self):
        class SureLM:
            def perplexity(self, seq):
                return 1.0  # every conditional probability is 1

        assert pda_reward(["a", "b"], SureLM()) == 1.0

    def test_uniform_over_4(self):
        lm = uniform_lm_over_4()
        assert abs(pda_reward(["a", "a", "a"], lm) - 0.25) < 1e-12

    def test_hand_arithmetic_two_events(self):
        # counts chosen so p(a) = 1/2 and p(EOS) = 1/8 exactly; one token plus
        # the terminal event gives mean log-prob -1.3863 and perplexity 4
        lm = uniform_lm_over_4()
        lm.counts[()] = {"a": 3, "<unk>": 1}
        lm.context_totals[()] = 4
        assert abs(math.exp(lm.token_logprob([], "a")) - 0.5) < 1e-12
        assert abs(math.exp(lm.token_logprob(["a"], "</s>")) - 0.125) < 1e-12
        assert abs(lm.perplexity(["a"]) - 4.0) < 1e-9
        assert abs(pda_reward(["a"], lm) - 0.25) < 1e-9

    def test_reciprocal_of_perplexity(self):
        rng = np.random.default_rng(5)
        corpus = [[c for c in "".join(rng.choice(list("abcd"), size=8))] for _ in range(30)]
        lm = NGramLM.fit(corpus, order=2, delta=0.3)
        for _ in range(50):
            seq = list(rng.choice(list("abcdx"), size=int(rng.integers(1, 10))))
            assert abs(pda_reward(seq, lm) * lm.perplexity(seq) - 1.0) < 1e-12

    def test_monotone_in_any_token_probability(self):
        class ScriptedLM:
            def __init__(self, probs):
                self.probs = probs

            def perplexity(self, seq):
                mean = sum(math.log(p) for p in self.probs) / len(self.probs)
                return math.exp(-mean)

        base = [0.2, 0.5, 0.1]
        r0 = pda_reward(["x"], ScriptedLM(base))
        for i in range(3):
            bumped = list(base)
            bumped[i] += 0.05
            assert pda_reward(["x"], ScriptedLM(bumped)) > r0

    def test_empty_sequence_rejected(self):
        with pytest.raises(ValueError):
            pda_reward([], uniform_lm_over_4())


class TestCharNgrams:
    def test_enumeration(self):
        assert char_ngrams("abc", 2) == frozenset({"ab", "bc"})

    def test_short_string(self):
        assert char_ngrams("a", 2) == frozenset()

    def test_dedup(self):
        assert char_ngrams("abab", 2) == frozenset({"ab", "ba"})

    def test_bad_n(self):
        with pytest.raises(ValueError):
            char_ngrams("abc", 0)


class TestDiversityReward:
    def test_identical_rewrites(self):
        assert diversity_reward(["abc"] * 5) == 0.0

    def test_disjoint_rewrites(self):
        assert diversity_reward(["abcd", "efgh", "ijkl"]) == 1.0

    def test_hand_pair(self):
        assert abs(diversity_reward(["abc", "abd"]) - (1 - 1 / 3)) < 1e-12

    def test_single_rewrite_rejected(self):
        with pytest.raises(ValueError):
            diversity_reward(["abc"])

    def test_empty_gram_pairs_count_similar(self):
        # both below the window size: no n-grams, treated as fully similar
        assert diversity_reward(["a", "b"]) == 0.0

    def test_accepts_rewrite_objects(self):
        assert diversity_reward([Rewrite("abc"), Rewrite("abd")]) == pytest.approx(2 / 3)

    def test_matches_brute_force_oracle(self):
        rng = np.random.default_rng(6)
        alphabet = list("abcdef 中文")
        for _ in range(300):
            k = int(rng.integers(2, 7))
            texts = [
                "".join(rng.choice(alphabet, size=int(rng.integers(1, 12))))
                for _ in range(k)
            ]
            texts = [t if t.strip() else "x" for t in texts]
            assert abs(diversity_reward(texts) - brute_force_diversity(texts)) < 1e-12

    def test_permutation_invariance(self):
        rng = np.random.default_rng(8)
        texts = ["red shoes", "blue boots", "red sandals", "green heels"]
        base = diversity_reward(texts)
        for _ in range(20):
            perm = list(rng.permutation(texts))
            assert diversity_reward(perm) == pytest.approx(base, abs=1e-12)

    def test_range_and_zero_iff_identical_sets(self):
        rng = np.random.default_rng(9)
        for _ in range(200):
            k = int(rng.integers(2, 6))
            texts = ["".join(rng.choice(list("abc"), size=5)) for _ in range(k)]
            d = diversity_reward(texts)
            assert 0.0 <= d <= 1.0
            sets = {char_ngrams(t, 2) for t in texts}
            if len(sets) == 1:
                assert d == 0.0
            else:
                assert d > 0.0


class TestTotalReward:
    def test_hand_weighted_sum(self):
        bd = total_reward(0.5, 0.25, 2 / 3, format_ok=True)
        assert bd.total == pytest.approx(0.5 + 0.125 + 0.1 * 2 / 3, abs=1e-12)

    def test_format_gate_zeroes_total(self):
        bd = total_reward(0.9, 0.9, 0.9, format_ok=False)
        assert bd.total == 0.0
        assert bd.format_ok is False

    def test_weight_sum_at_ones(self):
        assert total_reward(1.0, 1.0, 1.0, True).total == pytest.approx(1.6)

    def test_monotone_in_components(self):
        rng = np.random.default_rng(10)
        for _ in range(100):
            q, p, d = rng.uniform(0, 1, size=3)
            base = total_reward(q, p, d, True).total
            assert total_reward(q + 0.01, p, d, True).total >= base
            assert total_reward(q, p + 0.01, d, True).total >= base
            assert total_reward(q, p, d + 0.01, True).total >= base

    def test_weights_validated(self):
        with pytest.raises(ValueError):
            RewardWeights(alpha=-1.0)
        with pytest.raises(ValueError):
            RewardWeights(beta=float("nan"))


class TestResponseReward:
    def test_component_means_and_gate(self):
        lm = uniform_lm_over_4()
        query = Query("q1", "anything here", QueryType.QA)
        rlist = RewriteList("q1", tuple(Rewrite("aaa") for _ in range(5)))
        bd = response_reward(query, rlist, lambda q, r: (0.0, 0.0), lm)
        assert bd.qsr == pytest.approx(0.5)
        assert bd.pda == pytest.approx(0.25)
        assert bd.diversity == 0.0
        assert bd.total == pytest.approx(0.5 + 0.5 * 0.25, abs=1e-12)

    def test_single_rewrite_list_rejected(self):
        lm = uniform_lm_over_4()
        query = Query("q1", "anything here", QueryType.QA)
        rlist = RewriteList("q1", (Rewrite("aaa"),))
        with pytest.raises(ValueError):
            response_reward(query, rlist, lambda q, r: (0.0, 0.0), lm)
