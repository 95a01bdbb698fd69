import numpy as np
import pytest

from hmmguide.constraints import ConstraintSpec, Segment, compile_spec
from hmmguide.dfa import accept_all_dfa, build_substring_dfa, reject_all_dfa
from hmmguide.errors import BudgetExceededError
from hmmguide.oracle import (
    EnumerationBudget,
    enumerate_joint,
    exact_acceptance_probability,
    exact_step_conditional,
    naive_constraint_check,
)

from .helpers import path_sum_loglik, random_hmm


class TestExactAcceptance:
    def test_accept_all_is_one(self):
        rng = np.random.default_rng(0)
        hmm = random_hmm(rng, h=2, v=3)
        np.testing.assert_allclose(
            exact_acceptance_probability(hmm, accept_all_dfa(3), 4), 1.0, rtol=1e-12
        )

    def test_reject_all_is_zero(self):
        rng = np.random.default_rng(1)
        hmm = random_hmm(rng, h=2, v=3)
        assert exact_acceptance_probability(hmm, reject_all_dfa(3), 4) == 0.0

    def test_probs_match_path_enumeration(self):
        rng = np.random.default_rng(2)
        hmm = random_hmm(rng, h=2, v=3)
        joint = enumerate_joint(hmm, accept_all_dfa(3), 3)
        for seq, p in zip(joint.sequences[:10], joint.probs[:10]):
            want = np.exp(path_sum_loglik(hmm, seq.tolist()))
            np.testing.assert_allclose(p, want, rtol=1e-9)

    def test_budget_refusal(self):
        rng = np.random.default_rng(3)
        hmm = random_hmm(rng, h=2, v=4)
        with pytest.raises(BudgetExceededError):
            exact_acceptance_probability(hmm, accept_all_dfa(4), 4, EnumerationBudget(max_length=3))


class TestStepConditional:
    def test_absorbing_accept_state_gives_ones(self):
        rng = np.random.default_rng(4)
        hmm = random_hmm(rng, h=2, v=3)
        dfa = build_substring_dfa([2], alphabet_size=3)
        cond = exact_step_conditional(hmm, dfa, prefix=[2, 0], n=4)
        np.testing.assert_allclose(cond, np.ones(3), rtol=1e-9)

    def test_unreachable_candidate_is_zero(self):
        rng = np.random.default_rng(5)
        hmm = random_hmm(rng, h=2, v=2)
        dfa = build_substring_dfa([1, 1], alphabet_size=2)
        cond = exact_step_conditional(hmm, dfa, prefix=[0, 0, 0], n=4)
        assert cond[0] == 0.0  # no way to fit the pattern any more
        assert cond[1] == 0.0


class TestNaiveConstraintCheck:
    def test_empty_spec_accepts_everything(self):
        spec = ConstraintSpec(vocab_size=4, horizon=5)
        assert naive_constraint_check(spec, [3, 3, 3, 3, 3])
        assert naive_constraint_check(spec, [0, 1, 1, 1, 1])

    def test_all_keyword_groups_in_any_variant(self):
        spec = ConstraintSpec(
            vocab_size=8,
            horizon=8,
            keyphrase_groups=(((3,), (4,)), ((5, 6),)),
            word_boundary_tokens=frozenset({2}),
        )
        assert naive_constraint_check(spec, [4, 2, 5, 6, 0, 1, 1, 1])
        assert not naive_constraint_check(spec, [4, 2, 6, 5, 0, 1, 1, 1])

    def test_differential_against_compiled_dfa_random_strings(self):
        rng = np.random.default_rng(6)
        spec = ConstraintSpec(
            vocab_size=5,
            horizon=8,
            keyphrase_groups=(((3,), (4,)),),
            word_length=(1, 3),
            forbidden=((4, 4),),
            word_boundary_tokens=frozenset({2}),
        )
        dfa = compile_spec(spec)
        for _ in range(10_000):
            s = rng.integers(0, 5, size=8).tolist()
            assert dfa.accepts(s) == naive_constraint_check(spec, s), s

    def test_differential_with_ordered_segments(self):
        rng = np.random.default_rng(7)
        spec = ConstraintSpec(
            vocab_size=5,
            horizon=9,
            ordered_segments=(Segment((3,)), Segment((4,))),
            word_boundary_tokens=frozenset({2}),
        )
        dfa = compile_spec(spec)
        for _ in range(5000):
            s = rng.integers(0, 5, size=9).tolist()
            assert dfa.accepts(s) == naive_constraint_check(spec, s), s
