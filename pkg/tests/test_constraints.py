import warnings

import numpy as np
import pytest

from hmmguide.constraints import (
    ConstraintSpec,
    GapWindow,
    Segment,
    compile_report,
    compile_spec,
    estimate_size,
    spec_from_json,
    spec_to_json,
)
from hmmguide.dfa import num_edge_sets
from hmmguide.errors import InputError
from hmmguide.oracle import naive_constraint_check

from .helpers import all_strings

# Tiny shared alphabet: EOS=0, PAD=1, boundary=2, words 3..
EOS, PAD, SP = 0, 1, 2


def make_spec(vocab_size=6, horizon=8, **kwargs):
    kwargs.setdefault("word_boundary_tokens", frozenset({SP}))
    return ConstraintSpec(vocab_size=vocab_size, horizon=horizon, **kwargs)


def differential(spec, max_length):
    compiled = compile_spec(spec)
    for s in all_strings(spec.vocab_size, max_length):
        want = naive_constraint_check(spec, s)
        got = compiled.accepts(s)
        assert got == want, f"disagree on {s}: dfa={got} naive={want}"


class TestCompileBasics:
    def test_empty_spec_is_accept_all_single_state(self):
        dfa = compile_spec(make_spec())
        assert dfa.num_states == 1
        assert dfa.initial in dfa.accepting
        for s in all_strings(6, 3):
            assert dfa.accepts(s)

    def test_keyphrase_groups_conjunction_of_disjunctions(self):
        # Three concept groups; every group must be covered by some variant.
        spec = make_spec(
            vocab_size=8,
            keyphrase_groups=(((3,), (3, 4)), ((5,),), ((6, 7),)),
        )
        dfa = compile_spec(spec)
        good = [3, SP, 5, SP, 6, 7, EOS, PAD]
        assert dfa.accepts(good)
        assert naive_constraint_check(spec, good)
        missing_group = [3, SP, 5, EOS, PAD, PAD, PAD, PAD]
        assert not dfa.accepts(missing_group)
        assert not naive_constraint_check(spec, missing_group)

    def test_compile_deterministic(self):
        spec = make_spec(keyphrase_groups=(((3,), (4,)),), word_length=(1, 3))
        assert compile_spec(spec) == compile_spec(spec)

    def test_unsatisfiable_reports_warning_and_clause(self):
        spec = make_spec(
            keyphrase_groups=(((3, 4),),),
            forbidden=((3, 4),),
        )
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            report = compile_report(spec)
        assert report.empty_language
        assert report.emptied_by is not None
        assert any("unsatisfiable" in str(w.message) for w in caught)
        assert not report.dfa.accepting

    def test_word_window_requires_room(self):
        # Five words cannot fit in a horizon of three tokens, but the
        # compiler is horizon-agnostic: the language is still non-empty.
        spec = make_spec(word_length=(5, 6))
        report = compile_report(spec)
        assert not report.empty_language


class TestDifferential:
    def test_keyphrases_and_window(self):
        spec = make_spec(
            vocab_size=5,
            keyphrase_groups=(((3,), (4,)), ((4,),)),
            word_length=(1, 2),
        )
        differential(spec, max_length=7)

    def test_end_phrase_and_forbidden(self):
        spec = make_spec(
            vocab_size=5,
            end_phrase=(3,),
            forbidden=((4, 4),),
        )
        differential(spec, max_length=7)

    def test_ordered_segments_plain(self):
        spec = make_spec(
            vocab_size=5,
            ordered_segments=(Segment((3,)), Segment((4, 3))),
        )
        differential(spec, max_length=7)

    def test_ordered_segments_with_gap_window(self):
        spec = make_spec(
            vocab_size=5,
            ordered_segments=(Segment((3,), GapWindow(1, 1)), Segment((4,))),
        )
        differential(spec, max_length=8)

    def test_ordered_segments_with_wide_gap_window(self):
        spec = make_spec(
            vocab_size=5,
            ordered_segments=(Segment((3,), GapWindow(1, 2)), Segment((4,))),
        )
        differential(spec, max_length=8)

    def test_everything_at_once(self):
        spec = make_spec(
            vocab_size=5,
            keyphrase_groups=(((4,),),),
            word_length=(1, 4),
            forbidden=((4, 4),),
        )
        differential(spec, max_length=7)


class TestOrderedSegmentSemantics:
    def test_exactly_one_word_between(self):
        spec = make_spec(
            vocab_size=6,
            horizon=10,
            ordered_segments=(Segment((3,), GapWindow(1, 1)), Segment((4,))),
        )
        dfa = compile_spec(spec)
        # segment, boundary, one word, boundary, segment
        assert dfa.accepts([3, SP, 5, SP, 4, EOS, PAD, PAD, PAD, PAD])
        # two words in the gap
        assert not dfa.accepts([3, SP, 5, SP, 5, SP, 4, EOS, PAD, PAD])
        # no gap at all
        assert not dfa.accepts([3, 4, EOS, PAD, PAD, PAD, PAD, PAD, PAD, PAD])

    def test_segments_must_be_ordered(self):
        spec = make_spec(
            vocab_size=6,
            ordered_segments=(Segment((3,)), Segment((4,))),
        )
        dfa = compile_spec(spec)
        assert dfa.accepts([3, SP, 4, EOS, PAD, PAD, PAD, PAD])
        assert not dfa.accepts([4, SP, 3, EOS, PAD, PAD, PAD, PAD])

    def test_greedy_first_occurrence_pins_split(self):
        # The chain consumes the first occurrence of the first segment, so
        # a gap window measured from a later occurrence does not rescue the
        # string. This mirrors the greedy semantics of the naive checker.
        spec = make_spec(
            vocab_size=6,
            horizon=12,
            ordered_segments=(Segment((3,), GapWindow(1, 1)), Segment((4,))),
        )
        dfa = compile_spec(spec)
        tokens = [3, SP, 5, SP, 5, SP, 3, SP, 5, SP, 4, EOS]
        assert not dfa.accepts(tokens)
        assert not naive_constraint_check(spec, tokens)

    def test_overlapping_segment_occurrences(self):
        spec = make_spec(
            vocab_size=5,
            ordered_segments=(Segment((3, 3)), Segment((3, 4))),
        )
        differential(spec, max_length=8)

    def test_gap_window_on_last_segment_rejected(self):
        with pytest.raises(InputError):
            make_spec(ordered_segments=(Segment((3,), GapWindow(1, 2)),))


class TestSpecValidation:
    def test_token_out_of_range(self):
        with pytest.raises(InputError):
            make_spec(keyphrase_groups=(((99,),),))

    def test_reserved_tokens_rejected_in_phrases(self):
        with pytest.raises(InputError):
            make_spec(keyphrase_groups=(((EOS,),),))
        with pytest.raises(InputError):
            make_spec(end_phrase=(PAD,))

    def test_bad_word_window(self):
        with pytest.raises(InputError):
            make_spec(word_length=(0, 3))
        with pytest.raises(InputError):
            make_spec(word_length=(4, 2))

    def test_empty_group_rejected(self):
        with pytest.raises(InputError):
            make_spec(keyphrase_groups=((),))


class TestMonotonicity:
    def test_adding_clause_never_enlarges_language(self):
        base = make_spec(vocab_size=5, keyphrase_groups=(((3,),),))
        extended = make_spec(
            vocab_size=5,
            keyphrase_groups=(((3,),),),
            word_length=(1, 2),
        )
        d_base = compile_spec(base)
        d_ext = compile_spec(extended)
        for s in all_strings(5, 7):
            if d_ext.accepts(s):
                assert d_base.accepts(s)


class TestEstimateSize:
    def test_single_pattern_bounds(self):
        spec = make_spec(keyphrase_groups=(((3, 4, 3),),))
        k, m = estimate_size(spec)
        dfa = compile_spec(spec)
        assert dfa.num_states <= k
        assert num_edge_sets(dfa) <= m

    def test_bounds_hold_for_everything(self):
        specs = [
            make_spec(keyphrase_groups=(((3,), (4,)), ((5,),))),
            make_spec(word_length=(2, 4), end_phrase=(3, 4)),
            make_spec(
                ordered_segments=(Segment((3,), GapWindow(1, 2)), Segment((4,))),
                forbidden=((5, 5),),
            ),
        ]
        for spec in specs:
            k, m = estimate_size(spec)
            dfa = compile_spec(spec)
            assert dfa.num_states <= k, spec
            assert num_edge_sets(dfa) <= m, spec

    def test_empty_spec(self):
        assert estimate_size(make_spec()) == (1, 1)


class TestJsonSchema:
    def test_roundtrip(self):
        spec = make_spec(
            vocab_size=9,
            horizon=12,
            keyphrase_groups=(((3, 4), (5,)), ((6,),)),
            ordered_segments=(Segment((7,), GapWindow(1, 3)), Segment((8,))),
            word_length=(2, 5),
            end_phrase=(4,),
            forbidden=((5, 6),),
        )
        assert spec_from_json(spec_to_json(spec)) == spec

    def test_bad_version(self):
        obj = spec_to_json(make_spec())
        obj["version"] = 99
        with pytest.raises(InputError):
            spec_from_json(obj)
