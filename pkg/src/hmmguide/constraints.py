"""Declarative constraint specifications compiled to a single DFA.

A specification is a conjunction of clauses over fixed-length padded token
sequences: keyphrase groups (every group satisfied by at least one of its
variants), ordered segments with optional word-count gaps between them,
a word-count window for the whole content, a required final phrase, and
forbidden phrases. Compilation builds one automaton per clause and
intersects them smallest-first, pruning after each product.

Token ids only; string-to-token translation belongs to the CLI and
service layers.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

from .dfa import (
    Dfa,
    accept_all_dfa,
    build_end_with_dfa,
    build_length_window_dfa,
    build_multi_pattern_dfa,
    build_padding_dfa,
    build_substring_dfa,
    complement,
    concat_via_merge,
    has_nonempty_language,
    intersect,
    kmp_transition_rows,
    num_edge_sets,
    prune_dead,
)
from .errors import InputError


@dataclass(frozen=True)
class GapWindow:
    """Bounds on the number of words between two ordered segments."""

    min_words: int
    max_words: int


@dataclass(frozen=True)
class Segment:
    """One ordered segment, optionally followed by a word-count gap."""

    tokens: tuple
    gap_after: GapWindow | None = None


@dataclass(frozen=True)
class ConstraintSpec:
    """Token-level constraint description over length-``horizon`` sequences.

    ``keyphrase_groups`` is a list of groups; every group must be satisfied
    and any one variant inside a group suffices. ``ordered_segments`` must
    occur in order without overlapping; a segment's ``gap_after`` window
    constrains the words between it and the next segment. All clauses are
    conjoined, and any non-empty spec additionally requires the well-formed
    shape: content tokens, one EOS, then padding.
    """

    vocab_size: int
    horizon: int
    keyphrase_groups: tuple = ()
    ordered_segments: tuple = ()
    word_length: tuple | None = None
    end_phrase: tuple | None = None
    forbidden: tuple = ()
    eos_token: int = 0
    pad_token: int = 1
    word_boundary_tokens: frozenset = frozenset()

    def __post_init__(self):
        if self.vocab_size < 2:
            raise InputError("vocab_size must cover at least EOS and PAD")
        if self.horizon < 1:
            raise InputError("horizon must be >= 1")
        reserved = {self.eos_token, self.pad_token}
        if len(reserved) != 2 or any(not 0 <= t < self.vocab_size for t in reserved):
            raise InputError("EOS and PAD must be distinct in-range tokens")
        groups = tuple(
            tuple(tuple(int(t) for t in variant) for variant in group)
            for group in self.keyphrase_groups
        )
        object.__setattr__(self, "keyphrase_groups", groups)
        for group in groups:
            if not group:
                raise InputError("keyphrase group must list at least one variant")
            for variant in group:
                self._check_phrase(variant, "keyphrase variant")
        segments = tuple(
            seg if isinstance(seg, Segment) else Segment(tuple(seg))
            for seg in self.ordered_segments
        )
        segments = tuple(
            Segment(tuple(int(t) for t in seg.tokens), seg.gap_after) for seg in segments
        )
        object.__setattr__(self, "ordered_segments", segments)
        for i, seg in enumerate(segments):
            self._check_phrase(seg.tokens, f"ordered segment {i}")
            gap = seg.gap_after
            if gap is not None:
                if i == len(segments) - 1:
                    raise InputError(
                        "a gap window needs a following segment; the last segment "
                        "cannot carry one"
                    )
                if not 1 <= gap.min_words <= gap.max_words:
                    raise InputError("gap window must satisfy 1 <= min <= max")
        if self.word_length is not None:
            a, b = self.word_length
            if not 1 <= a <= b:
                raise InputError("word_length window must satisfy 1 <= min <= max")
            object.__setattr__(self, "word_length", (int(a), int(b)))
        if self.end_phrase is not None:
            phrase = tuple(int(t) for t in self.end_phrase)
            self._check_phrase(phrase, "end phrase")
            object.__setattr__(self, "end_phrase", phrase)
        forbidden = tuple(tuple(int(t) for t in p) for p in self.forbidden)
        object.__setattr__(self, "forbidden", forbidden)
        for phrase in forbidden:
            self._check_phrase(phrase, "forbidden phrase")
        boundary = frozenset(int(t) for t in self.word_boundary_tokens)
        if any(not 0 <= t < self.vocab_size for t in boundary):
            raise InputError("word boundary token out of range")
        object.__setattr__(self, "word_boundary_tokens", boundary - {self.pad_token})

    def _check_phrase(self, tokens, what: str) -> None:
        if not tokens:
            raise InputError(f"{what} must be non-empty")
        for t in tokens:
            if not 0 <= t < self.vocab_size:
                raise InputError(f"{what}: token {t} out of range [0, {self.vocab_size})")
            if t in (self.eos_token, self.pad_token):
                raise InputError(f"{what}: may not contain the EOS or PAD token")

    @property
    def is_empty(self) -> bool:
        return not (
            self.keyphrase_groups
            or self.ordered_segments
            or self.word_length
            or self.end_phrase
            or self.forbidden
        )


@dataclass
class CompileReport:
    """What the compiler produced, for diagnostics and caching."""

    dfa: Dfa
    clause_labels: list = field(default_factory=list)
    clause_sizes: dict = field(default_factory=dict)
    empty_language: bool = False
    emptied_by: str | None = None


def _first_occurrence_element(segment, alphabet_size: int) -> Dfa:
    """Accepts strings ending at their first occurrence of ``segment``; the
    accept state exits only into a dead state, so the element can be chained."""
    rows = kmp_transition_rows(segment, include_final_row=False)
    length = len(segment)
    dead = length + 1
    states = [(0, rows[i]) for i in range(length)]
    states.append((dead, {}))
    states.append((dead, {}))
    return Dfa(alphabet_size, 0, {length}, states)


def _gap_then_segment_element(window: GapWindow, segment, boundary_tokens, alphabet_size: int) -> Dfa:
    """Accepts ``gap + segment`` where the gap holds ``window`` many words.

    Deterministic single scan: track the longest segment prefix matching a
    suffix of the input together with the word tally of everything before
    that suffix. Tokens that fall out of the match buffer are replayed
    through the word counter, so the tally always describes the gap that
    would remain if the segment completed here. The first completion whose
    tally fits accepts; words are maximal runs of non-boundary tokens.
    """
    seg = [int(t) for t in segment]
    length = len(seg)
    lo, hi = window.min_words, window.max_words
    boundary = frozenset(boundary_tokens)
    rows = kmp_transition_rows(seg, include_final_row=True)
    border = _longest_proper_border(seg)

    def word_update(j: int, inw: bool, tok) -> tuple[int, bool]:
        if tok in boundary:
            return j, False
        return (j if inw else j + 1), True

    def advance(key, tok):
        p, j, inw = key
        p2 = rows[p].get(tok, 0) if tok is not None else 0
        for released in (seg[:p] + [tok])[: p + 1 - p2]:
            j, inw = word_update(j, inw, released)
        while p2 == length:
            if lo <= j <= hi:
                return "accept"
            for released in seg[: length - border]:
                j, inw = word_update(j, inw, released)
            p2 = border
        if j > hi:
            return "dead"
        return (p2, j, inw)

    ids: dict = {}
    worklist: list = []

    def intern(key) -> int:
        if key not in ids:
            ids[key] = len(ids)
            worklist.append(key)
        return ids[key]

    start = intern((0, 0, False))
    signature_tokens = sorted(set(seg) | boundary)
    transitions: dict[int, tuple[int, dict[int, int]]] = {}
    idx = 0
    while idx < len(worklist):
        key = worklist[idx]
        sid = ids[key]
        idx += 1
        if key == "accept" or key == "dead":
            transitions[sid] = (intern("dead"), {})
            continue
        exc = {tok: intern(advance(key, tok)) for tok in signature_tokens}
        transitions[sid] = (intern(advance(key, None)), exc)

    states = [transitions[i] for i in range(len(ids))]
    accepting = {ids["accept"]} if "accept" in ids else set()
    return Dfa(alphabet_size, start, accepting, states)


def _longest_proper_border(pattern) -> int:
    k = 0
    borders = [0] * len(pattern)
    for i in range(1, len(pattern)):
        while k and pattern[i] != pattern[k]:
            k = borders[k - 1]
        if pattern[i] == pattern[k]:
            k += 1
        borders[i] = k
    return borders[-1] if len(pattern) > 1 else 0


def _ordered_chain_dfa(spec: ConstraintSpec) -> Dfa:
    v = spec.vocab_size
    elements = []
    for i, seg in enumerate(spec.ordered_segments):
        gap_before = spec.ordered_segments[i - 1].gap_after if i > 0 else None
        if gap_before is not None:
            elements.append(
                _gap_then_segment_element(gap_before, seg.tokens, spec.word_boundary_tokens, v)
            )
        else:
            elements.append(_first_occurrence_element(seg.tokens, v))
    chain = elements[0]
    for element in elements[1:]:
        chain = concat_via_merge(chain, element)
    return concat_via_merge(chain, accept_all_dfa(v))


def _build_clauses(spec: ConstraintSpec) -> list[tuple[str, Dfa]]:
    v = spec.vocab_size
    clauses: list[tuple[str, Dfa]] = []
    for i, group in enumerate(spec.keyphrase_groups):
        clauses.append((f"keyphrase_group[{i}]", build_multi_pattern_dfa(group, v)))
    if spec.ordered_segments:
        clauses.append(("ordered_segments", _ordered_chain_dfa(spec)))
    if spec.word_length is not None:
        a, b = spec.word_length
        clauses.append(
            (
                "word_length",
                build_length_window_dfa(
                    a, b, spec.word_boundary_tokens, spec.eos_token, spec.pad_token, v
                ),
            )
        )
    if spec.end_phrase is not None:
        clauses.append(
            ("end_phrase", build_end_with_dfa(spec.end_phrase, v, spec.eos_token, spec.pad_token))
        )
    for i, phrase in enumerate(spec.forbidden):
        clauses.append((f"forbidden[{i}]", complement(build_substring_dfa(phrase, v))))
    clauses.append(("padding", build_padding_dfa(v, spec.eos_token, spec.pad_token)))
    return clauses


def compile_report(spec: ConstraintSpec) -> CompileReport:
    """Compile with per-clause bookkeeping; see :func:`compile_spec`."""
    if spec.is_empty:
        return CompileReport(dfa=accept_all_dfa(spec.vocab_size))

    clauses = _build_clauses(spec)
    clauses.sort(key=lambda item: (item[1].num_states, item[0]))
    report = CompileReport(dfa=accept_all_dfa(spec.vocab_size))
    report.clause_labels = [label for label, _ in clauses]
    report.clause_sizes = {
        label: (dfa.num_states, num_edge_sets(dfa)) for label, dfa in clauses
    }

    combined = None
    for label, clause_dfa in clauses:
        if combined is None:
            combined = prune_dead(clause_dfa)
        else:
            combined = prune_dead(intersect(combined, clause_dfa))
        if not report.empty_language and not combined.accepting:
            report.empty_language = True
            report.emptied_by = label
    report.dfa = combined
    if report.empty_language:
        warnings.warn(
            f"constraint is unsatisfiable: clause '{report.emptied_by}' empties the language",
            stacklevel=3,
        )
    return report


def compile_spec(spec: ConstraintSpec) -> Dfa:
    """Compile a specification into one pruned, canonically numbered DFA.

    The empty specification compiles to the single-state accept-all
    automaton. Unsatisfiable conjunctions are not rejected; they compile to
    an empty-language automaton and raise a warning.
    """
    return compile_report(spec).dfa


def estimate_size(spec: ConstraintSpec) -> tuple[int, int]:
    """Product-of-parts upper bounds (states, edge sets) before pruning."""
    if spec.is_empty:
        return (1, 1)
    state_bound = 1
    exception_bound = 0
    for group in spec.keyphrase_groups:
        state_bound *= sum(len(vnt) for vnt in group) + 2
        exception_bound += len({t for vnt in group for t in vnt})
    if spec.ordered_segments:
        chain_states = 1
        chain_tokens = set(spec.word_boundary_tokens)
        for i, seg in enumerate(spec.ordered_segments):
            gap_before = spec.ordered_segments[i - 1].gap_after if i > 0 else None
            if gap_before is None:
                chain_states += len(seg.tokens) + 2
            else:
                chain_states += 2 * len(seg.tokens) * (gap_before.max_words + 1) + 2
            chain_tokens.update(seg.tokens)
        state_bound *= chain_states
        exception_bound += len(chain_tokens)
    if spec.word_length is not None:
        state_bound *= 2 * (spec.word_length[1] + 1) + 2
        exception_bound += len(spec.word_boundary_tokens) + 1
    if spec.end_phrase is not None:
        state_bound *= len(spec.end_phrase) + 3
        exception_bound += len(set(spec.end_phrase)) + 1
    for phrase in spec.forbidden:
        state_bound *= len(phrase) + 1
        exception_bound += len(set(phrase))
    state_bound *= 3
    exception_bound += 2
    return state_bound, state_bound * (exception_bound + 1)


def spec_to_json(spec: ConstraintSpec) -> dict:
    """Versioned token-level JSON form (also the cache key shape)."""
    return {
        "version": 1,
        "vocab_size": spec.vocab_size,
        "horizon": spec.horizon,
        "keyphrases": [[list(v) for v in group] for group in spec.keyphrase_groups],
        "ordered_segments": [
            {
                "tokens": list(seg.tokens),
                "gap_after": (
                    None
                    if seg.gap_after is None
                    else {"min": seg.gap_after.min_words, "max": seg.gap_after.max_words}
                ),
            }
            for seg in spec.ordered_segments
        ],
        "word_length": (
            None
            if spec.word_length is None
            else {"min": spec.word_length[0], "max": spec.word_length[1]}
        ),
        "end_phrase": None if spec.end_phrase is None else list(spec.end_phrase),
        "forbidden": [list(p) for p in spec.forbidden],
        "eos_token": spec.eos_token,
        "pad_token": spec.pad_token,
        "word_boundary_tokens": sorted(spec.word_boundary_tokens),
    }


def spec_from_json(obj: dict) -> ConstraintSpec:
    if obj.get("version") != 1:
        raise InputError(f"unsupported constraint version {obj.get('version')}")
    word_length = obj.get("word_length")
    segments = []
    for entry in obj.get("ordered_segments", []):
        gap = entry.get("gap_after")
        segments.append(
            Segment(
                tuple(entry["tokens"]),
                None if gap is None else GapWindow(gap["min"], gap["max"]),
            )
        )
    return ConstraintSpec(
        vocab_size=obj["vocab_size"],
        horizon=obj["horizon"],
        keyphrase_groups=tuple(tuple(tuple(v) for v in g) for g in obj.get("keyphrases", [])),
        ordered_segments=tuple(segments),
        word_length=None if word_length is None else (word_length["min"], word_length["max"]),
        end_phrase=None if obj.get("end_phrase") is None else tuple(obj["end_phrase"]),
        forbidden=tuple(tuple(p) for p in obj.get("forbidden", [])),
        eos_token=obj.get("eos_token", 0),
        pad_token=obj.get("pad_token", 1),
        word_boundary_tokens=frozenset(obj.get("word_boundary_tokens", [])),
    )
