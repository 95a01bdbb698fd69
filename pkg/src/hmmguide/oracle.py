"""Independent brute-force references used to anchor correctness.

Everything here trades efficiency for obviousness: full enumeration of
token strings, dense transition tables, and clause-by-clause scanning.
None of it shares inference code with the modules it checks.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .constraints import ConstraintSpec
from .errors import BudgetExceededError, InputError


@dataclass(frozen=True)
class EnumerationBudget:
    max_vocab: int = 5
    max_length: int = 8
    max_states: int = 10
    max_total: int = 10_000_000

    def check(self, vocab_size: int, n: int, num_states: int) -> None:
        if vocab_size > self.max_vocab:
            raise BudgetExceededError(f"vocab {vocab_size} exceeds budget {self.max_vocab}")
        if n > self.max_length:
            raise BudgetExceededError(f"length {n} exceeds budget {self.max_length}")
        if num_states > self.max_states:
            raise BudgetExceededError(f"{num_states} states exceed budget {self.max_states}")
        if vocab_size**n > self.max_total:
            raise BudgetExceededError(f"{vocab_size}^{n} sequences exceed budget {self.max_total}")


DEFAULT_BUDGET = EnumerationBudget()


@dataclass
class EnumeratedJoint:
    """Every length-n sequence with its model probability and DFA verdict."""

    sequences: np.ndarray  # (v**n, n) int
    probs: np.ndarray  # (v**n,) linear-space p(x)
    accepted: np.ndarray  # (v**n,) bool
    vocab_size: int

    def prefix_mask(self, prefix) -> np.ndarray:
        mask = np.ones(len(self.sequences), dtype=bool)
        for pos, token in enumerate(prefix):
            mask &= self.sequences[:, pos] == token
        return mask

    def accepted_prefix_mass(self, prefix) -> float:
        """p(success and the sequence starts with ``prefix``)."""
        mask = self.prefix_mask(prefix) & self.accepted
        return float(self.probs[mask].sum())

    def prefix_mass(self, prefix) -> float:
        return float(self.probs[self.prefix_mask(prefix)].sum())

    def accepted_distribution(self) -> dict:
        """Exact conditional over accepted sequences, keyed by token tuple."""
        total = float(self.probs[self.accepted].sum())
        return {
            tuple(seq): float(p) / total
            for seq, p in zip(self.sequences[self.accepted], self.probs[self.accepted])
        }


def dense_transition_table(dfa) -> np.ndarray:
    table = np.empty((dfa.num_states, dfa.alphabet_size), dtype=np.int64)
    for s in range(dfa.num_states):
        table[s, :] = dfa.defaults[s]
        for token, dest in dfa.exceptions[s].items():
            table[s, token] = dest
    return table


def enumerate_joint(hmm, dfa, n: int, budget: EnumerationBudget = DEFAULT_BUDGET) -> EnumeratedJoint:
    """Enumerate all v^n sequences with exact probabilities and verdicts."""
    v = hmm.vocab_size
    if dfa.alphabet_size != v:
        raise InputError("HMM vocabulary and DFA alphabet differ")
    budget.check(v, n, dfa.num_states)

    seqs = np.array(list(itertools.product(range(v), repeat=n)), dtype=np.int64)
    init = np.exp(hmm.log_initial)
    trans = np.exp(hmm.log_transition)
    emis = np.exp(hmm.log_emission)

    alpha = init[None, :] * emis[:, seqs[:, 0]].T
    for t in range(1, n):
        alpha = (alpha @ trans) * emis[:, seqs[:, t]].T
    probs = alpha.sum(axis=1)

    table = dense_transition_table(dfa)
    state = np.full(len(seqs), dfa.initial, dtype=np.int64)
    for t in range(n):
        state = table[state, seqs[:, t]]
    accepted = np.isin(state, list(dfa.accepting)) if dfa.accepting else np.zeros(len(seqs), bool)
    return EnumeratedJoint(sequences=seqs, probs=probs, accepted=accepted, vocab_size=v)


def exact_acceptance_probability(hmm, dfa, n: int, budget: EnumerationBudget = DEFAULT_BUDGET) -> float:
    """p(the whole length-n sequence is accepted), by full enumeration."""
    joint = enumerate_joint(hmm, dfa, n, budget)
    return float(joint.probs[joint.accepted].sum())


def exact_step_conditional(
    hmm, dfa, prefix, n: int, budget: EnumerationBudget = DEFAULT_BUDGET
) -> np.ndarray:
    """For every candidate w: p(accepted | prefix, next token = w).

    Entries where p(prefix, w) = 0 are reported as 0.
    """
    prefix = list(prefix)
    if len(prefix) >= n:
        raise InputError("prefix must be shorter than the horizon")
    joint = enumerate_joint(hmm, dfa, n, budget)
    out = np.zeros(hmm.vocab_size)
    for w in range(hmm.vocab_size):
        extended = prefix + [w]
        denom = joint.prefix_mass(extended)
        if denom > 0.0:
            out[w] = joint.accepted_prefix_mass(extended) / denom
    return out


# ---------------------------------------------------------------------------
# Clause-by-clause constraint checking (no automata involved)


def _find_sublist(haystack, needle, start: int = 0) -> int:
    n = len(needle)
    for i in range(start, len(haystack) - n + 1):
        if haystack[i : i + n] == needle:
            return i
    return -1


def _word_count(tokens, boundary) -> int:
    count = 0
    in_word = False
    for tok in tokens:
        if tok in boundary:
            in_word = False
        else:
            if not in_word:
                count += 1
            in_word = True
    return count


def _ordered_segments_ok(content, segments, boundary) -> bool:
    pos = 0
    for i, seg in enumerate(segments):
        needle = list(seg.tokens)
        gap = segments[i - 1].gap_after if i > 0 else None
        if gap is None:
            idx = _find_sublist(content, needle, pos)
            if idx < 0:
                return False
            pos = idx + len(needle)
        else:
            matched = False
            for end in range(pos + len(needle), len(content) + 1):
                if content[end - len(needle) : end] != needle:
                    continue
                words = _word_count(content[pos : end - len(needle)], boundary)
                if gap.min_words <= words <= gap.max_words:
                    pos = end
                    matched = True
                    break
            if not matched:
                return False
    return True


def naive_constraint_check(spec: ConstraintSpec, tokens) -> bool:
    """Direct clause-by-clause verification of a full padded sequence."""
    tokens = [int(t) for t in tokens]
    if spec.is_empty:
        return True

    # Well-formed shape: content tokens, exactly one EOS, then padding.
    if spec.eos_token not in tokens:
        return False
    cut = tokens.index(spec.eos_token)
    content = tokens[:cut]
    if spec.pad_token in content:
        return False
    if any(t != spec.pad_token for t in tokens[cut + 1 :]):
        return False

    for group in spec.keyphrase_groups:
        if not any(_find_sublist(content, list(v)) >= 0 for v in group):
            return False
    if spec.ordered_segments:
        if not _ordered_segments_ok(content, spec.ordered_segments, spec.word_boundary_tokens):
            return False
    if spec.word_length is not None:
        a, b = spec.word_length
        if not a <= _word_count(content, spec.word_boundary_tokens) <= b:
            return False
    if spec.end_phrase is not None:
        phrase = list(spec.end_phrase)
        if content[len(content) - len(phrase) :] != phrase:
            return False
    for phrase in spec.forbidden:
        if _find_sublist(content, list(phrase)) >= 0:
            return False
    return True
