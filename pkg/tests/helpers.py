"""Small brute-force reference computations shared by the test suite.

These are deliberately naive (explicit loops over hidden paths and token
strings) so they stay independent of the library's vectorized code.
"""

from __future__ import annotations

import itertools
import math

import numpy as np


def lp(values) -> np.ndarray:
    """Log of probabilities, quietly mapping exact zeros to -inf."""
    with np.errstate(divide="ignore"):
        return np.log(np.asarray(values, dtype=np.float64))


def path_sum_loglik(hmm, tokens) -> float:
    """log p(tokens) by summing over every hidden path explicitly."""
    h = hmm.num_hidden
    init = np.exp(hmm.log_initial)
    trans = np.exp(hmm.log_transition)
    emis = np.exp(hmm.log_emission)
    total = 0.0
    for path in itertools.product(range(h), repeat=len(tokens)):
        p = init[path[0]] * emis[path[0], tokens[0]]
        for t in range(1, len(tokens)):
            p *= trans[path[t - 1], path[t]] * emis[path[t], tokens[t]]
        total += p
    return math.log(total) if total > 0.0 else -math.inf


def all_strings(alphabet_size: int, max_length: int, min_length: int = 0):
    for length in range(min_length, max_length + 1):
        yield from itertools.product(range(alphabet_size), repeat=length)


def contains_sublist(haystack, needle) -> bool:
    n = list(needle)
    h = list(haystack)
    return any(h[i : i + len(n)] == n for i in range(len(h) - len(n) + 1))


def naive_walk_accepts(dfa, tokens) -> bool:
    """Re-implementation of DFA execution using a dense transition table."""
    table = np.empty((dfa.num_states, dfa.alphabet_size), dtype=np.int64)
    for s in range(dfa.num_states):
        table[s, :] = dfa.defaults[s]
        for tok, dest in dfa.exceptions[s].items():
            table[s, tok] = dest
    state = dfa.initial
    for tok in tokens:
        state = table[state, tok]
    return state in dfa.accepting


def random_hmm(rng: np.random.Generator, h: int, v: int):
    from hmmguide.hmm import Hmm

    return Hmm(
        log_initial=np.log(rng.dirichlet(np.ones(h))),
        log_transition=np.log(rng.dirichlet(np.ones(h), size=h)),
        log_emission=np.log(rng.dirichlet(np.ones(v), size=h)),
    )


def random_dfa(rng: np.random.Generator, num_states: int, alphabet_size: int):
    """A random total DFA with a sprinkling of exception edges."""
    from hmmguide.dfa import Dfa

    states = []
    for _ in range(num_states):
        default = int(rng.integers(num_states))
        exc = {}
        for tok in range(alphabet_size):
            if rng.random() < 0.4:
                exc[tok] = int(rng.integers(num_states))
        states.append((default, exc))
    num_accept = int(rng.integers(1, num_states + 1))
    accepting = set(rng.choice(num_states, size=num_accept, replace=False).tolist())
    return Dfa(alphabet_size, int(rng.integers(num_states)), accepting, states)
