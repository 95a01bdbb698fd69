"""Deterministic finite automata over a token alphabet.

Transitions use a compact per-state representation: an exception map for
the few tokens that deviate, plus a default destination covering every
other token. Automata are therefore total and deterministic by
construction, and large vocabularies never need to be enumerated.

State numbering is canonical: every construction renumbers states by
breadth-first discovery order (exception tokens ascending, default last),
so structurally equal inputs produce structurally equal outputs.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import InputError, StructuralError

DFA_JSON_VERSION = 1


class Dfa:
    """A total DFA: (states, alphabet, transition function, initial, accepting).

    ``states[i]`` is a pair ``(default_dest, exceptions)`` where
    ``exceptions`` maps token ids to destinations for the tokens that do
    not follow the default. Instances are immutable by convention; all
    operations return new automata.
    """

    __slots__ = ("alphabet_size", "initial", "accepting", "defaults", "exceptions")

    def __init__(self, alphabet_size, initial, accepting, states):
        if alphabet_size < 1:
            raise InputError("alphabet_size must be >= 1")
        k = len(states)
        if k < 1:
            raise InputError("a DFA needs at least one state")
        if not 0 <= initial < k:
            raise InputError(f"initial state {initial} out of range [0, {k})")
        accepting = frozenset(int(s) for s in accepting)
        if any(not 0 <= s < k for s in accepting):
            raise InputError("accepting states out of range")
        defaults = []
        exceptions = []
        for idx, (default, exc) in enumerate(states):
            default = int(default)
            if not 0 <= default < k:
                raise InputError(f"state {idx}: default destination {default} out of range")
            clean = {}
            for token, dest in exc.items():
                token = int(token)
                dest = int(dest)
                if not 0 <= token < alphabet_size:
                    raise InputError(f"state {idx}: exception token {token} out of range")
                if not 0 <= dest < k:
                    raise InputError(f"state {idx}: exception destination {dest} out of range")
                if dest != default:
                    clean[token] = dest
            defaults.append(default)
            exceptions.append(clean)
        self.alphabet_size = int(alphabet_size)
        self.initial = int(initial)
        self.accepting = accepting
        self.defaults = tuple(defaults)
        self.exceptions = tuple(exceptions)

    @property
    def num_states(self) -> int:
        return len(self.defaults)

    def step(self, state: int, token: int) -> int:
        return self.exceptions[state].get(token, self.defaults[state])

    def walk(self, tokens: Iterable[int]) -> int:
        state = self.initial
        for token in tokens:
            state = self.exceptions[state].get(token, self.defaults[state])
        return state

    def accepts(self, tokens: Iterable[int]) -> bool:
        return self.walk(tokens) in self.accepting

    def _key(self):
        return (
            self.alphabet_size,
            self.initial,
            self.accepting,
            self.defaults,
            tuple(tuple(sorted(exc.items())) for exc in self.exceptions),
        )

    def __eq__(self, other):
        return isinstance(other, Dfa) and self._key() == other._key()

    def __hash__(self):
        return hash(self._key())

    def __repr__(self):
        return (
            f"Dfa(states={self.num_states}, alphabet={self.alphabet_size}, "
            f"initial={self.initial}, accepting={sorted(self.accepting)})"
        )


@dataclass(frozen=True)
class EdgeSet:
    """The set of tokens carrying ``source`` to ``dest``.

    Exception edges list their tokens explicitly; the default edge is
    stored as "everything except ``excluded``" so the alphabet is never
    enumerated.
    """

    source: int
    dest: int
    tokens: frozenset | None
    excluded: frozenset

    @property
    def is_default(self) -> bool:
        return self.tokens is None

    def num_tokens(self, alphabet_size: int) -> int:
        if self.tokens is not None:
            return len(self.tokens)
        return alphabet_size - len(self.excluded)

    def contains(self, token: int) -> bool:
        if self.tokens is not None:
            return token in self.tokens
        return token not in self.excluded

    def materialize(self, alphabet_size: int) -> frozenset:
        if self.tokens is not None:
            return self.tokens
        return frozenset(t for t in range(alphabet_size) if t not in self.excluded)


def accepts(dfa: Dfa, tokens: Sequence[int]) -> bool:
    """True iff running the transition function from the initial state over
    ``tokens`` ends in an accepting state."""
    for token in tokens:
        if not 0 <= token < dfa.alphabet_size:
            raise InputError(f"token {token} out of range [0, {dfa.alphabet_size})")
    return dfa.accepts(tokens)


def edge_sets(dfa: Dfa) -> list[EdgeSet]:
    """Partition of the alphabet out of every state, grouped by destination."""
    out = []
    for state in range(dfa.num_states):
        exc = dfa.exceptions[state]
        by_dest: dict[int, list[int]] = {}
        for token, dest in exc.items():
            by_dest.setdefault(dest, []).append(token)
        for dest in sorted(by_dest):
            out.append(
                EdgeSet(
                    source=state,
                    dest=dest,
                    tokens=frozenset(by_dest[dest]),
                    excluded=frozenset(),
                )
            )
        if len(exc) < dfa.alphabet_size:
            out.append(
                EdgeSet(
                    source=state,
                    dest=dfa.defaults[state],
                    tokens=None,
                    excluded=frozenset(exc),
                )
            )
    return out


def num_edge_sets(dfa: Dfa) -> int:
    count = 0
    for state in range(dfa.num_states):
        exc = dfa.exceptions[state]
        count += len(set(exc.values()))
        if len(exc) < dfa.alphabet_size:
            count += 1
    return count


# ---------------------------------------------------------------------------
# Elementary automata


def accept_all_dfa(alphabet_size: int) -> Dfa:
    return Dfa(alphabet_size, 0, {0}, [(0, {})])


def reject_all_dfa(alphabet_size: int) -> Dfa:
    return Dfa(alphabet_size, 0, set(), [(0, {})])


def accept_empty_string_dfa(alphabet_size: int) -> Dfa:
    """Accepts exactly the empty string; any token falls into a dead state."""
    return Dfa(alphabet_size, 0, {0}, [(1, {}), (1, {})])


def kmp_transition_rows(pattern: Sequence[int], include_final_row: bool) -> list[dict[int, int]]:
    """Match-progress transition rows for a pattern.

    Row ``i`` maps tokens to the next match length given the longest
    pattern prefix currently matched is ``i``; unlisted tokens go to 0.
    With ``include_final_row`` a row for the full-match state is appended
    (its moves follow the failure structure, allowing re-matching).
    """
    pattern = [int(t) for t in pattern]
    length = len(pattern)
    if length == 0:
        raise InputError("pattern must be non-empty")
    rows: list[dict[int, int]] = [{pattern[0]: 1}]
    fallback = 0
    for i in range(1, length):
        row = dict(rows[fallback])
        row[pattern[i]] = i + 1
        rows.append(row)
        fallback = rows[fallback].get(pattern[i], 0)
    if include_final_row:
        rows.append(dict(rows[fallback]))
    return rows


def build_substring_dfa(pattern: Sequence[int], alphabet_size: int) -> Dfa:
    """Accepts exactly the strings containing ``pattern`` as a contiguous
    run of tokens. Has ``len(pattern) + 1`` states; the full-match state is
    absorbing and accepting."""
    pattern = _check_pattern(pattern, alphabet_size)
    length = len(pattern)
    rows = kmp_transition_rows(pattern, include_final_row=False)
    states = [(0, rows[i]) for i in range(length)]
    states.append((length, {}))
    return _renumber_bfs(Dfa(alphabet_size, 0, {length}, states))


def build_multi_pattern_dfa(patterns: Sequence[Sequence[int]], alphabet_size: int) -> Dfa:
    """Accepts exactly the strings containing at least one of ``patterns``.

    Classic multi-pattern matching: a trie of the patterns with
    breadth-first failure links resolves every transition; any transition
    that would complete some pattern is redirected to an absorbing
    accepting sink.
    """
    if not patterns:
        raise InputError("need at least one pattern")
    patterns = [_check_pattern(p, alphabet_size) for p in patterns]

    children: list[dict[int, int]] = [{}]
    terminal: list[bool] = [False]
    for pattern in patterns:
        node = 0
        for token in pattern:
            nxt = children[node].get(token)
            if nxt is None:
                children.append({})
                terminal.append(False)
                nxt = len(children) - 1
                children[node][token] = nxt
            node = nxt
        terminal[node] = True

    # Failure links by BFS; a node whose failure link is a match is itself
    # a match (some pattern ends there as a suffix).
    fail = [0] * len(children)
    queue = deque(sorted(children[0].values()))
    while queue:
        node = queue.popleft()
        if terminal[fail[node]]:
            terminal[node] = True
        for token in sorted(children[node]):
            child = children[node][token]
            f = fail[node]
            while f and token not in children[f]:
                f = fail[f]
            fail[child] = children[f].get(token, 0)
            queue.append(child)

    def goto(node: int, token: int) -> int:
        while True:
            child = children[node].get(token)
            if child is not None:
                return child
            if node == 0:
                return 0
            node = fail[node]

    sink = len(children)
    states: list[tuple[int, dict[int, int]]] = []
    alphabet = sorted({t for p in patterns for t in p})
    for node in range(len(children)):
        exc = {}
        for token in alphabet:
            dest = goto(node, token)
            dest = sink if terminal[dest] else dest
            if dest != 0:
                exc[token] = dest
        states.append((0, exc))
    states.append((sink, {}))
    return _renumber_bfs(Dfa(alphabet_size, 0, {sink}, states))


def _check_pattern(pattern: Sequence[int], alphabet_size: int) -> list[int]:
    pattern = [int(t) for t in pattern]
    if not pattern:
        raise InputError("pattern must be non-empty")
    for token in pattern:
        if not 0 <= token < alphabet_size:
            raise InputError(f"pattern token {token} out of range [0, {alphabet_size})")
    return pattern


# ---------------------------------------------------------------------------
# Products and closure operations


def _product(d1: Dfa, d2: Dfa, accept_rule) -> Dfa:
    if d1.alphabet_size != d2.alphabet_size:
        raise InputError(
            f"alphabet mismatch: {d1.alphabet_size} vs {d2.alphabet_size}"
        )
    start = (d1.initial, d2.initial)
    ids = {start: 0}
    queue = deque([start])
    states: list[tuple[int, dict[int, int]]] = []
    accepting = set()

    def visit(pair) -> int:
        sid = ids.get(pair)
        if sid is None:
            sid = len(ids)
            ids[pair] = sid
            queue.append(pair)
        return sid

    while queue:
        s1, s2 = queue.popleft()
        default_pair = (d1.defaults[s1], d2.defaults[s2])
        merged = sorted(set(d1.exceptions[s1]) | set(d2.exceptions[s2]))
        exc = {}
        for token in merged:
            pair = (d1.step(s1, token), d2.step(s2, token))
            if pair != default_pair:
                exc[token] = pair
        sid = ids[(s1, s2)]
        if accept_rule(s1 in d1.accepting, s2 in d2.accepting):
            accepting.add(sid)
        resolved = {token: visit(pair) for token, pair in exc.items()}
        default_id = visit(default_pair)
        while len(states) <= sid:
            states.append((0, {}))
        states[sid] = (default_id, resolved)

    return Dfa(d1.alphabet_size, 0, accepting, states)


def intersect(d1: Dfa, d2: Dfa) -> Dfa:
    """Product construction accepting L(d1) AND L(d2); only reachable
    product states are kept."""
    return _product(d1, d2, lambda a, b: a and b)


def union(d1: Dfa, d2: Dfa) -> Dfa:
    """Product construction accepting L(d1) OR L(d2)."""
    return _product(d1, d2, lambda a, b: a or b)


def complement(dfa: Dfa) -> Dfa:
    """Flip accepting states over the same (total) transition structure."""
    flipped = set(range(dfa.num_states)) - dfa.accepting
    states = [(dfa.defaults[i], dict(dfa.exceptions[i])) for i in range(dfa.num_states)]
    return Dfa(dfa.alphabet_size, dfa.initial, flipped, states)


def is_dead_state(dfa: Dfa, state: int) -> bool:
    """Non-accepting and every transition loops back to itself."""
    if state in dfa.accepting:
        return False
    if dfa.defaults[state] != state:
        return False
    return all(dest == state for dest in dfa.exceptions[state].values())


def concat_via_merge(d1: Dfa, d2: Dfa) -> Dfa:
    """Concatenate two automata by merging d1's accept states with d2's
    initial state.

    Requires the structural precondition that every accept state of d1
    transitions only to dead states; this makes each accepted string of d1
    a maximal match point, so redirecting every transition that enters an
    accept state of d1 into d2's initial state yields exactly
    {uv : u in L(d1), v in L(d2)}.
    """
    if d1.alphabet_size != d2.alphabet_size:
        raise InputError(
            f"alphabet mismatch: {d1.alphabet_size} vs {d2.alphabet_size}"
        )
    for state in sorted(d1.accepting):
        dests = set(d1.exceptions[state].values()) | {d1.defaults[state]}
        for dest in dests:
            if not is_dead_state(d1, dest):
                raise StructuralError(
                    f"accept state {state} of the left automaton reaches live state "
                    f"{dest}; concatenation by merge requires accept states to exit "
                    "only into dead states"
                )

    offset = d1.num_states
    entry = offset + d2.initial

    def redirect(dest: int) -> int:
        return entry if dest in d1.accepting else dest

    states: list[tuple[int, dict[int, int]]] = []
    for i in range(d1.num_states):
        exc = {t: redirect(d) for t, d in d1.exceptions[i].items()}
        states.append((redirect(d1.defaults[i]), exc))
    for i in range(d2.num_states):
        exc = {t: d + offset for t, d in d2.exceptions[i].items()}
        states.append((d2.defaults[i] + offset, exc))

    initial = entry if d1.initial in d1.accepting else d1.initial
    accepting = {s + offset for s in d2.accepting}
    return _renumber_bfs(Dfa(d1.alphabet_size, initial, accepting, states))


# ---------------------------------------------------------------------------
# Content-shape automata (fixed-length sequences: content, EOS, padding)


def build_length_window_dfa(
    a: int,
    b: int,
    word_boundary_tokens: Iterable[int],
    eos_token: int,
    pad_token: int,
    alphabet_size: int,
) -> Dfa:
    """Accepts iff the content before ``eos_token`` contains between ``a``
    and ``b`` words, where a word is a maximal run of non-boundary tokens,
    and everything after EOS is ``pad_token``.

    Counting states are capped one past ``b``; overflowing the window falls
    into a reject sink.
    """
    if not 1 <= a <= b:
        raise InputError(f"need 1 <= a <= b, got a={a}, b={b}")
    eos_token = int(eos_token)
    pad_token = int(pad_token)
    boundary = sorted({int(t) for t in word_boundary_tokens} - {eos_token})

    # Node keys: ("c", words, in_word) while reading content, "done", "dead".
    ids: dict = {}
    worklist: list = []

    def intern(key) -> int:
        if key not in ids:
            ids[key] = len(ids)
            worklist.append(key)
        return ids[key]

    start = intern(("c", 0, False))
    transitions: dict[int, tuple[int, dict[int, int]]] = {}
    idx = 0
    while idx < len(worklist):
        key = worklist[idx]
        sid = ids[key]
        idx += 1
        if key == "done":
            transitions[sid] = (intern("dead"), {pad_token: sid})
        elif key == "dead":
            transitions[sid] = (sid, {})
        else:
            _, words, in_word = key
            exc = {eos_token: intern("done" if a <= words <= b else "dead")}
            for t in boundary:
                exc[t] = intern(("c", words, False))
            if in_word:
                default = intern(("c", words, True))
            elif words + 1 <= b:
                default = intern(("c", words + 1, True))
            else:
                default = intern("dead")  # overflow reject sink
            transitions[sid] = (default, exc)

    states = [transitions[i] for i in range(len(ids))]
    accepting = {ids["done"]} if "done" in ids else set()
    return _renumber_bfs(Dfa(alphabet_size, start, accepting, states))


def build_end_with_dfa(
    phrase: Sequence[int],
    alphabet_size: int,
    eos_token: int,
    pad_token: int,
) -> Dfa:
    """Accepts iff the content before ``eos_token`` ends exactly with
    ``phrase`` (re-matching allowed, so only the final occurrence matters)
    and the remainder of the sequence is padding."""
    phrase = _check_pattern(phrase, alphabet_size)
    eos_token = int(eos_token)
    pad_token = int(pad_token)
    if eos_token in phrase or pad_token in phrase:
        raise InputError("phrase may not contain the EOS or PAD token")
    length = len(phrase)
    rows = kmp_transition_rows(phrase, include_final_row=True)
    done = length + 1
    dead = length + 2
    states: list[tuple[int, dict[int, int]]] = []
    for i in range(length + 1):
        exc = dict(rows[i])
        exc[eos_token] = done if i == length else dead
        states.append((0, exc))
    states.append((dead, {pad_token: done}))  # done
    states.append((dead, {}))  # dead
    return _renumber_bfs(Dfa(alphabet_size, 0, {done}, states))


def build_padding_dfa(alphabet_size: int, eos_token: int, pad_token: int) -> Dfa:
    """Well-formed fixed-length shape: content tokens, one EOS, then padding."""
    eos_token = int(eos_token)
    pad_token = int(pad_token)
    if eos_token == pad_token:
        raise InputError("EOS and PAD must be distinct tokens")
    content, done, dead = 0, 1, 2
    states = [
        (content, {eos_token: done, pad_token: dead}),
        (dead, {pad_token: done}),
        (dead, {}),
    ]
    return Dfa(alphabet_size, content, {done}, states)


# ---------------------------------------------------------------------------
# Pruning and canonicalization


def _reachable(dfa: Dfa) -> list[int]:
    seen = {dfa.initial}
    order = [dfa.initial]
    queue = deque(order)
    while queue:
        state = queue.popleft()
        for token in sorted(dfa.exceptions[state]):
            dest = dfa.exceptions[state][token]
            if dest not in seen:
                seen.add(dest)
                order.append(dest)
                queue.append(dest)
        dest = dfa.defaults[state]
        if dest not in seen:
            seen.add(dest)
            order.append(dest)
            queue.append(dest)
    return order


def _renumber_bfs(dfa: Dfa) -> Dfa:
    """Renumber states by BFS discovery order, dropping unreachable ones."""
    order = _reachable(dfa)
    remap = {old: new for new, old in enumerate(order)}
    states = []
    for old in order:
        exc = {t: remap[d] for t, d in dfa.exceptions[old].items()}
        states.append((remap[dfa.defaults[old]], exc))
    accepting = {remap[s] for s in dfa.accepting if s in remap}
    return Dfa(dfa.alphabet_size, remap[dfa.initial], accepting, states)


def prune_dead(dfa: Dfa) -> Dfa:
    """Collapse every state that cannot reach an accepting state into a
    single canonical dead state; the accepted language is unchanged."""
    reachable = set(_reachable(dfa))
    reverse: dict[int, set[int]] = {s: set() for s in reachable}
    for state in reachable:
        dests = set(dfa.exceptions[state].values()) | {dfa.defaults[state]}
        for dest in dests:
            if dest in reachable:
                reverse[dest].add(state)
    live = set()
    queue = deque(s for s in dfa.accepting if s in reachable)
    while queue:
        state = queue.popleft()
        if state in live:
            continue
        live.add(state)
        queue.extend(reverse[state] - live)

    if dfa.initial not in live:
        return reject_all_dfa(dfa.alphabet_size)

    dead_needed = any(
        dest not in live
        for state in live
        for dest in set(dfa.exceptions[state].values()) | {dfa.defaults[state]}
    )
    order = [s for s in _reachable(dfa) if s in live]
    remap = {old: new for new, old in enumerate(order)}
    dead_id = len(order)
    states = []
    for old in order:
        exc = {
            t: (remap[d] if d in live else dead_id)
            for t, d in dfa.exceptions[old].items()
        }
        default = dfa.defaults[old]
        states.append(((remap[default] if default in live else dead_id), exc))
    if dead_needed:
        states.append((dead_id, {}))
    accepting = {remap[s] for s in dfa.accepting if s in live}
    return _renumber_bfs(Dfa(dfa.alphabet_size, remap[dfa.initial], accepting, states))


def has_nonempty_language(dfa: Dfa) -> bool:
    return bool(prune_dead(dfa).accepting)


# ---------------------------------------------------------------------------
# Serialization


def dfa_to_json(dfa: Dfa) -> dict:
    return {
        "version": DFA_JSON_VERSION,
        "num_states": dfa.num_states,
        "alphabet_size": dfa.alphabet_size,
        "initial": dfa.initial,
        "accepts": sorted(dfa.accepting),
        "states": [
            {
                "default_dest": dfa.defaults[i],
                "exceptions": {str(t): d for t, d in sorted(dfa.exceptions[i].items())},
            }
            for i in range(dfa.num_states)
        ],
    }


def dfa_from_json(obj: dict) -> Dfa:
    if obj.get("version") != DFA_JSON_VERSION:
        raise InputError(f"unsupported DFA serialization version {obj.get('version')}")
    states = [
        (entry["default_dest"], {int(t): d for t, d in entry["exceptions"].items()})
        for entry in obj["states"]
    ]
    if len(states) != obj["num_states"]:
        raise InputError("state count mismatch in DFA serialization")
    return Dfa(obj["alphabet_size"], obj["initial"], set(obj["accepts"]), states)


def save_dfa(dfa: Dfa, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(dfa_to_json(dfa), fh, sort_keys=True)


def load_dfa(path) -> Dfa:
    with open(path, encoding="utf-8") as fh:
        return dfa_from_json(json.load(fh))


def to_dot(dfa: Dfa, token_labels=None) -> str:
    """Graphviz rendering with token-set edge labels."""

    def label(token: int) -> str:
        if token_labels is not None:
            return str(token_labels(token))
        return str(token)

    lines = ["digraph dfa {", "  rankdir=LR;", '  start [shape=point, label=""];']
    for state in range(dfa.num_states):
        shape = "doublecircle" if state in dfa.accepting else "circle"
        lines.append(f"  q{state} [shape={shape}, label=\"q{state}\"];")
    lines.append(f"  start -> q{dfa.initial};")
    for edge in edge_sets(dfa):
        if edge.is_default:
            if edge.excluded:
                excluded = ",".join(label(t) for t in sorted(edge.excluded))
                text = f"* \\\\ {{{excluded}}}"
            else:
                text = "*"
        else:
            text = ",".join(label(t) for t in sorted(edge.tokens))
        lines.append(f"  q{edge.source} -> q{edge.dest} [label=\"{text}\"];")
    lines.append("}")
    return "\n".join(lines)
