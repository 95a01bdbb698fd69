"""Desk-scale word-level tokenizer for the CLI and service layers.

Reserved ids 0, 1, 2 are EOS, PAD, and UNK; id 3 is the explicit word
separator emitted between words. Words are whitespace-split, lowercased,
and stripped of punctuation. Because word boundaries are explicit tokens,
word counting over token sequences is exactly "maximal runs of
non-separator tokens", matching the automata's notion of a word.
"""

from __future__ import annotations

import re

from .constraints import ConstraintSpec, GapWindow, Segment
from .errors import InputError

EOS_ID = 0
PAD_ID = 1
UNK_ID = 2
SPACE_ID = 3
NUM_RESERVED = 4

RESERVED_NAMES = {EOS_ID: "<eos>", PAD_ID: "<pad>", UNK_ID: "<unk>", SPACE_ID: "<sp>"}

_WORD_RE = re.compile(r"[a-z0-9']+")


def normalize_words(text: str) -> list[str]:
    return _WORD_RE.findall(text.lower())


class WordTokenizer:
    def __init__(self, words):
        words = list(words)
        if len(set(words)) != len(words):
            raise InputError("vocabulary contains duplicate words")
        self._id_of = {w: NUM_RESERVED + i for i, w in enumerate(words)}
        self._word_of = {i: w for w, i in self._id_of.items()}
        self.vocab_size = NUM_RESERVED + len(words)

    @classmethod
    def from_texts(cls, lines) -> "WordTokenizer":
        vocab = sorted({w for line in lines for w in normalize_words(line)})
        return cls(vocab)

    @property
    def word_boundary_tokens(self) -> frozenset:
        return frozenset({SPACE_ID})

    def encode(self, text: str, strict: bool = False) -> list[int]:
        """Token ids with explicit separators between words.

        With ``strict`` set, unknown words raise instead of mapping to the
        unknown id; constraints must be exact.
        """
        words = normalize_words(text)
        unknown = [w for w in words if w not in self._id_of]
        if strict and unknown:
            raise InputError(f"unknown words: {', '.join(sorted(set(unknown)))}")
        ids: list[int] = []
        for word in words:
            if ids:
                ids.append(SPACE_ID)
            ids.append(self._id_of.get(word, UNK_ID))
        return ids

    def decode(self, ids) -> str:
        """Text rendering: runs of word tokens joined directly, runs
        separated by single spaces, stopping at EOS."""
        parts: list[str] = []
        run: list[str] = []
        for token in ids:
            token = int(token)
            if token == EOS_ID:
                break
            if token == SPACE_ID:
                if run:
                    parts.append("".join(run))
                    run = []
                continue
            if token == PAD_ID:
                continue
            run.append(self._word_of.get(token, RESERVED_NAMES.get(token, "<unk>")))
        if run:
            parts.append("".join(run))
        return " ".join(parts)

    def pad_to(self, ids, n: int) -> list[int]:
        """content + EOS + padding, truncating content to fit n tokens."""
        if n < 1:
            raise InputError("n must be >= 1")
        content = list(ids)[: n - 1]
        if content and content[-1] == SPACE_ID:
            content = content[:-1]
        return content + [EOS_ID] + [PAD_ID] * (n - 1 - len(content))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for i in range(NUM_RESERVED, self.vocab_size):
                fh.write(self._word_of[i] + "\n")

    @classmethod
    def load(cls, path) -> "WordTokenizer":
        with open(path, encoding="utf-8") as fh:
            words = [line.strip() for line in fh if line.strip()]
        return cls(words)


def parse_constraint_json(obj: dict, tokenizer: WordTokenizer, default_horizon: int = 24) -> ConstraintSpec:
    """Translate the string-level constraint JSON into a token-level spec.

    Unknown words in any constraint field are an input error; silently
    substituting the unknown token would change the constraint.
    """
    if not isinstance(obj, dict):
        raise InputError("constraint must be a JSON object")

    def phrase(text) -> tuple:
        if not isinstance(text, str) or not text.strip():
            raise InputError(f"expected a non-empty phrase, got {text!r}")
        return tuple(tokenizer.encode(text, strict=True))

    groups = []
    for group in obj.get("keyphrases", []):
        if isinstance(group, str):
            group = [group]
        groups.append(tuple(phrase(v) for v in group))

    segments = []
    raw_segments = obj.get("ordered_segments", [])
    for entry in raw_segments:
        if isinstance(entry, str):
            segments.append(Segment(phrase(entry)))
            continue
        gap = entry.get("gap_after")
        segments.append(
            Segment(
                phrase(entry["text"]),
                None if gap is None else GapWindow(int(gap["min"]), int(gap["max"])),
            )
        )

    word_length = obj.get("word_length")
    end_phrase = obj.get("end_phrase")
    return ConstraintSpec(
        vocab_size=tokenizer.vocab_size,
        horizon=int(obj.get("horizon", default_horizon)),
        keyphrase_groups=tuple(groups),
        ordered_segments=tuple(segments),
        word_length=None if word_length is None else (int(word_length["min"]), int(word_length["max"])),
        end_phrase=None if end_phrase is None else phrase(end_phrase),
        forbidden=tuple(phrase(p) for p in obj.get("forbidden", [])),
        eos_token=EOS_ID,
        pad_token=PAD_ID,
        word_boundary_tokens=tokenizer.word_boundary_tokens,
    )
