"""Base language-model seam and HMM distillation.

A base model only needs ``vocab_size`` and ``next_token_logits(prefix)``;
``sequence_loglik`` is optional. Two reference models ship here: an HMM
adapter (exactness tests, default desk-scale engine) and an n-gram model
with add-k smoothing. Distillation samples a fixed-length corpus from the
base model and fits the guide HMM to it with EM restarts.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, runtime_checkable

import numpy as np
from scipy.special import logsumexp

from .errors import InputError
from .hmm import Hmm, fit_baum_welch, forward_init, forward_step, log_matvec, sequence_loglik


@runtime_checkable
class BaseLm(Protocol):
    vocab_size: int

    def next_token_logits(self, prefix) -> np.ndarray: ...


def lm_sequence_loglik(base_lm, tokens, prefix=()) -> float:
    """log p(tokens | prefix) under the base model; generic fallback walks
    the model one token at a time."""
    fn = getattr(base_lm, "sequence_loglik", None)
    if fn is not None:
        return float(fn(tokens, prefix=prefix))
    total = 0.0
    ctx = tuple(int(t) for t in prefix)
    for token in tokens:
        logits = np.asarray(base_lm.next_token_logits(ctx), dtype=np.float64)
        total += float(logits[token] - logsumexp(logits))
        ctx = ctx + (int(token),)
    return total


class HmmLm:
    """An HMM exposed through the base-model interface.

    Keeps the forward state of the last queried prefix so that decode
    loops, which extend the prefix one token at a time, pay O(h^2) per
    step instead of re-running the whole forward pass.
    """

    def __init__(self, hmm: Hmm):
        self.hmm = hmm
        self.vocab_size = hmm.vocab_size
        self._emis_lin = np.exp(hmm.log_emission)
        self._cached_prefix: tuple = ()
        self._cached_state = None

    def _forward_for(self, prefix: tuple):
        if prefix == self._cached_prefix:
            return self._cached_state
        state = None
        if (
            self._cached_state is not None
            and len(prefix) == len(self._cached_prefix) + 1
            and prefix[:-1] == self._cached_prefix
        ):
            state = forward_step(self.hmm, self._cached_state, prefix[-1])
        elif prefix:
            state = forward_init(self.hmm, prefix[0])
            for token in prefix[1:]:
                state = forward_step(self.hmm, state, token)
        self._cached_prefix = prefix
        self._cached_state = state
        return state

    def next_token_logits(self, prefix) -> np.ndarray:
        prefix = tuple(prefix)
        state = self._forward_for(prefix)
        if state is None:
            pred = self.hmm.log_initial
        else:
            pred = log_matvec(self.hmm.log_transition.T, state.log_alpha)
        c = pred.max()
        if c == -np.inf:
            return np.full(self.vocab_size, -np.inf)
        with np.errstate(divide="ignore"):
            return np.log(np.exp(pred - c) @ self._emis_lin) + c

    def sequence_loglik(self, tokens, prefix=()) -> float:
        tokens = [int(t) for t in tokens]
        prefix = [int(t) for t in prefix]
        if not tokens:
            return 0.0
        total = sequence_loglik(self.hmm, prefix + tokens)
        if not prefix:
            return total
        return total - sequence_loglik(self.hmm, prefix)


class NgramLm:
    """Count-based n-gram model with add-k smoothing and simple backoff."""

    def __init__(self, vocab_size: int, order: int = 3, add_k: float = 0.1):
        if order < 1:
            raise InputError("order must be >= 1")
        if add_k <= 0.0:
            raise InputError("add_k must be positive")
        self.vocab_size = int(vocab_size)
        self.order = int(order)
        self.add_k = float(add_k)
        self._counts: dict[tuple, np.ndarray] = {(): np.zeros(self.vocab_size)}

    def fit(self, sequences) -> "NgramLm":
        for seq in sequences:
            seq = [int(t) for t in seq]
            for t, token in enumerate(seq):
                if not 0 <= token < self.vocab_size:
                    raise InputError(f"token {token} out of range")
                for span in range(min(t, self.order - 1) + 1):
                    ctx = tuple(seq[t - span : t])
                    bucket = self._counts.get(ctx)
                    if bucket is None:
                        bucket = np.zeros(self.vocab_size)
                        self._counts[ctx] = bucket
                    bucket[token] += 1.0
        return self

    def next_token_logits(self, prefix) -> np.ndarray:
        prefix = tuple(int(t) for t in prefix)
        ctx = prefix[max(0, len(prefix) - (self.order - 1)) :]
        while ctx not in self._counts:
            ctx = ctx[1:]
        return np.log(self._counts[ctx] + self.add_k)


class UniformLm:
    """Every continuation equally likely."""

    def __init__(self, vocab_size: int):
        self.vocab_size = int(vocab_size)
        self._logits = np.zeros(self.vocab_size)

    def next_token_logits(self, prefix) -> np.ndarray:
        return self._logits


def _as_rng(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def shaped_next_token_logits(base_lm, prefix, n: int, eos_token: int, pad_token: int) -> np.ndarray:
    """Base-model logits constrained to the fixed-length sequence shape:
    no padding before EOS, forced EOS at the final position, deterministic
    padding afterwards."""
    v = base_lm.vocab_size
    position = len(prefix) + 1
    if position > n:
        raise InputError("prefix already fills the horizon")
    if eos_token in prefix:
        forced = np.full(v, -np.inf)
        forced[pad_token] = 0.0
        return forced
    if position == n:
        forced = np.full(v, -np.inf)
        forced[eos_token] = 0.0
        return forced
    logits = np.array(base_lm.next_token_logits(prefix), dtype=np.float64)
    logits[pad_token] = -np.inf
    if not np.isfinite(logits).any():
        raise InputError("base model places all mass on padding")
    return logits


def shaped_sequence_loglik(base_lm, tokens, n: int, eos_token: int, pad_token: int) -> float:
    """log-likelihood of a padded sequence under the shape-constrained model."""
    tokens = [int(t) for t in tokens]
    if len(tokens) != n:
        raise InputError(f"expected a length-{n} sequence")
    total = 0.0
    prefix: tuple = ()
    for token in tokens:
        logits = shaped_next_token_logits(base_lm, prefix, n, eos_token, pad_token)
        norm = logsumexp(logits)
        if logits[token] == -np.inf:
            return -np.inf
        total += float(logits[token] - norm)
        prefix = prefix + (token,)
    return total


def sample_corpus(
    base_lm,
    num_sequences: int,
    n: int,
    rng=None,
    *,
    eos_token: int = 0,
    pad_token: int = 1,
) -> np.ndarray:
    """Ancestral samples from the base model, each exactly n tokens in the
    shape content + EOS + padding."""
    if n < 1:
        raise InputError("n must be >= 1")
    if num_sequences < 1:
        raise InputError("num_sequences must be >= 1")
    rng = _as_rng(rng)
    out = np.full((num_sequences, n), pad_token, dtype=np.int64)
    for i in range(num_sequences):
        prefix: tuple = ()
        for t in range(n):
            logits = shaped_next_token_logits(base_lm, prefix, n, eos_token, pad_token)
            shifted = np.exp(logits - logits.max())
            cum = np.cumsum(shifted)
            token = int(np.searchsorted(cum, rng.random() * cum[-1], side="right").clip(0, len(cum) - 1))
            out[i, t] = token
            prefix = prefix + (token,)
            if token == eos_token:
                break
    return out


@dataclass
class DistillResult:
    hmm: Hmm
    report: dict


def distill(
    base_lm,
    num_sequences: int,
    n: int,
    num_hidden: int,
    *,
    seed: int = 0,
    max_iters: int = 100,
    tol: float = 1e-6,
    restarts: int = 3,
    smoothing: float = 1e-10,
    holdout_fraction: float = 0.1,
    eos_token: int = 0,
    pad_token: int = 1,
) -> DistillResult:
    """Sample a corpus from the base model and fit the guide HMM.

    EM runs ``restarts`` times from different seeded initializations and
    keeps the fit with the best held-out log-likelihood. The report
    estimates the approximation gap as the held-out cross-entropy
    difference between the (shape-constrained) base model and the fit,
    in nats per token.
    """
    corpus = sample_corpus(
        base_lm, num_sequences, n, np.random.default_rng([seed, 0]),
        eos_token=eos_token, pad_token=pad_token,
    )
    num_held = max(1, int(round(holdout_fraction * num_sequences)))
    if num_held >= num_sequences:
        raise InputError("holdout fraction leaves no training data")
    held, train = corpus[:num_held], corpus[num_held:]

    best = None
    for restart in range(restarts):
        fitted, trace = fit_baum_welch(
            train,
            num_hidden,
            max_iters=max_iters,
            tol=tol,
            rng=np.random.default_rng([seed, 1 + restart]),
            vocab_size=base_lm.vocab_size,
            smoothing=smoothing,
            return_trace=True,
        )
        held_ll = float(np.mean([sequence_loglik(fitted, s) for s in held])) / n
        if best is None or held_ll > best[1]:
            best = (fitted, held_ll, trace)
    fitted, held_ll, trace = best

    base_ll = float(
        np.mean([shaped_sequence_loglik(base_lm, s, n, eos_token, pad_token) for s in held])
    ) / n
    report = {
        "num_sequences": int(num_sequences),
        "horizon": int(n),
        "num_hidden": int(num_hidden),
        "held_out_sequences": int(num_held),
        "held_out_loglik_hmm": held_ll,
        "held_out_loglik_base": base_ll,
        "gap_nats_per_token": base_ll - held_ll,
        "em_restarts": int(restarts),
        "loglik_trace": [float(x) for x in trace],
    }
    return DistillResult(hmm=fitted, report=report)
