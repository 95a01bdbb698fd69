"""Discrete hidden Markov models with log-space inference and EM training.

All probability parameters are stored as natural-log values; impossible
events are represented by -inf. Row-stochasticity is validated on
construction, so downstream inference can assume normalized parameters.
Sequences are fixed-length token-id arrays; variable-length content is
encoded by the caller as content, an end marker, and padding.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from .errors import InputError

ROW_SUM_ATOL = 1e-9

HMM_FILE_MAGIC = "hmmguide-hmm"
HMM_FILE_VERSION = 1


def _as_log_array(name: str, value, shape: tuple[int, ...]) -> np.ndarray:
    arr = np.array(value, dtype=np.float64)
    if arr.shape != shape:
        raise InputError(f"{name}: expected shape {shape}, got {arr.shape}")
    if np.isnan(arr).any() or np.isposinf(arr).any():
        raise InputError(f"{name}: entries must be finite or -inf")
    sums = np.exp(logsumexp(arr, axis=-1))
    if not np.allclose(sums, 1.0, rtol=0.0, atol=ROW_SUM_ATOL):
        worst = float(np.max(np.abs(sums - 1.0)))
        raise InputError(f"{name}: rows must exponentiate-sum to 1 (off by {worst:.3g})")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Hmm:
    """Log-space HMM parameters over a token vocabulary.

    Fields:
        log_initial: (h,) log p(z_1)
        log_transition: (h, h) log p(z_{t+1} | z_t), rows indexed by source state
        log_emission: (h, v) log p(x_t | z_t)
    """

    log_initial: np.ndarray
    log_transition: np.ndarray
    log_emission: np.ndarray

    def __post_init__(self):
        init = np.asarray(self.log_initial, dtype=np.float64)
        h = init.shape[0] if init.ndim == 1 else 0
        if h < 1:
            raise InputError("log_initial must be a non-empty vector")
        trans = np.asarray(self.log_transition, dtype=np.float64)
        if trans.ndim != 2 or trans.shape != (h, h):
            raise InputError(f"log_transition must be ({h}, {h})")
        emis = np.asarray(self.log_emission, dtype=np.float64)
        if emis.ndim != 2 or emis.shape[0] != h or emis.shape[1] < 1:
            raise InputError(f"log_emission must be ({h}, vocab_size)")
        object.__setattr__(self, "log_initial", _as_log_array("log_initial", init, (h,)))
        object.__setattr__(self, "log_transition", _as_log_array("log_transition", trans, (h, h)))
        object.__setattr__(self, "log_emission", _as_log_array("log_emission", emis, emis.shape))

    @property
    def num_hidden(self) -> int:
        return self.log_initial.shape[0]

    @property
    def vocab_size(self) -> int:
        return self.log_emission.shape[1]

    def fingerprint(self) -> str:
        digest = hashlib.sha256()
        digest.update(np.ascontiguousarray(self.log_initial).tobytes())
        digest.update(np.ascontiguousarray(self.log_transition).tobytes())
        digest.update(np.ascontiguousarray(self.log_emission).tobytes())
        return digest.hexdigest()


@dataclass(frozen=True)
class ForwardState:
    """Forward-algorithm state after consuming ``t`` tokens.

    ``log_alpha[z]`` holds log p(x_{<=t}, z_t = z) and ``log_evidence``
    equals logsumexp(log_alpha).
    """

    t: int
    log_alpha: np.ndarray
    log_evidence: float

    @property
    def is_degenerate(self) -> bool:
        """True when the consumed prefix has zero probability."""
        return self.log_evidence == -np.inf


def log_sum_exp(values: np.ndarray) -> float:
    """Scalar logsumexp with the usual max shift; -inf in, -inf out."""
    c = float(np.max(values))
    if c == -np.inf:
        return -np.inf
    return c + float(np.log(np.exp(values - c).sum()))


def _check_token(hmm: Hmm, token: int) -> int:
    token = int(token)
    if not 0 <= token < hmm.vocab_size:
        raise InputError(f"token {token} out of range [0, {hmm.vocab_size})")
    return token


def forward_init(hmm: Hmm, token: int) -> ForwardState:
    """Start the forward recursion with the first observed token."""
    token = _check_token(hmm, token)
    log_alpha = hmm.log_initial + hmm.log_emission[:, token]
    return ForwardState(t=1, log_alpha=log_alpha, log_evidence=log_sum_exp(log_alpha))


def forward_step(hmm: Hmm, state: ForwardState, token: int) -> ForwardState:
    """Advance the forward recursion by one observed token.

    Computes log p(x_{<=t}, z_t) = log sum_{z_{t-1}} p(x_t|z_t) p(z_t|z_{t-1})
    p(x_{<=t-1}, z_{t-1}) with a logsumexp over the previous hidden state.
    """
    if state.t < 1:
        raise InputError("forward_step requires an initialized state (t >= 1)")
    token = _check_token(hmm, token)
    pred = log_matvec(hmm.log_transition.T, state.log_alpha)
    log_alpha = pred + hmm.log_emission[:, token]
    return ForwardState(
        t=state.t + 1,
        log_alpha=log_alpha,
        log_evidence=log_sum_exp(log_alpha),
    )


def log_matvec(log_mat: np.ndarray, log_vec: np.ndarray) -> np.ndarray:
    """out[i] = logsumexp_j(log_mat[i, j] + log_vec[j]), -inf aware."""
    c = float(np.max(log_vec)) if log_vec.size else -np.inf
    if c == -np.inf:
        return np.full(log_mat.shape[0], -np.inf)
    lin = np.exp(log_vec - c) @ np.exp(log_mat).T
    with np.errstate(divide="ignore"):
        return np.log(lin) + c


def sequence_loglik(hmm: Hmm, tokens: Sequence[int]) -> float:
    """Return log p(x_{1:n}) under the model."""
    tokens = list(tokens)
    if not tokens:
        raise InputError("sequence_loglik requires a non-empty sequence")
    state = forward_init(hmm, tokens[0])
    for token in tokens[1:]:
        if state.is_degenerate:
            return -np.inf
        state = forward_step(hmm, state, token)
    return state.log_evidence


def _as_rng(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def sample_unconditional(hmm: Hmm, n: int, rng) -> np.ndarray:
    """Draw an n-token sequence by ancestral sampling.

    Deterministic for a fixed seed; ``rng`` may be a Generator or a seed.
    """
    if n < 1:
        raise InputError("n must be >= 1")
    rng = _as_rng(rng)
    initial = np.exp(hmm.log_initial)
    transition = np.exp(hmm.log_transition)
    emission = np.exp(hmm.log_emission)
    tokens = np.empty(n, dtype=np.int64)
    z = _sample_index(rng, initial)
    tokens[0] = _sample_index(rng, emission[z])
    for t in range(1, n):
        z = _sample_index(rng, transition[z])
        tokens[t] = _sample_index(rng, emission[z])
    return tokens


def _sample_index(rng: np.random.Generator, probs: np.ndarray) -> int:
    cum = np.cumsum(probs)
    return int(np.searchsorted(cum, rng.random() * cum[-1], side="right").clip(0, len(probs) - 1))


def sample_unconditional_batch(hmm: Hmm, num_sequences: int, n: int, rng) -> np.ndarray:
    """Ancestral sampling vectorized across sequences; returns (num, n) ids.

    Uses a different draw order than repeated ``sample_unconditional``
    calls, so the two are not stream-compatible for the same seed.
    """
    if n < 1 or num_sequences < 1:
        raise InputError("num_sequences and n must be >= 1")
    rng = _as_rng(rng)
    cum_init = np.cumsum(np.exp(hmm.log_initial))
    cum_trans = np.cumsum(np.exp(hmm.log_transition), axis=1)
    cum_emis = np.cumsum(np.exp(hmm.log_emission), axis=1)
    h = hmm.num_hidden

    def pick(cum_rows: np.ndarray, u: np.ndarray) -> np.ndarray:
        scaled = u * cum_rows[:, -1]
        return (cum_rows < scaled[:, None]).sum(axis=1).clip(0, cum_rows.shape[1] - 1)

    z = np.searchsorted(cum_init, rng.random(num_sequences) * cum_init[-1]).clip(0, h - 1)
    out = np.empty((num_sequences, n), dtype=np.int64)
    out[:, 0] = pick(cum_emis[z], rng.random(num_sequences))
    for t in range(1, n):
        z = pick(cum_trans[z], rng.random(num_sequences))
        out[:, t] = pick(cum_emis[z], rng.random(num_sequences))
    return out


def fit_baum_welch(
    corpus,
    num_hidden: int,
    max_iters: int = 100,
    tol: float = 1e-6,
    rng=None,
    *,
    vocab_size: int | None = None,
    smoothing: float = 1e-10,
    chunk_size: int = 1024,
    return_trace: bool = False,
):
    """Fit an HMM to a corpus of equal-length sequences with EM.

    Stops after ``max_iters`` iterations or when the per-token training
    log-likelihood improves by less than ``tol``. ``smoothing`` adds a tiny
    mass to every estimated row so later guidance never divides by a hard
    zero; set it to 0.0 to disable.

    Returns the fitted Hmm, or ``(hmm, trace)`` when ``return_trace`` is
    set, where ``trace`` is the total log-likelihood at the start of each
    iteration (non-decreasing up to float noise).
    """
    x = np.asarray(corpus, dtype=np.int64)
    if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] < 1:
        raise InputError("corpus must be a non-empty batch of equal-length sequences")
    if num_hidden < 1:
        raise InputError("num_hidden must be >= 1")
    if vocab_size is None:
        vocab_size = int(x.max()) + 1
    if x.min() < 0 or x.max() >= vocab_size:
        raise InputError(f"corpus tokens out of range [0, {vocab_size})")

    rng = _as_rng(rng)
    num_seqs, n = x.shape
    h, v = num_hidden, vocab_size

    initial = rng.dirichlet(np.ones(h))
    transition = rng.dirichlet(np.ones(h), size=h)
    emission = rng.dirichlet(np.ones(v), size=h)

    trace: list[float] = []
    for _ in range(max_iters):
        log_init = np.log(initial)
        log_trans = np.log(transition)
        log_emis = np.log(emission)

        init_acc = np.zeros(h)
        trans_acc = np.zeros((h, h))
        emis_acc_t = np.zeros((v, h))
        total_ll = 0.0

        for start in range(0, num_seqs, chunk_size):
            batch = x[start : start + chunk_size]
            total_ll += _accumulate_posteriors(
                batch, log_init, log_trans, log_emis, transition,
                init_acc, trans_acc, emis_acc_t,
            )

        trace.append(total_ll)
        initial = _normalize(init_acc[None, :], smoothing)[0]
        transition = _normalize(trans_acc * transition, smoothing)
        emission = _normalize(emis_acc_t.T, smoothing)

        if len(trace) >= 2 and (trace[-1] - trace[-2]) / (num_seqs * n) < tol:
            break

    hmm = Hmm(
        log_initial=np.log(initial),
        log_transition=np.log(transition),
        log_emission=np.log(emission),
    )
    if return_trace:
        return hmm, trace
    return hmm


def _normalize(rows: np.ndarray, smoothing: float) -> np.ndarray:
    rows = np.asarray(rows, dtype=np.float64)
    sums = rows.sum(axis=1, keepdims=True)
    # States with no responsibility fall back to uniform rows.
    safe = np.where(sums > 0.0, sums, 1.0)
    out = np.where(sums > 0.0, rows / safe, 1.0 / rows.shape[1])
    if smoothing > 0.0:
        out = out + smoothing
        out = out / out.sum(axis=1, keepdims=True)
    return out


def _accumulate_posteriors(
    batch: np.ndarray,
    log_init: np.ndarray,
    log_trans: np.ndarray,
    log_emis: np.ndarray,
    transition_lin: np.ndarray,
    init_acc: np.ndarray,
    trans_acc: np.ndarray,
    emis_acc_t: np.ndarray,
) -> float:
    """One E-step over a batch; adds expected counts in place, returns loglik."""
    bsz, n = batch.shape
    h = log_init.shape[0]
    la = np.empty((n, bsz, h))
    lb = np.empty((n, bsz, h))

    la[0] = log_init + log_emis[:, batch[:, 0]].T
    for t in range(1, n):
        la[t] = _log_batch_step(la[t - 1], transition_lin) + log_emis[:, batch[:, t]].T
    log_z = logsumexp(la[n - 1], axis=1)
    if not np.all(np.isfinite(log_z)):
        raise InputError("corpus contains a zero-probability sequence under current parameters")

    lb[n - 1] = 0.0
    for t in range(n - 2, -1, -1):
        w = log_emis[:, batch[:, t + 1]].T + lb[t + 1]
        lb[t] = _log_batch_step(w, transition_lin.T)

    init_acc += np.exp(la[0] + lb[0] - log_z[:, None]).sum(axis=0)
    for t in range(n):
        gamma = np.exp(la[t] + lb[t] - log_z[:, None])
        np.add.at(emis_acc_t, batch[:, t], gamma)
    for t in range(n - 1):
        shift = la[t].max(axis=1)
        shift = np.where(np.isfinite(shift), shift, 0.0)
        a_til = np.exp(la[t] - shift[:, None])
        e_til = np.exp(log_emis[:, batch[:, t + 1]].T + lb[t + 1] + (shift - log_z)[:, None])
        trans_acc += a_til.T @ e_til
    return float(log_z.sum())


def _log_batch_step(log_rows: np.ndarray, mat_lin: np.ndarray) -> np.ndarray:
    """out[b, j] = logsumexp_i(log_rows[b, i] + log mat_lin[i, j])."""
    c = log_rows.max(axis=1)
    safe = np.where(np.isfinite(c), c, 0.0)
    lin = np.exp(log_rows - safe[:, None])
    with np.errstate(divide="ignore"):
        out = np.log(lin @ mat_lin) + safe[:, None]
    out[~np.isfinite(c)] = -np.inf
    return out


def save_hmm(hmm: Hmm, path) -> None:
    """Write the model as a JSON header line followed by raw float64 blocks."""
    header = {
        "format": HMM_FILE_MAGIC,
        "version": HMM_FILE_VERSION,
        "num_hidden": hmm.num_hidden,
        "vocab_size": hmm.vocab_size,
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8"))
        fh.write(b"\n")
        fh.write(np.ascontiguousarray(hmm.log_initial).tobytes())
        fh.write(np.ascontiguousarray(hmm.log_transition).tobytes())
        fh.write(np.ascontiguousarray(hmm.log_emission).tobytes())


def load_hmm(path) -> Hmm:
    with open(path, "rb") as fh:
        header_line = fh.readline()
        try:
            header = json.loads(header_line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise InputError(f"{path}: not a model file ({exc})") from exc
        if header.get("format") != HMM_FILE_MAGIC:
            raise InputError(f"{path}: unrecognized model format")
        if header.get("version") != HMM_FILE_VERSION:
            raise InputError(f"{path}: unsupported model version {header.get('version')}")
        h = int(header["num_hidden"])
        v = int(header["vocab_size"])
        body = fh.read()
    expected = (h + h * h + h * v) * 8
    if len(body) != expected:
        raise InputError(f"{path}: truncated model file")
    init = np.frombuffer(body[: h * 8], dtype=np.float64).copy()
    trans = np.frombuffer(body[h * 8 : (h + h * h) * 8], dtype=np.float64).reshape(h, h).copy()
    emis = np.frombuffer(body[(h + h * h) * 8 :], dtype=np.float64).reshape(h, v).copy()
    return Hmm(log_initial=init, log_transition=trans, log_emission=emis)
