"""HTTP JSON API for interactive constrained suggestions.

Stateless request handling over artifacts loaded at startup. Each request
compiles its constraints (behind a small LRU cache keyed by the canonical
spec), samples a batch of guided continuations, reranks them by base-model
likelihood, and re-verifies every returned suggestion with the independent
clause checker before responding.

Insertion requests fold the document suffix into the constraint: the
suggestion window must end with the (truncated) suffix, and the word-count
window shifts by the suffix's own word count so it keeps measuring the
inserted text.
"""

from __future__ import annotations

import functools
import hashlib
import json
import os
import time
from dataclasses import dataclass

import numpy as np
from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel, Field

from . import __version__
from .constraints import ConstraintSpec, compile_report, spec_to_json
from .distill import HmmLm, lm_sequence_loglik
from .engine import precompute_backward, sample_and_rerank
from .errors import GuidanceError, InputError, UnsatisfiableConstraintError
from .hmm import load_hmm
from .oracle import naive_constraint_check
from .tokenizer import EOS_ID, SPACE_ID, WordTokenizer


@dataclass
class ServiceConfig:
    model_path: str
    vocab_path: str
    horizon: int = 24
    rerank_samples: int = 64
    temperature: float = 0.7
    max_suffix_tokens: int = 9
    cors_origins: tuple = ("*",)

    @classmethod
    def from_env(cls) -> "ServiceConfig":
        return cls(
            model_path=os.environ["HMMGUIDE_MODEL"],
            vocab_path=os.environ["HMMGUIDE_VOCAB"],
            horizon=int(os.environ.get("HMMGUIDE_HORIZON", "24")),
            rerank_samples=int(os.environ.get("HMMGUIDE_SAMPLES", "64")),
            temperature=float(os.environ.get("HMMGUIDE_TEMPERATURE", "0.7")),
        )


class WordRange(BaseModel):
    min: int = Field(ge=1, le=32)
    max: int = Field(ge=1, le=32)


class GenerateRequest(BaseModel):
    prefix: str = ""
    suffix: str | None = None
    keyphrases: list[list[str]] = Field(default_factory=list)
    word_length: WordRange | None = None
    num_suggestions: int = Field(default=4, ge=1, le=16)
    seed: int | None = None


class Suggestion(BaseModel):
    text: str
    loglik: float
    satisfied: bool
    tokens_per_second: float


class GenerateResponse(BaseModel):
    suggestions: list[Suggestion]
    horizon: int
    seed: int


def _token_word_count(tokens) -> int:
    count, in_word = 0, False
    for t in tokens:
        if t == SPACE_ID:
            in_word = False
        elif t != EOS_ID:
            if not in_word:
                count += 1
            in_word = True
    return count


class _Runtime:
    def __init__(self, config: ServiceConfig):
        self.config = config
        self.error: str | None = None
        self.hmm = None
        self.tokenizer = None
        self.base_lm = None
        self.fingerprint = None
        try:
            self.hmm = load_hmm(config.model_path)
            self.tokenizer = WordTokenizer.load(config.vocab_path)
            if self.tokenizer.vocab_size != self.hmm.vocab_size:
                raise InputError(
                    f"vocabulary size {self.tokenizer.vocab_size} does not match "
                    f"model vocabulary {self.hmm.vocab_size}"
                )
            self.base_lm = HmmLm(self.hmm)
            with open(config.model_path, "rb") as fh:
                self.fingerprint = hashlib.sha256(fh.read()).hexdigest()
        except (OSError, GuidanceError) as exc:
            self.error = str(exc)

    @property
    def loaded(self) -> bool:
        return self.error is None

    def build_spec(self, request: GenerateRequest) -> tuple[ConstraintSpec, tuple]:
        tok = self.tokenizer
        groups = []
        for group in request.keyphrases:
            variants = []
            for variant in group:
                try:
                    ids = tuple(tok.encode(variant, strict=True))
                except InputError as exc:
                    raise HTTPException(status_code=400, detail=str(exc)) from exc
                if not ids:
                    raise HTTPException(status_code=400, detail=f"empty keyphrase {variant!r}")
                variants.append(ids)
            if variants:
                groups.append(tuple(variants))

        end_phrase = None
        suffix_tokens: tuple = ()
        if request.suffix:
            try:
                ids = tok.encode(request.suffix, strict=True)
            except InputError as exc:
                raise HTTPException(status_code=400, detail=str(exc)) from exc
            budget = min(len(ids), self.config.max_suffix_tokens)
            suffix_tokens = tuple(ids[:budget])
            if suffix_tokens and suffix_tokens[-1] == SPACE_ID:
                suffix_tokens = suffix_tokens[:-1]
            if suffix_tokens:
                end_phrase = suffix_tokens

        word_length = None
        if request.word_length is not None:
            lo, hi = request.word_length.min, request.word_length.max
            if lo > hi:
                raise HTTPException(status_code=400, detail="word_length.min exceeds max")
            shift = _token_word_count(suffix_tokens)
            word_length = (lo + shift, hi + shift)

        try:
            spec = ConstraintSpec(
                vocab_size=tok.vocab_size,
                horizon=self.config.horizon,
                keyphrase_groups=tuple(groups),
                word_length=word_length,
                end_phrase=end_phrase,
                word_boundary_tokens=tok.word_boundary_tokens,
            )
        except InputError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        return spec, suffix_tokens


@functools.lru_cache(maxsize=64)
def _compile_cached(spec_key: str):
    import warnings

    from .constraints import spec_from_json

    spec = spec_from_json(json.loads(spec_key))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return compile_report(spec)


def create_app(config: ServiceConfig) -> FastAPI:
    app = FastAPI(title="hmmguide", version=__version__)
    app.add_middleware(
        CORSMiddleware,
        allow_origins=list(config.cors_origins),
        allow_methods=["*"],
        allow_headers=["*"],
    )
    runtime = _Runtime(config)
    app.state.runtime = runtime

    @app.get("/v1/health")
    def health():
        if not runtime.loaded:
            return {"status": "degraded", "version": __version__, "error": runtime.error}
        return {"status": "ok", "version": __version__}

    @app.get("/v1/model")
    def model():
        if not runtime.loaded:
            raise HTTPException(status_code=503, detail="model not loaded")
        return {
            "fingerprint": runtime.fingerprint,
            "num_hidden": runtime.hmm.num_hidden,
            "vocab_size": runtime.hmm.vocab_size,
            "horizon": config.horizon,
            "version": __version__,
        }

    @app.post("/v1/generate", response_model=GenerateResponse)
    def generate(request: GenerateRequest):
        if not runtime.loaded:
            raise HTTPException(status_code=503, detail="model not loaded")
        spec, suffix_tokens = runtime.build_spec(request)
        report = _compile_cached(json.dumps(spec_to_json(spec), sort_keys=True))
        if report.empty_language:
            raise HTTPException(
                status_code=422,
                detail={
                    "error": "unsatisfiable_constraint",
                    "clause": report.emptied_by,
                    "message": f"clause '{report.emptied_by}' empties the language",
                },
            )

        seed = request.seed if request.seed is not None else int.from_bytes(os.urandom(4), "big")
        prefix = tuple(runtime.tokenizer.encode(request.prefix)) if request.prefix else ()
        table = precompute_backward(runtime.hmm, report.dfa, spec.horizon)
        started = time.perf_counter()
        try:
            result = sample_and_rerank(
                runtime.hmm,
                report.dfa,
                runtime.base_lm,
                spec.horizon,
                config.temperature,
                num_samples=max(config.rerank_samples, request.num_suggestions),
                seed=seed,
                prefix=prefix,
                table=table,
            )
        except UnsatisfiableConstraintError as exc:
            raise HTTPException(
                status_code=422,
                detail={
                    "error": "unsatisfiable_constraint",
                    "clause": "model_support",
                    "message": str(exc),
                },
            ) from exc
        elapsed = time.perf_counter() - started
        tokens_per_second = len(result.sequences) * spec.horizon / max(elapsed, 1e-9)

        order = np.argsort(-result.logliks, kind="stable")
        suggestions = []
        seen = set()
        for idx in order:
            tokens = result.sequences[idx]
            key = tuple(tokens.tolist())
            if key in seen:
                continue
            seen.add(key)
            satisfied = bool(naive_constraint_check(spec, tokens.tolist())) and report.dfa.accepts(
                tokens.tolist()
            )
            if not satisfied:
                continue  # never surface an unverified suggestion
            display = _strip_trailing_suffix(tokens.tolist(), suffix_tokens)
            suggestions.append(
                Suggestion(
                    text=runtime.tokenizer.decode(display),
                    loglik=float(result.logliks[idx]),
                    satisfied=True,
                    tokens_per_second=tokens_per_second,
                )
            )
            if len(suggestions) == request.num_suggestions:
                break
        return GenerateResponse(suggestions=suggestions, horizon=spec.horizon, seed=seed)

    return app


def _strip_trailing_suffix(tokens: list, suffix_tokens: tuple) -> list:
    """Drop the constrained suffix (and padding) from a window for display."""
    if EOS_ID in tokens:
        tokens = tokens[: tokens.index(EOS_ID)]
    if suffix_tokens and len(tokens) >= len(suffix_tokens):
        tail = tokens[len(tokens) - len(suffix_tokens) :]
        if tuple(tail) == tuple(suffix_tokens):
            tokens = tokens[: len(tokens) - len(suffix_tokens)]
            if tokens and tokens[-1] == SPACE_ID:
                tokens = tokens[:-1]
    return tokens


def main() -> None:
    import uvicorn

    config = ServiceConfig.from_env()
    uvicorn.run(
        create_app(config),
        host=os.environ.get("HMMGUIDE_HOST", "127.0.0.1"),
        port=int(os.environ.get("HMMGUIDE_PORT", "8321")),
    )


if __name__ == "__main__":
    main()
