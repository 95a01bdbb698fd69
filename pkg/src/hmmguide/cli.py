"""Command-line pipeline: tokenize, train, generate, eval, bench, serve.

Exit codes: 0 success, 2 malformed input, 3 unsatisfiable constraint,
4 internal invariant violation. Every command is deterministic for a fixed
--seed (timing fields excepted).
"""

from __future__ import annotations

import argparse
import json
import sys
import time

import numpy as np

from .constraints import compile_report
from .distill import HmmLm, NgramLm, UniformLm, lm_sequence_loglik
from .dfa import build_substring_dfa, num_edge_sets
from .engine import benchmark_per_token, precompute_backward, sample_and_rerank
from .errors import (
    GuidanceError,
    InputError,
    InvariantError,
    UnsatisfiableConstraintError,
)
from .hmm import Hmm, fit_baum_welch, load_hmm, save_hmm
from .oracle import naive_constraint_check
from .tokenizer import WordTokenizer, parse_constraint_json

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_UNSATISFIABLE = 3
EXIT_INVARIANT = 4


def _read_corpus(path, expect_n=None):
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                tokens = [int(tok) for tok in line.split()]
            except ValueError as exc:
                raise InputError(f"{path}: line {lineno}: {exc}") from exc
            if expect_n is None:
                expect_n = len(tokens)
            if len(tokens) != expect_n:
                raise InputError(
                    f"{path}: line {lineno}: expected {expect_n} tokens, got {len(tokens)}"
                )
            rows.append(tokens)
    if not rows:
        raise InputError(f"{path}: corpus is empty")
    return np.array(rows, dtype=np.int64)


def _load_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"{path}: {exc}") from exc


def _dump_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _make_base_lm(name, hmm, tokenizer, args):
    if name == "hmm":
        return HmmLm(hmm)
    if name == "uniform":
        return UniformLm(hmm.vocab_size)
    if name == "ngram":
        if not args.ngram_text:
            raise InputError("--ngram-text is required with --base-lm ngram")
        with open(args.ngram_text, encoding="utf-8") as fh:
            lines = [line for line in fh if line.strip()]
        sequences = [
            tokenizer.pad_to(tokenizer.encode(line), args.horizon or 24) for line in lines
        ]
        return NgramLm(hmm.vocab_size, order=args.ngram_order).fit(sequences)
    raise InputError(f"unknown base LM {name!r}")


def cmd_tokenize(args) -> int:
    with open(args.text, encoding="utf-8") as fh:
        lines = [line for line in fh if line.strip()]
    tokenizer = WordTokenizer.from_texts(lines)
    tokenizer.save(args.vocab_out)
    with open(args.corpus_out, "w", encoding="utf-8") as fh:
        for line in lines:
            ids = tokenizer.pad_to(tokenizer.encode(line), args.n)
            fh.write(" ".join(str(t) for t in ids) + "\n")
    print(f"vocab_size={tokenizer.vocab_size} sequences={len(lines)} n={args.n}")
    return EXIT_OK


def cmd_train(args) -> int:
    corpus = _read_corpus(args.corpus, expect_n=args.n)
    vocab_size = args.vocab_size or int(corpus.max()) + 1
    hmm = fit_baum_welch(
        corpus,
        num_hidden=args.hidden,
        max_iters=args.iters,
        tol=args.tol,
        rng=np.random.default_rng(args.seed),
        vocab_size=vocab_size,
    )
    save_hmm(hmm, args.out)
    print(f"trained h={args.hidden} vocab={vocab_size} sequences={len(corpus)} -> {args.out}")
    return EXIT_OK


def cmd_generate(args) -> int:
    hmm = load_hmm(args.model)
    tokenizer = WordTokenizer.load(args.vocab)
    if tokenizer.vocab_size != hmm.vocab_size:
        raise InputError(
            f"vocabulary size {tokenizer.vocab_size} does not match model "
            f"vocabulary {hmm.vocab_size}"
        )
    constraint_obj = _load_json(args.constraint)
    spec = parse_constraint_json(constraint_obj, tokenizer, default_horizon=args.horizon or 24)
    report = compile_report(spec)
    if report.empty_language:
        print(
            f"unsatisfiable constraint: clause '{report.emptied_by}' empties the language",
            file=sys.stderr,
        )
        return EXIT_UNSATISFIABLE

    base_lm = _make_base_lm(args.base_lm, hmm, tokenizer, args)
    prefix = tuple(tokenizer.encode(args.prefix)) if args.prefix else ()
    mode = "logical_mask" if args.mode == "logical" else "probabilistic"
    table = precompute_backward(hmm, report.dfa, spec.horizon)
    started = time.perf_counter()
    try:
        result = sample_and_rerank(
            hmm,
            report.dfa,
            base_lm,
            spec.horizon,
            args.temperature,
            num_samples=args.num_samples,
            seed=args.seed,
            mode=mode,
            prefix=prefix,
            table=table,
            temperature_on_guidance=args.temperature_on_guidance,
        )
    except UnsatisfiableConstraintError:
        print("unsatisfiable constraint: no accepting completion has probability mass", file=sys.stderr)
        return EXIT_UNSATISFIABLE
    elapsed = time.perf_counter() - started

    best = result.best
    print(tokenizer.decode(best))
    if args.report:
        payload = {
            "satisfied": bool(naive_constraint_check(spec, best.tolist())),
            "loglik": float(result.logliks[result.best_index]),
            "tokens": [int(t) for t in best],
            "mode": mode,
            "seed": args.seed,
            "num_samples": args.num_samples,
            "temperature": args.temperature,
            "per_token_us": elapsed / (args.num_samples * spec.horizon) * 1e6,
            "dfa_states": report.dfa.num_states,
            "dfa_edges": num_edge_sets(report.dfa),
        }
        with open(args.report, "w", encoding="utf-8") as fh:
            fh.write(_dump_json(payload) + "\n")
    return EXIT_OK


def cmd_eval(args) -> int:
    dataset = _load_json(args.dataset)
    if not isinstance(dataset, list) or not dataset:
        raise InputError(f"{args.dataset}: expected a non-empty JSON list")
    hmm = load_hmm(args.model)
    tokenizer = WordTokenizer.load(args.vocab)
    base_lm = _make_base_lm(args.base_lm, hmm, tokenizer, args)
    satisfied = 0
    logliks = []
    for i, item in enumerate(dataset):
        try:
            tokens = [int(t) for t in item["tokens"]]
            spec = parse_constraint_json(item["constraint"], tokenizer, default_horizon=len(tokens))
        except (KeyError, TypeError) as exc:
            raise InputError(f"{args.dataset}: item {i}: {exc}") from exc
        if naive_constraint_check(spec, tokens):
            satisfied += 1
        logliks.append(lm_sequence_loglik(base_lm, tokens))
    metrics = {
        "num_items": len(dataset),
        "satisfaction_rate": satisfied / len(dataset),
        "mean_loglik": float(np.mean(logliks)),
    }
    print(_dump_json(metrics))
    return EXIT_OK


def cmd_bench(args) -> int:
    rng = np.random.default_rng(args.seed)
    h, v = args.hidden, args.vocab_size
    hmm = Hmm(
        log_initial=np.log(rng.dirichlet(np.ones(h))),
        log_transition=np.log(rng.dirichlet(np.ones(h), size=h)),
        log_emission=np.log(rng.dirichlet(np.ones(v), size=h)),
    )
    sizes = [int(s) for s in args.sizes.split(",")]
    family = []
    for target in sizes:
        length = max(2, target // 3)
        pattern = rng.integers(4, v, size=length).tolist()
        family.append(build_substring_dfa(pattern, v))
    report = benchmark_per_token(
        hmm, family, n_values=[args.n], repeats=args.repeats, rollouts=args.rollouts
    )
    csv = report.to_csv()
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(csv)
        print(f"wrote {args.out}")
    else:
        print(csv, end="")
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from .service import ServiceConfig, create_app

    config = ServiceConfig(
        model_path=args.model,
        vocab_path=args.vocab,
        horizon=args.horizon or 24,
        rerank_samples=args.num_samples,
        temperature=args.temperature,
    )
    uvicorn.run(create_app(config), host=args.host, port=args.port)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hmmguide")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("tokenize", help="build a vocabulary and a padded id corpus from text")
    p.add_argument("--text", required=True)
    p.add_argument("--vocab-out", required=True)
    p.add_argument("--corpus-out", required=True)
    p.add_argument("--n", type=int, default=24)
    p.set_defaults(func=cmd_tokenize)

    p = sub.add_parser("train", help="fit the guide model on an id corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--hidden", type=int, default=16)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--iters", type=int, default=50)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--vocab-size", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("generate", help="constrained generation with rerank")
    p.add_argument("--model", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--constraint", required=True, help="constraint JSON file")
    p.add_argument("--base-lm", default="hmm", choices=["hmm", "ngram", "uniform"])
    p.add_argument("--ngram-text", default=None)
    p.add_argument("--ngram-order", type=int, default=3)
    p.add_argument("--prefix", default="")
    p.add_argument("--num-samples", type=int, default=128)
    p.add_argument("--temperature", type=float, default=0.7)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mode", default="probabilistic", choices=["probabilistic", "logical"])
    p.add_argument(
        "--temperature-on-guidance", action="store_true",
        help="also temper the success-probability factor, not only the base model",
    )
    p.add_argument("--horizon", type=int, default=None)
    p.add_argument("--report", default=None)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("eval", help="constraint satisfaction and likelihood metrics")
    p.add_argument("--dataset", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--base-lm", default="hmm", choices=["hmm", "ngram", "uniform"])
    p.add_argument("--ngram-text", default=None)
    p.add_argument("--ngram-order", type=int, default=3)
    p.add_argument("--horizon", type=int, default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="per-token guidance overhead across automaton sizes")
    p.add_argument("--hidden", type=int, default=16)
    p.add_argument("--vocab-size", type=int, default=128)
    p.add_argument("--n", type=int, default=24)
    p.add_argument("--sizes", default="32,64,128,256")
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--rollouts", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("serve", help="run the HTTP suggestion service")
    p.add_argument("--model", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8321)
    p.add_argument("--horizon", type=int, default=24)
    p.add_argument("--num-samples", type=int, default=64)
    p.add_argument("--temperature", type=float, default=0.7)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (InputError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except UnsatisfiableConstraintError as exc:
        print(f"unsatisfiable constraint: {exc}", file=sys.stderr)
        return EXIT_UNSATISFIABLE
    except (InvariantError, GuidanceError) as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
