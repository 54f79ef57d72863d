"""Command-line interface: ingest, index, ask, eval, compare, sweep.

Exit codes: 0 success, 1 usage error, 2 data/validation error,
3 provider error after retries.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .corpus import chunk_document, load_chunks, load_corpus, load_qa_dataset, save_chunks
from .corpus import DEFAULT_MAX_CHARS, DEFAULT_OVERLAP_CHARS
from .embedding import BACKEND_MOCK, BACKEND_REMOTE, EmbeddingProviderConfig, create_embedder
from .errors import (
    DataFormatError,
    IndexFormatError,
    IntentRagError,
    ProviderError,
    UndefinedMetricError,
    ValidationError,
)
from .fusion import DEFAULT_OUTPUT_DEPTH, DEFAULT_SMOOTHING
from .hypothesis import MODE_NAIVE
from .index import build_index, load_index, save_index
from .llm import (
    BACKEND_REMOTE as LLM_BACKEND_REMOTE,
    BACKEND_SCRIPTED,
    LlmProviderConfig,
    TranscriptLog,
    load_transcript,
    script_from_transcript,
)
from .metrics import MatcherConfig
from .pipeline import (
    QueryPoolCache,
    StrategyConfig,
    compare_strategies,
    run_evaluation,
    run_question,
    sweep,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_PROVIDER = 3

_SWEEP_PARAM_ALIASES = {"smoothing": "fusion_smoothing", "depth": "output_depth",
                        "fusion_smoothing": "fusion_smoothing",
                        "output_depth": "output_depth"}


class _Parser(argparse.ArgumentParser):
    # argparse exits with code 2 on usage errors; this tool reserves 2 for
    # data errors, so remap.
    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _add_embedder_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--embedder", choices=["mock", "remote"], default="mock",
                        help="embedding backend (default: mock)")
    parser.add_argument("--model", default="token-hash-bow",
                        help="embedding model name")
    parser.add_argument("--dim", type=int, default=256, help="embedding dimension")
    parser.add_argument("--embed-seed", type=int, default=0,
                        help="seed for the deterministic mock embedder")
    parser.add_argument("--embed-endpoint", default=None,
                        help="remote embeddings base URL (or EMBED_BASE_URL)")


def _embedder_config(args) -> EmbeddingProviderConfig:
    backend = BACKEND_MOCK if args.embedder == "mock" else BACKEND_REMOTE
    return EmbeddingProviderConfig(backend_kind=backend, model_name=args.model,
                                   dim=args.dim, endpoint=args.embed_endpoint,
                                   seed=args.embed_seed)


def _add_llm_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--llm", choices=["scripted", "remote"], default=None,
                        help="LLM backend for query generation and answers")
    parser.add_argument("--llm-model", default="scripted", help="LLM model name")
    parser.add_argument("--llm-endpoint", default=None,
                        help="remote chat-completions base URL (or LLM_BASE_URL)")
    parser.add_argument("--llm-script", default=None,
                        help="transcript JSONL providing scripted responses")
    parser.add_argument("--temperature", type=float, default=0.7)
    parser.add_argument("--max-output-tokens", type=int, default=1024)


def _llm_config(args) -> LlmProviderConfig | None:
    if args.llm is None:
        return None
    if args.llm == "scripted":
        script = {}
        if args.llm_script:
            script = script_from_transcript(load_transcript(args.llm_script))
        return LlmProviderConfig(backend_kind=BACKEND_SCRIPTED,
                                 model_name=args.llm_model, script=script,
                                 temperature=args.temperature,
                                 max_output_tokens=args.max_output_tokens)
    return LlmProviderConfig(backend_kind=LLM_BACKEND_REMOTE,
                             model_name=args.llm_model,
                             endpoint=args.llm_endpoint,
                             temperature=args.temperature,
                             max_output_tokens=args.max_output_tokens)


def _add_strategy_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--strategy", default=MODE_NAIVE,
                        help="naive | single_hypothetical | multi_intent | "
                             "single_subject_split")
    parser.add_argument("--smoothing", type=int, default=DEFAULT_SMOOTHING,
                        help="RRF smoothing constant")
    parser.add_argument("--depth", type=int, default=DEFAULT_OUTPUT_DEPTH,
                        help="output depth of the fused ranking")
    parser.add_argument("--per-query-depth", type=int, default=DEFAULT_OUTPUT_DEPTH,
                        help="retrieval depth per intent query")
    parser.add_argument("--seed", type=int, default=0, help="run seed")
    parser.add_argument("--max-instances", type=int, default=5,
                        help="max hypothetical answer instances")


def _strategy_config(args, kind: str | None = None) -> StrategyConfig:
    return StrategyConfig(
        kind=kind or args.strategy,
        embedder=_embedder_config(args),
        llm=_llm_config(args),
        fusion_smoothing=args.smoothing,
        per_query_depth=args.per_query_depth,
        output_depth=args.depth,
        seed=args.seed,
        max_instances=args.max_instances,
    )


def _chunk_bodies(path: str | None) -> dict[str, str] | None:
    if path is None:
        return None
    return {chunk.id: chunk.body for chunk in load_chunks(path)}


def _write_transcripts(transcript: TranscriptLog, path: str | None) -> None:
    if path:
        transcript.write_jsonl(path)


def _cmd_ingest(args) -> int:
    docs = load_corpus(args.corpus)
    chunks = []
    for doc in docs:
        chunks.extend(chunk_document(doc, args.max_chars, args.overlap))
    save_chunks(chunks, args.out)
    print(json.dumps({"documents": len(docs), "chunks": len(chunks),
                      "out": args.out}))
    return EXIT_OK


def _cmd_index(args) -> int:
    chunks = load_chunks(args.chunks)
    provider = create_embedder(_embedder_config(args))
    index = build_index(chunks, provider)
    save_index(index, args.out)
    for warning in index.build_warnings:
        print(f"warning: {warning}", file=sys.stderr)
    print(json.dumps({"entries": len(index), "dim": index.dim, "out": args.out,
                      "warnings": len(index.build_warnings)}))
    return EXIT_OK


def _cmd_ask(args) -> int:
    from .corpus import QuestionRecord

    index = load_index(args.index)
    strategy = _strategy_config(args)
    transcript = TranscriptLog()
    record = QuestionRecord(id="adhoc", question=args.question)
    result = run_question(record, index, strategy, transcript=transcript)
    _write_transcripts(transcript, args.transcripts)
    payload = result.to_dict()
    bodies = _chunk_bodies(args.chunks)
    if bodies:
        for entry in payload["fused"]["entries"]:
            entry["body"] = bodies.get(entry["chunk_id"], "")
    print(json.dumps(payload, indent=2, ensure_ascii=False))
    return EXIT_OK


def _cmd_eval(args) -> int:
    dataset = load_qa_dataset(args.dataset)
    index = load_index(args.index)
    strategy = _strategy_config(args)
    matcher = MatcherConfig(kind=args.matcher)
    transcript = TranscriptLog()
    pool_cache = QueryPoolCache(args.cache_dir) if args.cache_dir else None
    report = run_evaluation(dataset, index, strategy, matcher,
                            chunk_bodies=_chunk_bodies(args.chunks),
                            workers=args.workers, transcript=transcript,
                            pool_cache=pool_cache)
    Path(args.out).write_text(report.to_json(), encoding="utf-8")
    if args.csv:
        Path(args.csv).write_text(report.to_csv(), encoding="utf-8")
    if args.markdown:
        Path(args.markdown).write_text(report.to_markdown(strategy.kind),
                                       encoding="utf-8")
    _write_transcripts(transcript, args.transcripts)
    print(json.dumps({"questions": report.question_count,
                      "failures": len(report.failures),
                      "aggregates": report.aggregates, "out": args.out}))
    return EXIT_OK


def _cmd_compare(args) -> int:
    dataset = load_qa_dataset(args.dataset)
    index = load_index(args.index)
    kinds = [kind.strip() for kind in args.strategies.split(",") if kind.strip()]
    if len(kinds) < 2:
        raise ValidationError("--strategies needs at least two comma-separated kinds")
    strategies = [_strategy_config(args, kind=kind) for kind in kinds]
    matcher = MatcherConfig(kind=args.matcher)
    pool_cache = QueryPoolCache(args.cache_dir) if args.cache_dir else None
    comparison = compare_strategies(dataset, index, strategies, matcher,
                                    chunk_bodies=_chunk_bodies(args.chunks),
                                    workers=args.workers, pool_cache=pool_cache)
    if args.out:
        Path(args.out).write_text(
            json.dumps(comparison.to_dict(), indent=2, sort_keys=True) + "\n",
            encoding="utf-8")
    print(comparison.to_markdown(), end="")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    dataset = load_qa_dataset(args.dataset)
    index = load_index(args.index)
    strategy = _strategy_config(args)
    matcher = MatcherConfig(kind=args.matcher)
    parameter = _SWEEP_PARAM_ALIASES.get(args.param)
    if parameter is None:
        raise ValidationError(f"unknown sweep parameter {args.param!r}")
    values = [int(v) for v in args.values.split(",") if v.strip()]
    pool_cache = QueryPoolCache(args.cache_dir) if args.cache_dir else None
    result = sweep(dataset, index, strategy, parameter, values, matcher,
                   chunk_bodies=_chunk_bodies(args.chunks),
                   pool_cache=pool_cache)
    Path(args.out).write_text(result.to_csv(), encoding="utf-8")
    print(json.dumps({"parameter": parameter, "values": values, "out": args.out}))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="intentrag",
                     description="Intent-aware RAG pipeline and evaluation harness")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="chunk a corpus file")
    p.add_argument("corpus", help="corpus JSONL (one document per line)")
    p.add_argument("--out", required=True, help="output chunks JSONL")
    p.add_argument("--max-chars", type=int, default=DEFAULT_MAX_CHARS)
    p.add_argument("--overlap", type=int, default=DEFAULT_OVERLAP_CHARS)
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("index", help="embed chunks and build a vector index")
    p.add_argument("chunks", help="chunks JSONL from ingest")
    p.add_argument("--out", required=True, help="output index file")
    _add_embedder_args(p)
    p.set_defaults(func=_cmd_index)

    p = sub.add_parser("ask", help="run the pipeline for one question")
    p.add_argument("question")
    p.add_argument("--index", required=True)
    p.add_argument("--chunks", default=None, help="chunks JSONL to show bodies")
    p.add_argument("--transcripts", default=None, help="write LLM transcript JSONL")
    _add_embedder_args(p)
    _add_llm_args(p)
    _add_strategy_args(p)
    p.set_defaults(func=_cmd_ask)

    p = sub.add_parser("eval", help="evaluate a strategy over a QA dataset")
    p.add_argument("dataset")
    p.add_argument("--index", required=True)
    p.add_argument("--chunks", default=None, help="chunks JSONL (needed for IRR/answers)")
    p.add_argument("--matcher", default="containment",
                   choices=["normalized_exact", "containment", "llm_judge"])
    p.add_argument("--out", required=True, help="report JSON path")
    p.add_argument("--csv", default=None, help="also write per-question CSV")
    p.add_argument("--markdown", default=None, help="also write a markdown table")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--transcripts", default=None)
    p.add_argument("--cache-dir", default=None, help="query pool cache directory")
    _add_embedder_args(p)
    _add_llm_args(p)
    _add_strategy_args(p)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("compare", help="compare strategies side by side")
    p.add_argument("dataset")
    p.add_argument("--index", required=True)
    p.add_argument("--chunks", default=None)
    p.add_argument("--strategies", required=True,
                   help="comma-separated strategy kinds, e.g. naive,multi_intent")
    p.add_argument("--matcher", default="containment",
                   choices=["normalized_exact", "containment", "llm_judge"])
    p.add_argument("--out", default=None, help="write full reports JSON")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--cache-dir", default=None)
    _add_embedder_args(p)
    _add_llm_args(p)
    _add_strategy_args(p)
    p.set_defaults(func=_cmd_compare)

    p = sub.add_parser("sweep", help="sweep a fusion parameter")
    p.add_argument("dataset")
    p.add_argument("--index", required=True)
    p.add_argument("--chunks", default=None)
    p.add_argument("--param", required=True,
                   help="smoothing | depth (aliases for fusion_smoothing / output_depth)")
    p.add_argument("--values", required=True, help="comma-separated integers")
    p.add_argument("--matcher", default="containment",
                   choices=["normalized_exact", "containment", "llm_judge"])
    p.add_argument("--out", required=True, help="plot-ready CSV path")
    p.add_argument("--cache-dir", default=None)
    _add_embedder_args(p)
    _add_llm_args(p)
    _add_strategy_args(p)
    p.set_defaults(func=_cmd_sweep)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"intentrag: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (DataFormatError, ValidationError, IndexFormatError,
            UndefinedMetricError) as exc:
        print(f"intentrag: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ProviderError as exc:
        print(f"intentrag: provider error: {exc}", file=sys.stderr)
        return EXIT_PROVIDER


if __name__ == "__main__":
    sys.exit(main())
