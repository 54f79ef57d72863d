"""Intent-aware retrieval-augmented generation pipeline and evaluation harness."""

from .corpus import (
    Chunk,
    Document,
    FactualUnit,
    GoldAnnotation,
    QuestionRecord,
    chunk_document,
    load_chunks,
    load_corpus,
    load_qa_dataset,
    save_chunks,
    save_corpus,
)
from .embedding import (
    EmbeddingProviderConfig,
    EmbeddingVector,
    cosine_similarity,
    create_embedder,
    embed_batch,
    mock_embed,
)
from .fusion import FusedRanking, rrf_fuse, truncate
from .hypothesis import (
    HypotheticalAnswer,
    IntentQuery,
    QueryPool,
    RAW_QUERY_REF,
    build_query_pool,
    decompose_hypothesis,
    generate_hypotheses,
    split_single_subject,
)
from .index import RankedList, VectorIndex, build_index, load_index, save_index, search
from .llm import LlmProviderConfig, ScriptedMockLlm, TranscriptLog, create_llm
from .metrics import (
    MatcherConfig,
    MatchOutcome,
    MetricValue,
    answer_accuracy,
    answer_coverage,
    create_matcher,
    exact_match,
    information_recall_rate,
    match_units,
    recall_at_k,
    token_f1,
    vector_entropy,
)
from .pipeline import (
    EvalReport,
    PipelineResult,
    StrategyConfig,
    compare_strategies,
    generate_answer,
    run_evaluation,
    run_question,
    sweep,
)

__version__ = "0.1.0"

__all__ = [
    "Chunk",
    "Document",
    "EmbeddingProviderConfig",
    "EmbeddingVector",
    "EvalReport",
    "FactualUnit",
    "FusedRanking",
    "GoldAnnotation",
    "HypotheticalAnswer",
    "IntentQuery",
    "LlmProviderConfig",
    "MatchOutcome",
    "MatcherConfig",
    "MetricValue",
    "PipelineResult",
    "QueryPool",
    "QuestionRecord",
    "RAW_QUERY_REF",
    "RankedList",
    "ScriptedMockLlm",
    "StrategyConfig",
    "TranscriptLog",
    "VectorIndex",
    "answer_accuracy",
    "answer_coverage",
    "build_index",
    "build_query_pool",
    "chunk_document",
    "compare_strategies",
    "cosine_similarity",
    "create_embedder",
    "create_llm",
    "create_matcher",
    "decompose_hypothesis",
    "embed_batch",
    "exact_match",
    "generate_answer",
    "generate_hypotheses",
    "information_recall_rate",
    "load_chunks",
    "load_corpus",
    "load_index",
    "load_qa_dataset",
    "match_units",
    "mock_embed",
    "recall_at_k",
    "rrf_fuse",
    "run_evaluation",
    "run_question",
    "save_chunks",
    "save_corpus",
    "save_index",
    "search",
    "split_single_subject",
    "sweep",
    "token_f1",
    "truncate",
    "vector_entropy",
]
