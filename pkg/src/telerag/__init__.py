"""telerag: retrieval-augmented evaluation toolkit for small language models.

Pipeline pieces: corpus chunking, pluggable embeddings, an exact top-k
vector store, RAG prompt assembly, an MCQ benchmark harness with
per-category accuracy reports, plus two telecom use cases (energy-model
fitting and a user-association reasoning probe).
"""

from .corpus import Chunk, Corpus, Document, WhitespaceTokenizer, chunk_document, count_tokens
from .embed import EmbeddingProviderConfig, cosine_similarity, embed_text, embed_texts
from .errors import (
    DataError,
    DegenerateDataError,
    DimensionMismatchError,
    DuplicateChunkError,
    FingerprintMismatchError,
    ModelError,
    ProviderError,
    StoreFormatError,
    TeleragError,
)
from .evalharness import (
    EvalReport,
    McqItem,
    ModelAnswer,
    compare_runs,
    load_dataset,
    parse_answer,
    render_prompt,
    score,
)
from .modelclient import Completion, ModelConfig, build_backend
from .rag import AugmentedPrompt, RagConfig, answer_with_rag, augment, build_query, run_evaluation
from .userassoc import AssocProblem, check_answer, generate_problem, oracle, render_problem_prompt
from .vstore import SearchHit, VectorRecord, VectorStore

__version__ = "0.1.0"

__all__ = [
    "AssocProblem",
    "AugmentedPrompt",
    "Chunk",
    "Completion",
    "Corpus",
    "DataError",
    "DegenerateDataError",
    "DimensionMismatchError",
    "Document",
    "DuplicateChunkError",
    "EmbeddingProviderConfig",
    "EvalReport",
    "FingerprintMismatchError",
    "McqItem",
    "ModelAnswer",
    "ModelConfig",
    "ModelError",
    "ProviderError",
    "RagConfig",
    "SearchHit",
    "StoreFormatError",
    "TeleragError",
    "VectorRecord",
    "VectorStore",
    "WhitespaceTokenizer",
    "answer_with_rag",
    "augment",
    "build_backend",
    "build_query",
    "check_answer",
    "chunk_document",
    "compare_runs",
    "cosine_similarity",
    "count_tokens",
    "embed_text",
    "embed_texts",
    "generate_problem",
    "load_dataset",
    "oracle",
    "parse_answer",
    "render_problem_prompt",
    "render_prompt",
    "run_evaluation",
    "score",
]
