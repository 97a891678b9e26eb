"""Retrieve-augment-generate orchestration.

Builds the retrieval query from an MCQ item, fetches top-k chunks within a
token budget, prepends them to the standard MCQ prompt, and runs the model.
With retrieval disabled the pipeline degrades to plain prompting with
byte-identical prompts.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from .corpus import Chunk, Tokenizer, count_tokens
from .embed import EmbeddingProviderConfig, embed_text
from .errors import DataError, FingerprintMismatchError, ModelError
from .evalharness import McqItem, ModelAnswer, parse_answer_for_item, render_prompt
from .modelclient import ModelBackend
from .vstore import SearchHit, VectorStore

QUERY_MODES = ("question_only", "question_plus_options")


@dataclass(frozen=True)
class RagConfig:
    """Retrieval parameters: top-k, context token budget, query construction."""

    k: int = 3
    max_context_tokens: int = 1536
    query_mode: str = "question_plus_options"

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.max_context_tokens < 1:
            raise ValueError("max_context_tokens must be >= 1")
        if self.query_mode not in QUERY_MODES:
            raise ValueError(f"unknown query_mode: {self.query_mode!r}")


@dataclass(frozen=True)
class AugmentedPrompt:
    """Final prompt text plus the chunk ids it embeds, in rank order."""

    context_chunk_ids: tuple[str, ...]
    prompt_text: str


@dataclass(frozen=True)
class ItemResult:
    """Per-item evaluation outcome with retrieval audit fields."""

    answer: ModelAnswer
    context_chunk_ids: tuple[str, ...]
    context_scores: tuple[float, ...]
    prompt_token_estimate: int


def build_query(item: McqItem, mode: str = "question_plus_options") -> str:
    """Retrieval query text: the question stem, optionally followed by the options."""
    if mode not in QUERY_MODES:
        raise ValueError(f"unknown query_mode: {mode!r}")
    if mode == "question_only":
        return item.question
    lines = [item.question]
    for i, option in enumerate(item.options, start=1):
        lines.append(f"{i}. {' '.join(option.splitlines())}")
    return "\n".join(lines)


def _retrieve_scored(
    store: VectorStore,
    provider: EmbeddingProviderConfig,
    query: str,
    cfg: RagConfig,
    chunks: Mapping[str, Chunk],
) -> list[tuple[Chunk, SearchHit]]:
    if provider.fingerprint != store.provider_fingerprint:
        raise FingerprintMismatchError(
            f"store was built with provider {store.provider_fingerprint!r}, "
            f"query uses {provider.fingerprint!r}"
        )
    hits = store.search(embed_text(provider, query), cfg.k)
    kept: list[tuple[Chunk, SearchHit]] = []
    budget = cfg.max_context_tokens
    for hit in hits:
        if hit.chunk_id not in chunks:
            raise DataError(f"store references chunk {hit.chunk_id!r} missing from the corpus")
        chunk = chunks[hit.chunk_id]
        if kept and budget - chunk.token_count < 0:
            break
        kept.append((chunk, hit))
        budget -= chunk.token_count
    return kept


def retrieve_context(
    store: VectorStore,
    provider: EmbeddingProviderConfig,
    query: str,
    cfg: RagConfig,
    chunks: Mapping[str, Chunk],
) -> list[Chunk]:
    """Top-k chunks truncated to the token budget, best-ranked first.

    Whole chunks only; the rank-1 chunk is always kept even if it alone
    exceeds the budget.
    """
    return [chunk for chunk, _ in _retrieve_scored(store, provider, query, cfg, chunks)]


def augment(item: McqItem, context: Sequence[Chunk]) -> AugmentedPrompt:
    """Prepend context chunks (rank order, blank-line separated) to the MCQ prompt.

    With no context the result is exactly the plain MCQ prompt.
    """
    base = render_prompt(item)
    if not context:
        return AugmentedPrompt(context_chunk_ids=(), prompt_text=base)
    body = "\n\n".join(c.text for c in context)
    return AugmentedPrompt(
        context_chunk_ids=tuple(c.chunk_id for c in context),
        prompt_text=f"Context:\n{body}\n\n{base}",
    )


def answer_with_rag(
    backend: ModelBackend,
    store: VectorStore | None,
    provider: EmbeddingProviderConfig | None,
    item: McqItem,
    cfg: RagConfig | None = None,
    *,
    chunks: Mapping[str, Chunk] | None = None,
    tokenizer: Tokenizer | None = None,
    strict_parse: bool = False,
) -> ItemResult:
    """Run one item through retrieve → augment → generate → parse.

    store=None disables retrieval and evaluates the plain prompt.
    """
    cfg = cfg or RagConfig()
    if store is not None:
        if provider is None or chunks is None:
            raise ValueError("retrieval needs provider and chunks alongside the store")
        query = build_query(item, cfg.query_mode)
        scored = _retrieve_scored(store, provider, query, cfg, chunks)
    else:
        scored = []
    prompt = augment(item, [c for c, _ in scored])
    completion = backend.complete(prompt.prompt_text)
    answer = parse_answer_for_item(completion.text, item, strict=strict_parse)
    return ItemResult(
        answer=answer,
        context_chunk_ids=prompt.context_chunk_ids,
        context_scores=tuple(hit.score for _, hit in scored),
        prompt_token_estimate=count_tokens(prompt.prompt_text, tokenizer),
    )


def run_evaluation(
    backend: ModelBackend,
    items: Sequence[McqItem],
    *,
    store: VectorStore | None = None,
    provider: EmbeddingProviderConfig | None = None,
    chunks: Mapping[str, Chunk] | None = None,
    cfg: RagConfig | None = None,
    concurrency: int = 4,
    tokenizer: Tokenizer | None = None,
    strict_parse: bool = False,
) -> list[ItemResult]:
    """Evaluate every item; model failures mark the item errored, never skip it.

    Results come back in dataset order regardless of completion order.
    """

    def one(item: McqItem) -> ItemResult:
        try:
            return answer_with_rag(
                backend,
                store,
                provider,
                item,
                cfg,
                chunks=chunks,
                tokenizer=tokenizer,
                strict_parse=strict_parse,
            )
        except ModelError:
            return ItemResult(
                answer=ModelAnswer(
                    item_id=item.item_id,
                    raw_text="",
                    parsed_index=None,
                    parse_status="unparsed",
                    errored=True,
                ),
                context_chunk_ids=(),
                context_scores=(),
                prompt_token_estimate=0,
            )

    if concurrency <= 1 or len(items) <= 1:
        return [one(it) for it in items]
    with ThreadPoolExecutor(max_workers=concurrency) as pool:
        return list(pool.map(one, items))


def write_audit_log(results: Sequence[ItemResult], path: str | Path) -> None:
    """One JSON line per item: retrieval audit plus the raw model output."""
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for res in results:
            rec = {
                "item_id": res.answer.item_id,
                "context_chunk_ids": list(res.context_chunk_ids),
                "scores": [round(s, 8) for s in res.context_scores],
                "prompt_token_estimate": res.prompt_token_estimate,
                "raw_model_output": res.answer.raw_text,
            }
            f.write(json.dumps(rec, ensure_ascii=False) + "\n")
