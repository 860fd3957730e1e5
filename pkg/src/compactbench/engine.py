"""Compaction orchestrator.

Sequential compaction issues one blocking call over the whole transcript.
Parallel compaction snapshots, partitions into blocks, dispatches one
prefix-aware worker per block concurrently, blocks until all complete, and
merges the per-block summaries in block order. Either way the conversation is
replaced atomically: a failed event leaves the state untouched.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from .backend import Backend, BackendError, CompletionRequest, schedule_wall
from .conversation import ConversationState
from .partitioning import partition, plan
from .prompting import PromptVariant, build_sequential_prompt, dispatch_set, escape_markers
from .tokenization import TokenCounter


class MergeError(ValueError):
    """Raised when there are no summaries to merge."""


class CompactionError(RuntimeError):
    """A compaction event failed; the conversation was left unmodified."""

    def __init__(self, message: str, kind: str | None = None) -> None:
        super().__init__(message)
        self.kind = kind


@dataclass(frozen=True)
class EngineConfig:
    threshold_tau: int
    strategy: str  # sequential | parallel
    variant: PromptVariant
    block_size: int | None = None  # parallel only
    max_output_sequential: int = 8192
    max_output_worker: int = 4096
    temperature: float = 0.0
    worker_retries: int = 1
    merge_block_headers: bool = False

    def __post_init__(self) -> None:
        if self.threshold_tau <= 0:
            raise ValueError("threshold_tau must be > 0")
        if self.strategy not in ("sequential", "parallel"):
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.strategy == "parallel":
            if self.block_size is None or self.block_size <= 0:
                raise ValueError("parallel strategy requires a positive block_size")
            if self.threshold_tau <= self.block_size:
                raise ValueError("threshold_tau must exceed block_size for parallel compaction")
        if self.max_output_sequential < 1 or self.max_output_worker < 1:
            raise ValueError("max output ceilings must be >= 1")
        if self.worker_retries < 0:
            raise ValueError("worker_retries must be >= 0")


@dataclass(frozen=True)
class WorkerStats:
    index: int
    prompt_tokens: int
    cached_tokens: int | None
    decode_tokens: int
    latency_ms: float


@dataclass(frozen=True)
class CompactionReport:
    strategy: str
    snapshot_tokens: int
    worker_count: int
    per_worker: list[WorkerStats]
    merged_summary: str
    total_decode_tokens: int
    wall_ms: float
    marker_collisions: int = 0

    def to_dict(self, include_summary: bool = False) -> dict:
        payload = {
            "strategy": self.strategy,
            "snapshot_tokens": self.snapshot_tokens,
            "worker_count": self.worker_count,
            "total_decode_tokens": self.total_decode_tokens,
            "wall_ms": self.wall_ms,
            "marker_collisions": self.marker_collisions,
            "per_worker": [
                {
                    "index": w.index,
                    "prompt_tokens": w.prompt_tokens,
                    "cached_tokens": w.cached_tokens,
                    "decode_tokens": w.decode_tokens,
                    "latency_ms": w.latency_ms,
                }
                for w in self.per_worker
            ],
        }
        if include_summary:
            payload["merged_summary"] = self.merged_summary
        return payload


def merge(summaries: list[str], block_headers: bool = False) -> str:
    """Join block summaries in block order with single newlines.

    Block-index headers are off by default: they would inflate the stored
    summary without adding decoded tokens.
    """
    if not summaries:
        raise MergeError("no summaries to merge")
    if block_headers:
        return "\n".join(f"[block {k}] {text}" for k, text in enumerate(summaries, start=1))
    return "\n".join(summaries)


def _call_with_retries(backend: Backend, request: CompletionRequest, retries: int):
    attempt = 0
    while True:
        try:
            return backend.complete(request)
        except BackendError as exc:
            if attempt >= retries:
                raise CompactionError(f"{request.tag} failed: {exc}", kind=exc.kind) from exc
            attempt += 1


def compact_sequential_text(
    transcript: str,
    config: EngineConfig,
    backend: Backend,
    counter: TokenCounter,
    seed: int | None = None,
) -> CompactionReport:
    """One blocking summarization call over the full transcript."""
    prompt = build_sequential_prompt(transcript, config.variant)
    request = CompletionRequest(
        prompt=prompt,
        max_output_tokens=config.max_output_sequential,
        temperature=config.temperature,
        seed=seed,
        tag="compaction-seq",
    )
    started = time.monotonic()
    response = _call_with_retries(backend, request, config.worker_retries)
    wall_ms = response.latency_ms if backend.simulated else (time.monotonic() - started) * 1000.0
    stats = WorkerStats(
        index=1,
        prompt_tokens=response.prompt_tokens,
        cached_tokens=response.cached_prompt_tokens,
        decode_tokens=response.completion_tokens,
        latency_ms=response.latency_ms,
    )
    return CompactionReport(
        strategy="sequential",
        snapshot_tokens=counter.count(transcript),
        worker_count=1,
        per_worker=[stats],
        merged_summary=response.text,
        total_decode_tokens=response.completion_tokens,
        wall_ms=wall_ms,
    )


def compact_parallel_text(
    transcript: str,
    config: EngineConfig,
    backend: Backend,
    counter: TokenCounter,
    seed_base: int | None = None,
) -> CompactionReport:
    """Snapshot & partition, dispatch all workers concurrently, merge in order."""
    assert config.block_size is not None
    # Escape literal marker text up front so a collision can never straddle a
    # block boundary and reassemble inside a worker prompt.
    escaped, transcript_collisions = escape_markers(transcript)
    snapshot_tokens = counter.count(escaped)
    blocks = partition(escaped, config.block_size, counter)
    expected = plan(snapshot_tokens, config.block_size).worker_count
    assert len(blocks) == expected, "partition disagrees with the worker-count law"
    prompts = dispatch_set(blocks, config.variant)
    requests = [
        CompletionRequest(
            prompt=p.text,
            max_output_tokens=config.max_output_worker,
            temperature=config.temperature,
            seed=None if seed_base is None else seed_base + p.worker_index,
            tag=f"compaction-worker({p.worker_index})",
        )
        for p in prompts
    ]
    started = time.monotonic()
    workers = min(len(requests), backend.max_concurrency)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [
            pool.submit(_call_with_retries, backend, req, config.worker_retries)
            for req in requests
        ]
        responses = [f.result() for f in futures]  # raises on any worker failure
    measured_ms = (time.monotonic() - started) * 1000.0
    wall_ms = (
        schedule_wall([r.latency_ms for r in responses], backend.max_concurrency)
        if backend.simulated
        else measured_ms
    )
    per_worker = [
        WorkerStats(
            index=p.worker_index,
            prompt_tokens=r.prompt_tokens,
            cached_tokens=r.cached_prompt_tokens,
            decode_tokens=r.completion_tokens,
            latency_ms=r.latency_ms,
        )
        for p, r in zip(prompts, responses)
    ]
    merged = merge([r.text for r in responses], block_headers=config.merge_block_headers)
    return CompactionReport(
        strategy="parallel",
        snapshot_tokens=snapshot_tokens,
        worker_count=len(blocks),
        per_worker=per_worker,
        merged_summary=merged,
        total_decode_tokens=sum(r.completion_tokens for r in responses),
        wall_ms=wall_ms,
        marker_collisions=transcript_collisions + sum(p.marker_collisions for p in prompts),
    )


def compact_transcript(
    transcript: str,
    config: EngineConfig,
    backend: Backend,
    counter: TokenCounter,
    seed_base: int | None = None,
) -> CompactionReport:
    if config.strategy == "sequential":
        return compact_sequential_text(transcript, config, backend, counter, seed=seed_base)
    return compact_parallel_text(transcript, config, backend, counter, seed_base=seed_base)


def maybe_compact(
    state: ConversationState,
    config: EngineConfig,
    backend: Backend,
    seed_base: int | None = None,
) -> CompactionReport | None:
    """Run the configured strategy if the context strictly exceeds tau.

    The replacement is atomic: on any worker failure the exception propagates
    and the state is left exactly as it was. Turns appended after the snapshot
    (impossible in the synchronous flow, but exercised via test hooks) are
    preserved after the summary.
    """
    if not state.exceeds_threshold(config.threshold_tau):
        return None
    transcript, snapshot_turns = state.snapshot()
    report = compact_transcript(transcript, config, backend, state.counter, seed_base)
    state.replace_with_summary(report.merged_summary, snapshot_turns)
    return report
