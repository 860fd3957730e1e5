"""Snapshot partitioning: cut a transcript into contiguous token-sized blocks.

Splitting happens at exact token boundaries, even mid-message, so the block
count always obeys worker_count = ceil(snapshot_tokens / block_size).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .tokenization import TokenCounter


class PlanError(ValueError):
    """Raised for non-positive snapshot or block sizes."""


@dataclass(frozen=True)
class PartitionPlan:
    snapshot_tokens: int
    block_size: int
    worker_count: int


@dataclass(frozen=True)
class Block:
    index: int  # 1-based
    text: str
    token_count: int


def plan(snapshot_tokens: int, block_size: int) -> PartitionPlan:
    if snapshot_tokens < 1:
        raise PlanError(f"snapshot_tokens must be >= 1, got {snapshot_tokens}")
    if block_size < 1:
        raise PlanError(f"block_size must be >= 1, got {block_size}")
    return PartitionPlan(
        snapshot_tokens=snapshot_tokens,
        block_size=block_size,
        worker_count=math.ceil(snapshot_tokens / block_size),
    )


def partition(transcript: str, block_size: int, counter: TokenCounter) -> list[Block]:
    """Cut ``transcript`` into contiguous blocks of ``block_size`` tokens.

    Concatenating the block texts reconstructs the transcript bit-exactly;
    all blocks except possibly the last hold exactly ``block_size`` tokens.
    """
    if not transcript:
        raise PlanError("transcript must be non-empty")
    if block_size < 1:
        raise PlanError(f"block_size must be >= 1, got {block_size}")
    blocks: list[Block] = []
    rest = transcript
    index = 1
    while rest:
        head, rest = counter.take(rest, block_size)
        blocks.append(Block(index=index, text=head, token_count=counter.count(head)))
        index += 1
    return blocks
