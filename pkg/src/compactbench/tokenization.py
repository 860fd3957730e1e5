"""Token counting and token-boundary text splitting.

The default counter is a deterministic chars-per-token heuristic: it can split
any text at exact token boundaries, which the block partitioner relies on.
Exact model tokenizers can be plugged in through :class:`ExternalTokenizer`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Protocol, runtime_checkable


class TokenizerError(RuntimeError):
    """Raised when an external tokenizer is unavailable or misbehaves."""


@runtime_checkable
class ExternalTokenizer(Protocol):
    """Minimal surface an exact tokenizer must provide: count and split."""

    def count(self, text: str) -> int: ...

    def take(self, text: str, n: int) -> tuple[str, str]:
        """Split ``text`` into (head, tail) with head holding the first ``n`` tokens."""
        ...


@dataclass(frozen=True)
class TokenCounter:
    """Deterministic token counter.

    ``kind`` is "heuristic" (ceil(chars / chars_per_token), chars = Unicode
    scalar values) or "external" (delegates to ``external``).
    """

    kind: str = "heuristic"
    chars_per_token: int = 4
    external: ExternalTokenizer | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("heuristic", "external"):
            raise ValueError(f"unknown counter kind {self.kind!r}")
        if self.chars_per_token < 1:
            raise ValueError("chars_per_token must be a positive integer")
        if self.kind == "external" and self.external is None:
            raise TokenizerError("external counter configured without a tokenizer")

    def count(self, text: str) -> int:
        if not text:
            return 0
        if self.kind == "heuristic":
            return math.ceil(len(text) / self.chars_per_token)
        assert self.external is not None
        try:
            return self.external.count(text)
        except Exception as exc:  # pragma: no cover - depends on plugged tokenizer
            raise TokenizerError(f"external tokenizer failed: {exc}") from exc

    def take(self, text: str, n: int) -> tuple[str, str]:
        """Split ``text`` after its first ``n`` tokens.

        head + tail reconstructs ``text`` exactly and the split never lands
        inside a Unicode scalar. count(head) == min(n, count(text)).
        """
        if n < 0:
            raise ValueError("n must be >= 0")
        if n == 0:
            return "", text
        if self.kind == "heuristic":
            cut = n * self.chars_per_token
            return text[:cut], text[cut:]
        assert self.external is not None
        try:
            return self.external.take(text, n)
        except Exception as exc:  # pragma: no cover - depends on plugged tokenizer
            raise TokenizerError(f"external tokenizer failed: {exc}") from exc


def count_tokens(counter: TokenCounter, text: str) -> int:
    return counter.count(text)


def take_tokens(counter: TokenCounter, text: str, n: int) -> tuple[str, str]:
    return counter.take(text, n)
