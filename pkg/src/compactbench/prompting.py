"""Prompt catalog and worker-prompt construction.

Worker prompt k carries blocks 1..k-1 verbatim, block k wrapped in the target
markers, and the instruction template last, so each worker's pre-marker prefix
strictly extends the previous worker's and only the instruction follows the
close marker. Templates are data, not code: edit the catalog file to change
the wording.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .partitioning import Block

OPEN_MARKER = "<TARGET_BLOCK>"
CLOSE_MARKER = "</TARGET_BLOCK>"

DETAILS = ("concise", "detailed", "very_detailed")
LENGTH_HINTS = ("one_sentence", "one_paragraph", "three_paragraphs")

SEQUENTIAL_SEPARATOR = "\n\n"


class BuildError(ValueError):
    """Raised when a worker prompt cannot be built (index out of range)."""


class CatalogError(ValueError):
    """Raised when the prompt catalog file is malformed."""


@dataclass(frozen=True)
class PromptVariant:
    detail: str
    template_text: str
    length_hint: str | None = None

    def __post_init__(self) -> None:
        if not self.template_text:
            raise CatalogError("variant template must be non-empty")


@dataclass(frozen=True)
class WorkerPrompt:
    worker_index: int  # 1-based k
    text: str
    shared_prefix_tokens: int
    target_tokens: int
    marker_collisions: int = 0


class PromptCatalog:
    """Read-only key -> template mapping loaded at startup.

    Schema: three top-level objects, ``sequential`` and ``parallel`` each
    mapping concise/detailed/very_detailed to a template string, and
    ``length_hint`` mapping one_sentence/one_paragraph/three_paragraphs.
    """

    def __init__(self, data: dict) -> None:
        for section, keys in (
            ("sequential", DETAILS),
            ("parallel", DETAILS),
            ("length_hint", LENGTH_HINTS),
        ):
            entries = data.get(section)
            if not isinstance(entries, dict):
                raise CatalogError(f"catalog missing section {section!r}")
            for key in keys:
                template = entries.get(key)
                if not isinstance(template, str) or not template:
                    raise CatalogError(f"catalog entry {section}.{key} must be a non-empty string")
        self._data = data

    @classmethod
    def load(cls, path: str | Path | None = None) -> "PromptCatalog":
        if path is None:
            text = resources.files("compactbench").joinpath("prompt_catalog.json").read_text("utf-8")
        else:
            text = Path(path).read_text("utf-8")
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise CatalogError(f"catalog is not valid JSON: {exc}") from exc
        return cls(data)

    def variant(self, strategy: str, detail: str = "detailed", length_hint: str | None = None) -> PromptVariant:
        if length_hint is not None:
            if length_hint not in LENGTH_HINTS:
                raise CatalogError(f"unknown length hint {length_hint!r}")
            return PromptVariant(detail=detail, length_hint=length_hint,
                                 template_text=self._data["length_hint"][length_hint])
        if strategy not in ("sequential", "parallel"):
            raise CatalogError(f"unknown strategy {strategy!r}")
        if detail not in DETAILS:
            raise CatalogError(f"unknown detail level {detail!r}")
        return PromptVariant(detail=detail, template_text=self._data[strategy][detail])

    def all_templates(self) -> dict[str, str]:
        """Flat key -> template view ("sequential.concise", ...)."""
        flat = {}
        for section, entries in self._data.items():
            for key, template in entries.items():
                flat[f"{section}.{key}"] = template
        return flat


def escape_markers(text: str, open_marker: str = OPEN_MARKER, close_marker: str = CLOSE_MARKER) -> tuple[str, int]:
    """Escape literal marker occurrences by doubling the leading angle bracket.

    A doubled bracket ("<<TARGET_BLOCK>") marks the occurrence as literal text;
    :func:`count_markers` ignores occurrences preceded by '<'.
    """
    collisions = count_markers(text, open_marker) + count_markers(text, close_marker)
    if collisions == 0:
        return text, 0
    out = []
    i = 0
    while i < len(text):
        if text.startswith(open_marker, i) or text.startswith(close_marker, i):
            if i == 0 or text[i - 1] != "<":
                out.append("<")
        out.append(text[i])
        i += 1
    return "".join(out), collisions


def count_markers(text: str, marker: str) -> int:
    """Count marker occurrences, skipping escaped ones (preceded by '<')."""
    count = 0
    start = 0
    while True:
        pos = text.find(marker, start)
        if pos < 0:
            return count
        if pos == 0 or text[pos - 1] != "<":
            count += 1
        start = pos + 1


def build_sequential_prompt(transcript: str, variant: PromptVariant) -> str:
    """transcript + separator + instruction; never introduces target markers."""
    if not transcript:
        raise BuildError("transcript must be non-empty")
    escaped, _ = escape_markers(transcript)
    return f"{escaped}{SEQUENTIAL_SEPARATOR}{variant.template_text}"


def build_worker_prompt(blocks: list[Block], k: int, variant: PromptVariant) -> WorkerPrompt:
    """Prompt for worker k: blocks 1..k-1, block k marker-wrapped, instruction last."""
    if not 1 <= k <= len(blocks):
        raise BuildError(f"worker index {k} out of range 1..{len(blocks)}")
    collisions = 0
    prefix_parts = []
    for block in blocks[: k - 1]:
        escaped, n = escape_markers(block.text)
        prefix_parts.append(escaped)
        collisions += n
    target, n = escape_markers(blocks[k - 1].text)
    collisions += n
    prefix = "".join(prefix_parts)
    # A block that happens to end with "<" makes the adjacent real marker look
    # escaped to marker-aware readers; prefixes stay verbatim, so the
    # ambiguity is recorded as a collision instead of rewritten away.
    if prefix.endswith("<") or target.endswith("<"):
        collisions += 1
    text = f"{prefix}{OPEN_MARKER}{target}{CLOSE_MARKER}{variant.template_text}"
    return WorkerPrompt(
        worker_index=k,
        text=text,
        shared_prefix_tokens=sum(b.token_count for b in blocks[: k - 1]),
        target_tokens=blocks[k - 1].token_count,
        marker_collisions=collisions,
    )


def dispatch_set(blocks: list[Block], variant: PromptVariant) -> list[WorkerPrompt]:
    """One prompt per block, worker_index 1..N in block order."""
    if not blocks:
        raise BuildError("blocks must be non-empty")
    return [build_worker_prompt(blocks, k, variant) for k in range(1, len(blocks) + 1)]
