"""Completion backends.

Two implementations of the same surface: an HTTP client for any
OpenAI-compatible chat-completions server, and a deterministic mock whose
latency comes from a prefix-cache-aware linear cost model and whose output
length follows a configurable input-size curve with optional seeded noise.
The mock makes every structural and throughput property testable at desk
scale without a GPU.
"""

from __future__ import annotations

import heapq
import json
import logging
import math
import os
import random
import re
import threading
import time
from dataclasses import dataclass, field
from typing import Protocol, runtime_checkable

import httpx

from .prompting import CLOSE_MARKER, OPEN_MARKER, PromptCatalog
from .tokenization import TokenCounter

logger = logging.getLogger("compactbench.backend")

ERROR_KINDS = ("transport", "server_error", "timeout", "context_overflow")


class BackendError(RuntimeError):
    """Completion failure with a distinct kind carried into the event log."""

    def __init__(self, kind: str, message: str) -> None:
        if kind not in ERROR_KINDS:
            raise ValueError(f"unknown error kind {kind!r}")
        super().__init__(message)
        self.kind = kind


@dataclass(frozen=True)
class CompletionRequest:
    prompt: str
    max_output_tokens: int
    temperature: float = 0.0
    seed: int | None = None
    tag: str = "qa"  # qa | compaction-seq | compaction-worker(k) | judge

    def __post_init__(self) -> None:
        if self.max_output_tokens < 1:
            raise ValueError("max_output_tokens must be >= 1")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")


@dataclass(frozen=True)
class CompletionResponse:
    text: str
    prompt_tokens: int
    cached_prompt_tokens: int | None  # None = server did not report cache usage
    completion_tokens: int
    latency_ms: float

    def __post_init__(self) -> None:
        if self.cached_prompt_tokens is not None and self.cached_prompt_tokens > self.prompt_tokens:
            raise ValueError("cached_prompt_tokens cannot exceed prompt_tokens")
        if self.latency_ms < 0:
            raise ValueError("latency_ms must be >= 0")


@dataclass(frozen=True)
class CostModel:
    prefill_uncached_ms_per_tok: float = 0.5
    prefill_cached_ms_per_tok: float = 0.02
    decode_ms_per_tok: float = 15.0
    max_concurrency: int = 32

    def __post_init__(self) -> None:
        if min(self.prefill_uncached_ms_per_tok, self.prefill_cached_ms_per_tok,
               self.decode_ms_per_tok) <= 0:
            raise ValueError("all cost rates must be > 0")
        if self.prefill_cached_ms_per_tok > self.prefill_uncached_ms_per_tok:
            raise ValueError("cached prefill cannot cost more than uncached")
        if self.max_concurrency < 1:
            raise ValueError("max_concurrency must be >= 1")


def mock_latency(cost: CostModel, uncached: int, cached: int, decode: int) -> float:
    """Linear latency: uncached and cached prefill plus decode, in ms."""
    if min(uncached, cached, decode) < 0:
        raise ValueError("token counts must be >= 0")
    return (uncached * cost.prefill_uncached_ms_per_tok
            + cached * cost.prefill_cached_ms_per_tok
            + decode * cost.decode_ms_per_tok)


def schedule_wall(latencies_ms: list[float], max_concurrency: int) -> float:
    """Simulated wall time of a dispatch set under greedy slot scheduling.

    Requests start in list order as slots free up. With enough slots this is
    the max latency; with one slot it is the sum.
    """
    if max_concurrency < 1:
        raise ValueError("max_concurrency must be >= 1")
    if not latencies_ms:
        return 0.0
    slots = [0.0] * min(max_concurrency, len(latencies_ms))
    heapq.heapify(slots)
    wall = 0.0
    for latency in latencies_ms:
        start = heapq.heappop(slots)
        done = start + latency
        heapq.heappush(slots, done)
        wall = max(wall, done)
    return wall


@dataclass(frozen=True)
class LengthModel:
    """Output-volume curve: near-flat, logarithmic growth with input size.

    expected_output(n) = base + slope * log2(n / anchor), anchored so that a
    2,048-token input yields 981 output tokens and a 98,304-token input about
    3,014. Detail and length-hint multipliers scale the curve per prompt
    variant; sigma adds seeded multiplicative lognormal noise.
    """

    anchor_input: int = 2048
    base_output: float = 981.0
    slope_per_doubling: float = 364.0
    sigma: float = 0.0
    qa_output_tokens: int = 128
    detail_multipliers: dict = field(default_factory=lambda: {
        "concise": 0.6, "detailed": 1.0, "very_detailed": 1.3,
    })
    hint_multipliers: dict = field(default_factory=lambda: {
        "one_sentence": 0.4, "one_paragraph": 0.5, "three_paragraphs": 0.6,
    })

    def expected_output(self, input_tokens: int) -> float:
        scaled = max(input_tokens, 1) / self.anchor_input
        return max(1.0, self.base_output + self.slope_per_doubling * math.log2(scaled))


_SENTENCE_SPLIT = re.compile(r"(?<=[.!?])\s+")
_CLAUSE_SPLIT = re.compile(r"[,;:]")


def _extract_material(region: str, offset: int, stride: int = 4) -> str:
    """First clause of every ``stride``-th sentence, starting at ``offset``."""
    sentences = [s for s in _SENTENCE_SPLIT.split(region) if s.strip()]
    if not sentences:
        stripped = region.strip()
        return stripped if stripped else "."
    picks = sentences[offset % len(sentences)::stride]
    if not picks:
        picks = sentences[:1]
    clauses = [_CLAUSE_SPLIT.split(s, 1)[0].strip() for s in picks]
    material = " ".join(c for c in clauses if c)
    return material if material else sentences[0].strip()


def _fill_budget(material: str, budget: int, counter: TokenCounter) -> str:
    """Cycle the material until it strictly covers ``budget`` tokens, then cut.

    Overshooting by one token before cutting pins the output to a full
    ``budget`` tokens of characters, which keeps run arithmetic exactly
    reproducible by an external step-through.
    """
    parts = [material]
    while counter.count(" ".join(parts)) <= budget:
        parts.append(material)
    head, _ = counter.take(" ".join(parts), budget)
    return head


class MockBackend:
    """Deterministic completion backend with simulated latency.

    Cache accounting mirrors a prefix-cached server mid-flow: for worker
    requests everything before the open marker counts as cached (the
    conversation was prefilled during the flow) and the marked block plus
    instruction is uncached; for sequential compaction the transcript counts
    as cached and only the instruction is new; QA requests hit a simulated
    cache keyed on the previous conversation prompt.
    """

    simulated = True

    def __init__(
        self,
        counter: TokenCounter,
        cost: CostModel | None = None,
        length_model: LengthModel | None = None,
        catalog: PromptCatalog | None = None,
        context_window: int | None = None,
    ) -> None:
        self.counter = counter
        self.cost = cost if cost is not None else CostModel()
        self.length_model = length_model if length_model is not None else LengthModel()
        self.context_window = context_window
        self.max_concurrency = self.cost.max_concurrency
        self._templates = self._template_multipliers(catalog)
        self._last_flow_prompt = ""
        self._lock = threading.Lock()

    def _template_multipliers(self, catalog: PromptCatalog | None) -> list[tuple[str, float]]:
        if catalog is None:
            catalog = PromptCatalog.load()
        pairs = []
        for key, template in catalog.all_templates().items():
            section, name = key.split(".", 1)
            if section == "length_hint":
                mult = self.length_model.hint_multipliers.get(name, 1.0)
            else:
                mult = self.length_model.detail_multipliers.get(name, 1.0)
            pairs.append((template, mult))
        pairs.sort(key=lambda p: len(p[0]), reverse=True)
        return pairs

    def _match_template(self, prompt: str) -> tuple[str, float] | None:
        for template, mult in self._templates:
            if prompt.endswith(template):
                return template, mult
        return None

    def _summarize(self, request: CompletionRequest) -> str:
        prompt = request.prompt
        multiplier = 1.0
        matched = self._match_template(prompt)
        region = prompt
        if matched is not None:
            template, multiplier = matched
            region = prompt[: len(prompt) - len(template)]
        open_pos = self._marker_pos(prompt, OPEN_MARKER)
        if open_pos is not None:
            close_pos = self._marker_pos(prompt, CLOSE_MARKER)
            end = close_pos if close_pos is not None else len(prompt)
            region = prompt[open_pos + len(OPEN_MARKER):end]
        return self._generate(region, multiplier, request)

    def _generate(self, region: str, multiplier: float, request: CompletionRequest) -> str:
        rng = random.Random(request.seed if request.seed is not None else 0)
        noisy = self.length_model.sigma > 0 and request.temperature > 0
        factor = math.exp(self.length_model.sigma * rng.gauss(0.0, 1.0)) if noisy else 1.0
        offset = rng.randrange(4) if noisy else 0
        budget = round(self.length_model.expected_output(self.counter.count(region)) * multiplier * factor)
        budget = max(1, min(budget, request.max_output_tokens))
        return _fill_budget(_extract_material(region, offset), budget, self.counter)

    def _answer(self, request: CompletionRequest) -> str:
        prompt = request.prompt
        pos = prompt.rfind("\nuser: ")
        region = prompt[pos + 1:] if pos >= 0 else prompt
        budget = max(1, min(self.length_model.qa_output_tokens, request.max_output_tokens))
        return _fill_budget(_extract_material(region, 0, stride=1), budget, self.counter)

    @staticmethod
    def _marker_pos(text: str, marker: str) -> int | None:
        start = 0
        while True:
            pos = text.find(marker, start)
            if pos < 0:
                return None
            if pos == 0 or text[pos - 1] != "<":
                return pos
            start = pos + 1

    def _cached_tokens(self, request: CompletionRequest, prompt_tokens: int) -> int:
        prompt = request.prompt
        if request.tag.startswith("compaction-worker"):
            pos = self._marker_pos(prompt, OPEN_MARKER)
            return self.counter.count(prompt[:pos]) if pos is not None else 0
        if request.tag == "compaction-seq":
            matched = self._match_template(prompt)
            if matched is not None:
                return min(prompt_tokens, self.counter.count(prompt[: len(prompt) - len(matched[0])]))
        # QA and anything else: longest common prefix with the previous
        # conversation prompt stands in for the server-side prefix cache.
        with self._lock:
            previous = self._last_flow_prompt
            if request.tag == "qa":
                self._last_flow_prompt = prompt
        common = _common_prefix_len(previous, prompt)
        return min(self.counter.count(prompt[:common]), prompt_tokens)

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        prompt_tokens = self.counter.count(request.prompt)
        if self.context_window is not None and prompt_tokens + request.max_output_tokens > self.context_window:
            raise BackendError(
                "context_overflow",
                f"prompt ({prompt_tokens} tok) + max output exceeds context window {self.context_window}",
            )
        cached = self._cached_tokens(request, prompt_tokens)
        if request.tag.startswith("compaction"):
            text = self._summarize(request)
        else:
            text = self._answer(request)
        completion_tokens = self.counter.count(text)
        latency = mock_latency(self.cost, prompt_tokens - cached, cached, completion_tokens)
        return CompletionResponse(
            text=text,
            prompt_tokens=prompt_tokens,
            cached_prompt_tokens=cached,
            completion_tokens=completion_tokens,
            latency_ms=latency,
        )


def _common_prefix_len(a: str, b: str) -> int:
    limit = min(len(a), len(b))
    if limit == 0:
        return 0
    if a[:limit] == b[:limit]:
        return limit
    lo, hi = 0, limit
    while lo < hi:
        mid = (lo + hi + 1) // 2
        if a[:mid] == b[:mid]:
            lo = mid
        else:
            hi = mid - 1
    return lo


@runtime_checkable
class Backend(Protocol):
    simulated: bool
    max_concurrency: int

    def complete(self, request: CompletionRequest) -> CompletionResponse: ...


class HTTPBackend:
    """Client for an OpenAI-compatible chat-completions endpoint."""

    simulated = False

    def __init__(
        self,
        base_url: str,
        model: str,
        api_key: str | None = None,
        counter: TokenCounter | None = None,
        timeout_s: float = 300.0,
        max_concurrency: int = 32,
        verbose: bool = False,
        transport: httpx.BaseTransport | None = None,
    ) -> None:
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.api_key = api_key if api_key is not None else os.environ.get("COMPACTBENCH_API_KEY")
        self.counter = counter
        self.max_concurrency = max_concurrency
        self.verbose = verbose
        headers = {}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        self._client = httpx.Client(
            base_url=self.base_url, headers=headers, timeout=timeout_s, transport=transport,
        )

    def close(self) -> None:
        self._client.close()

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        body: dict = {
            "model": self.model,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        }
        if request.seed is not None:
            body["seed"] = request.seed
        if self.verbose:
            logger.info("request %s: %s", request.tag, json.dumps(body)[:2000])
        start = time.monotonic()
        try:
            response = self._client.post("/v1/chat/completions", json=body)
        except httpx.TimeoutException as exc:
            raise BackendError("timeout", f"request timed out: {exc}") from exc
        except httpx.TransportError as exc:
            raise BackendError("transport", f"transport failure: {exc}") from exc
        latency_ms = (time.monotonic() - start) * 1000.0
        if response.status_code != 200:
            detail = response.text[:500]
            if response.status_code == 400 and "context" in detail.lower():
                raise BackendError("context_overflow", f"server rejected prompt: {detail}")
            raise BackendError("server_error", f"HTTP {response.status_code}: {detail}")
        try:
            payload = response.json()
            text = payload["choices"][0]["message"]["content"] or ""
            usage = payload.get("usage", {})
        except (KeyError, IndexError, TypeError, json.JSONDecodeError) as exc:
            raise BackendError("server_error", f"malformed completion payload: {exc}") from exc
        if self.verbose:
            logger.info("response %s: %s", request.tag, json.dumps(payload)[:2000])
        prompt_tokens = usage.get("prompt_tokens")
        if prompt_tokens is None:
            prompt_tokens = self.counter.count(request.prompt) if self.counter else 0
        completion_tokens = usage.get("completion_tokens")
        if completion_tokens is None:
            completion_tokens = self.counter.count(text) if self.counter else 0
        cached = usage.get("prompt_tokens_details", {}).get("cached_tokens")
        if cached is not None:
            cached = min(cached, prompt_tokens)
        return CompletionResponse(
            text=text,
            prompt_tokens=prompt_tokens,
            cached_prompt_tokens=cached,
            completion_tokens=completion_tokens,
            latency_ms=latency_ms,
        )


__all__ = [
    "Backend",
    "BackendError",
    "CompletionRequest",
    "CompletionResponse",
    "CostModel",
    "HTTPBackend",
    "LengthModel",
    "MockBackend",
    "mock_latency",
    "schedule_wall",
]
