"""Stability and performance metrics.

Length stability is the coefficient of variation of output token counts over
repeated identical calls; content stability is the mean pairwise cosine
similarity of summary embeddings. The built-in embedder is a deterministic
L2-normalized term-frequency vectorizer so the whole stability pipeline runs
hermetically; a sentence-encoder endpoint can be plugged in instead.
"""

from __future__ import annotations

import math
import re
import statistics
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import httpx


class MetricError(ValueError):
    """Raised when a metric's preconditions are violated."""


@dataclass(frozen=True)
class StabilitySample:
    output_token_counts: list[int]
    summaries: list[str]

    def __post_init__(self) -> None:
        if len(self.output_token_counts) < 2:
            raise MetricError("stability needs at least two repeats")
        if len(self.output_token_counts) != len(self.summaries):
            raise MetricError("token counts and summaries must align by run index")


@dataclass(frozen=True)
class RunMetrics:
    e2e_wall_s: float
    compaction_wall_ms: float
    compaction_decode_tokens: int
    qa_decode_tokens: int
    compaction_events: int

    def __post_init__(self) -> None:
        if min(self.e2e_wall_s, self.compaction_wall_ms,
               self.compaction_decode_tokens, self.qa_decode_tokens,
               self.compaction_events) < 0:
            raise MetricError("run metrics must be non-negative")
        if self.compaction_wall_ms > self.e2e_wall_s * 1000.0 + 1e-6:
            raise MetricError("compaction wall cannot exceed E2E wall")


def coefficient_of_variation(samples: Sequence[float]) -> float:
    """100 * population stddev / mean, in percent."""
    if len(samples) < 2:
        raise MetricError("CV needs at least two samples")
    mean = statistics.fmean(samples)
    if mean <= 0:
        raise MetricError("CV requires a positive mean")
    return 100.0 * statistics.pstdev(samples) / mean


_TOKEN_RE = re.compile(r"[^0-9a-z]+")


def tf_embed(text: str) -> dict[str, float]:
    """L2-normalized term-frequency vector; empty text maps to the zero vector."""
    counts: dict[str, float] = {}
    for term in _TOKEN_RE.split(text.lower()):
        if term:
            counts[term] = counts.get(term, 0.0) + 1.0
    norm = math.sqrt(sum(v * v for v in counts.values()))
    if norm == 0.0:
        return {}
    return {term: v / norm for term, v in counts.items()}


def cosine(u, v) -> float:
    """Cosine similarity for sparse dicts or dense vectors.

    Two zero vectors compare as 1.0 (identical emptiness); a zero against a
    non-zero vector compares as 0.0.
    """
    if isinstance(u, Mapping) and isinstance(v, Mapping):
        dot = sum(w * v[t] for t, w in u.items() if t in v)
        nu = math.sqrt(sum(w * w for w in u.values()))
        nv = math.sqrt(sum(w * w for w in v.values()))
    else:
        dot = sum(a * b for a, b in zip(u, v))
        nu = math.sqrt(sum(a * a for a in u))
        nv = math.sqrt(sum(b * b for b in v))
    if nu == 0.0 and nv == 0.0:
        return 1.0
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return dot / (nu * nv)


def mean_pairwise_cosine(texts: Sequence[str], embedder: Callable = tf_embed) -> float:
    """Average cosine over all unordered pairs of embedded texts."""
    if len(texts) < 2:
        raise MetricError("pairwise cosine needs at least two texts")
    vectors = [embedder(t) for t in texts]
    total = 0.0
    n = len(vectors)
    for i in range(n):
        for j in range(i + 1, n):
            total += cosine(vectors[i], vectors[j])
    return total * 2.0 / (n * (n - 1))


def compaction_fraction(compaction_wall_ms: float, e2e_wall_ms: float) -> float:
    """Percent of E2E wall time spent inside compaction events."""
    if e2e_wall_ms <= 0:
        raise MetricError("e2e wall must be > 0")
    if compaction_wall_ms > e2e_wall_ms:
        raise MetricError("compaction wall cannot exceed e2e wall")
    return 100.0 * compaction_wall_ms / e2e_wall_ms


def e2e_throughput(metrics: RunMetrics) -> float:
    """(compaction decode + QA decode) tokens per E2E wall second."""
    if metrics.e2e_wall_s <= 0:
        raise MetricError("e2e wall must be > 0")
    return (metrics.compaction_decode_tokens + metrics.qa_decode_tokens) / metrics.e2e_wall_s


def compaction_ms_per_token(compaction_wall_ms: float, compaction_decode_tokens: int) -> float:
    """Compaction wall (prefill included) per decoded token."""
    if compaction_decode_tokens <= 0:
        raise MetricError("compaction decode tokens must be > 0")
    return compaction_wall_ms / compaction_decode_tokens


@dataclass(frozen=True)
class TaggedRun:
    group: str  # pairing scope, e.g. "model/benchmark"
    kind: str  # seq | par
    label: str  # e.g. block size
    metrics: RunMetrics

    def __post_init__(self) -> None:
        if self.kind not in ("seq", "par"):
            raise MetricError(f"kind must be seq or par, got {self.kind!r}")


@dataclass(frozen=True)
class MatchedPair:
    group: str
    seq_label: str
    par_label: str
    seq_decode_tokens: int
    par_decode_tokens: int
    gap_pct: float
    throughput_ratio: float | None  # seq ms/tok over par ms/tok


def decode_matched(seq_tokens: int, par_tokens: int, tolerance_pct: float) -> bool:
    if seq_tokens <= 0:
        raise MetricError("sequential decode tokens must be > 0")
    return abs(seq_tokens - par_tokens) / seq_tokens * 100.0 <= tolerance_pct


def matched_decode_pairs(runs: Sequence[TaggedRun], tolerance_pct: float = 25.0) -> list[MatchedPair]:
    """Pair seq/par runs within each group whose compaction decode volumes agree.

    Each pair is annotated with the sequential-over-parallel compaction ms/tok
    ratio (the throughput gain attributable to parallelism at matched volume).
    """
    seq_runs = [r for r in runs if r.kind == "seq"]
    par_runs = [r for r in runs if r.kind == "par"]
    if not seq_runs or not par_runs:
        raise MetricError("need at least one seq and one par run")
    pairs = []
    for seq in seq_runs:
        for par in par_runs:
            if par.group != seq.group:
                continue
            seq_decode = seq.metrics.compaction_decode_tokens
            par_decode = par.metrics.compaction_decode_tokens
            if not decode_matched(seq_decode, par_decode, tolerance_pct):
                continue
            ratio = None
            if par_decode > 0 and par.metrics.compaction_wall_ms > 0 and seq.metrics.compaction_wall_ms > 0:
                ratio = (
                    compaction_ms_per_token(seq.metrics.compaction_wall_ms, seq_decode)
                    / compaction_ms_per_token(par.metrics.compaction_wall_ms, par_decode)
                )
            pairs.append(MatchedPair(
                group=seq.group,
                seq_label=seq.label,
                par_label=par.label,
                seq_decode_tokens=seq_decode,
                par_decode_tokens=par_decode,
                gap_pct=abs(seq_decode - par_decode) / seq_decode * 100.0,
                throughput_ratio=ratio,
            ))
    return pairs


class HTTPEmbedder:
    """Client for an OpenAI-compatible embeddings endpoint."""

    def __init__(self, base_url: str, model: str, api_key: str | None = None,
                 timeout_s: float = 60.0, transport: httpx.BaseTransport | None = None) -> None:
        headers = {}
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        self.model = model
        self._client = httpx.Client(base_url=base_url.rstrip("/"), headers=headers,
                                    timeout=timeout_s, transport=transport)

    def __call__(self, text: str) -> list[float]:
        response = self._client.post("/v1/embeddings", json={"model": self.model, "input": text})
        response.raise_for_status()
        return response.json()["data"][0]["embedding"]

    def close(self) -> None:
        self._client.close()
