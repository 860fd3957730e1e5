"""Benchmark flow driver, judge grading, and sweep procedures.

The flow feeds documents one at a time and asks each question immediately
after its document is read, so the conversation accumulates the way a
long-horizon agent's history would. After every completed assistant turn the
engine checks the compaction trigger. Every backend call lands in the event
log as exactly one event, with simulated timestamps when the backend is a
mock so whole runs replay byte-identically.
"""

from __future__ import annotations

import json
import statistics
import string
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol, Sequence

from .backend import Backend, BackendError, CompletionRequest
from .conversation import ConversationState
from .engine import CompactionError, EngineConfig, compact_transcript, maybe_compact
from .metrics import RunMetrics, coefficient_of_variation, mean_pairwise_cosine, tf_embed
from .prompting import PromptCatalog, PromptVariant, build_sequential_prompt
from .tokenization import TokenCounter

EVENT_SCHEMA_VERSION = 1
REPORT_SCHEMA_VERSION = 1

DEFAULT_SYSTEM_PROMPT = (
    "You are a careful assistant. Read each document, then answer the "
    "question that follows using everything you have read so far."
)

DEFAULT_JUDGE_RUBRIC = (
    "You are grading an answer against a reference. Judge only whether the "
    "answer conveys the reference fact; wording differences do not matter.\n"
    "Question: {question}\n"
    "Reference answer: {gold}\n"
    "Candidate answer: {answer}\n"
    "Reply with exactly one word: correct or incorrect."
)

DEFAULT_INPUT_SIZES = (4096, 8192, 16384, 32768, 65536, 98304)
DEFAULT_BLOCK_SIZES = (16384, 8192, 4096, 2048)


class SweepError(RuntimeError):
    """Raised when a sweep cannot run (e.g. corpus shorter than a target size)."""


class DatasetError(ValueError):
    """Raised for malformed dataset files."""


@dataclass(frozen=True)
class Question:
    question_id: str
    question: str
    gold: str


@dataclass(frozen=True)
class DatasetRecord:
    doc_id: str
    text: str
    questions: list[Question]

    def __post_init__(self) -> None:
        if not self.text:
            raise DatasetError(f"document {self.doc_id!r} has empty text")
        if not self.questions:
            raise DatasetError(f"document {self.doc_id!r} has no questions")


def load_dataset(path: str | Path) -> list[DatasetRecord]:
    """Read one JSON object per line: doc_id, text, questions[{question_id, question, gold}]."""
    records = []
    for lineno, line in enumerate(Path(path).read_text("utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            raw = json.loads(line)
            records.append(DatasetRecord(
                doc_id=str(raw["doc_id"]),
                text=raw["text"],
                questions=[
                    Question(str(q["question_id"]), q["question"], q["gold"])
                    for q in raw["questions"]
                ],
            ))
        except (KeyError, TypeError, json.JSONDecodeError) as exc:
            raise DatasetError(f"{path}:{lineno}: bad dataset record: {exc}") from exc
    if not records:
        raise DatasetError(f"{path}: dataset is empty")
    return records


def load_corpus(path: str | Path) -> str:
    return Path(path).read_text("utf-8")


@dataclass(frozen=True)
class FlowEvent:
    kind: str  # turn | compaction | grade
    timestamp_ms: float
    payload: dict

    def to_dict(self) -> dict:
        return {
            "schema_version": EVENT_SCHEMA_VERSION,
            "kind": self.kind,
            "timestamp_ms": self.timestamp_ms,
            "payload": self.payload,
        }


def write_event_log(events: Sequence[FlowEvent], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for event in events:
            fh.write(json.dumps(event.to_dict(), sort_keys=True))
            fh.write("\n")


@dataclass(frozen=True)
class GradeResult:
    verdict: str  # correct | incorrect | ungraded
    latency_ms: float = 0.0


class Judge(Protocol):
    def grade(self, question: str, gold: str, answer: str) -> GradeResult: ...


_PUNCT_TABLE = str.maketrans({c: " " for c in string.punctuation})


def _normalize(text: str) -> str:
    return " ".join(text.casefold().translate(_PUNCT_TABLE).split())


class MockJudge:
    """Deterministic judge: normalized substring containment of gold in answer."""

    def grade(self, question: str, gold: str, answer: str) -> GradeResult:
        contained = _normalize(gold) in _normalize(answer)
        return GradeResult(verdict="correct" if contained else "incorrect")


class BackendJudge:
    """LLM-as-judge over a completion backend, deterministic and blind.

    The prompt carries only question, gold, and answer; the answering model's
    identity never appears. Requests always go out at temperature 0.
    """

    def __init__(self, backend: Backend, rubric_template: str = DEFAULT_JUDGE_RUBRIC,
                 max_output_tokens: int = 16) -> None:
        self.backend = backend
        self.rubric_template = rubric_template
        self.max_output_tokens = max_output_tokens

    def build_prompt(self, question: str, gold: str, answer: str) -> str:
        return self.rubric_template.format(question=question, gold=gold, answer=answer)

    def grade(self, question: str, gold: str, answer: str) -> GradeResult:
        request = CompletionRequest(
            prompt=self.build_prompt(question, gold, answer),
            max_output_tokens=self.max_output_tokens,
            temperature=0.0,
            tag="judge",
        )
        try:
            response = self.backend.complete(request)
        except BackendError:
            return GradeResult(verdict="ungraded")
        return GradeResult(verdict=self._parse(response.text), latency_ms=response.latency_ms)

    @staticmethod
    def _parse(text: str) -> str:
        for word in _normalize(text).split():
            if word in ("correct", "incorrect"):
                return word
        return "ungraded"


class _SimClock:
    _EPSILON_MS = 0.001  # keeps event timestamps strictly increasing

    def __init__(self) -> None:
        self.now_ms = 0.0

    def advance(self, ms: float) -> None:
        self.now_ms += ms

    def stamp(self) -> float:
        self.now_ms += self._EPSILON_MS
        return self.now_ms


@dataclass
class RunReport:
    metrics: RunMetrics
    grades: dict
    compactions: list[dict]
    events: list[FlowEvent] = field(default_factory=list)
    config_echo: dict = field(default_factory=dict)
    schema_version: int = REPORT_SCHEMA_VERSION

    @property
    def compaction_events(self) -> int:
        return self.metrics.compaction_events

    def to_dict(self) -> dict:
        from .metrics import compaction_ms_per_token, e2e_throughput

        ms_per_tok = None
        if self.metrics.compaction_decode_tokens > 0:
            ms_per_tok = compaction_ms_per_token(
                self.metrics.compaction_wall_ms, self.metrics.compaction_decode_tokens)
        throughput = None
        if self.metrics.e2e_wall_s > 0:
            throughput = e2e_throughput(self.metrics)
        return {
            "schema_version": self.schema_version,
            "config": self.config_echo,
            "metrics": {
                "e2e_wall_s": self.metrics.e2e_wall_s,
                "compaction_wall_ms": self.metrics.compaction_wall_ms,
                "compaction_decode_tokens": self.metrics.compaction_decode_tokens,
                "qa_decode_tokens": self.metrics.qa_decode_tokens,
                "compaction_events": self.metrics.compaction_events,
            },
            "e2e_throughput_tok_s": throughput,
            "compaction_ms_per_tok": ms_per_tok,
            "grades": self.grades,
            "compactions": self.compactions,
            "event_count": len(self.events),
        }

    def write(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n", "utf-8")


def run_flow(
    dataset: Sequence[DatasetRecord],
    engine_config: EngineConfig,
    backend: Backend,
    judge: Judge | None = None,
    *,
    counter: TokenCounter,
    system_prompt: str = DEFAULT_SYSTEM_PROMPT,
    qa_temperature: float = 0.0,
    max_output_qa: int = 1024,
    seed: int = 0,
    config_echo: dict | None = None,
) -> RunReport:
    """Drive the document/question flow with compaction checks after each answer."""
    if not dataset:
        raise DatasetError("dataset must be non-empty")
    state = ConversationState.new(system_prompt, counter)
    clock = _SimClock()
    started = time.monotonic()
    events: list[FlowEvent] = []
    compactions: list[dict] = []
    qa_decode = 0
    compaction_decode = 0
    compaction_wall = 0.0
    grades = {"graded": 0, "correct": 0, "incorrect": 0, "ungraded": 0}
    request_index = 0
    max_cycle_tokens = 0
    compaction_failed_once = False

    def next_seed() -> int:
        nonlocal request_index
        request_index += 1
        return seed * 1_000_003 + request_index

    for record in dataset:
        doc_msg = state.append_text("user", record.text)
        doc_tokens = doc_msg.token_count
        for question in record.questions:
            q_msg = state.append_text("user", question.question)
            prompt = state.render_transcript()
            request = CompletionRequest(
                prompt=prompt,
                max_output_tokens=max_output_qa,
                temperature=qa_temperature,
                seed=next_seed(),
                tag="qa",
            )
            try:
                response = backend.complete(request)
            except BackendError as exc:
                events.append(FlowEvent("turn", clock.stamp(), {
                    "doc_id": record.doc_id,
                    "question_id": question.question_id,
                    "status": "failed",
                    "error_kind": exc.kind,
                    "error": str(exc),
                }))
                doc_tokens = 0
                continue  # skip grading for this question
            answer_msg = state.append_text("assistant", response.text)
            clock.advance(response.latency_ms)
            cycle_tokens = doc_tokens + q_msg.token_count + answer_msg.token_count
            max_cycle_tokens = max(max_cycle_tokens, cycle_tokens)
            qa_decode += response.completion_tokens
            events.append(FlowEvent("turn", clock.stamp(), {
                "doc_id": record.doc_id,
                "question_id": question.question_id,
                "status": "ok",
                "doc_tokens": doc_tokens,
                "question_tokens": q_msg.token_count,
                "answer_tokens": response.completion_tokens,
                "prompt_tokens": response.prompt_tokens,
                "cached_prompt_tokens": response.cached_prompt_tokens,
                "latency_ms": response.latency_ms,
                "context_tokens": state.total_tokens,
            }))
            if not compaction_failed_once:
                assert state.total_tokens <= engine_config.threshold_tau + max_cycle_tokens, (
                    "context overshot the threshold by more than one turn")
            doc_tokens = 0  # the document counts against the first question's cycle only

            if judge is not None:
                result = judge.grade(question.question, question.gold, response.text)
                clock.advance(result.latency_ms)
                grades["graded"] += 1
                grades[result.verdict] += 1
                events.append(FlowEvent("grade", clock.stamp(), {
                    "question_id": question.question_id,
                    "verdict": result.verdict,
                    "judge_latency_ms": result.latency_ms,
                }))

            try:
                report = maybe_compact(state, engine_config, backend, seed_base=next_seed())
            except CompactionError as exc:
                compaction_failed_once = True
                events.append(FlowEvent("compaction", clock.stamp(), {
                    "status": "failed",
                    "error_kind": exc.kind,
                    "error": str(exc),
                    "context_tokens": state.total_tokens,
                }))
                continue
            if report is not None:
                clock.advance(report.wall_ms)
                compaction_decode += report.total_decode_tokens
                compaction_wall += report.wall_ms
                payload = report.to_dict()
                payload["status"] = "ok"
                payload["context_tokens_after"] = state.total_tokens
                events.append(FlowEvent("compaction", clock.stamp(), payload))
                compactions.append(payload)

    if backend.simulated:
        e2e_wall_s = clock.now_ms / 1000.0
    else:
        e2e_wall_s = time.monotonic() - started
    metrics = RunMetrics(
        e2e_wall_s=e2e_wall_s,
        compaction_wall_ms=compaction_wall,
        compaction_decode_tokens=compaction_decode,
        qa_decode_tokens=qa_decode,
        compaction_events=len(compactions),
    )
    return RunReport(
        metrics=metrics,
        grades=grades,
        compactions=compactions,
        events=events,
        config_echo=config_echo or {},
    )


def truncate_corpus(corpus: str, size: int, counter: TokenCounter) -> str:
    head, _ = counter.take(corpus, size)
    if counter.count(head) != size:
        raise SweepError(
            f"corpus holds {counter.count(corpus)} tokens, cannot truncate to {size}")
    return head


@dataclass(frozen=True)
class StabilityRow:
    input_tokens: int
    variant_key: str
    cv_pct: float
    mean_cosine: float
    mean_output_tokens: float


def _repeat_compaction(
    prompt: str, repeats: int, temperature: float, backend: Backend,
    seed_base: int, max_output_tokens: int,
) -> tuple[list[int], list[str]]:
    counts, texts = [], []
    for i in range(1, repeats + 1):
        response = backend.complete(CompletionRequest(
            prompt=prompt,
            max_output_tokens=max_output_tokens,
            temperature=temperature,
            seed=seed_base + i,
            tag="compaction-seq",
        ))
        counts.append(response.completion_tokens)
        texts.append(response.text)
    return counts, texts


def variant_key(variant: PromptVariant) -> str:
    return variant.length_hint if variant.length_hint is not None else variant.detail


def stability_sweep(
    corpus: str,
    input_sizes: Sequence[int],
    repeats: int,
    variant: PromptVariant,
    backend: Backend,
    counter: TokenCounter,
    *,
    temperature: float = 0.7,
    seed_base: int = 0,
    max_output_tokens: int = 8192,
    embedder=tf_embed,
) -> list[StabilityRow]:
    """Repeat compaction at each input size; report CV and mean pairwise cosine."""
    if repeats < 2:
        raise SweepError("stability needs at least two repeats")
    rows = []
    for size in input_sizes:
        text = truncate_corpus(corpus, size, counter)
        prompt = build_sequential_prompt(text, variant)
        counts, texts = _repeat_compaction(prompt, repeats, temperature, backend,
                                           seed_base, max_output_tokens)
        rows.append(StabilityRow(
            input_tokens=size,
            variant_key=variant_key(variant),
            cv_pct=coefficient_of_variation(counts),
            mean_cosine=mean_pairwise_cosine(texts, embedder),
            mean_output_tokens=statistics.fmean(counts),
        ))
    return rows


def prompt_stability_sweep(
    corpus: str,
    input_size: int,
    variants: Sequence[PromptVariant],
    repeats: int,
    backend: Backend,
    counter: TokenCounter,
    *,
    temperature: float = 0.7,
    seed_base: int = 0,
    max_output_tokens: int = 8192,
    embedder=tf_embed,
) -> list[StabilityRow]:
    """Stability across prompt variants at one fixed input size."""
    if repeats < 2:
        raise SweepError("stability needs at least two repeats")
    text = truncate_corpus(corpus, input_size, counter)
    rows = []
    for variant in variants:
        prompt = build_sequential_prompt(text, variant)
        counts, texts = _repeat_compaction(prompt, repeats, temperature, backend,
                                           seed_base, max_output_tokens)
        rows.append(StabilityRow(
            input_tokens=input_size,
            variant_key=variant_key(variant),
            cv_pct=coefficient_of_variation(counts),
            mean_cosine=mean_pairwise_cosine(texts, embedder),
            mean_output_tokens=statistics.fmean(counts),
        ))
    return rows


@dataclass(frozen=True)
class ScalingRow:
    input_tokens: int
    variant_key: str
    mean_output_tokens: float
    output_input_pct: float


def scaling_sweep(
    corpus: str,
    input_sizes: Sequence[int],
    details: Sequence[str],
    backend: Backend,
    counter: TokenCounter,
    catalog: PromptCatalog,
    *,
    repeats: int = 1,
    temperature: float = 0.0,
    seed_base: int = 0,
    max_output_tokens: int = 8192,
) -> list[ScalingRow]:
    """Sequential summarization output volume against input size, per variant."""
    rows = []
    for size in input_sizes:
        text = truncate_corpus(corpus, size, counter)
        for detail in details:
            variant = catalog.variant("sequential", detail)
            prompt = build_sequential_prompt(text, variant)
            counts, _ = _repeat_compaction(prompt, max(repeats, 1), temperature, backend,
                                           seed_base, max_output_tokens)
            mean_out = statistics.fmean(counts)
            rows.append(ScalingRow(
                input_tokens=size,
                variant_key=detail,
                mean_output_tokens=mean_out,
                output_input_pct=100.0 * mean_out / size,
            ))
    return rows


@dataclass(frozen=True)
class RatioRow:
    config_label: str  # "sequential" or the block size
    variant_key: str
    output_tokens: int
    output_input_pct: float


def ratio_grid(
    corpus: str,
    input_size: int,
    details: Sequence[str],
    block_sizes: Sequence[int],
    backend: Backend,
    counter: TokenCounter,
    catalog: PromptCatalog,
    *,
    seed_base: int = 0,
    max_output_sequential: int = 8192,
    max_output_worker: int = 4096,
    temperature: float = 0.0,
) -> list[RatioRow]:
    """Compaction output as a percentage of a fixed input across configurations."""
    text = truncate_corpus(corpus, input_size, counter)
    rows = []
    for detail in details:
        config = EngineConfig(
            threshold_tau=input_size,
            strategy="sequential",
            variant=catalog.variant("sequential", detail),
            max_output_sequential=max_output_sequential,
            temperature=temperature,
        )
        report = compact_transcript(text, config, backend, counter, seed_base)
        rows.append(RatioRow("sequential", detail, report.total_decode_tokens,
                             100.0 * report.total_decode_tokens / input_size))
    for block_size in block_sizes:
        for detail in details:
            config = EngineConfig(
                threshold_tau=input_size,
                strategy="parallel",
                variant=catalog.variant("parallel", detail),
                block_size=block_size,
                max_output_worker=max_output_worker,
                temperature=temperature,
            )
            report = compact_transcript(text, config, backend, counter, seed_base)
            rows.append(RatioRow(str(block_size), detail, report.total_decode_tokens,
                                 100.0 * report.total_decode_tokens / input_size))
    return rows
