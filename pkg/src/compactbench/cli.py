"""Command-line entry point: run, sweep, stability, scaling, report.

Config precedence is flags > environment variables > config file > built-in
defaults. Mock mode swaps the completion backend, the judge, and the embedder
for hermetic deterministic implementations; nothing touches the network.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

from . import harness, metrics, tables
from .backend import Backend, CostModel, HTTPBackend, LengthModel, MockBackend
from .engine import EngineConfig
from .harness import (
    DEFAULT_BLOCK_SIZES,
    DEFAULT_INPUT_SIZES,
    DEFAULT_SYSTEM_PROMPT,
    BackendJudge,
    MockJudge,
    RunReport,
    load_corpus,
    load_dataset,
    run_flow,
    write_event_log,
)
from .metrics import HTTPEmbedder, MetricError, RunMetrics, TaggedRun, matched_decode_pairs, tf_embed
from .prompting import DETAILS, LENGTH_HINTS, PromptCatalog
from .tokenization import TokenCounter

ENV_VARS = {
    "base_url": "COMPACTBENCH_BASE_URL",
    "api_key": "COMPACTBENCH_API_KEY",
    "judge_base_url": "COMPACTBENCH_JUDGE_BASE_URL",
    "judge_api_key": "COMPACTBENCH_JUDGE_API_KEY",
    "embed_base_url": "COMPACTBENCH_EMBED_BASE_URL",
    "embed_api_key": "COMPACTBENCH_EMBED_API_KEY",
}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    # engine
    strategy: str = "sequential"
    tau: int = 98304
    block_size: int = 16384
    detail: str = "detailed"
    length_hint: str | None = None
    max_output_sequential: int = 8192
    max_output_worker: int = 4096
    compaction_temperature: float = 0.0
    worker_retries: int = 1
    # qa turns
    qa_temperature: float = 0.0
    max_output_qa: int = 1024
    system_prompt: str = DEFAULT_SYSTEM_PROMPT
    grade: bool = False
    # token counting
    chars_per_token: int = 4
    # backends
    mock: bool = False
    base_url: str | None = None
    api_key: str | None = None
    model: str = "default-model"
    judge_base_url: str | None = None
    judge_api_key: str | None = None
    judge_model: str | None = None
    embed_base_url: str | None = None
    embed_api_key: str | None = None
    embed_model: str | None = None
    max_concurrency: int = 32
    request_timeout_s: float = 300.0
    verbose: bool = False
    # mock models
    mock_sigma: float = 0.0
    mock_prefill_uncached_ms: float = 0.5
    mock_prefill_cached_ms: float = 0.02
    mock_decode_ms: float = 15.0
    mock_qa_output_tokens: int = 128
    mock_context_window: int | None = None
    # inputs and outputs
    dataset: str | None = None
    corpus: str | None = None
    prompt_catalog: str | None = None
    out_dir: str = "out"
    label: str = "run"
    group: str = "default"
    # sweeps
    seed: int = 0
    repeats: int = 10
    block_sizes: list[int] = field(default_factory=lambda: list(DEFAULT_BLOCK_SIZES))
    input_sizes: list[int] = field(default_factory=lambda: list(DEFAULT_INPUT_SIZES))
    details: list[str] = field(default_factory=lambda: list(DETAILS))
    stability_input_size: int = 4096
    stability_temperature: float = 0.7
    by_prompt: bool = False
    tolerance_pct: float = 25.0

    def validate(self, command: str) -> list[str]:
        errors = []
        if self.strategy not in ("sequential", "parallel"):
            errors.append(f"strategy: must be sequential or parallel, got {self.strategy!r}")
        if self.tau <= 0:
            errors.append("tau: must be > 0")
        if self.block_size <= 0:
            errors.append("block-size: must be > 0")
        if self.strategy == "parallel" and self.tau <= self.block_size:
            errors.append("tau: must exceed block-size for the parallel strategy")
        if self.detail not in DETAILS:
            errors.append(f"detail: must be one of {DETAILS}, got {self.detail!r}")
        if self.length_hint is not None and self.length_hint not in LENGTH_HINTS:
            errors.append(f"length-hint: must be one of {LENGTH_HINTS}")
        if self.chars_per_token < 1:
            errors.append("chars-per-token: must be >= 1")
        if self.mock_sigma < 0:
            errors.append("mock-sigma: must be >= 0")
        if self.max_concurrency < 1:
            errors.append("max-concurrency: must be >= 1")
        if not self.mock and command in ("run", "sweep", "stability", "scaling") and not self.base_url:
            errors.append("base-url: required unless --mock is set "
                          f"(flag, config file, or ${ENV_VARS['base_url']})")
        if command in ("run", "sweep") and not self.dataset:
            errors.append("dataset: required for this command")
        if command in ("stability", "scaling") and not self.corpus:
            errors.append("corpus: required for this command")
        if command == "stability" and self.repeats < 2:
            errors.append("repeats: stability needs at least 2")
        for name in ("block_sizes", "input_sizes"):
            if any(v <= 0 for v in getattr(self, name)):
                errors.append(f"{name.replace('_', '-')}: entries must be > 0")
        for detail in self.details:
            if detail not in DETAILS:
                errors.append(f"details: unknown detail level {detail!r}")
        return errors


def _resolve_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig()
    if getattr(args, "config", None):
        try:
            overrides = json.loads(Path(args.config).read_text("utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"config: cannot read {args.config}: {exc}") from exc
        if not isinstance(overrides, dict):
            raise ConfigError("config: file must hold a JSON object")
        valid = {f.name for f in dataclasses.fields(RunConfig)}
        for key, value in overrides.items():
            if key not in valid:
                raise ConfigError(f"config: unknown field {key!r}")
            setattr(cfg, key, value)
    for field_name, env_name in ENV_VARS.items():
        value = os.environ.get(env_name)
        if value:
            setattr(cfg, field_name, value)
    for field_info in dataclasses.fields(RunConfig):
        value = getattr(args, field_info.name, None)
        if value is not None:
            setattr(cfg, field_info.name, value)
    return cfg


def build_counter(cfg: RunConfig) -> TokenCounter:
    return TokenCounter(kind="heuristic", chars_per_token=cfg.chars_per_token)


def build_catalog(cfg: RunConfig) -> PromptCatalog:
    return PromptCatalog.load(cfg.prompt_catalog)


def build_backend(cfg: RunConfig, counter: TokenCounter, catalog: PromptCatalog) -> Backend:
    if cfg.mock:
        cost = CostModel(
            prefill_uncached_ms_per_tok=cfg.mock_prefill_uncached_ms,
            prefill_cached_ms_per_tok=cfg.mock_prefill_cached_ms,
            decode_ms_per_tok=cfg.mock_decode_ms,
            max_concurrency=cfg.max_concurrency,
        )
        length = LengthModel(sigma=cfg.mock_sigma, qa_output_tokens=cfg.mock_qa_output_tokens)
        return MockBackend(counter, cost=cost, length_model=length, catalog=catalog,
                           context_window=cfg.mock_context_window)
    assert cfg.base_url is not None
    return HTTPBackend(
        base_url=cfg.base_url,
        model=cfg.model,
        api_key=cfg.api_key,
        counter=counter,
        timeout_s=cfg.request_timeout_s,
        max_concurrency=cfg.max_concurrency,
        verbose=cfg.verbose,
    )


def build_judge(cfg: RunConfig, counter: TokenCounter):
    if not cfg.grade:
        return None
    if cfg.mock:
        return MockJudge()
    if not cfg.judge_base_url:
        raise ConfigError("judge-base-url: required for grading without --mock")
    backend = HTTPBackend(
        base_url=cfg.judge_base_url,
        model=cfg.judge_model or cfg.model,
        api_key=cfg.judge_api_key,
        counter=counter,
        timeout_s=cfg.request_timeout_s,
    )
    return BackendJudge(backend)


def build_embedder(cfg: RunConfig):
    if cfg.mock or not cfg.embed_base_url:
        return tf_embed
    return HTTPEmbedder(cfg.embed_base_url, cfg.embed_model or "embedding",
                        api_key=cfg.embed_api_key, timeout_s=cfg.request_timeout_s)


def build_engine_config(cfg: RunConfig, catalog: PromptCatalog) -> EngineConfig:
    variant = catalog.variant(cfg.strategy, cfg.detail, cfg.length_hint)
    return EngineConfig(
        threshold_tau=cfg.tau,
        strategy=cfg.strategy,
        variant=variant,
        block_size=cfg.block_size if cfg.strategy == "parallel" else None,
        max_output_sequential=cfg.max_output_sequential,
        max_output_worker=cfg.max_output_worker,
        temperature=cfg.compaction_temperature,
        worker_retries=cfg.worker_retries,
    )


def _config_echo(cfg: RunConfig, strategy: str, block_size: int | None) -> dict:
    return {
        "strategy": strategy,
        "tau": cfg.tau,
        "block_size": block_size,
        "detail": cfg.detail,
        "length_hint": cfg.length_hint,
        "seed": cfg.seed,
        "chars_per_token": cfg.chars_per_token,
        "mock": cfg.mock,
        "mock_sigma": cfg.mock_sigma,
        "dataset": cfg.dataset,
        "label": cfg.label,
        "group": cfg.group,
    }


def _run_row(label: str, block_size, report: RunReport) -> list:
    m = report.metrics
    throughput = metrics.e2e_throughput(m) if m.e2e_wall_s > 0 else 0.0
    ms_per_tok = (metrics.compaction_ms_per_token(m.compaction_wall_ms, m.compaction_decode_tokens)
                  if m.compaction_decode_tokens > 0 else None)
    graded = report.grades["graded"]
    accuracy = f"{100.0 * report.grades['correct'] / graded:.1f}%" if graded else "n/a"
    return [
        label,
        block_size if block_size is not None else "-",
        tables.fmt(m.e2e_wall_s, 1),
        tables.fmt(throughput, 1),
        m.compaction_decode_tokens,
        m.qa_decode_tokens,
        tables.fmt(ms_per_tok, 2),
        m.compaction_events,
        accuracy,
    ]


RUN_HEADERS = ["variant", "block", "e2e_wall_s", "e2e_tok_s", "compact_decode_tok",
               "qa_decode_tok", "compact_ms_per_tok", "events", "accuracy"]


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_table(out: Path, stem: str, headers, rows) -> None:
    (out / f"{stem}.csv").write_text(tables.render_csv(headers, rows), "utf-8")
    (out / f"{stem}.txt").write_text(tables.render_aligned(headers, rows), "utf-8")


def cmd_run(cfg: RunConfig) -> int:
    counter = build_counter(cfg)
    catalog = build_catalog(cfg)
    dataset = load_dataset(cfg.dataset)
    backend = build_backend(cfg, counter, catalog)
    judge = build_judge(cfg, counter)
    engine_config = build_engine_config(cfg, catalog)
    report = run_flow(
        dataset, engine_config, backend, judge,
        counter=counter,
        system_prompt=cfg.system_prompt,
        qa_temperature=cfg.qa_temperature,
        max_output_qa=cfg.max_output_qa,
        seed=cfg.seed,
        config_echo=_config_echo(
            cfg, cfg.strategy, cfg.block_size if cfg.strategy == "parallel" else None),
    )
    out = _out_dir(cfg)
    report.write(out / f"{cfg.label}.report.json")
    write_event_log(report.events, out / f"{cfg.label}.events.jsonl")
    label = cfg.strategy if cfg.strategy == "sequential" else f"parallel-{cfg.detail}"
    print(tables.render_aligned(RUN_HEADERS, [_run_row(label, engine_config.block_size, report)]))
    print(f"report: {out / (cfg.label + '.report.json')}")
    print(f"events: {out / (cfg.label + '.events.jsonl')}")
    ok_turns = sum(1 for e in report.events
                   if e.kind == "turn" and e.payload.get("status") == "ok")
    if ok_turns == 0:
        print("error: no QA turn completed; backend unreachable?", file=sys.stderr)
        return 1
    return 0


def cmd_sweep(cfg: RunConfig) -> int:
    counter = build_counter(cfg)
    catalog = build_catalog(cfg)
    dataset = load_dataset(cfg.dataset)
    judge = build_judge(cfg, counter)
    out = _out_dir(cfg)

    runs: list[tuple[str, str, int | None, RunReport | Exception]] = []
    for detail in cfg.details:
        for strategy, block_size in [("sequential", None)] + [("parallel", b) for b in cfg.block_sizes]:
            run_cfg = dataclasses.replace(cfg, strategy=strategy, detail=detail,
                                          block_size=block_size or cfg.block_size)
            try:
                engine_config = build_engine_config(run_cfg, catalog)
                backend = build_backend(run_cfg, counter, catalog)  # fresh cache per run
                report = run_flow(
                    dataset, engine_config, backend, judge,
                    counter=counter,
                    system_prompt=cfg.system_prompt,
                    qa_temperature=cfg.qa_temperature,
                    max_output_qa=cfg.max_output_qa,
                    seed=cfg.seed,
                    config_echo=_config_echo(run_cfg, strategy, block_size),
                )
                report.write(out / f"{cfg.label}.{detail}.{block_size or 'seq'}.report.json")
                runs.append((detail, strategy, block_size, report))
            except Exception as exc:  # annotate the row, keep sweeping
                runs.append((detail, strategy, block_size, exc))

    headers = RUN_HEADERS + ["d_wall", "d_tok_s", "d_compact_decode", "d_qa_decode", "d_ms_per_tok"]
    rows = []
    baselines: dict[str, RunMetrics] = {}
    for detail, strategy, block_size, result in runs:
        if isinstance(result, Exception):
            rows.append([detail, block_size or "-", f"error: {result}"] + [""] * (len(headers) - 3))
            continue
        m = result.metrics
        if strategy == "sequential":
            baselines[detail] = m
        row = _run_row(detail, block_size, result)
        base = baselines.get(detail)
        if base is None:
            row += ["n/a"] * 5
        else:
            base_ms = (base.compaction_wall_ms / base.compaction_decode_tokens
                       if base.compaction_decode_tokens else 0.0)
            this_ms = (m.compaction_wall_ms / m.compaction_decode_tokens
                       if m.compaction_decode_tokens else 0.0)
            row += [
                tables.ratio_delta(m.e2e_wall_s, base.e2e_wall_s, higher_is_better=False),
                tables.ratio_delta(metrics.e2e_throughput(m), metrics.e2e_throughput(base)),
                tables.ratio_delta(m.compaction_decode_tokens, base.compaction_decode_tokens),
                tables.ratio_delta(m.qa_decode_tokens, base.qa_decode_tokens),
                tables.ratio_delta(this_ms, base_ms, higher_is_better=False),
            ]
        rows.append(row)
    _write_table(out, f"{cfg.label}.sweep", headers, rows)
    print(tables.render_aligned(headers, rows))
    if any(isinstance(r[3], Exception) for r in runs):
        return 1
    return 0


def cmd_stability(cfg: RunConfig) -> int:
    counter = build_counter(cfg)
    catalog = build_catalog(cfg)
    corpus = load_corpus(cfg.corpus)
    backend = build_backend(cfg, counter, catalog)
    embedder = build_embedder(cfg)
    out = _out_dir(cfg)
    if cfg.by_prompt:
        variants = [catalog.variant("sequential", cfg.detail, hint) for hint in LENGTH_HINTS]
        rows_data = harness.prompt_stability_sweep(
            corpus, cfg.stability_input_size, variants, cfg.repeats, backend, counter,
            temperature=cfg.stability_temperature, seed_base=cfg.seed,
            max_output_tokens=cfg.max_output_sequential, embedder=embedder,
        )
        headers = ["prompt", "input_tok", "cv_pct", "cosine", "mean_output_tok"]
        rows = [[r.variant_key, r.input_tokens, tables.fmt(r.cv_pct), tables.fmt(r.mean_cosine, 3),
                 tables.fmt(r.mean_output_tokens)] for r in rows_data]
    else:
        variant = catalog.variant("sequential", cfg.detail, cfg.length_hint)
        rows_data = harness.stability_sweep(
            corpus, cfg.input_sizes, cfg.repeats, variant, backend, counter,
            temperature=cfg.stability_temperature, seed_base=cfg.seed,
            max_output_tokens=cfg.max_output_sequential, embedder=embedder,
        )
        headers = ["input_tok", "cv_pct", "d_cv", "cosine", "d_cosine", "mean_output_tok"]
        rows = []
        base = rows_data[0] if rows_data else None
        for i, r in enumerate(rows_data):
            d_cv = "-" if i == 0 else tables.signed_delta(r.cv_pct, base.cv_pct)
            d_cos = "-" if i == 0 else tables.signed_delta(r.mean_cosine, base.mean_cosine, 3)
            rows.append([r.input_tokens, tables.fmt(r.cv_pct), d_cv,
                         tables.fmt(r.mean_cosine, 3), d_cos, tables.fmt(r.mean_output_tokens)])
    _write_table(out, f"{cfg.label}.stability", headers, rows)
    print(tables.render_aligned(headers, rows))
    return 0


def cmd_scaling(cfg: RunConfig) -> int:
    counter = build_counter(cfg)
    catalog = build_catalog(cfg)
    corpus = load_corpus(cfg.corpus)
    backend = build_backend(cfg, counter, catalog)
    out = _out_dir(cfg)
    scaling_rows = harness.scaling_sweep(
        corpus, cfg.input_sizes, cfg.details, backend, counter, catalog,
        repeats=max(1, cfg.repeats if cfg.mock_sigma > 0 else 1),
        temperature=cfg.compaction_temperature, seed_base=cfg.seed,
        max_output_tokens=cfg.max_output_sequential,
    )
    headers = ["input_tok", "variant", "mean_output_tok", "output_input_pct"]
    rows = [[r.input_tokens, r.variant_key, tables.fmt(r.mean_output_tokens),
             tables.fmt(r.output_input_pct)] for r in scaling_rows]
    _write_table(out, f"{cfg.label}.scaling", headers, rows)
    print(tables.render_aligned(headers, rows))

    grid_size = max(cfg.input_sizes)
    grid_rows = harness.ratio_grid(
        corpus, grid_size, cfg.details, cfg.block_sizes, backend, counter, catalog,
        seed_base=cfg.seed, max_output_sequential=cfg.max_output_sequential,
        max_output_worker=cfg.max_output_worker, temperature=cfg.compaction_temperature,
    )
    grid_headers = ["config", "variant", "output_tok", f"output_over_{grid_size}_pct"]
    grid_table = [[r.config_label, r.variant_key, r.output_tokens, tables.fmt(r.output_input_pct)]
                  for r in grid_rows]
    _write_table(out, f"{cfg.label}.ratio_grid", grid_headers, grid_table)
    print(tables.render_aligned(grid_headers, grid_table))
    return 0


def _load_report(path: str) -> dict:
    data = json.loads(Path(path).read_text("utf-8"))
    if not isinstance(data, dict) or "metrics" not in data:
        raise ValueError("not a run report")
    return data


def cmd_report(paths: list[str], tolerance_pct: float, out_dir: str) -> int:
    reports = []
    skipped = []
    for path in paths:
        try:
            reports.append((path, _load_report(path)))
        except (OSError, ValueError, json.JSONDecodeError) as exc:
            skipped.append((path, str(exc)))
    for path, reason in skipped:
        print(f"skipped {path}: {reason}", file=sys.stderr)
    if not reports:
        print("no readable reports", file=sys.stderr)
        return 1

    tagged = []
    ratio_rows = []
    for path, data in reports:
        config = data.get("config", {})
        m = data["metrics"]
        strategy = config.get("strategy", "sequential")
        block = config.get("block_size")
        label = "sequential" if strategy == "sequential" else f"parallel-{block}"
        tagged.append(TaggedRun(
            group=str(config.get("group", "default")),
            kind="seq" if strategy == "sequential" else "par",
            label=label,
            metrics=RunMetrics(
                e2e_wall_s=m["e2e_wall_s"],
                compaction_wall_ms=m["compaction_wall_ms"],
                compaction_decode_tokens=m["compaction_decode_tokens"],
                qa_decode_tokens=m["qa_decode_tokens"],
                compaction_events=m["compaction_events"],
            ),
        ))
        snapshot_total = sum(c.get("snapshot_tokens", 0) for c in data.get("compactions", []))
        ratio = (100.0 * m["compaction_decode_tokens"] / snapshot_total) if snapshot_total else None
        ratio_rows.append([config.get("group", "default"), label,
                           config.get("detail", "-"), m["compaction_decode_tokens"],
                           tables.fmt(ratio)])

    try:
        pairs = matched_decode_pairs(tagged, tolerance_pct)
    except MetricError:
        pairs = []
    pair_headers = ["group", "seq", "par", "seq_decode_tok", "par_decode_tok", "gap_pct", "d_throughput"]
    pair_rows = [[p.group, p.seq_label, p.par_label, p.seq_decode_tokens, p.par_decode_tokens,
                  tables.fmt(p.gap_pct), tables.fmt(p.throughput_ratio, 2) + "x"
                  if p.throughput_ratio is not None else "n/a"]
                 for p in pairs]
    ratio_headers = ["group", "config", "variant", "compact_decode_tok", "output_input_pct"]

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_table(out, "matched_pairs", pair_headers, pair_rows)
    _write_table(out, "ratio_grid", ratio_headers, ratio_rows)
    print(tables.render_aligned(pair_headers, pair_rows) if pair_rows
          else "no matched seq/par pairs\n")
    print(tables.render_aligned(ratio_headers, ratio_rows))
    return 0


def _add_common_options(parser: argparse.ArgumentParser) -> None:
    defaults = RunConfig()
    g = parser.add_argument_group("engine")
    g.add_argument("--strategy", choices=["sequential", "parallel"],
                   help=f"compaction strategy (default: {defaults.strategy})")
    g.add_argument("--tau", type=int, help=f"compaction threshold in tokens (default: {defaults.tau})")
    g.add_argument("--block-size", dest="block_size", type=int,
                   help=f"parallel block size in tokens (default: {defaults.block_size})")
    g.add_argument("--detail", choices=list(DETAILS),
                   help=f"prompt detail level (default: {defaults.detail})")
    g.add_argument("--length-hint", dest="length_hint", choices=list(LENGTH_HINTS),
                   help="length-hint prompt variant (default: none)")
    g.add_argument("--max-output-sequential", dest="max_output_sequential", type=int,
                   help=f"output ceiling for sequential compaction (default: {defaults.max_output_sequential})")
    g.add_argument("--max-output-worker", dest="max_output_worker", type=int,
                   help=f"output ceiling per parallel worker (default: {defaults.max_output_worker})")
    g.add_argument("--compaction-temperature", dest="compaction_temperature", type=float,
                   help=f"sampling temperature for compaction calls (default: {defaults.compaction_temperature})")
    g.add_argument("--worker-retries", dest="worker_retries", type=int,
                   help=f"retries per failed worker before aborting the event (default: {defaults.worker_retries})")

    b = parser.add_argument_group("backends")
    b.add_argument("--mock", action=argparse.BooleanOptionalAction,
                   help="swap backend, judge, and embedder for hermetic mocks (default: false)")
    b.add_argument("--base-url", dest="base_url",
                   help=f"chat-completions base URL (default: ${ENV_VARS['base_url']})")
    b.add_argument("--api-key", dest="api_key",
                   help=f"bearer token (default: ${ENV_VARS['api_key']})")
    b.add_argument("--model", help=f"model name sent to the server (default: {defaults.model})")
    b.add_argument("--judge-base-url", dest="judge_base_url",
                   help=f"judge endpoint base URL (default: ${ENV_VARS['judge_base_url']})")
    b.add_argument("--judge-api-key", dest="judge_api_key",
                   help=f"judge bearer token (default: ${ENV_VARS['judge_api_key']})")
    b.add_argument("--judge-model", dest="judge_model", help="judge model name (default: --model)")
    b.add_argument("--embed-base-url", dest="embed_base_url",
                   help=f"embeddings endpoint base URL (default: ${ENV_VARS['embed_base_url']})")
    b.add_argument("--embed-api-key", dest="embed_api_key",
                   help=f"embeddings bearer token (default: ${ENV_VARS['embed_api_key']})")
    b.add_argument("--embed-model", dest="embed_model", help="embeddings model name")
    b.add_argument("--grade", action=argparse.BooleanOptionalAction,
                   help="grade answers with the judge (default: false)")
    b.add_argument("--max-concurrency", dest="max_concurrency", type=int,
                   help=f"max in-flight requests (default: {defaults.max_concurrency})")
    b.add_argument("--request-timeout-s", dest="request_timeout_s", type=float,
                   help=f"per-request timeout (default: {defaults.request_timeout_s})")
    b.add_argument("--verbose", action=argparse.BooleanOptionalAction,
                   help="log request/response bodies, token redacted (default: false)")

    m = parser.add_argument_group("mock models")
    m.add_argument("--mock-sigma", dest="mock_sigma", type=float,
                   help=f"lognormal sigma for mock output-length noise (default: {defaults.mock_sigma})")
    m.add_argument("--mock-prefill-uncached-ms", dest="mock_prefill_uncached_ms", type=float,
                   help=f"mock uncached prefill ms/token (default: {defaults.mock_prefill_uncached_ms})")
    m.add_argument("--mock-prefill-cached-ms", dest="mock_prefill_cached_ms", type=float,
                   help=f"mock cached prefill ms/token (default: {defaults.mock_prefill_cached_ms})")
    m.add_argument("--mock-decode-ms", dest="mock_decode_ms", type=float,
                   help=f"mock decode ms/token (default: {defaults.mock_decode_ms})")
    m.add_argument("--mock-qa-output-tokens", dest="mock_qa_output_tokens", type=int,
                   help=f"mock answer length in tokens (default: {defaults.mock_qa_output_tokens})")
    m.add_argument("--mock-context-window", dest="mock_context_window", type=int,
                   help="mock context window; overflowing requests fail (default: unlimited)")

    i = parser.add_argument_group("inputs and outputs")
    i.add_argument("--config", help="JSON config file; flags and env vars override it")
    i.add_argument("--dataset", help="dataset path, one JSON object per line")
    i.add_argument("--corpus", help="plain UTF-8 corpus for sweeps")
    i.add_argument("--prompt-catalog", dest="prompt_catalog",
                   help="prompt catalog JSON (default: built-in catalog)")
    i.add_argument("--out-dir", dest="out_dir", help=f"output directory (default: {defaults.out_dir})")
    i.add_argument("--label", help=f"output file prefix (default: {defaults.label})")
    i.add_argument("--group", help=f"pairing group for reports (default: {defaults.group})")
    i.add_argument("--system-prompt", dest="system_prompt", help="system prompt text")
    i.add_argument("--chars-per-token", dest="chars_per_token", type=int,
                   help=f"heuristic counter ratio (default: {defaults.chars_per_token})")
    i.add_argument("--seed", type=int, help=f"base seed (default: {defaults.seed})")

    s = parser.add_argument_group("sweeps")
    s.add_argument("--repeats", type=int, help=f"stability repeats R (default: {defaults.repeats})")
    s.add_argument("--block-sizes", dest="block_sizes", type=int, nargs="+",
                   help=f"block size sweep list (default: {list(DEFAULT_BLOCK_SIZES)})")
    s.add_argument("--input-sizes", dest="input_sizes", type=int, nargs="+",
                   help=f"input size sweep list (default: {list(DEFAULT_INPUT_SIZES)})")
    s.add_argument("--details", nargs="+", choices=list(DETAILS),
                   help=f"detail variants for sweeps (default: {list(DETAILS)})")
    s.add_argument("--stability-input-size", dest="stability_input_size", type=int,
                   help=f"fixed input size for --by-prompt (default: {defaults.stability_input_size})")
    s.add_argument("--stability-temperature", dest="stability_temperature", type=float,
                   help=f"sampling temperature for stability repeats (default: {defaults.stability_temperature})")
    s.add_argument("--by-prompt", dest="by_prompt", action=argparse.BooleanOptionalAction,
                   help="stability across prompt-length variants at a fixed input size")
    s.add_argument("--qa-temperature", dest="qa_temperature", type=float,
                   help=f"sampling temperature for QA turns (default: {defaults.qa_temperature})")
    s.add_argument("--max-output-qa", dest="max_output_qa", type=int,
                   help=f"output ceiling for QA turns (default: {defaults.max_output_qa})")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="compactbench",
        description="Context-compaction engine and benchmark harness.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    for name, help_text in (
        ("run", "run one benchmark flow and write its report and event log"),
        ("sweep", "sequential baseline plus a block-size sweep over one dataset"),
        ("stability", "repeat compaction across input sizes or prompt variants"),
        ("scaling", "output-volume scaling table and output/input ratio grid"),
    ):
        p = sub.add_parser(name, help=help_text)
        _add_common_options(p)

    r = sub.add_parser("report", help="aggregate run reports into comparison tables")
    r.add_argument("paths", nargs="+", help="run report JSON files")
    r.add_argument("--tolerance-pct", dest="tolerance_pct", type=float, default=25.0,
                   help="matched-decode tolerance in percent (default: 25)")
    r.add_argument("--out-dir", dest="out_dir", default="out",
                   help="output directory (default: out)")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "report":
        return cmd_report(args.paths, args.tolerance_pct, args.out_dir)
    try:
        cfg = _resolve_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    errors = cfg.validate(args.command)
    if errors:
        for err in errors:
            print(f"config error: {err}", file=sys.stderr)
        return 2
    try:
        if args.command == "run":
            return cmd_run(cfg)
        if args.command == "sweep":
            return cmd_sweep(cfg)
        if args.command == "stability":
            return cmd_stability(cfg)
        if args.command == "scaling":
            return cmd_scaling(cfg)
    except (OSError, RuntimeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    parser.error(f"unknown command {args.command!r}")
    return 2


if __name__ == "__main__":
    sys.exit(main())
