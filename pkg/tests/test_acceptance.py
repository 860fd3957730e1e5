"""Acceptance gate: one test per criterion, each printing a pass line.

Every expected value here is either fixed reference arithmetic or computed by
an oracle that is independent of the code path it checks (brute force,
enumeration, or a step-through simulation written from the documented
contracts).
"""

import json
import math
import random
import re
import subprocess
import sys
import time
from pathlib import Path

import pytest

from compactbench.backend import MockBackend
from compactbench.cli import main as cli_main
from compactbench.engine import EngineConfig, merge
from compactbench.harness import run_flow, stability_sweep
from compactbench.metrics import (
    RunMetrics,
    TaggedRun,
    coefficient_of_variation,
    e2e_throughput,
    matched_decode_pairs,
    mean_pairwise_cosine,
)
from compactbench.partitioning import partition, plan
from compactbench.prompting import CLOSE_MARKER, OPEN_MARKER, dispatch_set
from compactbench.synth import synth_corpus, synth_dataset, write_dataset_jsonl
from compactbench.tokenization import TokenCounter

SCRIPTS = Path(__file__).resolve().parent.parent / "scripts"

ALPHABET = ("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789 .,;:!?'\"\n\t"
            "éüßñøåçđ́中文日本語한국어Ωλπфыв🙂🚀🎯𝄞")


def _pass(number: int, name: str, started: float, limit_s: float) -> None:
    elapsed = time.monotonic() - started
    assert elapsed < limit_s, f"criterion {number} exceeded its {limit_s}s budget ({elapsed:.1f}s)"
    print(f"[criterion {number:02d}] {name}: PASS ({elapsed:.2f}s)")


def _random_text(rng: random.Random, max_chars: int, alphabet: str = ALPHABET) -> str:
    return "".join(rng.choice(alphabet) for _ in range(rng.randrange(1, max_chars)))


def test_c01_worker_count_law():
    started = time.monotonic()
    assert plan(98_304, 16_384).worker_count == 6
    assert plan(98_304, 4_096).worker_count == 24
    rng = random.Random(101)
    for _ in range(10_000):
        snapshot = rng.randrange(1, 1_000_000)
        block = rng.randrange(1, 40_000)
        assert plan(snapshot, block).worker_count == math.ceil(snapshot / block)
    _pass(1, "worker-count law", started, 1.0)


def test_c02_partition_losslessness():
    started = time.monotonic()
    counter = TokenCounter()
    rng = random.Random(202)
    for _ in range(1_000):
        text = _random_text(rng, 600)
        tokens = counter.count(text)
        block = rng.randrange(1, tokens + 10)
        blocks = partition(text, block, counter)
        assert "".join(b.text for b in blocks) == text
        assert len(blocks) == math.ceil(tokens / block)
    _pass(2, "partition losslessness", started, 5.0)


def test_c03_prefix_extension(catalog):
    started = time.monotonic()
    counter = TokenCounter()
    rng = random.Random(303)
    alphabet = ALPHABET.replace("<", "")
    variant = catalog.variant("parallel", "detailed")
    for _ in range(120):
        block = rng.randrange(1, 7)
        workers = rng.randrange(1, 65)
        max_chars = block * workers * counter.chars_per_token
        text = _random_text(rng, max_chars + 1, alphabet)
        prompts = dispatch_set(partition(text, block, counter), variant)
        assert len(prompts) <= 64
        pre = [p.text.split(OPEN_MARKER, 1)[0] for p in prompts]
        for k in range(len(prompts)):
            if k + 1 < len(prompts):
                assert pre[k + 1].startswith(pre[k])
            assert prompts[k].text.count(OPEN_MARKER) == 1
            assert prompts[k].text.count(CLOSE_MARKER) == 1
            assert prompts[k].text.split(CLOSE_MARKER, 1)[1] == variant.template_text
    _pass(3, "prefix extension and target-at-end", started, 5.0)


def test_c04_merge_order_invariance():
    started = time.monotonic()
    rng = random.Random(404)
    summaries = [f"block-summary-{k};" for k in range(1, 9)]
    expected = merge(summaries)
    for _ in range(1_000):
        arrived = list(enumerate(summaries, start=1))
        rng.shuffle(arrived)  # completion order scrambles ...
        in_block_order = [text for _, text in sorted(arrived)]  # ... the engine re-orders
        merged = merge(in_block_order)
        assert merged == expected
        for summary in summaries:
            assert merged.count(summary) == 1
    _pass(4, "merge order invariance", started, 2.0)


def test_c05_throughput_formula_pinning():
    started = time.monotonic()

    def row(wall_s, compaction, qa):
        return e2e_throughput(RunMetrics(
            e2e_wall_s=wall_s, compaction_wall_ms=0.0,
            compaction_decode_tokens=compaction, qa_decode_tokens=qa,
            compaction_events=1))

    # reference rows, medium model
    assert row(86.9, 1_493, 11_127) == pytest.approx(145.2, abs=0.1)
    assert row(108.3, 16_180, 11_303) == pytest.approx(253.8, abs=0.1)
    # reference rows, large model, same benchmark
    assert row(276.0, 4_116, 9_615) == pytest.approx(49.8, abs=0.1)
    assert row(270.3, 6_994, 9_136) == pytest.approx(59.7, abs=0.1)
    assert row(217.7, 9_894, 9_701) == pytest.approx(90.0, abs=0.1)
    assert row(233.1, 16_486, 8_913) == pytest.approx(109.0, abs=0.1)
    _pass(5, "throughput formula pinning", started, 1.0)


def _brute_force_mean_cosine(texts):
    def embed(text):
        counts = {}
        for term in re.split(r"[^0-9a-z]+", text.lower()):
            if term:
                counts[term] = counts.get(term, 0) + 1
        return counts

    def cos(u, v):
        nu = math.sqrt(sum(x * x for x in u.values()))
        nv = math.sqrt(sum(x * x for x in v.values()))
        if nu == 0 and nv == 0:
            return 1.0
        if nu == 0 or nv == 0:
            return 0.0
        return sum(x * v[t] for t, x in u.items() if t in v) / (nu * nv)

    vecs = [embed(t) for t in texts]
    total, pairs = 0.0, 0
    for i in range(len(vecs)):
        for j in range(i + 1, len(vecs)):
            total += cos(vecs[i], vecs[j])
            pairs += 1
    return total / pairs


def test_c06_metric_oracles():
    started = time.monotonic()
    assert coefficient_of_variation([2, 4, 4, 4, 5, 5, 7, 9]) == pytest.approx(40.0, abs=1e-9)
    rng = random.Random(606)
    for _ in range(1_000):
        samples = [rng.uniform(0.5, 1e4) for _ in range(rng.randrange(2, 12))]
        scale = rng.uniform(1e-3, 1e3)
        assert coefficient_of_variation([scale * s for s in samples]) == pytest.approx(
            coefficient_of_variation(samples), rel=1e-9, abs=1e-9)
    words = ["alpha", "beta", "gamma", "delta", "epsilon", "zeta", "eta", "theta",
             "iota", "kappa"]
    for _ in range(100):
        texts = [" ".join(rng.choices(words, k=rng.randrange(0, 15))) for _ in range(5)]
        assert mean_pairwise_cosine(texts) == pytest.approx(
            _brute_force_mean_cosine(texts), abs=1e-9)
    _pass(6, "metric oracles", started, 5.0)


def _flow_compaction_count_oracle(records, system_prompt, tau, cpt=4,
                                  qa_tokens=128, max_output=8192):
    """Step-through of the flow's token arithmetic, from the documented model."""

    def tokens(chars):
        return math.ceil(chars / cpt)

    sys_chars = len(system_prompt)
    total = tokens(sys_chars)
    rendered = len("system: ") + sys_chars + 1
    compactions = 0
    for record in records:
        doc_pending = True
        for question in record.questions:
            if doc_pending:
                total += tokens(len(record.text))
                rendered += len("user: ") + len(record.text) + 1
                doc_pending = False
            total += tokens(len(question.question))
            rendered += len("user: ") + len(question.question) + 1
            total += qa_tokens
            rendered += len("assistant: ") + qa_tokens * cpt + 1
            if total > tau:
                compactions += 1
                region_tokens = math.ceil((rendered + 2) / cpt)
                expected = max(1.0, 981.0 + 364.0 * math.log2(region_tokens / 2048))
                budget = max(1, min(round(expected), max_output))
                total = tokens(sys_chars) + budget
                rendered = (len("system: ") + sys_chars + 1
                            + len("summary: ") + budget * cpt + 1)
    return compactions


def test_c07_mock_flow_against_step_through_oracle(catalog):
    started = time.monotonic()
    counter = TokenCounter()
    records = synth_dataset(200, 500, counter, seed=7)
    backend = MockBackend(counter, catalog=catalog)
    config = EngineConfig(threshold_tau=8_192, strategy="sequential",
                          variant=catalog.variant("sequential", "detailed"))
    report = run_flow(records, config, backend, counter=counter, seed=0)

    from compactbench.harness import DEFAULT_SYSTEM_PROMPT
    expected = _flow_compaction_count_oracle(records, DEFAULT_SYSTEM_PROMPT, 8_192)
    assert report.metrics.compaction_events == expected
    assert report.metrics.compaction_events > 0

    turn_events = [e for e in report.events if e.kind == "turn"]
    max_cycle = max(e.payload["doc_tokens"] + e.payload["question_tokens"]
                    + e.payload["answer_tokens"] for e in turn_events)
    for event in turn_events:
        assert event.payload["context_tokens"] <= 8_192 + max_cycle

    qa_total = sum(e.payload["answer_tokens"] for e in turn_events)
    compaction_total = sum(e.payload["total_decode_tokens"] for e in report.events
                           if e.kind == "compaction")
    assert qa_total == report.metrics.qa_decode_tokens
    assert compaction_total == report.metrics.compaction_decode_tokens
    _pass(7, "mock end-to-end flow vs step-through oracle", started, 10.0)


def test_c08_cost_model_trend(catalog):
    started = time.monotonic()
    counter = TokenCounter()
    records = synth_dataset(220, 500, counter, seed=8)
    decodes, ms_per_tok = [], []
    for block_size in (16_384, 8_192, 4_096, 2_048):
        backend = MockBackend(counter, catalog=catalog)
        config = EngineConfig(threshold_tau=98_304, strategy="parallel",
                              variant=catalog.variant("parallel", "detailed"),
                              block_size=block_size)
        report = run_flow(records, config, backend, counter=counter, seed=0)
        assert report.metrics.compaction_events >= 1
        decodes.append(report.metrics.compaction_decode_tokens)
        ms_per_tok.append(report.metrics.compaction_wall_ms
                          / report.metrics.compaction_decode_tokens)
    assert all(a < b for a, b in zip(decodes, decodes[1:])), decodes
    assert all(a > b for a, b in zip(ms_per_tok, ms_per_tok[1:])), ms_per_tok
    _pass(8, "cost-model trend across block sizes", started, 10.0)


def test_c09_matched_decode_gate():
    started = time.monotonic()

    def run(group, kind, decode):
        return TaggedRun(group=group, kind=kind, label=kind, metrics=RunMetrics(
            e2e_wall_s=100.0, compaction_wall_ms=1000.0,
            compaction_decode_tokens=decode, qa_decode_tokens=0, compaction_events=1))

    table7 = [("r1", 8_582, 8_360), ("r2", 8_582, 6_823),
              ("r3", 6_344, 5_860), ("r4", 1_776, 2_199)]
    runs = []
    for group, seq_decode, par_decode in table7:
        runs.append(run(group, "seq", seq_decode))
        runs.append(run(group, "par", par_decode))
    loose = matched_decode_pairs(runs, tolerance_pct=25.0)
    assert {(p.group, p.par_decode_tokens) for p in loose} == {
        ("r1", 8_360), ("r2", 6_823), ("r3", 5_860), ("r4", 2_199)}
    strict = matched_decode_pairs(runs, tolerance_pct=5.0)
    assert {(p.group, p.par_decode_tokens) for p in strict} == {("r1", 8_360)}
    _pass(9, "matched-decode gate", started, 1.0)


def test_c10_determinism(tmp_path):
    started = time.monotonic()
    counter = TokenCounter()
    dataset = tmp_path / "dataset.jsonl"
    write_dataset_jsonl(synth_dataset(40, 300, counter, seed=10), dataset)
    artifacts = []
    for name in ("first", "second"):
        out = tmp_path / name
        code = cli_main(["run", "--mock", "--dataset", str(dataset), "--tau", "4096",
                         "--seed", "1234", "--grade", "--out-dir", str(out),
                         "--label", "det"])
        assert code == 0
        artifacts.append((
            (out / "det.report.json").read_bytes(),
            (out / "det.events.jsonl").read_bytes(),
        ))
    assert artifacts[0][0] == artifacts[1][0], "run reports differ byte-wise"
    assert artifacts[0][1] == artifacts[1][1], "event logs differ byte-wise"
    _pass(10, "determinism of seeded mock runs", started, 10.0)


def test_c11_stability_sweep_hermetic(tmp_path, catalog):
    started = time.monotonic()
    counter = TokenCounter()
    sizes = [4_096, 8_192, 16_384, 32_768, 65_536, 98_304]
    corpus = synth_corpus(98_560, counter, seed=11)
    corpus_path = tmp_path / "corpus.txt"
    corpus_path.write_text(corpus, "utf-8")
    variant = catalog.variant("sequential", "detailed")

    quiet = MockBackend(counter, catalog=catalog)  # sigma defaults to 0
    for row in stability_sweep(corpus, sizes, 10, variant, quiet, counter,
                               temperature=0.7, seed_base=0):
        assert row.cv_pct == 0.0
        assert row.mean_cosine == pytest.approx(1.0, abs=1e-12)

    from compactbench.backend import LengthModel
    noisy = MockBackend(counter, length_model=LengthModel(sigma=0.3), catalog=catalog)
    rows = stability_sweep(corpus, sizes, 10, variant, noisy, counter,
                           temperature=0.7, seed_base=0)

    result = subprocess.run(
        [sys.executable, str(SCRIPTS / "stability_oracle.py"),
         "--corpus", str(corpus_path),
         "--input-sizes", *[str(s) for s in sizes],
         "--repeats", "10", "--sigma", "0.3", "--temperature", "0.7",
         "--seed-base", "0"],
        capture_output=True, text=True, check=True)
    oracle_rows = json.loads(result.stdout)["rows"]
    assert len(oracle_rows) == len(rows)
    for mine, oracle in zip(rows, oracle_rows):
        assert mine.input_tokens == oracle["input_tokens"]
        assert mine.cv_pct == pytest.approx(oracle["cv_pct"], abs=1e-9)
        assert mine.mean_cosine == pytest.approx(oracle["mean_cosine"], abs=1e-9)
        assert mine.mean_output_tokens == pytest.approx(
            oracle["mean_output_tokens"], abs=1e-9)
    _pass(11, "stability sweep vs standalone oracle", started, 15.0)
