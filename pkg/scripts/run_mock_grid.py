#!/usr/bin/env python3
"""Run the whole mock experiment grid end to end into ./out.

Generates synthetic inputs, runs the block-size sweep, both stability sweeps,
the scaling tables, and the aggregate report. Everything is hermetic and
seeded; useful as a smoke run and as a template for pointing the same
commands at a real endpoint (drop --mock, set COMPACTBENCH_BASE_URL).
"""

import sys
import tempfile
from pathlib import Path

from compactbench.cli import main as cli
from compactbench.synth import synth_corpus, synth_dataset, write_dataset_jsonl
from compactbench.tokenization import TokenCounter


def main() -> int:
    out = Path("out")
    out.mkdir(exist_ok=True)
    counter = TokenCounter()
    workdir = Path(tempfile.mkdtemp(prefix="compactbench-grid-"))
    dataset = workdir / "dataset.jsonl"
    corpus = workdir / "corpus.txt"
    write_dataset_jsonl(synth_dataset(200, 500, counter, seed=0), dataset)
    corpus.write_text(synth_corpus(100_000, counter, seed=0), "utf-8")

    steps = [
        ["run", "--mock", "--dataset", str(dataset), "--tau", "8192",
         "--out-dir", str(out), "--label", "seq-8k", "--grade"],
        ["sweep", "--mock", "--dataset", str(dataset), "--tau", "98304",
         "--details", "detailed", "--out-dir", str(out), "--label", "grid"],
        ["stability", "--mock", "--corpus", str(corpus), "--mock-sigma", "0.3",
         "--repeats", "10", "--out-dir", str(out), "--label", "grid"],
        ["stability", "--mock", "--corpus", str(corpus), "--mock-sigma", "0.3",
         "--by-prompt", "--repeats", "10", "--out-dir", str(out), "--label", "grid-prompt"],
        ["scaling", "--mock", "--corpus", str(corpus), "--out-dir", str(out),
         "--label", "grid"],
    ]
    for argv in steps:
        print(f"\n$ compactbench {' '.join(argv)}")
        code = cli(argv)
        if code != 0:
            return code
    reports = sorted(str(p) for p in out.glob("grid.*.report.json"))
    if reports:
        print("\n$ compactbench report ...")
        return cli(["report", *reports, "--out-dir", str(out)])
    return 0


if __name__ == "__main__":
    sys.exit(main())
