#!/usr/bin/env python3
"""Generate a seeded synthetic dataset (JSONL) and sweep corpus (plain text)."""

import argparse
from pathlib import Path

from compactbench.synth import synth_corpus, synth_dataset, write_dataset_jsonl
from compactbench.tokenization import TokenCounter


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--docs", type=int, default=200)
    parser.add_argument("--tokens-per-doc", type=int, default=500)
    parser.add_argument("--questions-per-doc", type=int, default=1)
    parser.add_argument("--corpus-tokens", type=int, default=100_000)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--chars-per-token", type=int, default=4)
    parser.add_argument("--dataset-out", default="dataset.jsonl")
    parser.add_argument("--corpus-out", default="corpus.txt")
    args = parser.parse_args()

    counter = TokenCounter(chars_per_token=args.chars_per_token)
    records = synth_dataset(args.docs, args.tokens_per_doc, counter,
                            questions_per_doc=args.questions_per_doc, seed=args.seed)
    write_dataset_jsonl(records, args.dataset_out)
    Path(args.corpus_out).write_text(
        synth_corpus(args.corpus_tokens, counter, seed=args.seed), "utf-8")
    print(f"wrote {len(records)} docs to {args.dataset_out}")
    print(f"wrote ~{args.corpus_tokens} tokens to {args.corpus_out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
