#!/usr/bin/env python3
"""Standalone recomputation of the stability sweep, from first principles.

Given the same corpus, input sizes, seeds, and noise settings as a mock
stability sweep, this script independently predicts every summary the mock
backend produces (documented length curve, seeded lognormal noise,
every-4th-sentence extraction, exact token cut) and recomputes CV and mean
pairwise cosine with its own arithmetic. It deliberately imports nothing from
the package so it can disagree with it.

Assumes the sweep ran with the built-in prompt catalog (the instruction
template is matched and excluded from the summarized region) and the
4-chars-per-token heuristic counter unless --chars-per-token says otherwise.
"""

import argparse
import json
import math
import random
import re
import sys

SENTENCE_SPLIT = re.compile(r"(?<=[.!?])\s+")
CLAUSE_SPLIT = re.compile(r"[,;:]")
TOKEN_SPLIT = re.compile(r"[^0-9a-z]+")


def ceil_div(n: int, d: int) -> int:
    return -(-n // d)


def extract_material(region: str, offset: int, stride: int = 4) -> str:
    sentences = [s for s in SENTENCE_SPLIT.split(region) if s.strip()]
    if not sentences:
        stripped = region.strip()
        return stripped if stripped else "."
    picks = sentences[offset % len(sentences)::stride]
    if not picks:
        picks = sentences[:1]
    clauses = [CLAUSE_SPLIT.split(s, 1)[0].strip() for s in picks]
    material = " ".join(c for c in clauses if c)
    return material if material else sentences[0].strip()


def fill_budget(material: str, budget: int, cpt: int) -> str:
    parts = [material]
    length = len(material)
    while ceil_div(length, cpt) <= budget:
        parts.append(material)
        length += 1 + len(material)
    return " ".join(parts)[: budget * cpt]


def predict_summary(region: str, seed: int, sigma: float, temperature: float,
                    multiplier: float, max_output: int, cpt: int) -> str:
    rng = random.Random(seed)
    noisy = sigma > 0 and temperature > 0
    factor = math.exp(sigma * rng.gauss(0.0, 1.0)) if noisy else 1.0
    offset = rng.randrange(4) if noisy else 0
    region_tokens = ceil_div(len(region), cpt)
    expected = max(1.0, 981.0 + 364.0 * math.log2(max(region_tokens, 1) / 2048))
    budget = max(1, min(round(expected * multiplier * factor), max_output))
    return fill_budget(extract_material(region, offset), budget, cpt)


def embed(text: str) -> dict:
    counts = {}
    for term in TOKEN_SPLIT.split(text.lower()):
        if term:
            counts[term] = counts.get(term, 0) + 1
    return counts


def cosine(u: dict, v: dict) -> float:
    nu = math.sqrt(sum(x * x for x in u.values()))
    nv = math.sqrt(sum(x * x for x in v.values()))
    if nu == 0 and nv == 0:
        return 1.0
    if nu == 0 or nv == 0:
        return 0.0
    dot = sum(x * v[t] for t, x in u.items() if t in v)
    return dot / (nu * nv)


def mean_pairwise_cosine(texts) -> float:
    vectors = [embed(t) for t in texts]
    total, pairs = 0.0, 0
    for i in range(len(vectors)):
        for j in range(i + 1, len(vectors)):
            total += cosine(vectors[i], vectors[j])
            pairs += 1
    return total / pairs


def cv_percent(samples) -> float:
    mean = sum(samples) / len(samples)
    variance = sum((s - mean) ** 2 for s in samples) / len(samples)
    return 100.0 * math.sqrt(variance) / mean


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--corpus", required=True)
    parser.add_argument("--input-sizes", type=int, nargs="+", required=True)
    parser.add_argument("--repeats", type=int, default=10)
    parser.add_argument("--sigma", type=float, default=0.0)
    parser.add_argument("--temperature", type=float, default=0.7)
    parser.add_argument("--seed-base", type=int, default=0)
    parser.add_argument("--multiplier", type=float, default=1.0,
                        help="variant multiplier (detailed = 1.0)")
    parser.add_argument("--max-output", type=int, default=8192)
    parser.add_argument("--chars-per-token", type=int, default=4)
    args = parser.parse_args()

    with open(args.corpus, encoding="utf-8") as fh:
        corpus = fh.read()

    cpt = args.chars_per_token
    rows = []
    for size in args.input_sizes:
        if len(corpus) < size * cpt:
            print(f"corpus too short for {size} tokens", file=sys.stderr)
            return 1
        region = corpus[: size * cpt] + "\n\n"
        summaries = [
            predict_summary(region, args.seed_base + i, args.sigma, args.temperature,
                            args.multiplier, args.max_output, cpt)
            for i in range(1, args.repeats + 1)
        ]
        counts = [ceil_div(len(s), cpt) for s in summaries]
        rows.append({
            "input_tokens": size,
            "output_token_counts": counts,
            "cv_pct": cv_percent(counts),
            "mean_cosine": mean_pairwise_cosine(summaries),
            "mean_output_tokens": sum(counts) / len(counts),
        })
    json.dump({"rows": rows}, sys.stdout, indent=2)
    print()
    return 0


if __name__ == "__main__":
    sys.exit(main())
