"""Seeded synthetic documents, questions, and corpora for hermetic runs."""

from __future__ import annotations

import json
import random
from pathlib import Path
from typing import Sequence

from .harness import DatasetRecord, Question
from .tokenization import TokenCounter

_SUBJECTS = (
    "the survey team", "the northern relay", "the cargo manifest", "the field station",
    "the archive index", "the river gauge", "the supply convoy", "the weather array",
    "the harbor office", "the assembly line", "the research wing", "the transit hub",
)
_VERBS = (
    "reported", "recorded", "confirmed", "flagged", "logged", "measured",
    "rejected", "approved", "rerouted", "inspected", "archived", "updated",
)
_OBJECTS = (
    "a pressure drop", "two missing crates", "a schedule change", "an output spike",
    "a calibration drift", "a staffing gap", "a voltage dip", "a route closure",
    "an inventory surplus", "a sensor fault", "a budget revision", "a signal delay",
)
_PLACES = (
    "sector 3", "dock 7", "bay 12", "line 4", "grid 9", "站 5", "unit 28",
    "ring 6", "zone 15", "camp 2", "deck 11", "cell 40",
)


def synth_sentence(rng: random.Random) -> str:
    return (f"{rng.choice(_SUBJECTS).capitalize()} {rng.choice(_VERBS)} "
            f"{rng.choice(_OBJECTS)} in {rng.choice(_PLACES)}, "
            f"noting reading {rng.randrange(100, 9999)}.")


def synth_text(rng: random.Random, approx_tokens: int, counter: TokenCounter) -> str:
    sentences: list[str] = []
    chars = 0
    # length check by char arithmetic for the heuristic counter; exact count otherwise
    target_chars = approx_tokens * counter.chars_per_token if counter.kind == "heuristic" else None
    while True:
        if target_chars is not None:
            if chars >= target_chars:
                break
        elif sentences and counter.count(" ".join(sentences)) >= approx_tokens:
            break
        sentence = synth_sentence(rng)
        chars += len(sentence) + (1 if sentences else 0)
        sentences.append(sentence)
    return " ".join(sentences)


def synth_dataset(
    n_docs: int,
    tokens_per_doc: int,
    counter: TokenCounter,
    questions_per_doc: int = 1,
    seed: int = 0,
) -> list[DatasetRecord]:
    rng = random.Random(seed)
    records = []
    for d in range(n_docs):
        doc_id = f"doc-{d:04d}"
        text = synth_text(rng, tokens_per_doc, counter)
        fact = rng.choice(_OBJECTS)
        place = rng.choice(_PLACES)
        questions = [
            Question(
                question_id=f"{doc_id}-q{q}",
                question=f"According to {doc_id}, what was observed in {place}?",
                gold=fact,
            )
            for q in range(questions_per_doc)
        ]
        records.append(DatasetRecord(doc_id=doc_id, text=text, questions=questions))
    return records


def synth_corpus(min_tokens: int, counter: TokenCounter, seed: int = 0) -> str:
    rng = random.Random(seed)
    return synth_text(rng, min_tokens, counter)


def write_dataset_jsonl(records: Sequence[DatasetRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps({
                "doc_id": record.doc_id,
                "text": record.text,
                "questions": [
                    {"question_id": q.question_id, "question": q.question, "gold": q.gold}
                    for q in record.questions
                ],
            }, sort_keys=True))
            fh.write("\n")
