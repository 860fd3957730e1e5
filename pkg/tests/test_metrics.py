import math
import random
import re

import pytest
from hypothesis import given, strategies as st

from compactbench.metrics import (
    MetricError,
    RunMetrics,
    TaggedRun,
    coefficient_of_variation,
    compaction_fraction,
    compaction_ms_per_token,
    cosine,
    decode_matched,
    e2e_throughput,
    matched_decode_pairs,
    mean_pairwise_cosine,
    tf_embed,
)


def test_cv_zero_spread():
    assert coefficient_of_variation([100, 100, 100]) == 0.0


def test_cv_hand_oracle():
    # mean 5, population variance 4, sigma 2 -> 40%
    assert coefficient_of_variation([2, 4, 4, 4, 5, 5, 7, 9]) == pytest.approx(40.0, abs=1e-9)


def test_cv_scale_invariance_example():
    samples = [2, 4, 4, 4, 5, 5, 7, 9]
    scaled = [10 * s for s in samples]
    assert coefficient_of_variation(samples) == pytest.approx(
        coefficient_of_variation(scaled), abs=1e-9)


@given(st.lists(st.floats(min_value=0.5, max_value=1e6), min_size=2, max_size=40),
       st.floats(min_value=1e-3, max_value=1e3))
def test_cv_scale_invariance_property(samples, scale):
    base = coefficient_of_variation(samples)
    scaled = coefficient_of_variation([scale * s for s in samples])
    assert scaled == pytest.approx(base, rel=1e-9, abs=1e-9)


def test_cv_preconditions():
    with pytest.raises(MetricError):
        coefficient_of_variation([5.0])
    with pytest.raises(MetricError):
        coefficient_of_variation([0.0, 0.0])
    with pytest.raises(MetricError):
        coefficient_of_variation([-4.0, 2.0])


def test_tf_embed_counts_and_norm():
    vec = tf_embed("a a b")
    assert set(vec) == {"a", "b"}
    assert vec["a"] == pytest.approx(2 / math.sqrt(5))
    assert math.sqrt(sum(v * v for v in vec.values())) == pytest.approx(1.0)


def test_tf_embed_deterministic_and_empty():
    assert tf_embed("Hello, WORLD! hello") == tf_embed("Hello, WORLD! hello")
    assert tf_embed("") == {}
    assert tf_embed("!!! ---") == {}


def test_cosine_disjoint_and_identical():
    assert cosine(tf_embed("alpha beta"), tf_embed("gamma delta")) == 0.0
    assert cosine(tf_embed("same text"), tf_embed("same text")) == pytest.approx(1.0)


def test_cosine_zero_vector_conventions():
    assert cosine({}, {}) == 1.0
    assert cosine({}, tf_embed("text")) == 0.0


def test_cosine_dense_vectors():
    assert cosine([1.0, 0.0], [0.0, 1.0]) == 0.0
    assert cosine([1.0, 2.0], [2.0, 4.0]) == pytest.approx(1.0)


def _brute_force_mean_cosine(texts):
    # independent implementation: dict counting and explicit double loop
    def embed(text):
        counts = {}
        for tok in re.split(r"[^0-9a-z]+", text.lower()):
            if tok:
                counts[tok] = counts.get(tok, 0) + 1
        return counts

    def cos(u, v):
        nu = math.sqrt(sum(x * x for x in u.values()))
        nv = math.sqrt(sum(x * x for x in v.values()))
        if nu == 0 and nv == 0:
            return 1.0
        if nu == 0 or nv == 0:
            return 0.0
        dot = 0.0
        for key, x in u.items():
            if key in v:
                dot += x * v[key]
        return dot / (nu * nv)

    vecs = [embed(t) for t in texts]
    total, pairs = 0.0, 0
    for i in range(len(vecs)):
        for j in range(len(vecs)):
            if i < j:
                total += cos(vecs[i], vecs[j])
                pairs += 1
    return total / pairs


def test_mean_pairwise_cosine_identical_and_disjoint():
    assert mean_pairwise_cosine(["same words here"] * 5) == pytest.approx(1.0)
    disjoint = ["alpha beta", "gamma delta", "epsilon zeta", "eta theta"]
    assert mean_pairwise_cosine(disjoint) == 0.0


def test_mean_pairwise_cosine_matches_brute_force():
    rng = random.Random(17)
    words = ["alpha", "beta", "gamma", "delta", "epsilon", "zeta", "eta", "theta"]
    for _ in range(100):
        texts = [" ".join(rng.choices(words, k=rng.randrange(0, 12))) for _ in range(5)]
        expected = _brute_force_mean_cosine(texts)
        assert mean_pairwise_cosine(texts) == pytest.approx(expected, abs=1e-9)


def test_duplication_keeps_identical_pair_mass():
    rng = random.Random(3)
    words = ["red", "green", "blue", "cyan"]
    texts = [" ".join(rng.choices(words, k=6)) for _ in range(4)]
    doubled = texts + texts
    assert mean_pairwise_cosine(doubled) >= mean_pairwise_cosine(texts) - 1e-12


def test_compaction_fraction():
    assert compaction_fraction(51_300, 100_000) == pytest.approx(51.3)
    assert compaction_fraction(0, 12_345) == 0.0
    with pytest.raises(MetricError):
        compaction_fraction(10, 0)
    with pytest.raises(MetricError):
        compaction_fraction(11, 10)


def _metrics(wall_s, compaction_ms, cdec, qdec, events=1):
    return RunMetrics(e2e_wall_s=wall_s, compaction_wall_ms=compaction_ms,
                      compaction_decode_tokens=cdec, qa_decode_tokens=qdec,
                      compaction_events=events)


def test_e2e_throughput_pins_reference_rows():
    assert e2e_throughput(_metrics(86.9, 0, 1_493, 11_127)) == pytest.approx(145.2, abs=0.1)
    assert e2e_throughput(_metrics(108.3, 0, 16_180, 11_303)) == pytest.approx(253.8, abs=0.1)


def test_e2e_throughput_pins_all_four_sequential_rows():
    # single-call baseline rows from the reference measurements
    rows = [
        (86.9, 1_493, 11_127, 145.2),
        (214.5, 1_462, 9_480, 51.0),
        (991.4, 6_344, 126_533, 134.0),
        (4_905.0, 1_479, 96_196, 19.9),
    ]
    for wall, compaction, qa, printed in rows:
        assert e2e_throughput(_metrics(wall, 0, compaction, qa)) == pytest.approx(
            printed, abs=0.1)


def test_e2e_throughput_zero_decode():
    assert e2e_throughput(_metrics(10.0, 0, 0, 0)) == 0.0


def test_run_metrics_validation():
    with pytest.raises(MetricError):
        _metrics(1.0, 2000.0, 10, 10)  # compaction wall > e2e wall
    with pytest.raises(MetricError):
        _metrics(-1.0, 0.0, 0, 0)


def test_compaction_ms_per_token():
    assert compaction_ms_per_token(7_973, 1_493) == pytest.approx(5.34, abs=0.01)
    assert compaction_ms_per_token(1_000, 100) == 2 * compaction_ms_per_token(500, 100)
    with pytest.raises(MetricError):
        compaction_ms_per_token(100, 0)


def test_decode_matched_examples():
    assert decode_matched(8_582, 8_360, 25.0)
    assert decode_matched(1_776, 2_199, 25.0)  # 23.8% apart
    assert not decode_matched(1_000, 2_000, 25.0)


def _tagged(group, kind, label, cdec, wall_ms=1000.0):
    return TaggedRun(group=group, kind=kind, label=label,
                     metrics=_metrics(1e4, wall_ms, cdec, 0))


def test_matched_pairs_group_scoped():
    runs = [
        _tagged("m1", "seq", "sequential", 8_582),
        _tagged("m1", "par", "4k", 8_360),
        _tagged("m2", "seq", "sequential", 1_776),
        _tagged("m2", "par", "4k", 2_199),
    ]
    pairs = matched_decode_pairs(runs, 25.0)
    assert {(p.group, p.seq_decode_tokens, p.par_decode_tokens) for p in pairs} == {
        ("m1", 8_582, 8_360), ("m2", 1_776, 2_199)}
    strict = matched_decode_pairs(runs, 5.0)
    assert {(p.group, p.par_decode_tokens) for p in strict} == {("m1", 8_360)}


def test_matched_pairs_annotates_throughput_ratio():
    runs = [
        _tagged("g", "seq", "sequential", 8_582, wall_ms=8_582 * 22.62),
        _tagged("g", "par", "4k", 8_360, wall_ms=8_360 * 10.62),
    ]
    (pair,) = matched_decode_pairs(runs, 25.0)
    assert pair.throughput_ratio == pytest.approx(22.62 / 10.62, rel=1e-9)


def test_matched_pairs_requires_both_kinds():
    with pytest.raises(MetricError):
        matched_decode_pairs([_tagged("g", "seq", "sequential", 100)], 25.0)
