import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from longdoc_bench.corpus import (
    CorpusError,
    Document,
    LabelVocab,
    SplitSpec,
    generate_synthetic_corpus,
    largest_remainder,
    load_corpus,
    marker_token,
    label_name,
    save_corpus,
    split_corpus,
)
from longdoc_bench.tokenizer import split_text


def _write(tmp_path, records, name="c.jsonl"):
    p = tmp_path / name
    p.write_text("".join(json.dumps(r) + "\n" for r in records), encoding="utf-8")
    return p


def _docs(n):
    return [Document(f"doc{i}", f"text {i}") for i in range(n)]


def test_load_three_records(tmp_path):
    recs = [{"id": f"x{i}", "text": "some words", "labels": ["b", "a"]} for i in range(3)]
    docs, vocab = load_corpus(_write(tmp_path, recs), "multilabel")
    assert [d.id for d in docs] == ["x0", "x1", "x2"]
    assert vocab.labels == ["a", "b"]
    assert vocab.index == {"a": 0, "b": 1}


def test_missing_text_names_line(tmp_path):
    recs = [{"id": "a", "text": "t", "labels": ["x"]}, {"id": "b", "labels": ["x"]}]
    with pytest.raises(CorpusError, match=r":2: missing field 'text'"):
        load_corpus(_write(tmp_path, recs), "multilabel")


def test_singlelabel_rejects_two_labels(tmp_path):
    recs = [{"id": "a", "text": "t", "labels": ["x", "y"]}]
    with pytest.raises(CorpusError, match=":1:"):
        load_corpus(_write(tmp_path, recs), "singlelabel")


def test_duplicate_id(tmp_path):
    recs = [{"id": "a", "text": "t", "labels": []}, {"id": "a", "text": "u", "labels": []}]
    with pytest.raises(CorpusError, match="duplicate"):
        load_corpus(_write(tmp_path, recs), "multilabel")


def test_malformed_json_line(tmp_path):
    p = tmp_path / "bad.jsonl"
    p.write_text('{"id": "a", "text": "t", "labels": []}\n{not json\n')
    with pytest.raises(CorpusError, match=":2:"):
        load_corpus(p, "multilabel")


def test_self_relevance_rejected(tmp_path):
    recs = [{"id": "a", "text": "t", "labels": [], "relevant_ids": ["a"]}]
    with pytest.raises(CorpusError):
        load_corpus(_write(tmp_path, recs), "retrieval")


def test_unknown_relevant_id(tmp_path):
    recs = [{"id": "a", "text": "t", "labels": [], "relevant_ids": ["zzz"]}]
    with pytest.raises(CorpusError, match="unknown ids"):
        load_corpus(_write(tmp_path, recs), "retrieval")


def test_round_trip_is_byte_equal(tmp_path):
    recs = [
        {"id": "a", "text": "héllo wörld", "labels": ["z", "a"]},
        {"id": "b", "text": "x", "labels": [], "relevant_ids": ["a"]},
    ]
    src = _write(tmp_path, recs)
    docs, _ = load_corpus(src, "retrieval")
    dst = tmp_path / "out.jsonl"
    save_corpus(docs, dst)
    again, _ = load_corpus(dst, "retrieval")
    assert [d.labels for d in again] == [("z", "a"), ()]
    save_corpus(again, tmp_path / "out2.jsonl")
    assert dst.read_bytes() == (tmp_path / "out2.jsonl").read_bytes()


def test_label_vocab_is_lexicographic_bijection():
    v = LabelVocab(["c", "a", "b", "a"])
    assert v.labels == ["a", "b", "c"]
    assert sorted(v.index.values()) == [0, 1, 2]
    assert list(v.encode(["c", "a"])) == [1, 0, 1]


def test_split_fractions_must_sum_to_one():
    with pytest.raises(CorpusError):
        SplitSpec(0.7, 0.2, 0.2)


def test_split_70_15_15_on_100_docs():
    out = split_corpus(_docs(100), SplitSpec(0.70, 0.15, 0.15, seed=7))
    sizes = [sum(d.split == s for d in out) for s in ("train", "validation", "test")]
    assert sizes == [70, 15, 15]


def test_split_is_deterministic():
    a = split_corpus(_docs(10), SplitSpec(0.8, 0.1, 0.1, seed=1))
    b = split_corpus(_docs(10), SplitSpec(0.8, 0.1, 0.1, seed=1))
    assert [d.split for d in a] == [d.split for d in b]


def test_largest_remainder_hand_case():
    # quotas 7.5 / 1.0 / 1.5: floors 7/1/1, the spare unit goes to the first 0.5 remainder
    assert largest_remainder(10, (0.75, 0.10, 0.15)) == [8, 1, 1]
    out = split_corpus(_docs(10), SplitSpec(0.75, 0.10, 0.15, seed=3))
    assert [sum(d.split == s for d in out) for s in ("train", "validation", "test")] == [8, 1, 1]


def test_split_rejects_assigned_docs():
    docs = [d.with_split("train") for d in _docs(5)]
    with pytest.raises(CorpusError):
        split_corpus(docs, SplitSpec())


@given(st.integers(3, 60), st.integers(0, 2**32 - 1), st.randoms(use_true_random=False))
def test_split_order_independent_and_exhaustive(n, seed, rnd):
    docs = _docs(n)
    shuffled = list(docs)
    rnd.shuffle(shuffled)
    spec = SplitSpec(0.7, 0.15, 0.15, seed=seed)
    a = {d.id: d.split for d in split_corpus(docs, spec)}
    b = {d.id: d.split for d in split_corpus(shuffled, spec)}
    assert a == b
    assert set(a.values()) <= {"train", "validation", "test"}
    assert len(a) == n


def test_synthetic_corpus_is_deterministic(tmp_path):
    a = generate_synthetic_corpus(5, (20, 40), 3, "multilabel", seed=42)
    b = generate_synthetic_corpus(5, (20, 40), 3, "multilabel", seed=42)
    save_corpus(a, tmp_path / "a.jsonl")
    save_corpus(b, tmp_path / "b.jsonl")
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()


def test_synthetic_lengths_within_range():
    docs = generate_synthetic_corpus(100, (800, 1200), 5, "singlelabel", seed=0)
    lengths = [len(split_text(d.text)) for d in docs]
    assert min(lengths) >= 800 and max(lengths) <= 1200


def test_marker_rule_beats_majority_baseline():
    n_labels = 5
    docs = generate_synthetic_corpus(1000, (100, 200), n_labels, "singlelabel", seed=5)
    gold = [d.labels[0] for d in docs]
    majority = max(set(gold), key=gold.count)
    majority_acc = sum(g == majority for g in gold) / len(gold)

    def marker_rule(doc):
        words = set(split_text(doc.text))
        for j in range(n_labels):
            if marker_token(j) in words:
                return label_name(j)
        return label_name(0)

    rule_acc = sum(marker_rule(d) == g for d, g in zip(docs, gold)) / len(docs)
    assert rule_acc > 0.8
    assert abs(majority_acc - 1 / n_labels) < 0.05


def test_synthetic_retrieval_pairs():
    docs = generate_synthetic_corpus(11, (30, 50), 2, "retrieval", seed=0)
    queries = [d for d in docs if d.relevant_ids]
    by_id = {d.id: d for d in docs}
    assert len(queries) == 5
    for q in queries:
        (rel,) = q.relevant_ids
        assert by_id[rel].text == q.text
