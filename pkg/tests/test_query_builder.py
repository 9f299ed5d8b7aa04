import math

import numpy as np
import pytest

from visnmt.corpus import ParallelCorpus, SentencePair, StopwordList
from visnmt.query_builder import (
    QuerySet,
    build_queries,
    build_query_sets,
    fit_tfidf,
    read_queries_jsonl,
    write_queries_jsonl,
)


def make_corpus(sentences):
    pairs = [SentencePair(sid=i, src_tokens=tuple(s), tgt_tokens=("x",))
             for i, s in enumerate(sentences)]
    return ParallelCorpus(pairs)


THREE_DOCS = make_corpus([["man", "dog"], ["man", "cat"], ["man", "man", "fish"]])
NO_STOPS = StopwordList()


def brute_force_tfidf(docs, sid, token):
    """Independent two-pass recount of tf * ln(|D|/(1+df))."""
    doc = docs[sid]
    tf = doc.count(token) / len(doc)
    df = sum(1 for d in docs if token in d)
    return tf * math.log(len(docs) / (1 + df))


def test_fit_counts():
    model = fit_tfidf(THREE_DOCS, NO_STOPS)
    assert model.num_docs == 3
    assert model.doc_freq == {"man": 3, "dog": 1, "cat": 1, "fish": 1}


def test_single_document_corpus():
    model = fit_tfidf(make_corpus([["only", "doc"]]), NO_STOPS)
    assert model.num_docs == 1


def test_fully_filtered_corpus_errors():
    stops = StopwordList(["the"])
    with pytest.raises(ValueError, match="no documents"):
        fit_tfidf(make_corpus([["the"], ["the", "the"]]), stops)


def test_score_hand_computed():
    model = fit_tfidf(THREE_DOCS, NO_STOPS)
    assert model.score(2, "fish") == pytest.approx((1 / 3) * math.log(3 / 2), abs=1e-12)
    assert model.score(2, "fish") == pytest.approx(0.135155, abs=1e-6)
    assert model.score(2, "man") == pytest.approx((2 / 3) * math.log(3 / 4), abs=1e-12)
    assert model.score(2, "man") == pytest.approx(-0.191788, abs=1e-6)


def test_score_unique_token_single_doc_negative():
    model = fit_tfidf(make_corpus([["lonely"]]), NO_STOPS)
    assert model.score(0, "lonely") == pytest.approx(math.log(1 / 2), abs=1e-12)
    assert model.score(0, "lonely") < 0


def test_score_absent_token_errors():
    model = fit_tfidf(THREE_DOCS, NO_STOPS)
    with pytest.raises(KeyError):
        model.score(0, "fish")


def test_score_matches_brute_force_on_random_corpus():
    rng = np.random.default_rng(42)
    vocab = [f"w{i}" for i in range(60)]
    docs = [[vocab[j] for j in rng.integers(0, 60, size=rng.integers(1, 15))]
            for _ in range(300)]
    model = fit_tfidf(make_corpus(docs), NO_STOPS)
    for sid in range(0, 300, 7):
        for token in set(docs[sid]):
            assert model.score(sid, token) == pytest.approx(
                brute_force_tfidf(docs, sid, token), abs=1e-12)


def test_score_invariant_under_other_doc_permutation():
    docs = [["man", "dog"], ["man", "cat"], ["man", "man", "fish"]]
    base = fit_tfidf(make_corpus(docs), NO_STOPS).score(2, "fish")
    permuted = fit_tfidf(make_corpus([docs[1], docs[0], docs[2]]), NO_STOPS).score(2, "fish")
    assert base == permuted


def test_rank_tie_break_by_first_occurrence():
    # two docs; "park" and "dog" have equal scores in doc 0, "park" occurs first
    docs = [["park", "dog"], ["ball"]]
    model = fit_tfidf(make_corpus(docs), NO_STOPS)
    assert model.rank_terms(0) == ["park", "dog"]


def test_rank_single_token():
    model = fit_tfidf(make_corpus([["solo"], ["other"]]), NO_STOPS)
    assert model.rank_terms(0) == ["solo"]


def test_rank_is_permutation_and_matches_oracle_sort():
    rng = np.random.default_rng(7)
    vocab = [f"w{i}" for i in range(20)]
    docs = [[vocab[j] for j in rng.integers(0, 20, size=50)] for _ in range(10)]
    model = fit_tfidf(make_corpus(docs), NO_STOPS)
    for sid in range(10):
        ranked = model.rank_terms(sid)
        assert sorted(ranked) == sorted(set(docs[sid]))
        first = {}
        for pos, tok in enumerate(docs[sid]):
            first.setdefault(tok, pos)
        oracle = sorted(set(docs[sid]),
                        key=lambda t: (-brute_force_tfidf(docs, sid, t), first[t]))
        assert ranked == oracle


def test_ranking_invariant_under_log_base():
    # scaling all scores by a positive constant cannot change the argsort
    docs = [["a", "b", "b", "c"], ["a", "c"], ["d"]]
    model = fit_tfidf(make_corpus(docs), NO_STOPS)
    for sid in range(3):
        nat = model.rank_terms(sid)
        first = {}
        for pos, tok in enumerate(docs[sid]):
            first.setdefault(tok, pos)
        base10 = sorted(set(docs[sid]),
                        key=lambda t: (-model.score(sid, t) / math.log(10), first[t]))
        assert nat == base10


def test_term_frequencies_normalize():
    model = fit_tfidf(THREE_DOCS, NO_STOPS)
    for sid in range(3):
        doc = model.document(sid)
        total = sum(doc.count(t) / len(doc) for t in set(doc))
        assert total == pytest.approx(1.0, abs=1e-12)


def test_build_queries_cyclic():
    assert build_queries(["dog", "park", "ball"], 5) == [
        "dog", "dog park", "dog park ball", "dog park ball dog", "dog park ball dog park"]


def test_build_queries_degenerate():
    assert build_queries(["cat"], 3) == ["cat", "cat cat", "cat cat cat"]
    assert build_queries(["dog", "park"], 1) == ["dog"]


def test_build_queries_errors():
    with pytest.raises(ValueError):
        build_queries([], 5)
    with pytest.raises(ValueError):
        build_queries(["a"], 0)


def test_query_prefix_property():
    queries = build_queries(["a", "b", "c"], 6)
    ext = ["a", "b", "c", "a", "b", "c"]
    for j in range(1, 6):
        assert queries[j] == queries[j - 1] + " " + ext[j]


def test_fallback_all_stopwords():
    stops = StopwordList(["the", "of"])
    corpus = make_corpus([["the", "of", "of"], ["dog", "park"]])
    model = fit_tfidf(corpus, stops)
    qsets = build_query_sets(corpus, model, m=3)
    assert qsets[0].fallback
    # frequency fallback: "of" (2) before "the" (1)
    assert qsets[0].ranked_terms == ["of", "the"]
    assert not qsets[1].fallback


def test_single_mode():
    corpus = make_corpus([["dog", "park"]])
    model = fit_tfidf(corpus, NO_STOPS)
    qsets = build_query_sets(corpus, model, m=3, mode="single")
    assert all(" " not in q for q in qsets[0].queries)
    assert len(qsets[0].queries) == 3


def test_queries_jsonl_roundtrip(tmp_path):
    qsets = [QuerySet(sid=0, ranked_terms=["dog"], queries=["dog", "dog dog"], fallback=True)]
    path = tmp_path / "queries.jsonl"
    write_queries_jsonl(path, qsets)
    back = read_queries_jsonl(path)
    assert back[0].sid == 0
    assert back[0].queries == ["dog", "dog dog"]
    assert back[0].fallback
