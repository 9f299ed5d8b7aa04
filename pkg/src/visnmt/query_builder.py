"""TF-IDF term ranking over the training corpus and search-query synthesis.

Each stopword-filtered source sentence is a document. A term's score is
tf * idf with tf = count_in_doc / doc_length and idf = ln(num_docs /
(1 + doc_freq)). Negative scores (terms present in every document) are
kept as-is; they simply rank last.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

from .corpus import ParallelCorpus, StopwordList, filter_stopwords

__all__ = [
    "TfidfModel",
    "QuerySet",
    "fit_tfidf",
    "build_queries",
    "build_query_sets",
    "write_queries_jsonl",
    "read_queries_jsonl",
]

DEFAULT_NUM_QUERIES = 5


@dataclass
class QuerySet:
    sid: int
    ranked_terms: list
    queries: list
    fallback: bool = False


class TfidfModel:
    """Document-frequency and per-document term-count statistics."""

    def __init__(self, docs: list):
        if not any(docs):
            raise ValueError("no documents: every sentence was fully filtered")
        self.num_docs = len(docs)
        self.doc_freq = {}
        self._docs = docs
        self._term_counts = []
        for doc in docs:
            counts = {}
            for tok in doc:
                counts[tok] = counts.get(tok, 0) + 1
            self._term_counts.append(counts)
            for tok in counts:
                self.doc_freq[tok] = self.doc_freq.get(tok, 0) + 1

    def document(self, sid: int) -> list:
        return self._docs[sid]

    def score(self, sid: int, token: str) -> float:
        counts = self._term_counts[sid]
        if token not in counts:
            raise KeyError(f"token {token!r} not in document {sid}")
        tf = counts[token] / sum(counts.values())
        idf = math.log(self.num_docs / (1 + self.doc_freq[token]))
        return tf * idf

    def rank_terms(self, sid: int) -> list:
        """Distinct tokens of the document, score-descending, first-occurrence stable."""
        doc = self._docs[sid]
        if not doc:
            raise ValueError(f"document {sid} is empty after filtering")
        first_pos = {}
        for pos, tok in enumerate(doc):
            first_pos.setdefault(tok, pos)
        return sorted(first_pos, key=lambda t: (-self.score(sid, t), first_pos[t]))


def fit_tfidf(corpus: ParallelCorpus, stops: StopwordList) -> TfidfModel:
    if len(corpus) == 0:
        raise ValueError("empty corpus")
    docs = [filter_stopwords(pair.src_tokens, stops) for pair in corpus]
    return TfidfModel(docs)


def build_queries(ranked: list, m: int = DEFAULT_NUM_QUERIES) -> list:
    """q_j = blank-joined first j tokens of the cyclically extended ranked list."""
    if not ranked:
        raise ValueError("empty ranked term list")
    if m < 1:
        raise ValueError("m must be >= 1")
    extended = [ranked[i % len(ranked)] for i in range(m)]
    return [" ".join(extended[:j]) for j in range(1, m + 1)]


def _rank_by_frequency(tokens) -> list:
    counts = {}
    first_pos = {}
    for pos, tok in enumerate(tokens):
        counts[tok] = counts.get(tok, 0) + 1
        first_pos.setdefault(tok, pos)
    return sorted(counts, key=lambda t: (-counts[t], first_pos[t]))


def build_query_sets(corpus: ParallelCorpus, model: TfidfModel,
                     m: int = DEFAULT_NUM_QUERIES, mode: str = "concat") -> list:
    """One QuerySet per sentence; fully-stopword sentences fall back to
    raw term frequency over the unfiltered tokens."""
    if mode not in ("concat", "single"):
        raise ValueError(f"unknown query mode {mode!r}")
    out = []
    for pair in corpus:
        fallback = False
        try:
            ranked = model.rank_terms(pair.sid)
        except ValueError:
            ranked = _rank_by_frequency(pair.src_tokens)
            fallback = True
        if mode == "concat":
            queries = build_queries(ranked, m)
        else:
            extended = [ranked[i % len(ranked)] for i in range(m)]
            queries = list(extended)
        out.append(QuerySet(sid=pair.sid, ranked_terms=ranked, queries=queries, fallback=fallback))
    return out


def write_queries_jsonl(path, query_sets) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for qs in query_sets:
            rec = {"sid": qs.sid, "ranked": list(qs.ranked_terms),
                   "queries": list(qs.queries), "fallback": qs.fallback}
            f.write(json.dumps(rec, ensure_ascii=False) + "\n")


def read_queries_jsonl(path) -> list:
    out = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        rec = json.loads(line)
        out.append(QuerySet(sid=rec["sid"], ranked_terms=rec["ranked"],
                            queries=rec["queries"], fallback=rec.get("fallback", False)))
    return out
