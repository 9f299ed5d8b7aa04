"""Parallel corpus loading, tokenization, vocabulary and stopwords."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

__all__ = [
    "SentencePair",
    "ParallelCorpus",
    "Vocabulary",
    "StopwordList",
    "tokenize_normalize",
    "filter_stopwords",
    "load_parallel_corpus",
    "default_stopwords_path",
]

_TOKEN_RE = re.compile(r"\w+|[^\w\s]", re.UNICODE)

PAD, BOS, EOS, UNK = 0, 1, 2, 3
_RESERVED = ["<pad>", "<bos>", "<eos>", "<unk>"]


def tokenize_normalize(raw_line: str) -> list[str]:
    """Lowercase, split punctuation from words, collapse whitespace."""
    return _TOKEN_RE.findall(raw_line.lower())


def filter_stopwords(tokens, stops: "StopwordList") -> list[str]:
    return [t for t in tokens if t not in stops]


@dataclass(frozen=True)
class SentencePair:
    sid: int
    src_tokens: tuple
    tgt_tokens: tuple


@dataclass
class ParallelCorpus:
    pairs: list

    def __len__(self):
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)

    def __getitem__(self, sid):
        return self.pairs[sid]


class StopwordList:
    """Case-insensitive stopword membership, loaded one word per line."""

    def __init__(self, words=()):
        self._words = {w.strip().lower() for w in words if w.strip()}

    @classmethod
    def from_file(cls, path) -> "StopwordList":
        text = Path(path).read_text(encoding="utf-8")
        return cls(text.splitlines())

    def __contains__(self, token):
        return token.lower() in self._words

    def __len__(self):
        return len(self._words)


def default_stopwords_path() -> Path:
    return Path(__file__).parent / "data" / "stopwords_en.txt"


class Vocabulary:
    """Contiguous token->id map with reserved pad/bos/eos/unk ids."""

    def __init__(self, tokens=(), min_count: int = 1):
        counts = {}
        for t in tokens:
            counts[t] = counts.get(t, 0) + 1
        self._tok_to_id = {t: i for i, t in enumerate(_RESERVED)}
        for t in sorted(counts):
            if counts[t] >= min_count and t not in self._tok_to_id:
                self._tok_to_id[t] = len(self._tok_to_id)
        self._id_to_tok = {i: t for t, i in self._tok_to_id.items()}

    def __len__(self):
        return len(self._tok_to_id)

    def encode(self, token: str) -> int:
        return self._tok_to_id.get(token, UNK)

    def decode(self, idx: int) -> str:
        return self._id_to_tok[idx]

    def encode_all(self, tokens) -> list[int]:
        return [self.encode(t) for t in tokens]

    def decode_all(self, ids) -> list[str]:
        return [self.decode(i) for i in ids]

    @classmethod
    def from_corpus(cls, corpus: ParallelCorpus, side: str = "src", min_count: int = 1):
        toks = []
        for pair in corpus:
            toks.extend(pair.src_tokens if side == "src" else pair.tgt_tokens)
        return cls(toks, min_count=min_count)


def load_parallel_corpus(src_path, tgt_path) -> ParallelCorpus:
    """Read one-sentence-per-line UTF-8 files into tokenized pairs."""
    src_lines = Path(src_path).read_text(encoding="utf-8").splitlines()
    tgt_lines = Path(tgt_path).read_text(encoding="utf-8").splitlines()
    if len(src_lines) != len(tgt_lines):
        raise ValueError(
            f"line-count mismatch: {src_path} has {len(src_lines)} lines, "
            f"{tgt_path} has {len(tgt_lines)}"
        )
    pairs = []
    for sid, (s, t) in enumerate(zip(src_lines, tgt_lines)):
        src_toks = tokenize_normalize(s)
        tgt_toks = tokenize_normalize(t)
        if not src_toks or not tgt_toks:
            side = "source" if not src_toks else "target"
            raise ValueError(f"empty {side} sentence at sid {sid}")
        pairs.append(SentencePair(sid=sid, src_tokens=tuple(src_toks), tgt_tokens=tuple(tgt_toks)))
    return ParallelCorpus(pairs)
