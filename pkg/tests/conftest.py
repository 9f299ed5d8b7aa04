import numpy as np
import pytest

from visnmt.corpus import ParallelCorpus, SentencePair, Vocabulary
from visnmt.features import FeatureBundle, mock_extract
from visnmt.model import ModelConfig
from visnmt.trainer import TrainConfig, TranslationTask

SRC_WORDS = ["man", "dog", "park", "ball", "guitar", "club", "river", "boat",
             "tree", "house"]
TGT_WORDS = ["mann", "hund", "parkx", "ballx", "gitarre", "klub", "fluss",
             "bootx", "baum", "haus"]
WORD_MAP = dict(zip(SRC_WORDS, TGT_WORDS))


def synthetic_pairs(n, seed=0, min_len=2, max_len=4):
    """Deterministic word-mapped pairs: target is the source translated
    word-for-word through a fixed dictionary."""
    rng = np.random.default_rng(seed)
    pairs = []
    for sid in range(n):
        length = int(rng.integers(min_len, max_len + 1))
        src = [SRC_WORDS[j] for j in rng.integers(0, len(SRC_WORDS), size=length)]
        tgt = [WORD_MAP[w] for w in src]
        pairs.append(SentencePair(sid=sid, src_tokens=tuple(src), tgt_tokens=tuple(tgt)))
    return pairs


def mock_bundles(pairs, m=3, rows=2, cols=6):
    return {p.sid: FeatureBundle(sid=p.sid, matrices=[
        mock_extract(f"{p.sid:08x}{k:08x}", rows, cols) for k in range(m)])
        for p in pairs}


def make_task(n=8, seed=0, m=3, rows=2, cols=6):
    pairs = synthetic_pairs(n, seed=seed)
    src_vocab = Vocabulary.from_corpus(ParallelCorpus(pairs), "src")
    tgt_vocab = Vocabulary.from_corpus(ParallelCorpus(pairs), "tgt")
    return TranslationTask(train=pairs, dev=pairs, test=pairs,
                           src_vocab=src_vocab, tgt_vocab=tgt_vocab,
                           bundles=mock_bundles(pairs, m, rows, cols))


def tiny_model_cfg(task, m=3, rows=2, cols=6):
    return ModelConfig(src_vocab=len(task.src_vocab), tgt_vocab=len(task.tgt_vocab),
                       emb_dim=12, enc_hidden=8, dec_hidden=16, attn_dim=8,
                       out_dim=12, feat_rows=rows, feat_cols=cols,
                       images_per_sentence=m)


@pytest.fixture
def small_task():
    return make_task()


# acceptance tests append "[ACCEPTANCE] <name>: PASS|FAIL" lines here; the
# summary hook prints them outside pytest's output capture
ACCEPTANCE_RESULTS = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_RESULTS:
        terminalreporter.write_line("")
        for line in ACCEPTANCE_RESULTS:
            terminalreporter.write_line(line)
