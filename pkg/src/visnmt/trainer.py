"""Mini-batch Adam training with early stopping on dev BLEU and
multi-seed macro averaging."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import Vocabulary
from .evaluator import bleu4
from .model import MMTModel, ModelConfig
from .numeric_core import AdamState, Tape, adam_step, clip_gradients

__all__ = [
    "TrainConfig",
    "RunRecord",
    "TranslationTask",
    "TrainingDiverged",
    "train_one_seed",
    "train_multi_seed",
    "decode_corpus",
]

DEFAULT_SEEDS = (11, 22, 33, 44, 55)


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainConfig:
    batch_size: int = 32
    lr: float = 0.001
    max_epochs: int = 15
    patience: int = 3
    seeds: tuple = DEFAULT_SEEDS
    images_per_sentence: int = 5
    clip_norm: float = 5.0
    max_decode_len: int = 50

    def __post_init__(self):
        if self.batch_size < 1 or self.patience < 1 or not self.seeds:
            raise ValueError("invalid training configuration")


@dataclass
class RunRecord:
    seed: int
    train_losses: list = field(default_factory=list)
    dev_bleus: list = field(default_factory=list)
    best_checkpoint: str = ""
    best_dev_bleu: float = 0.0
    stopped_epoch: int = 0
    test_bleu: float | None = None


@dataclass
class TranslationTask:
    """Everything one training run reads: splits, vocabularies, bundles."""

    train: list
    dev: list
    test: list
    src_vocab: Vocabulary
    tgt_vocab: Vocabulary
    bundles: dict  # sid -> FeatureBundle, covering all splits

    def encode_src(self, pair):
        return self.src_vocab.encode_all(pair.src_tokens)

    def encode_tgt(self, pair):
        return self.tgt_vocab.encode_all(pair.tgt_tokens)


def _sentence_grads(model: MMTModel, task: TranslationTask, pair) -> float:
    tape = Tape()
    loss = model.sequence_loss(tape, task.encode_src(pair), task.encode_tgt(pair),
                               task.bundles[pair.sid])
    tape.backward(loss)
    return float(loss.value)


def decode_corpus(model: MMTModel, task: TranslationTask, pairs, max_len: int = 50):
    """Greedy-decode each pair; returns (candidate token lists, references)."""
    cands, refs = [], []
    for pair in pairs:
        ids = model.greedy_decode(task.encode_src(pair), task.bundles[pair.sid],
                                  max_len=max_len)
        cands.append(task.tgt_vocab.decode_all(ids))
        refs.append(list(pair.tgt_tokens))
    return cands, refs


def train_one_seed(model_cfg: ModelConfig, cfg: TrainConfig, task: TranslationTask,
                   seed: int, out_dir) -> RunRecord:
    """Train until max_epochs or until dev BLEU stops improving for
    `patience` epochs; the best-dev checkpoint is kept."""
    if not task.train or not task.dev:
        raise ValueError("train and dev splits must be non-empty")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    model = MMTModel(model_cfg, seed=seed)
    adam = AdamState(lr=cfg.lr)
    rng = np.random.default_rng(seed)
    record = RunRecord(seed=seed, best_checkpoint=str(out_dir / f"best_seed{seed}.ckpt"))
    best = -1.0
    stale = 0

    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(len(task.train))
        epoch_losses = []
        for start in range(0, len(order), cfg.batch_size):
            batch = [task.train[i] for i in order[start:start + cfg.batch_size]]
            model.zero_grads()
            batch_losses = []
            for pair in batch:
                loss = _sentence_grads(model, task, pair)
                if not np.isfinite(loss):
                    raise TrainingDiverged(
                        f"non-finite loss at epoch {epoch}, batch starting {start}, "
                        f"sid {pair.sid}")
                batch_losses.append(loss)
            # accumulated grads are sums over the batch; average them
            for t in model.params.values():
                if t.grad is not None:
                    t.grad /= len(batch)
            clip_gradients(model.params, cfg.clip_norm)
            adam_step(model.params, adam)
            epoch_losses.extend(batch_losses)

        train_loss = float(np.mean(epoch_losses))
        cands, refs = decode_corpus(model, task, task.dev, cfg.max_decode_len)
        dev_bleu = bleu4(cands, refs).bleu
        record.train_losses.append(train_loss)
        record.dev_bleus.append(dev_bleu)
        record.stopped_epoch = epoch

        if dev_bleu > best:
            best = dev_bleu
            stale = 0
            model.save(record.best_checkpoint)
        else:
            stale += 1
            if stale >= cfg.patience:
                break

    record.best_dev_bleu = best
    with open(out_dir / f"run_seed{seed}.jsonl", "w", encoding="utf-8") as f:
        for i, (tl, db) in enumerate(zip(record.train_losses, record.dev_bleus), 1):
            f.write(json.dumps({"seed": seed, "epoch": i, "train_loss": tl,
                                "dev_bleu": db}) + "\n")
    return record


def train_multi_seed(model_cfg: ModelConfig, cfg: TrainConfig, task: TranslationTask,
                     out_dir) -> dict:
    """Run each seed independently; final metric is the arithmetic mean of
    per-seed test BLEU. Seed failures are reported, not fatal."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    per_seed = []
    failures = []
    for seed in cfg.seeds:
        try:
            record = train_one_seed(model_cfg, cfg, task, seed, out_dir)
        except TrainingDiverged as exc:
            failures.append({"seed": seed, "error": str(exc)})
            continue
        if task.test:
            best = MMTModel.from_checkpoint(record.best_checkpoint)
            cands, refs = decode_corpus(best, task, task.test, cfg.max_decode_len)
            record.test_bleu = bleu4(cands, refs).bleu
        else:
            record.test_bleu = record.best_dev_bleu
        per_seed.append(record)

    macro = float(np.mean([r.test_bleu for r in per_seed])) if per_seed else None
    report = {
        "per_seed": [{"seed": r.seed, "test_bleu": r.test_bleu,
                      "best_dev_bleu": r.best_dev_bleu,
                      "stopped_epoch": r.stopped_epoch,
                      "checkpoint": r.best_checkpoint} for r in per_seed],
        "macro_bleu": macro,
        "failures": failures,
        "partial": bool(failures),
    }
    (out_dir / "report.json").write_text(json.dumps(report, indent=2), encoding="utf-8")
    return report
