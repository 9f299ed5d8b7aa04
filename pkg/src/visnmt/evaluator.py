"""Corpus-level BLEU-4, bundle ablations, image-count sweep, noise stats."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .features import FeatureBundle

__all__ = [
    "BleuReport",
    "bleu4",
    "apply_bundle_mode",
    "truncate_bundles",
    "run_ablation",
    "sweep_image_count",
    "NoiseReport",
    "noise_report",
]

BUNDLE_MODES = ("retrieved", "shuffled", "blank")


@dataclass
class BleuReport:
    bleu: float  # 0..100
    precisions: list  # p1..p4
    brevity_penalty: float
    candidate_len: int
    reference_len: int


def _ngram_counts(tokens, n) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def bleu4(candidates, references) -> BleuReport:
    """Corpus BLEU with clipped modified n-gram precisions up to 4, single
    reference per sentence, no smoothing."""
    if len(candidates) != len(references):
        raise ValueError(f"sentence count mismatch: {len(candidates)} vs {len(references)}")
    if not candidates:
        raise ValueError("empty candidate set")
    cand_len = sum(len(c) for c in candidates)
    ref_len = sum(len(r) for r in references)
    matched = [0] * 4
    total = [0] * 4
    for cand, ref in zip(candidates, references):
        for n in range(1, 5):
            c_counts = _ngram_counts(cand, n)
            r_counts = _ngram_counts(ref, n)
            total[n - 1] += sum(c_counts.values())
            matched[n - 1] += sum(min(cnt, r_counts[g]) for g, cnt in c_counts.items())
    precisions = [matched[i] / total[i] if total[i] else 0.0 for i in range(4)]
    if cand_len == 0:
        bp = 0.0
    elif cand_len > ref_len:
        bp = 1.0
    else:
        bp = math.exp(1.0 - ref_len / cand_len)
    if all(p > 0 for p in precisions):
        score = bp * math.exp(sum(math.log(p) for p in precisions) / 4.0)
    else:
        score = 0.0
    return BleuReport(bleu=100.0 * score, precisions=precisions, brevity_penalty=bp,
                      candidate_len=cand_len, reference_len=ref_len)


# ----------------------------------------------------------------------
# image-quality ablation and image-count sweep
# ----------------------------------------------------------------------


def apply_bundle_mode(bundles: dict, mode: str, seed: int = 0) -> dict:
    """Transform sid->FeatureBundle per ablation mode.

    retrieved: unchanged. blank: every matrix zeroed. shuffled: uniform
    seeded permutation of the sentence->bundle assignment (self-maps allowed).
    """
    if mode not in BUNDLE_MODES:
        raise ValueError(f"unknown ablation mode {mode!r}")
    if mode == "retrieved":
        return dict(bundles)
    sids = sorted(bundles)
    if mode == "blank":
        out = {}
        for sid in sids:
            b = bundles[sid]
            mats = [type(m)(values=np.zeros_like(m.values), flag="blank") for m in b.matrices]
            out[sid] = FeatureBundle(sid=sid, matrices=mats)
        return out
    # shuffled
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(sids))
    out = {}
    for i, sid in enumerate(sids):
        src = bundles[sids[perm[i]]]
        mats = [type(m)(values=m.values, flag="shuffled") for m in src.matrices]
        out[sid] = FeatureBundle(sid=sid, matrices=mats)
    return out


def truncate_bundles(bundles: dict, m: int) -> dict:
    out = {}
    for sid, b in bundles.items():
        if len(b.matrices) < m:
            raise ValueError(f"sid {sid} has only {len(b.matrices)} images, need {m}")
        out[sid] = FeatureBundle(sid=sid, matrices=b.matrices[:m])
    return out


def run_ablation(train_eval_fn, bundles: dict, modes=BUNDLE_MODES, seed: int = 0) -> dict:
    """Run the pipeline once per mode with transformed train+test bundles.

    `train_eval_fn(bundles) -> float` trains and returns test BLEU. The
    mode transform applies to everything the pipeline sees.
    """
    return {mode: train_eval_fn(apply_bundle_mode(bundles, mode, seed)) for mode in modes}


def sweep_image_count(train_eval_fn, bundles: dict, m_values) -> dict:
    """Retrain with each bundle truncated to its first m matrices."""
    return {m: train_eval_fn(truncate_bundles(bundles, m)) for m in m_values}


# ----------------------------------------------------------------------
# noise-image statistics
# ----------------------------------------------------------------------


@dataclass
class NoiseReport:
    noise_count: int
    informative_count: int
    total: int
    proportion: float


def noise_report(labels) -> NoiseReport:
    """Counts and noise proportion over {noise, informative} labels."""
    labels = list(labels)
    if not labels:
        raise ValueError("no labels")
    bad = [l for l in labels if l not in ("noise", "informative")]
    if bad:
        raise ValueError(f"unknown labels: {sorted(set(bad))}")
    noise = sum(1 for l in labels if l == "noise")
    total = len(labels)
    return NoiseReport(noise_count=noise, informative_count=total - noise,
                       total=total, proportion=noise / total)
