import math

import numpy as np
import pytest

from visnmt.evaluator import (
    apply_bundle_mode,
    bleu4,
    noise_report,
    run_ablation,
    sweep_image_count,
    truncate_bundles,
)
from visnmt.features import FeatureBundle, FeatureMatrix


def brute_force_bleu(cands, refs):
    """Naive independent reimplementation: loops, no Counter tricks."""
    matched = [0.0] * 4
    total = [0.0] * 4
    for cand, ref in zip(cands, refs):
        for n in range(1, 5):
            c_ngrams = [tuple(cand[i:i + n]) for i in range(len(cand) - n + 1)]
            r_ngrams = [tuple(ref[i:i + n]) for i in range(len(ref) - n + 1)]
            total[n - 1] += len(c_ngrams)
            for g in set(c_ngrams):
                matched[n - 1] += min(c_ngrams.count(g), r_ngrams.count(g))
    ps = [m / t if t else 0.0 for m, t in zip(matched, total)]
    c = sum(len(x) for x in cands)
    r = sum(len(x) for x in refs)
    bp = 1.0 if c > r else (math.exp(1 - r / c) if c else 0.0)
    if any(p == 0 for p in ps):
        return 0.0
    return 100.0 * bp * math.exp(sum(math.log(p) for p in ps) / 4)


def test_self_match_is_100():
    sents = [["a", "man", "plays", "guitar", "."], ["two", "dogs", "run", "fast", "."]]
    report = bleu4(sents, sents)
    assert report.bleu == 100.0
    assert report.brevity_penalty == 1.0


def test_clipped_precision_hand_example():
    report = bleu4([["the", "the", "the", "the"]], [["the", "cat"]])
    assert report.precisions[0] == pytest.approx(1 / 4, abs=1e-12)
    assert report.bleu == 0.0  # no 2-grams match


def test_zero_fourgram_matches_zero_bleu():
    report = bleu4([["a", "b", "c", "d", "e"]], [["a", "x", "c", "y", "e"]])
    assert report.bleu == 0.0


def test_brevity_penalty_short_candidate():
    report = bleu4([["a", "b"]], [["a", "b", "c", "d"]])
    assert report.brevity_penalty == pytest.approx(math.exp(1 - 4 / 2), abs=1e-12)


def test_matches_brute_force_on_random_cases():
    rng = np.random.default_rng(77)
    vocab = ["a", "b", "c", "d", "e", "f"]
    for _ in range(50):
        n_sent = int(rng.integers(1, 5))
        cands = [[vocab[j] for j in rng.integers(0, 6, size=rng.integers(1, 12))]
                 for _ in range(n_sent)]
        refs = [[vocab[j] for j in rng.integers(0, 6, size=rng.integers(1, 12))]
                for _ in range(n_sent)]
        assert bleu4(cands, refs).bleu == pytest.approx(
            brute_force_bleu(cands, refs), abs=1e-9)


def test_invariant_under_pair_permutation():
    rng = np.random.default_rng(3)
    cands = [["a", "b", "c"], ["d", "e"], ["a", "c", "e", "b"]]
    refs = [["a", "b", "d"], ["d", "e"], ["a", "c", "b", "b"]]
    base = bleu4(cands, refs).bleu
    perm = [2, 0, 1]
    assert bleu4([cands[i] for i in perm], [refs[i] for i in perm]).bleu == base


def test_mismatched_counts_and_empty_errors():
    with pytest.raises(ValueError):
        bleu4([["a"]], [["a"], ["b"]])
    with pytest.raises(ValueError):
        bleu4([], [])


# ----------------------------------------------------------------------
# ablation transforms
# ----------------------------------------------------------------------


def make_bundles(n=4, m=3):
    rng = np.random.default_rng(0)
    return {sid: FeatureBundle(sid=sid, matrices=[
        FeatureMatrix(values=rng.normal(size=(2, 3))) for _ in range(m)])
        for sid in range(n)}


def test_blank_mode_zeroes_everything():
    out = apply_bundle_mode(make_bundles(), "blank")
    for b in out.values():
        for mat in b.matrices:
            assert not mat.values.any()
            assert mat.flag == "blank"


def test_shuffled_mode_deterministic_and_permutes_assignment():
    bundles = make_bundles()
    a = apply_bundle_mode(bundles, "shuffled", seed=5)
    b = apply_bundle_mode(bundles, "shuffled", seed=5)
    for sid in bundles:
        np.testing.assert_array_equal(a[sid].matrices[0].values, b[sid].matrices[0].values)
    # whole bundles move together: each output bundle equals some input bundle
    originals = [tuple(m.values.tobytes() for m in bundles[s].matrices) for s in sorted(bundles)]
    for sid in a:
        key = tuple(m.values.tobytes() for m in a[sid].matrices)
        assert key in originals


def test_retrieved_mode_identity():
    bundles = make_bundles()
    out = apply_bundle_mode(bundles, "retrieved")
    assert out == bundles


def test_unknown_mode_errors():
    with pytest.raises(ValueError):
        apply_bundle_mode(make_bundles(), "sepia")


def test_truncate_bundles():
    bundles = make_bundles(m=5)
    out = truncate_bundles(bundles, 2)
    assert all(len(b.matrices) == 2 for b in out.values())
    for sid in bundles:
        np.testing.assert_array_equal(out[sid].matrices[0].values,
                                      bundles[sid].matrices[0].values)
    with pytest.raises(ValueError, match="sid"):
        truncate_bundles(bundles, 9)


def test_run_ablation_and_sweep_wiring():
    bundles = make_bundles()
    seen = []

    def fake_train(bs):
        seen.append(bs)
        return float(len(seen))

    results = run_ablation(fake_train, bundles, modes=("retrieved", "blank"))
    assert set(results) == {"retrieved", "blank"}
    sweep = sweep_image_count(fake_train, bundles, [1, 2])
    assert set(sweep) == {1, 2}


# ----------------------------------------------------------------------
# noise report
# ----------------------------------------------------------------------


def test_noise_report_reference_rates():
    for noise, total, pct in ((61, 1000, 0.061), (228, 1000, 0.228), (685, 1000, 0.685)):
        labels = ["noise"] * noise + ["informative"] * (total - noise)
        rep = noise_report(labels)
        assert rep.noise_count == noise
        assert rep.proportion == pct


def test_noise_report_zero_noise():
    rep = noise_report(["informative"] * 10)
    assert rep.proportion == 0.0
    assert rep.noise_count + rep.informative_count == rep.total == 10


def test_noise_report_rejects_bad_input():
    with pytest.raises(ValueError):
        noise_report([])
    with pytest.raises(ValueError):
        noise_report(["noise", "blurry"])
