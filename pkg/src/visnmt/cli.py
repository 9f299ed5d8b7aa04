"""Command-line entry point for the whole pipeline.

Subcommands: build-queries, retrieve, features, train, evaluate, ablate,
sweep, annotate-serve, noise-report. A flat `key = value` config file
supplies defaults; command-line flags override it. Every run logs its
fully-resolved configuration.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import corpus as corpus_mod
from . import evaluator, features, query_builder, retrieval, trainer
from .annotation import AnnotationServer, create_session
from .model import MMTModel, ModelConfig

log = logging.getLogger("visnmt")

CONFIG_KEYS = {
    "batch_size": int, "lr": float, "max_epochs": int, "patience": int,
    "seeds": str, "images_per_sentence": int, "emb_dim": int, "enc_hidden": int,
    "dec_hidden": int, "attn_dim": int, "out_dim": int, "feat_rows": int,
    "feat_cols": int, "min_count": int, "max_decode_len": int, "clip_norm": float,
}

DEFAULTS = {
    "batch_size": 32, "lr": 0.001, "max_epochs": 15, "patience": 3,
    "seeds": "11,22,33,44,55", "images_per_sentence": 5, "emb_dim": 256,
    "enc_hidden": 256, "dec_hidden": 512, "attn_dim": 256, "out_dim": 256,
    "feat_rows": 196, "feat_cols": 1024, "min_count": 1, "max_decode_len": 50,
    "clip_norm": 5.0,
}


class UsageError(Exception):
    pass


def load_config(path=None, overrides=None) -> dict:
    cfg = dict(DEFAULTS)
    if path:
        for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            if key not in CONFIG_KEYS:
                raise UsageError(f"{path}:{lineno}: unknown config key {key!r}")
            cfg[key] = CONFIG_KEYS[key](value)
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in CONFIG_KEYS:
            raise UsageError(f"unknown config key {key!r}")
        cfg[key] = CONFIG_KEYS[key](value)
    return cfg


def _parse_seeds(text) -> tuple:
    return tuple(int(s) for s in str(text).replace(" ", "").split(",") if s)


def _log_config(cfg: dict):
    log.info("resolved config: %s", json.dumps(cfg, sort_keys=True))


def _stopwords(args) -> corpus_mod.StopwordList:
    path = getattr(args, "stopwords", None) or corpus_mod.default_stopwords_path()
    return corpus_mod.StopwordList.from_file(path)


# ----------------------------------------------------------------------
# subcommands
# ----------------------------------------------------------------------


def cmd_build_queries(args, cfg):
    lines = Path(args.src).read_text(encoding="utf-8").splitlines()
    pairs = []
    for sid, line in enumerate(lines):
        toks = corpus_mod.tokenize_normalize(line)
        if not toks:
            raise ValueError(f"empty source sentence at sid {sid}")
        pairs.append(corpus_mod.SentencePair(sid=sid, src_tokens=tuple(toks),
                                             tgt_tokens=tuple(toks)))
    corpus = corpus_mod.ParallelCorpus(pairs)
    stops = _stopwords(args)
    model = query_builder.fit_tfidf(corpus, stops)
    qsets = query_builder.build_query_sets(corpus, model,
                                           m=cfg["images_per_sentence"],
                                           mode=args.query_mode)
    query_builder.write_queries_jsonl(args.out, qsets)
    log.info("wrote %d query sets to %s", len(qsets), args.out)
    return 0


def cmd_retrieve(args, cfg):
    qsets = query_builder.read_queries_jsonl(args.queries)
    if args.provider == "offline":
        provider = retrieval.OfflineFixtureProvider()
        rate = None
    else:
        raise RuntimeError("live provider requires an engine-specific adapter; "
                           "construct retrieval.LiveHttpProvider programmatically")
    manifest = retrieval.retrieve_for_corpus(
        provider, qsets, args.cache, per_sentence=cfg["images_per_sentence"],
        rate=rate, workers=args.workers)
    retrieval.write_manifest_jsonl(args.out, manifest)
    ok = sum(1 for r in manifest.records if r.status == "ok")
    log.info("wrote manifest with %d records (%d ok) to %s",
             len(manifest.records), ok, args.out)
    return 0


def cmd_features(args, cfg):
    manifest = retrieval.read_manifest_jsonl(args.manifest)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    if args.mode == "mock":
        hashes = sorted({r.content_hash for r in manifest.records
                         if r.status == "ok" and r.content_hash})
        for h in hashes:
            mat = features.mock_extract(h, cfg["feat_rows"], cfg["feat_cols"])
            path = out_dir / f"{h}.feat"
            features.write_feature_file(path, mat)
            entries.append({"hash": h, "path": str(path), "rows": mat.rows,
                            "cols": mat.cols, "flag": "mock"})
    else:  # import: validate externally produced FEAT files
        for rec in features.read_feature_index(args.index):
            mat = features.read_feature_file(rec["path"])
            entries.append({"hash": rec["hash"], "path": rec["path"],
                            "rows": mat.rows, "cols": mat.cols,
                            "flag": rec.get("flag", "real")})
    features.write_feature_index(args.index, entries)
    log.info("indexed %d feature files in %s", len(entries), args.index)
    return 0


def _build_task(args, cfg) -> tuple:
    train_corpus = corpus_mod.load_parallel_corpus(args.src, args.tgt)
    dev = corpus_mod.load_parallel_corpus(args.dev_src, args.dev_tgt) \
        if args.dev_src else train_corpus
    test = corpus_mod.load_parallel_corpus(args.test_src, args.test_tgt) \
        if getattr(args, "test_src", None) else None

    manifest = retrieval.read_manifest_jsonl(args.manifest)
    if args.features_index:
        source = features.FileFeatureSource.from_index_file(args.features_index)
    else:
        source = features.MockFeatureSource(cfg["feat_rows"], cfg["feat_cols"])
    m = cfg["images_per_sentence"]
    bundles = {b.sid: b for b in features.assemble_bundles(manifest, source, m)}

    src_vocab = corpus_mod.Vocabulary.from_corpus(train_corpus, "src", cfg["min_count"])
    tgt_vocab = corpus_mod.Vocabulary.from_corpus(train_corpus, "tgt", cfg["min_count"])
    task = trainer.TranslationTask(
        train=list(train_corpus), dev=list(dev), test=list(test) if test else [],
        src_vocab=src_vocab, tgt_vocab=tgt_vocab, bundles=bundles)
    model_cfg = ModelConfig(
        src_vocab=len(src_vocab), tgt_vocab=len(tgt_vocab),
        emb_dim=cfg["emb_dim"], enc_hidden=cfg["enc_hidden"],
        dec_hidden=cfg["dec_hidden"], attn_dim=cfg["attn_dim"],
        out_dim=cfg["out_dim"], feat_rows=source.rows, feat_cols=source.cols,
        images_per_sentence=m)
    train_cfg = trainer.TrainConfig(
        batch_size=cfg["batch_size"], lr=cfg["lr"], max_epochs=cfg["max_epochs"],
        patience=cfg["patience"], seeds=_parse_seeds(cfg["seeds"]),
        images_per_sentence=m, clip_norm=cfg["clip_norm"],
        max_decode_len=cfg["max_decode_len"])
    return task, model_cfg, train_cfg


def cmd_train(args, cfg):
    task, model_cfg, train_cfg = _build_task(args, cfg)
    report = trainer.train_multi_seed(model_cfg, train_cfg, task, args.out)
    print(json.dumps(report, indent=2))
    return 0


def cmd_evaluate(args, cfg):
    task, _, train_cfg = _build_task(args, cfg)
    model = MMTModel.from_checkpoint(args.checkpoint)
    pairs = task.test or task.train
    cands, refs = trainer.decode_corpus(model, task, pairs, train_cfg.max_decode_len)
    report = evaluator.bleu4(cands, refs)
    print(json.dumps({"bleu": report.bleu, "precisions": report.precisions,
                      "brevity_penalty": report.brevity_penalty}, indent=2))
    return 0


def _train_eval_fn(args, cfg, task, model_cfg, train_cfg):
    def run(bundles):
        sub = trainer.TranslationTask(
            train=task.train, dev=task.dev, test=task.test,
            src_vocab=task.src_vocab, tgt_vocab=task.tgt_vocab, bundles=bundles)
        report = trainer.train_multi_seed(model_cfg, train_cfg, sub, args.out)
        return report["macro_bleu"]
    return run


def cmd_ablate(args, cfg):
    task, model_cfg, train_cfg = _build_task(args, cfg)
    modes = tuple(args.mode.split(","))
    results = evaluator.run_ablation(
        _train_eval_fn(args, cfg, task, model_cfg, train_cfg),
        task.bundles, modes=modes, seed=args.shuffle_seed)
    out = Path(args.out) / "ablation.json"
    out.write_text(json.dumps(results, indent=2), encoding="utf-8")
    print(json.dumps(results, indent=2))
    return 0


def _parse_m_values(text) -> list:
    if ".." in text:
        lo, hi = text.split("..")
        return list(range(int(lo), int(hi) + 1))
    return [int(s) for s in text.split(",") if s]


def cmd_sweep(args, cfg):
    task, model_cfg, train_cfg = _build_task(args, cfg)
    results = evaluator.sweep_image_count(
        _train_eval_fn(args, cfg, task, model_cfg, train_cfg),
        task.bundles, _parse_m_values(args.m))
    out = Path(args.out) / "sweep.json"
    out.write_text(json.dumps(results, indent=2), encoding="utf-8")
    print(json.dumps(results, indent=2))
    return 0


def cmd_annotate_serve(args, cfg):
    manifest = retrieval.read_manifest_jsonl(args.manifest)
    session = create_session(manifest, args.sample, args.seed, args.store)
    qsets = query_builder.read_queries_jsonl(args.queries) if args.queries else []
    sources = {}
    if args.src:
        for sid, line in enumerate(Path(args.src).read_text(encoding="utf-8").splitlines()):
            sources[sid] = line
    server = AnnotationServer(session, port=args.port, static_dir=args.static,
                              query_sets=qsets, manifest=manifest, sources=sources)
    log.info("annotation service on http://127.0.0.1:%d (session %s, %d items)",
             server.port, session.session_id, len(session.items))
    print(f"serving on http://127.0.0.1:{server.port}")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    return 0


def cmd_noise_report(args, cfg):
    # last record per item wins
    by_item = {}
    for line in Path(args.labels).read_text(encoding="utf-8").splitlines():
        if line.strip():
            rec = json.loads(line)
            by_item[(rec["sid"], rec["m"])] = rec["label"]
    rep = evaluator.noise_report(by_item.values())
    print(json.dumps({"noise": rep.noise_count, "informative": rep.informative_count,
                      "total": rep.total, "proportion": rep.proportion}, indent=2))
    return 0


# ----------------------------------------------------------------------
# argument parsing
# ----------------------------------------------------------------------


def _add_task_args(p):
    p.add_argument("--src", required=True)
    p.add_argument("--tgt", required=True)
    p.add_argument("--dev-src")
    p.add_argument("--dev-tgt")
    p.add_argument("--test-src")
    p.add_argument("--test-tgt")
    p.add_argument("--manifest", required=True)
    p.add_argument("--features-index")
    p.add_argument("--out", required=True)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="visnmt",
                                     description="Retrieval-augmented multimodal NMT pipeline")
    parser.add_argument("--config", help="key = value config file")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("build-queries", help="rank terms and synthesize search queries")
    p.add_argument("--src", required=True)
    p.add_argument("--stopwords")
    p.add_argument("--out", required=True)
    p.add_argument("--query-mode", choices=("concat", "single"), default="concat")
    p.add_argument("--per-sentence", dest="images_per_sentence")
    p.set_defaults(fn=cmd_build_queries)

    p = sub.add_parser("retrieve", help="fetch first available image per query")
    p.add_argument("--queries", required=True)
    p.add_argument("--provider", choices=("offline", "live"), default="offline")
    p.add_argument("--cache", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--per-sentence", dest="images_per_sentence")
    p.add_argument("--rate", type=float, default=2.0)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(fn=cmd_retrieve)

    p = sub.add_parser("features", help="mock-extract or import FEAT files")
    p.add_argument("--manifest", required=True)
    p.add_argument("--mode", choices=("mock", "import"), default="mock")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--index", required=True)
    p.add_argument("--rows", dest="feat_rows")
    p.add_argument("--cols", dest="feat_cols")
    p.set_defaults(fn=cmd_features)

    p = sub.add_parser("train", help="multi-seed training with early stopping")
    _add_task_args(p)
    p.add_argument("--seeds")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("evaluate", help="BLEU of a checkpoint on a corpus")
    _add_task_args(p)
    p.add_argument("--checkpoint", required=True)
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("ablate", help="train with retrieved/shuffled/blank bundles")
    _add_task_args(p)
    p.add_argument("--mode", default="retrieved,shuffled,blank")
    p.add_argument("--shuffle-seed", type=int, default=0)
    p.add_argument("--seeds")
    p.set_defaults(fn=cmd_ablate)

    p = sub.add_parser("sweep", help="retrain for each image count m")
    _add_task_args(p)
    p.add_argument("--m", default="1..5")
    p.add_argument("--seeds")
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("annotate-serve", help="serve the annotation UI and endpoints")
    p.add_argument("--manifest", required=True)
    p.add_argument("--sample", type=int, default=1000)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--port", type=int, default=8765)
    p.add_argument("--store", required=True)
    p.add_argument("--static")
    p.add_argument("--queries")
    p.add_argument("--src")
    p.set_defaults(fn=cmd_annotate_serve)

    p = sub.add_parser("noise-report", help="noise counts and proportion from labels")
    p.add_argument("--labels", required=True)
    p.set_defaults(fn=cmd_noise_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    if not getattr(args, "fn", None):
        parser.print_usage(sys.stderr)
        return 2
    try:
        overrides = {k: getattr(args, k) for k in CONFIG_KEYS if hasattr(args, k)}
        if getattr(args, "seeds", None):
            overrides["seeds"] = args.seeds
        cfg = load_config(args.config, overrides)
        _log_config(cfg)
        return args.fn(args, cfg)
    except UsageError as exc:
        print(f"usage-error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, KeyError, RuntimeError) as exc:
        print(f"runtime-error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
