"""Command-line entry points for the full pipeline.

Every run writes a RunManifest (command, config snapshot, input hashes,
seed, outputs, timings) atomically next to its outputs. Exit codes: 0 on
success, 1 on validation errors, 2 on internal errors. GREP_DATA_DIR, when
set, is the fallback root for relative input paths.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from .data import (
    CorrectionError,
    Label,
    ParseError,
    apply_corrections,
    load_corrections,
    parse_tsv,
    tag_corpus,
    write_tsv,
)
from .encoder import EncoderConfig
from .evidence import (
    CorruptProvider,
    EvidenceFormatError,
    HeuristicParallelismProvider,
    OracleProvider,
    load_evidence,
    run_providers,
    write_evidence,
)
from .metrics import (
    confusion_compare,
    ensemble_mean,
    gap_f1,
    prob_histograms,
    read_predictions_csv,
    save_report,
    write_predictions_csv,
)
from .pooling import GrepModel
from .synthetic import SynthConfig, generate_neither_corpus, generate_synthetic
from .tokenizer import Vocab, build_vocab
from .training import (
    TrainConfig,
    build_model,
    kfold_ensemble,
    load_model,
    prepare_dataset,
    save_model,
    train,
)


def resolve_path(path: str) -> Path:
    """Literal path if it exists; otherwise try under GREP_DATA_DIR."""
    p = Path(path)
    if p.exists() or p.is_absolute():
        return p
    root = os.environ.get("GREP_DATA_DIR")
    if root and (Path(root) / p).exists():
        return Path(root) / p
    return p


def _hash_file(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_manifest(out_dir: Path, command: str, args: argparse.Namespace, inputs: list[Path], outputs: list[Path], started: float) -> Path:
    manifest = {
        "command": command,
        "config": {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items() if k != "func"},
        "inputs": {str(p): _hash_file(p) for p in inputs if p and Path(p).is_file()},
        "outputs": [str(p) for p in outputs],
        "seed": getattr(args, "seed", None),
        "started": started,
        "duration_s": round(time.time() - started, 3),
    }
    out_dir.mkdir(parents=True, exist_ok=True)
    target = out_dir / "run-manifest.json"
    tmp = target.with_suffix(".json.tmp")
    tmp.write_text(json.dumps(manifest, indent=2, sort_keys=True), encoding="utf-8")
    os.replace(tmp, target)
    return target


def _load_vocab(args, texts: list[str]) -> Vocab:
    if getattr(args, "vocab", None):
        return Vocab.load(resolve_path(args.vocab))
    return build_vocab(texts, size=getattr(args, "vocab_size", 2000))


def _encoder_config(args, vocab: Vocab) -> EncoderConfig:
    return EncoderConfig(
        vocab_size=vocab.size,
        hidden=args.hidden,
        layers=args.layers,
        heads=args.heads,
        max_len=args.max_len,
        dropout=args.dropout,
    )


def _train_config(args, vocab: Vocab) -> TrainConfig:
    return TrainConfig(
        model=args.model,
        encoder=_encoder_config(args, vocab),
        batch_size=args.batch_size,
        lr=args.lr,
        weight_decay=args.weight_decay,
        dropout=args.dropout,
        eval_every=args.eval_every,
        patience=args.patience,
        max_steps=args.max_steps,
        seed=args.seed,
        folds=getattr(args, "folds", 5),
    )


def _evidence_for(args, samples):
    if not getattr(args, "evidence", None):
        return {}
    by_id = {s.id: s for s in samples}
    order = args.providers.split(",") if getattr(args, "providers", None) else None
    return load_evidence(resolve_path(args.evidence), samples=by_id, provider_order=order)


# ---------------------------------------------------------------------------
# Subcommands


def cmd_preprocess(args) -> int:
    started = time.time()
    data_path = resolve_path(args.data)
    samples = parse_tsv(data_path)
    inputs = [data_path]
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs = []

    if args.corrections:
        fixes_path = resolve_path(args.corrections)
        corrections = load_corrections(fixes_path)
        samples, report = apply_corrections(samples, corrections)
        inputs.append(fixes_path)
        print(report.format_table(data_path.stem))
        delta_path = out_dir / "label-deltas.txt"
        delta_path.write_text(report.format_table(data_path.stem) + "\n", encoding="utf-8")
        outputs.append(delta_path)
        corrected_path = out_dir / "corrected.tsv"
        write_tsv(corrected_path, samples)
        outputs.append(corrected_path)

    tagged, skipped = tag_corpus(samples)
    vocab = _load_vocab(args, [s.text for s in samples])
    vocab_path = out_dir / "vocab.json"
    vocab.save(vocab_path)
    outputs.append(vocab_path)
    from .tokenizer import tokenize

    token_counts = [len(tokenize(t, vocab)) for t in tagged]
    summary = {
        "samples": len(samples),
        "tagged": len(tagged),
        "quarantined": skipped,
        "genders": {g: sum(1 for s in samples if s.gender == g) for g in ("M", "F")},
        "labels": {l.name: sum(1 for s in samples if s.label == l) for l in Label},
        "max_tokens": max(token_counts) if token_counts else 0,
        "vocab_size": vocab.size,
    }
    summary_path = out_dir / "preprocess-summary.json"
    summary_path.write_text(json.dumps(summary, indent=2), encoding="utf-8")
    outputs.append(summary_path)
    print(json.dumps(summary, indent=2))
    write_manifest(out_dir, "preprocess", args, inputs, outputs, started)
    return 0


def cmd_gen_synth(args) -> int:
    started = time.time()
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    config = SynthConfig(hard_fraction=args.hard_fraction)
    outputs = []
    for split, size, seed_shift in (("train", args.train, 0), ("test", args.test, 1)):
        if size <= 0:
            continue
        corpus = generate_synthetic(size, config, seed=args.seed + seed_shift, id_prefix=split)
        tsv = out_dir / f"{split}.tsv"
        write_tsv(tsv, corpus.samples)
        ev = out_dir / f"{split}-gold-evidence.jsonl"
        write_evidence(ev, corpus.gold_clusters())
        meta = out_dir / f"{split}-meta.json"
        meta.write_text(json.dumps(corpus.meta, indent=1), encoding="utf-8")
        outputs += [tsv, ev, meta]
        print(f"{split}: {size} samples -> {tsv}")
    write_manifest(out_dir, "gen-synth", args, [], outputs, started)
    return 0


def cmd_gen_neither(args) -> int:
    started = time.time()
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = generate_neither_corpus(masculine=args.males, feminine=args.females, seed=args.seed)
    tsv = out_dir / "neither.tsv"
    write_tsv(tsv, rows)
    print(f"wrote {len(rows)} NEITHER rows ({args.males} M / {args.females} F) -> {tsv}")
    write_manifest(out_dir, "gen-neither", args, [], [tsv], started)
    return 0


def _build_providers(spec: str, samples, gold_path: Path | None, seed: int):
    providers = []
    gold = None
    if gold_path:
        loaded = load_evidence(gold_path)
        gold = {sid: clusters[0].mentions for sid, clusters in loaded.items() if clusters}
    for name in spec.split(","):
        name = name.strip()
        if name == "heuristic":
            providers.append(HeuristicParallelismProvider())
        elif name == "oracle":
            if gold is None:
                raise ValueError("the oracle provider needs --gold (a gold-evidence file)")
            providers.append(OracleProvider(gold))
        elif name.startswith("noisy"):
            rate = float(name.split(":", 1)[1]) if ":" in name else 0.25
            if gold is None:
                raise ValueError("the noisy provider needs --gold (it corrupts the oracle)")
            providers.append(CorruptProvider(OracleProvider(gold), flip_rate=rate, seed=seed, name="noisy"))
        elif name == "adversarial":
            if gold is None:
                raise ValueError("the adversarial provider needs --gold (it corrupts the oracle)")
            providers.append(CorruptProvider(OracleProvider(gold), flip_rate=1.0, seed=seed))
        else:
            raise ValueError(f"unknown provider {name!r} (choose from heuristic, oracle, noisy[:p], adversarial)")
    return providers


def cmd_evidence(args) -> int:
    started = time.time()
    data_path = resolve_path(args.data)
    samples = parse_tsv(data_path)
    out_path = Path(args.out)
    inputs = [data_path]
    if args.import_file:
        src = resolve_path(args.import_file)
        inputs.append(src)
        grouped = load_evidence(src, samples={s.id: s for s in samples})
        clusters = [c for group in grouped.values() for c in group]
        print(f"imported {len(clusters)} clusters for {len(grouped)} samples")
    else:
        gold_path = resolve_path(args.gold) if args.gold else None
        if gold_path:
            inputs.append(gold_path)
        providers = _build_providers(args.providers, samples, gold_path, args.seed)
        clusters = run_providers(samples, providers)
        print(f"ran {len(providers)} providers over {len(samples)} samples")
    write_evidence(out_path, clusters)
    write_manifest(out_path.parent, "evidence", args, inputs, [out_path], started)
    return 0


def cmd_train(args) -> int:
    started = time.time()
    train_path = resolve_path(args.data)
    val_path = resolve_path(args.val)
    train_samples = parse_tsv(train_path)
    val_samples = parse_tsv(val_path)
    vocab = _load_vocab(args, [s.text for s in train_samples])
    config = _train_config(args, vocab)

    train_ev = _evidence_for(args, train_samples)
    val_ev = _evidence_for(replace_namespace(args, evidence=args.val_evidence or args.evidence), val_samples)
    train_set = prepare_dataset(train_samples, vocab, train_ev, max_len=args.max_len, drop_pronoun=config.drop_pronoun_mention)
    val_set = prepare_dataset(val_samples, vocab, val_ev, max_len=args.max_len, drop_pronoun=config.drop_pronoun_mention)

    model = build_model(config)
    result = train(model, train_set, val_set, config)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_model(out_dir, model, vocab, config, steps=result.steps, extra={"best_val_loss": result.best_val_loss})
    history_path = out_dir / "history.csv"
    with open(history_path, "w", encoding="utf-8") as fh:
        fh.write("step,train_loss,val_loss,val_f1\n")
        for row in result.history_rows():
            fh.write(",".join(f"{v:.6f}" if isinstance(v, float) else str(v) for v in row) + "\n")
    print(f"trained {config.model}: {result.steps} steps, best val logloss {result.best_val_loss:.4f}")
    inputs = [train_path, val_path]
    if args.evidence:
        inputs.append(resolve_path(args.evidence))
    write_manifest(out_dir, "train", args, inputs, [out_dir / "model.ckpt", history_path], started)
    return 0


def replace_namespace(args, **kw):
    ns = argparse.Namespace(**vars(args))
    for k, v in kw.items():
        setattr(ns, k, v)
    return ns


def cmd_cv_ensemble(args) -> int:
    started = time.time()
    data_path = resolve_path(args.data)
    test_path = resolve_path(args.test)
    samples = parse_tsv(data_path)
    test_samples = parse_tsv(test_path)
    vocab = _load_vocab(args, [s.text for s in samples])
    config = _train_config(args, vocab)
    config.validate_cv()

    dataset = prepare_dataset(samples, vocab, _evidence_for(args, samples), max_len=args.max_len)
    test_ev = _evidence_for(replace_namespace(args, evidence=args.test_evidence or args.evidence), test_samples)
    test_set = prepare_dataset(test_samples, vocab, test_ev, max_len=args.max_len)

    seeds = [int(s) for s in args.seeds.split(",")]
    result = kfold_ensemble(dataset, test_set, config, seeds=seeds, fold_seed=args.seed)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs = []
    for seed, oof in result.oof_by_seed().items():
        path = out_dir / f"oof-seed{seed}.csv"
        write_predictions_csv(path, oof)
        outputs.append(path)
    ensembled = ensemble_mean(result.test_sets())
    ens_path = out_dir / "ensemble-test.csv"
    write_predictions_csv(ens_path, ensembled)
    outputs.append(ens_path)
    report = gap_f1(ensembled, test_set.samples)
    print(f"{len(result.runs)} models trained ({config.folds} folds x {len(seeds)} seeds)")
    print(report.format_table("ensemble"))
    save_report(out_dir / "ensemble-report.json", report, "ensemble")
    outputs.append(out_dir / "ensemble-report.json")
    write_manifest(out_dir, "cv-ensemble", args, [data_path, test_path], outputs, started)
    return 0


def cmd_score(args) -> int:
    started = time.time()
    pred_path = resolve_path(args.pred)
    gold_path = resolve_path(args.gold)
    preds = read_predictions_csv(pred_path)
    gold = parse_tsv(gold_path)
    report = gap_f1(preds, gold)
    print(report.format_table(pred_path.stem))
    if args.out:
        save_report(Path(args.out), report, pred_path.stem)
        write_manifest(Path(args.out).parent, "score", args, [pred_path, gold_path], [Path(args.out)], started)
    return 0


def cmd_compare(args) -> int:
    started = time.time()
    pred_a = read_predictions_csv(resolve_path(args.pred_a))
    pred_b = read_predictions_csv(resolve_path(args.pred_b))
    gold = parse_tsv(resolve_path(args.gold))
    table = confusion_compare(pred_a, pred_b, gold)
    print(table.format_table(args.name_a, args.name_b))
    if args.out:
        payload = {f"{cls}": {f"{a}/{b}": n for (a, b), n in cells.items()} for cls, cells in table.cells.items()}
        Path(args.out).write_text(json.dumps(payload, indent=2), encoding="utf-8")
        write_manifest(Path(args.out).parent, "compare", args, [], [Path(args.out)], started)
    return 0


def cmd_histograms(args) -> int:
    started = time.time()
    preds = read_predictions_csv(resolve_path(args.pred))
    gold = parse_tsv(resolve_path(args.gold))
    hist = prob_histograms(preds, gold, bins=args.bins)
    Path(args.out).write_text(json.dumps(hist, indent=2), encoding="utf-8")
    print(f"wrote {args.bins}-bin histograms for {len(hist)} classes -> {args.out}")
    write_manifest(Path(args.out).parent, "histograms", args, [], [Path(args.out)], started)
    return 0


def cmd_export_attention(args) -> int:
    started = time.time()
    model, vocab, meta = load_model(resolve_path(args.checkpoint))
    if not isinstance(model, GrepModel):
        raise ValueError("attention export needs an evidence-pooling checkpoint")
    samples = parse_tsv(resolve_path(args.data))
    evidence = _evidence_for(args, samples)
    dataset = prepare_dataset(samples, vocab, evidence, max_len=model.config.encoder.max_len)
    from . import autodiff as ad

    traces = []
    with ad.no_grad():
        for lo in range(0, len(dataset), args.batch_size):
            _, batch_traces = model.forward(
                dataset.toks[lo:lo + args.batch_size],
                dataset.evidence[lo:lo + args.batch_size],
                training=False,
                capture_trace=True,
            )
            traces.extend(batch_traces)
    payload = {t.sample_id: t.to_dict() for t in traces}
    Path(args.out).write_text(json.dumps(payload, indent=1), encoding="utf-8")
    print(f"exported attention traces for {len(traces)} samples -> {args.out}")
    write_manifest(Path(args.out).parent, "export-attention", args, [resolve_path(args.data)], [Path(args.out)], started)
    return 0


def cmd_serve(args) -> int:
    from .service import ReviewState, make_server

    started = time.time()
    samples = parse_tsv(resolve_path(args.data))
    evidence = _evidence_for(args, samples) if args.evidence else {}
    traces = {}
    if args.traces:
        traces = json.loads(resolve_path(args.traces).read_text(encoding="utf-8"))
    state = ReviewState(
        samples=samples,
        corrections_path=Path(args.corrections),
        evidence=evidence,
        traces=traces,
        probert_preds=read_predictions_csv(resolve_path(args.pred_probert)) if args.pred_probert else {},
        grep_preds=read_predictions_csv(resolve_path(args.pred_grep)) if args.pred_grep else {},
    )
    ui_dir = args.ui_dir
    if ui_dir is None:
        bundled = Path(__file__).resolve().parents[2] / "frontend" / "dist"
        ui_dir = bundled if bundled.is_dir() else None
    server = make_server(state, host=args.host, port=args.port, ui_dir=ui_dir)
    print(f"review service on http://{args.host}:{server.server_address[1]} ({len(samples)} samples)")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
        write_manifest(Path(args.corrections).parent, "serve", args, [resolve_path(args.data)], [Path(args.corrections)], started)
    return 0


# ---------------------------------------------------------------------------


def _add_model_flags(p: argparse.ArgumentParser):
    p.add_argument("--model", choices=["probert", "grep"], default="grep")
    p.add_argument("--vocab", help="existing vocab.json (otherwise built from the training data)")
    p.add_argument("--vocab-size", type=int, default=2000)
    p.add_argument("--hidden", type=int, default=64)
    p.add_argument("--layers", type=int, default=2)
    p.add_argument("--heads", type=int, default=4)
    p.add_argument("--max-len", type=int, default=256)
    p.add_argument("--dropout", type=float, default=0.1)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--lr", type=float, default=3e-4)
    p.add_argument("--weight-decay", type=float, default=0.01)
    p.add_argument("--eval-every", type=int, default=80)
    p.add_argument("--patience", type=int, default=5)
    p.add_argument("--max-steps", type=int, default=2000)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gapgrep", description="Gendered pronoun resolution with evidence pooling")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="parse, apply corrections, tag, tokenize")
    p.add_argument("--data", required=True)
    p.add_argument("--corrections")
    p.add_argument("--vocab")
    p.add_argument("--vocab-size", type=int, default=2000)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("gen-synth", help="generate a synthetic corpus with gold evidence")
    p.add_argument("--train", type=int, default=2000)
    p.add_argument("--test", type=int, default=500)
    p.add_argument("--hard-fraction", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_synth)

    p = sub.add_parser("gen-neither", help="generate NEITHER rows from document clusters")
    p.add_argument("--males", type=int, default=129)
    p.add_argument("--females", type=int, default=124)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_neither)

    p = sub.add_parser("evidence", help="run stand-in providers or import an evidence file")
    p.add_argument("--data", required=True)
    p.add_argument("--providers", default="heuristic")
    p.add_argument("--gold", help="gold-evidence file backing oracle/noisy/adversarial providers")
    p.add_argument("--import-file", help="canonicalize an externally produced evidence file")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evidence)

    p = sub.add_parser("train", help="train one model with early stopping")
    p.add_argument("--data", required=True)
    p.add_argument("--val", required=True)
    p.add_argument("--evidence")
    p.add_argument("--val-evidence")
    p.add_argument("--providers")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--out", required=True)
    _add_model_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("cv-ensemble", help="k-fold multi-seed training and ensembling")
    p.add_argument("--data", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--evidence")
    p.add_argument("--test-evidence")
    p.add_argument("--providers")
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--seeds", default="42,59,75,46,91")
    p.add_argument("--seed", type=int, default=0, help="fold-assignment seed")
    p.add_argument("--out", required=True)
    _add_model_flags(p)
    p.set_defaults(func=cmd_cv_ensemble)

    p = sub.add_parser("score", help="gendered F1 / bias / log-loss report")
    p.add_argument("--pred", required=True)
    p.add_argument("--gold", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("compare", help="class-wise agreement table between two prediction sets")
    p.add_argument("--pred-a", required=True)
    p.add_argument("--pred-b", required=True)
    p.add_argument("--gold", required=True)
    p.add_argument("--name-a", default="first")
    p.add_argument("--name-b", default="second")
    p.add_argument("--out")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("histograms", help="per-class gold-probability histograms")
    p.add_argument("--pred", required=True)
    p.add_argument("--gold", required=True)
    p.add_argument("--bins", type=int, default=20)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_histograms)

    p = sub.add_parser("export-attention", help="dump per-sample attention traces for the review UI")
    p.add_argument("--checkpoint", required=True, help="directory written by `gapgrep train`")
    p.add_argument("--data", required=True)
    p.add_argument("--evidence", required=True)
    p.add_argument("--providers")
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_attention)

    p = sub.add_parser("serve", help="run the label-review HTTP service")
    p.add_argument("--data", required=True)
    p.add_argument("--evidence")
    p.add_argument("--providers")
    p.add_argument("--corrections", required=True)
    p.add_argument("--traces")
    p.add_argument("--pred-probert")
    p.add_argument("--pred-grep")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8490)
    p.add_argument("--ui-dir")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 1 if e.code not in (0, None) else 0
    try:
        return args.func(args)
    except (ParseError, CorrectionError, EvidenceFormatError, ValueError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except Exception as e:  # pragma: no cover - internal failure surface
        print(f"internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
