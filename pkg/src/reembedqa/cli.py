"""Command-line interface.

Subcommands: train, eval, gates, gradcheck, precompute-lm,
compare-variants. Configuration flags mirror RunConfig field names; a
JSON config file and REEMBEDQA_* environment variables are merged
underneath explicit flags.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import ConfigError, RunConfig, load_config
from .data import encode_examples, parse_squad_json, tokenize_examples
from .evaluate import evaluate
from .gradcheck_suite import run_suite, write_report
from .lm_states import load_lm_states, write_lm_states
from .reembedder import GateStats, Variant, export_gate_csv
from .reports import render_gate_figure, render_training_figure
from .toy_lm import ToyLm, ToyLmConfig, precompute_states, train_toy_lm
from .training import evaluate_model, load_model_for_eval, train

_CONFIG_FLAGS = [
    ("--variant", "variant", str, "model variant: tr | tr-mlp | tr-lm-emb | tr-lm-l1 | tr-lm-l2"),
    ("--train-file", "train_file", str, "SQuAD-format training JSON"),
    ("--dev-file", "dev_file", str, "SQuAD-format dev JSON (defaults to train file)"),
    ("--embeddings", "embeddings", str, "GloVe-style embedding text file"),
    ("--lm-states", "lm_states", str, "precomputed LM state file (LM variants)"),
    ("--out-dir", "out_dir", str, "directory for run artifacts"),
    ("--seed", "seed", int, "RNG seed"),
    ("--d-w", "d_w", int, "word embedding dimension"),
    ("--d-c", "d_c", int, "char CNN output dimension"),
    ("--d-h", "d_h", int, "LSTM cells per direction"),
    ("--d-f", "d_f", int, "feed-forward hidden dimension"),
    ("--num-layers", "num_layers", int, "stacked BiLSTM layers"),
    ("--input-dropout", "input_dropout", float, "dropout rate over encoder input"),
    ("--hidden-dropout", "hidden_dropout", float, "dropout rate between layers"),
    ("--word-dropout", "word_dropout", float, "token UNK-replacement rate"),
    ("--ff-dropout", "ff_dropout", float, "feed-forward dropout rate"),
    ("--batch-size", "batch_size", int, "examples per optimizer step"),
    ("--max-span-len", "max_span_len", int, "longest candidate answer span"),
    ("--learning-rate", "learning_rate", float, "Adam learning rate"),
    ("--max-steps", "max_steps", int, "optimizer step budget"),
    ("--eval-every", "eval_every", int, "steps between dev evaluations"),
    ("--patience", "patience", int, "evals without F1 gain before stopping"),
    ("--stop-em", "stop_em", float, "stop once dev EM reaches this percent"),
    ("--char-dim", "char_dim", int, "character embedding dimension"),
    ("--char-widths", "char_widths", str, "filter widths, e.g. '1 2 3 4 5'"),
    ("--char-filters", "char_filters", str, "filters per width, e.g. '20 20 20 20 20'"),
    ("--mlp-dims", "mlp_dims", str, "context MLP layer dims, e.g. '865 865 400'"),
    ("--adam-beta1", "adam_beta1", float, "Adam first-moment decay"),
    ("--adam-beta2", "adam_beta2", float, "Adam second-moment decay"),
    ("--adam-eps", "adam_eps", float, "Adam denominator epsilon"),
    ("--min-count", "min_count", int, "vocabulary frequency cutoff"),
    ("--variational-dropout", "variational_dropout", str,
     "true/false: one dropout mask per sequence"),
    ("--reembed-bias", "reembed_bias", str, "true/false: bias terms in the gate"),
    ("--align-on-raw-embeddings", "align_on_raw_embeddings", str,
     "true/false: alignment attention reads raw word vectors"),
]


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file merged under flags")
    for flag, dest, ftype, help_text in _CONFIG_FLAGS:
        parser.add_argument(flag, dest=dest, type=ftype, default=None, help=help_text)


def _config_from_args(args: argparse.Namespace) -> RunConfig:
    overrides = {dest: getattr(args, dest) for _, dest, _, _ in _CONFIG_FLAGS}
    return load_config(args.config, overrides=overrides)


def _cmd_train(args) -> int:
    config = _config_from_args(args)
    result = train(config, log=lambda rec: print(json.dumps(rec)))
    render_training_figure(result.out_dir / "train_log.jsonl")
    print(f"done: {result.steps} steps, best dev EM {result.best_em} / "
          f"F1 {result.best_f1} at step {result.best_step} "
          f"({result.seconds:.1f}s); artifacts in {result.out_dir}")
    return 0


def _cmd_eval(args) -> int:
    model, config, _ = load_model_for_eval(args.checkpoint)
    golds = parse_squad_json(args.gold_file)
    tokenized, skipped = tokenize_examples(golds)
    encoded = encode_examples(tokenized, model.vocab)
    _, _, predictions = evaluate_model(model, encoded)
    out_dir = Path(args.out_dir or Path(args.checkpoint).parent)
    out_dir.mkdir(parents=True, exist_ok=True)
    pred_path = out_dir / "predictions.json"
    pred_path.write_text(json.dumps(predictions, indent=1))
    result = evaluate(predictions, golds, warn=lambda m: print(f"warning: {m}", file=sys.stderr))
    report = {"em": result.em, "f1": result.f1, "total": result.total,
              "missing": result.missing, "skipped_alignment": len(skipped),
              "config": config.to_dict(), "per_question": result.per_question}
    report_path = out_dir / "eval_report.json"
    report_path.write_text(json.dumps(report, indent=1))
    print(f"EM {result.em}  F1 {result.f1}  ({result.total} questions, "
          f"{result.missing} missing) -> {report_path}")
    return 0


def _cmd_gates(args) -> int:
    model, config, vocab = load_model_for_eval(args.checkpoint)
    Variant(config.variant)  # all variants gate; reject unknown tags early
    golds = parse_squad_json(args.data_file)
    tokenized, _ = tokenize_examples(golds)
    encoded = encode_examples(tokenized, vocab)
    stats = GateStats()
    for ex in encoded:
        result = model.forward(ex, "eval", collect_gates=True)
        stats.record(result.question_gates, ex.question_ids)
        stats.record(result.passage_gates, ex.passage_ids)
    out_csv = Path(args.out_csv)
    out_csv.parent.mkdir(parents=True, exist_ok=True)
    export_gate_csv(stats, vocab, out_csv, split=Path(args.data_file).stem,
                    config_json=config.to_json())
    png, corr = render_gate_figure(out_csv)
    print(f"wrote {out_csv} ({len(stats)} word types) and {png}; "
          f"log-frequency/gate correlation r={corr:.4f}")
    return 0


def _cmd_gradcheck(args) -> int:
    ok, rows = run_suite(seed=args.seed or 0, out=print)
    if args.report:
        write_report(rows, args.report)
    print("gradcheck:", "PASS" if ok else "FAIL")
    return 0 if ok else 1


def _cmd_precompute_lm(args) -> int:
    if args.lm_checkpoint and Path(args.lm_checkpoint).with_suffix(".json").exists():
        lm = ToyLm.load(args.lm_checkpoint)
        print(f"loaded toy LM from {args.lm_checkpoint}")
    elif args.corpus:
        lm_config = ToyLmConfig(epochs=args.epochs, seed=args.seed or 0)
        lm = train_toy_lm(args.corpus, lm_config, log=print)
        if args.lm_checkpoint:
            lm.save(args.lm_checkpoint)
            print(f"saved toy LM to {args.lm_checkpoint}")
    else:
        print("error: need --corpus to train a toy LM or --lm-checkpoint to load one",
              file=sys.stderr)
        return 2
    examples = parse_squad_json(args.data_file)
    tokenized, skipped = tokenize_examples(examples)
    if skipped:
        print(f"warning: {len(skipped)} examples skipped during tokenization",
              file=sys.stderr)
    records = precompute_states(lm, tokenized)
    write_lm_states(records, args.out)
    store = load_lm_states(args.out)
    print(f"wrote {len(records)} records ({store.payload_bytes()} payload bytes, "
          f"layer dims {store.dims}) to {args.out}")
    return 0


def _cmd_compare_variants(args) -> int:
    """Train TR and TR(MLP) across seeds and report the dev-F1 ordering."""
    base = _config_from_args(args)
    seeds = [int(s) for s in args.seeds.split(",")]
    rows = []
    for seed in seeds:
        scores = {}
        for variant in ("tr", "tr-mlp"):
            cfg_kwargs = base.to_dict()
            cfg_kwargs.update(variant=variant, seed=seed,
                              out_dir=str(Path(base.out_dir) / f"{variant}-seed{seed}"))
            cfg = RunConfig(**{k: tuple(v) if isinstance(v, list) else v
                               for k, v in cfg_kwargs.items()})
            result = train(cfg)
            scores[variant] = result.best_f1
            print(f"seed {seed} {variant}: best dev F1 {result.best_f1}")
        rows.append({"seed": seed, "tr_f1": scores["tr"], "tr_mlp_f1": scores["tr-mlp"],
                     "difference": round(scores["tr"] - scores["tr-mlp"], 2)})
    mean_diff = sum(r["difference"] for r in rows) / len(rows)
    report = {"runs": rows, "mean_f1_difference_tr_minus_mlp": round(mean_diff, 2)}
    out = Path(base.out_dir) / "variant_comparison.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(report, indent=1))
    print(f"mean dev F1 difference (tr - tr-mlp) over {len(seeds)} seeds: "
          f"{report['mean_f1_difference_tr_minus_mlp']} -> {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="reembedqa",
        description="Extractive QA with gated contextual token re-embedding.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a model, keeping the best-dev checkpoint")
    _add_config_flags(p_train)
    p_train.set_defaults(func=_cmd_train)

    p_eval = sub.add_parser("eval", help="write predictions for a SQuAD file and score them")
    p_eval.add_argument("checkpoint", help="model_*.ckpt from a training run")
    p_eval.add_argument("gold_file", help="SQuAD-format JSON to evaluate on")
    p_eval.add_argument("--out-dir", default=None, help="where to write predictions/report")
    p_eval.set_defaults(func=_cmd_eval)

    p_gates = sub.add_parser("gates", help="export per-word-type gate activations")
    p_gates.add_argument("checkpoint")
    p_gates.add_argument("data_file", help="SQuAD-format JSON to pool gates over")
    p_gates.add_argument("out_csv")
    p_gates.set_defaults(func=_cmd_gates)

    p_grad = sub.add_parser("gradcheck", help="finite-difference check of every operation")
    p_grad.add_argument("--seed", type=int, default=0)
    p_grad.add_argument("--report", default=None, help="also write a JSON report here")
    p_grad.set_defaults(func=_cmd_gradcheck)

    p_pre = sub.add_parser("precompute-lm", help="write LM states for a data file")
    p_pre.add_argument("data_file", help="SQuAD-format JSON to cover")
    p_pre.add_argument("out", help="output LM state file")
    p_pre.add_argument("--corpus", default=None, help="text corpus to train the toy LM on")
    p_pre.add_argument("--lm-checkpoint", default=None,
                       help="toy LM checkpoint prefix to load or save")
    p_pre.add_argument("--epochs", type=int, default=20)
    p_pre.add_argument("--seed", type=int, default=0)
    p_pre.set_defaults(func=_cmd_precompute_lm)

    p_cmp = sub.add_parser("compare-variants",
                           help="train tr and tr-mlp over seeds; report dev F1 difference")
    _add_config_flags(p_cmp)
    p_cmp.add_argument("--seeds", default="0,1,2", help="comma-separated seed list")
    p_cmp.set_defaults(func=_cmd_compare_variants)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
