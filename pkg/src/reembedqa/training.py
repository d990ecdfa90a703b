"""Training driver: batching, Adam updates, periodic evaluation, artifacts.

Every run writes into ``config.out_dir``:

    config.json        effective configuration echo
    vocab.tsv          token / id / frequency dump
    train_log.jsonl    config record, then step losses and eval scores
    model_best.ckpt    parameters at the best dev F1 seen
    model_final.ckpt   parameters when training stopped
    meta.json          config echo + vocabulary fingerprint + best step
    skipped.jsonl      alignment failures and over-long gold spans
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .checkpoints import load_checkpoint, restore_into, save_checkpoint
from .config import ConfigError, RunConfig
from .data import (EncodedExample, SkipRecord, batches, build_vocab,
                   encode_examples, parse_squad_json, tokenize_examples)
from .embedder import (Vocabulary, load_pretrained_embeddings,
                       random_embedding_table)
from .evaluate import exact_match, f1
from .lm_states import load_lm_states
from .model import ReaderModel
from .optim import Adam
from .rasor import SpanIndex


class CheckpointMismatch(ValueError):
    """Checkpoint and vocabulary (or config) disagree."""


def _rngs(config: RunConfig) -> tuple[np.random.Generator, np.random.Generator,
                                      np.random.Generator]:
    """Deterministic child generators: model init, embeddings, training."""
    init_ss, emb_ss, train_ss = np.random.SeedSequence(config.seed).spawn(3)
    return (np.random.default_rng(init_ss), np.random.default_rng(emb_ss),
            np.random.default_rng(train_ss))


def build_model(config: RunConfig, vocab: Vocabulary, dtype=np.float32) -> ReaderModel:
    """Construct the reader with seed-reproducible initialization.

    The frozen word table is loaded from ``config.embeddings`` when given,
    otherwise drawn from the embedding child generator; either way it is
    reconstructable from the config alone, so checkpoints only carry
    trainable parameters.
    """
    init_rng, emb_rng, _ = _rngs(config)
    if config.embeddings:
        table = load_pretrained_embeddings(config.embeddings, vocab, config.d_w)
    else:
        table = random_embedding_table(vocab, config.d_w, emb_rng)
        if dtype is not np.float32:
            table.vectors = table.vectors.astype(dtype)
    model = ReaderModel(config, vocab, table, init_rng, dtype=dtype)
    if model.variant.uses_lm:
        model.attach_lm_store(load_lm_states(config.lm_states))
    return model


def evaluate_model(model: ReaderModel, examples: list[EncodedExample]
                   ) -> tuple[float, float, dict[str, str]]:
    """Eval-mode predictions with dataset EM/F1 in percent."""
    predictions: dict[str, str] = {}
    em_sum = 0.0
    f1_sum = 0.0
    for ex in examples:
        answer = model.predict_answer(ex)
        predictions[ex.qid] = answer
        golds = ex.tokenized.answer_texts
        em_sum += exact_match(answer, golds)
        f1_sum += f1(answer, golds)
    n = max(len(examples), 1)
    return 100.0 * em_sum / n, 100.0 * f1_sum / n, predictions


@dataclass
class TrainResult:
    out_dir: Path
    steps: int
    best_step: int
    best_em: float
    best_f1: float
    final_em: float
    final_f1: float
    skipped_alignment: int
    skipped_long_gold: int
    seconds: float

    @property
    def best_checkpoint(self) -> Path:
        return self.out_dir / "model_best.ckpt"

    @property
    def final_checkpoint(self) -> Path:
        return self.out_dir / "model_final.ckpt"


def _load_training_data(config: RunConfig, out: Path):
    raw = parse_squad_json(config.train_file)
    tokenized, skipped = tokenize_examples(raw)
    if not tokenized:
        raise ConfigError(f"{config.train_file}: no trainable examples after alignment")
    vocab = build_vocab(tokenized, config.min_count)
    vocab.save(out / "vocab.tsv")
    encoded = encode_examples(tokenized, vocab)
    trainable = []
    for ex in encoded:
        span = SpanIndex(*ex.tokenized.gold_spans[0])
        if span.length > config.max_span_len:
            skipped.append(SkipRecord(
                qid=ex.qid,
                reason=f"gold span length {span.length} exceeds {config.max_span_len}"))
            continue
        trainable.append(ex)
    return vocab, encoded, trainable, skipped


def train(config: RunConfig, log=None) -> TrainResult:
    """Run the full training loop; returns artifact paths and final scores."""
    config.validate()
    if config.train_file is None:
        raise ConfigError("train: config.train_file is required")
    started = time.time()
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(config.to_json())

    vocab, encoded, trainable, skipped = _load_training_data(config, out)
    with open(out / "skipped.jsonl", "w", encoding="utf-8") as f:
        for rec in skipped:
            f.write(json.dumps({"id": rec.qid, "reason": rec.reason}) + "\n")
    n_align_skips = sum(1 for r in skipped if "gold span length" not in r.reason)
    n_long_skips = len(skipped) - n_align_skips

    if config.dev_file and config.dev_file != config.train_file:
        dev_tok, _ = tokenize_examples(parse_squad_json(config.dev_file))
        dev = encode_examples(dev_tok, vocab)
    else:
        dev = encoded

    model = build_model(config, vocab)
    params = model.named_parameters()
    adam = Adam(params, lr=config.learning_rate, beta1=config.adam_beta1,
                beta2=config.adam_beta2, eps=config.adam_eps)
    _, _, train_rng = _rngs(config)

    log_path = out / "train_log.jsonl"
    log_f = open(log_path, "w", encoding="utf-8")

    def emit(record: dict):
        log_f.write(json.dumps(record) + "\n")
        log_f.flush()
        if log is not None:
            log(record)

    emit({"config": config.to_dict(), "vocab_size": len(vocab),
          "train_examples": len(trainable), "skipped": len(skipped)})

    best_f1 = -1.0
    best_em = 0.0
    best_step = 0
    last_em, last_f1 = 0.0, 0.0
    evals_without_gain = 0
    step = 0
    epoch = 0
    stop = False

    def run_eval():
        nonlocal best_f1, best_em, best_step, evals_without_gain, last_em, last_f1, stop
        em, f1_score, _ = evaluate_model(model, dev)
        last_em, last_f1 = em, f1_score
        emit({"step": step, "em": round(em, 2), "f1": round(f1_score, 2)})
        if f1_score > best_f1:
            best_f1, best_em, best_step = f1_score, em, step
            save_checkpoint(out / "model_best.ckpt", params)
            evals_without_gain = 0
        else:
            evals_without_gain += 1
        if config.stop_em is not None and em >= config.stop_em:
            stop = True
        if evals_without_gain > config.patience:
            stop = True

    while not stop and step < config.max_steps:
        epoch += 1
        shuffle_seed = config.seed * 100003 + epoch
        for batch in batches(trainable, config.batch_size, shuffle_seed=shuffle_seed):
            step += 1
            adam.zero_grad()
            total = 0.0
            for ex in batch.examples:
                loss = model.loss(ex, "train", train_rng)
                loss.backward()
                total += loss.item()
            adam.step(grad_scale=len(batch))
            emit({"step": step, "loss": round(total / len(batch), 6)})
            if step % config.eval_every == 0:
                run_eval()
            if stop or step >= config.max_steps:
                break

    if step % config.eval_every != 0 or step == 0:
        run_eval()
    save_checkpoint(out / "model_final.ckpt", params)
    meta = {"config": config.to_dict(), "vocab_fingerprint": vocab.fingerprint(),
            "vocab_size": len(vocab), "best_step": best_step,
            "best_f1": round(best_f1, 2), "steps": step}
    (out / "meta.json").write_text(json.dumps(meta))
    log_f.close()
    return TrainResult(out_dir=out, steps=step, best_step=best_step,
                       best_em=round(best_em, 2), best_f1=round(best_f1, 2),
                       final_em=round(last_em, 2), final_f1=round(last_f1, 2),
                       skipped_alignment=n_align_skips, skipped_long_gold=n_long_skips,
                       seconds=time.time() - started)


def load_model_for_eval(checkpoint_path) -> tuple[ReaderModel, RunConfig, Vocabulary]:
    """Rebuild the model next to a checkpoint and restore its parameters.

    Sidecar files (meta.json, vocab.tsv) must sit in the checkpoint's
    directory; a changed vocabulary is rejected before any weights load.
    """
    ckpt = Path(checkpoint_path)
    run_dir = ckpt.parent
    meta_path = run_dir / "meta.json"
    if not meta_path.exists():
        raise CheckpointMismatch(f"{run_dir}: missing meta.json next to checkpoint")
    meta = json.loads(meta_path.read_text())
    config = RunConfig(**{k: tuple(v) if isinstance(v, list) else v
                          for k, v in meta["config"].items()})
    vocab = Vocabulary.load(run_dir / "vocab.tsv")
    if vocab.fingerprint() != meta["vocab_fingerprint"]:
        raise CheckpointMismatch(
            f"{run_dir}: vocab.tsv does not match the vocabulary this "
            "checkpoint was trained with")
    model = build_model(config, vocab)
    restore_into(model.named_parameters(), load_checkpoint(ckpt))
    return model, config, vocab
