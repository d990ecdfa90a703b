"""A small character-input LSTM language model.

Generates the fixed per-token states consumed by the LM re-embedding
variants: a character-CNN word representation (the "emb" layer, a pure
function of the word-type), then two stacked forward LSTM layers whose
hidden states pass through linear bottleneck projections ("l1" and
"l2"). The topmost projection feeds a softmax over the next word.

This is a desk-scale stand-in for a large pre-trained LM; it trains in
seconds on the bundled corpus and produces files in the same format a
real precompute would.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .checkpoints import load_checkpoint, restore_into, save_checkpoint
from .data import TokenizedExample, tokenize
from .embedder import CharCnn, Vocabulary
from .encoders import init_lstm_params, lstm_sequence
from .lm_states import KIND_PASSAGE, KIND_QUESTION, LMStateSet
from .optim import Adam
from .tensor import Tensor, bias_add, log_softmax, matmul, mul, neg, scale, sum_all


@dataclass
class ToyLmConfig:
    char_dim: int = 12
    char_widths: tuple[int, ...] = (1, 2, 3)
    char_filters: tuple[int, ...] = (8, 8, 8)
    hidden: int = 32
    proj_dim: int = 16
    learning_rate: float = 3e-3
    epochs: int = 20
    seed: int = 0

    @property
    def emb_dim(self) -> int:
        return sum(self.char_filters)

    def to_dict(self):
        d = dict(self.__dict__)
        d["char_widths"] = list(self.char_widths)
        d["char_filters"] = list(self.char_filters)
        return d


class ToyLm:
    def __init__(self, vocab: Vocabulary, chars: list[str], config: ToyLmConfig,
                 rng: np.random.Generator):
        self.vocab = vocab
        self.chars = list(chars)
        self.config = config
        self.char_cnn = CharCnn(self.chars, config.char_dim,
                                list(zip(config.char_widths, config.char_filters)), rng)
        self.lstm1 = init_lstm_params(config.emb_dim, config.hidden, rng)
        self.lstm2 = init_lstm_params(config.proj_dim, config.hidden, rng)

        def linear(rows, cols):
            bound = 1.0 / np.sqrt(rows)
            return (Tensor(rng.uniform(-bound, bound, (rows, cols)).astype(np.float32),
                           requires_grad=True),
                    Tensor(np.zeros(cols, dtype=np.float32), requires_grad=True))

        self.proj1 = linear(config.hidden, config.proj_dim)
        self.proj2 = linear(config.hidden, config.proj_dim)
        self.out = linear(config.proj_dim, len(vocab))

    def named_parameters(self) -> dict[str, Tensor]:
        out = self.char_cnn.named("char_cnn")
        out.update(self.lstm1.named("lstm1"))
        out.update(self.lstm2.named("lstm2"))
        for name, (w, b) in (("proj1", self.proj1), ("proj2", self.proj2),
                             ("out", self.out)):
            out[f"{name}.w"] = w
            out[f"{name}.b"] = b
        return out

    def _states(self, tokens: list[str]) -> tuple[Tensor, Tensor, Tensor]:
        emb = self.char_cnn.forward(tokens)
        h1 = lstm_sequence(emb, self.lstm1)
        l1 = bias_add(matmul(h1, self.proj1[0]), self.proj1[1])
        h2 = lstm_sequence(l1, self.lstm2)
        l2 = bias_add(matmul(h2, self.proj2[0]), self.proj2[1])
        return emb, l1, l2

    def states(self, tokens: list[str]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        emb, l1, l2 = self._states(tokens)
        return (emb.data.astype(np.float32), l1.data.astype(np.float32),
                l2.data.astype(np.float32))

    def sequence_loss(self, tokens: list[str]) -> Tensor:
        """Mean next-word negative log likelihood over one sentence."""
        if len(tokens) < 2:
            raise ValueError("sequence_loss: need at least two tokens")
        _, _, l2 = self._states(tokens)
        from .tensor import slice_rows
        logits = bias_add(matmul(slice_rows(l2, 0, len(tokens) - 1), self.out[0]),
                          self.out[1])
        targets = np.asarray([self.vocab.id_of(t) for t in tokens[1:]], dtype=np.intp)
        onehot = np.zeros(logits.shape, dtype=logits.data.dtype)
        onehot[np.arange(len(targets)), targets] = 1.0
        picked = mul(log_softmax(logits, axis=1), Tensor(onehot))
        return neg(scale(sum_all(picked), 1.0 / len(targets)))

    def fit(self, sentences: list[list[str]], log=None) -> list[float]:
        """Train on tokenized sentences; returns mean loss per epoch."""
        usable = [s for s in sentences if len(s) >= 2]
        if not usable:
            raise ValueError("fit: no sentence has two or more tokens")
        adam = Adam(self.named_parameters(), lr=self.config.learning_rate)
        order_rng = np.random.default_rng(self.config.seed)
        history = []
        for epoch in range(self.config.epochs):
            order = order_rng.permutation(len(usable))
            total = 0.0
            for idx in order:
                adam.zero_grad()
                loss = self.sequence_loss(usable[idx])
                loss.backward()
                adam.step()
                total += loss.item()
            mean = total / len(usable)
            history.append(mean)
            if log is not None:
                log(f"toy-lm epoch {epoch + 1}/{self.config.epochs} loss {mean:.4f}")
        return history

    # ------------------------------------------------------------------

    def save(self, path_prefix) -> None:
        prefix = Path(path_prefix)
        save_checkpoint(prefix.with_suffix(".ckpt"), self.named_parameters())
        meta = {
            "config": self.config.to_dict(),
            "chars": self.chars,
            "tokens": self.vocab.tokens(),
            "counts": [self.vocab.frequency_of(i) for i in range(len(self.vocab))],
        }
        prefix.with_suffix(".json").write_text(json.dumps(meta))

    @classmethod
    def load(cls, path_prefix) -> "ToyLm":
        prefix = Path(path_prefix)
        meta = json.loads(prefix.with_suffix(".json").read_text())
        cfg_raw = meta["config"]
        cfg = ToyLmConfig(**{k: tuple(v) if isinstance(v, list) else v
                             for k, v in cfg_raw.items()})
        vocab = Vocabulary.__new__(Vocabulary)
        vocab._tokens = list(meta["tokens"])
        vocab._counts = list(meta["counts"])
        vocab._ids = {t: i for i, t in enumerate(vocab._tokens)}
        lm = cls(vocab, meta["chars"], cfg, np.random.default_rng(cfg.seed))
        restore_into(lm.named_parameters(), load_checkpoint(prefix.with_suffix(".ckpt")))
        return lm


def read_corpus(path) -> list[list[str]]:
    """One sentence per line, run through the package tokenizer."""
    sentences = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            toks = [t.text for t in tokenize(line.strip())]
            if toks:
                sentences.append(toks)
    return sentences


def train_toy_lm(corpus_path, config: ToyLmConfig | None = None, log=None) -> ToyLm:
    config = config or ToyLmConfig()
    sentences = read_corpus(corpus_path)
    counts: dict[str, int] = {}
    for sent in sentences:
        for tok in sent:
            counts[tok] = counts.get(tok, 0) + 1
    vocab = Vocabulary(counts)
    chars = sorted({ch for tok in vocab.tokens() for ch in tok})
    lm = ToyLm(vocab, chars, config, np.random.default_rng(config.seed))
    lm.fit(sentences, log=log)
    return lm


def precompute_states(lm: ToyLm, examples: list[TokenizedExample]) -> list[LMStateSet]:
    """LM states for every question and passage, keyed by question id."""
    records = []
    for ex in examples:
        for kind, tokens in ((KIND_QUESTION, ex.question_tokens),
                             (KIND_PASSAGE, ex.passage_tokens)):
            emb, l1, l2 = lm.states([t.text for t in tokens])
            records.append(LMStateSet(example_id=ex.qid, kind=kind,
                                      emb=emb, l1=l1, l2=l2))
    return records
