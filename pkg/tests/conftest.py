import json

import numpy as np
import pytest

from reembedqa import toy_corpus_path, toy_squad_path
from reembedqa.config import RunConfig
from reembedqa.data import (build_vocab, encode_examples, parse_squad_json,
                            tokenize_examples)
from reembedqa.embedder import random_embedding_table
from reembedqa.model import ReaderModel


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture(scope="session")
def toy_squad():
    return str(toy_squad_path())


@pytest.fixture(scope="session")
def toy_corpus():
    return str(toy_corpus_path())


MICRO_SQUAD = {
    "version": "1.1",
    "data": [{
        "title": "micro",
        "paragraphs": [
            {
                "context": "The small dog slept under the oak tree near the gate.",
                "qas": [
                    {"id": "m1", "question": "What slept under the tree?",
                     "answers": [{"text": "small dog", "answer_start": 4}]},
                    {"id": "m2", "question": "Where did the dog sleep?",
                     "answers": [{"text": "under the oak tree", "answer_start": 14}]},
                ],
            },
            {
                "context": "A red boat crossed the lake at dawn in heavy fog.",
                "qas": [
                    {"id": "m3", "question": "What crossed the lake?",
                     "answers": [{"text": "red boat", "answer_start": 2}]},
                    {"id": "m4", "question": "When did the boat cross?",
                     "answers": [{"text": "dawn", "answer_start": 31}]},
                ],
            },
        ],
    }],
}


@pytest.fixture(scope="session")
def micro_squad_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "micro_squad.json"
    path.write_text(json.dumps(MICRO_SQUAD))
    return str(path)


def micro_config(**overrides) -> RunConfig:
    """Tiny dimensions so full-model tests run in milliseconds."""
    base = dict(
        variant="tr", d_w=8, d_c=6, char_dim=4, char_widths=(1, 2, 3),
        char_filters=(2, 2, 2), num_layers=1, d_h=4, d_f=3, mlp_dims=(5, 8),
        input_dropout=0.0, hidden_dropout=0.0, word_dropout=0.0, ff_dropout=0.0,
        batch_size=4, max_span_len=10, eval_every=5, max_steps=10,
        seed=0)
    base.update(overrides)
    return RunConfig(**base)


def build_micro_model(squad_path, config=None, dtype=np.float32, seed=0):
    """Model plus encoded examples over a small SQuAD file."""
    config = config or micro_config()
    tokenized, _ = tokenize_examples(parse_squad_json(squad_path))
    vocab = build_vocab(tokenized)
    encoded = encode_examples(tokenized, vocab)
    rng = np.random.default_rng(seed)
    table = random_embedding_table(vocab, config.d_w, rng)
    if dtype is not np.float32:
        table.vectors = table.vectors.astype(dtype)
    model = ReaderModel(config, vocab, table, rng, dtype=dtype)
    return model, encoded, vocab


@pytest.fixture
def micro_model(micro_squad_file):
    return build_micro_model(micro_squad_file)
