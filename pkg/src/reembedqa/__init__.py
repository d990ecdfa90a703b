"""Extractive reading comprehension with gated contextual token re-embedding.

A span-extraction reader whose word inputs are highway mixes of fixed
pre-trained embeddings and contextual representations (BiLSTM, MLP, or
BiLSTM plus fixed language-model states), built on a scratch reverse-mode
autodiff core.
"""

from importlib import resources

from .config import RunConfig, load_config
from .tensor import Tensor, grad_check

__version__ = "0.1.0"

__all__ = ["RunConfig", "Tensor", "grad_check", "load_config",
           "toy_squad_path", "toy_corpus_path"]


def toy_squad_path():
    """Path to the bundled 32-example SQuAD-format fixture."""
    return resources.files("reembedqa").joinpath("data/squad_toy.json")


def toy_corpus_path():
    """Path to the bundled toy language-model corpus."""
    return resources.files("reembedqa").joinpath("data/lm_corpus.txt")
