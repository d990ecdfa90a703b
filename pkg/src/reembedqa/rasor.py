"""Span-extraction base model: question summaries, alignment attention,
augmented passage encoding, span enumeration and scoring, and the loss.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .encoders import BiLstmStack, bilstm_forward
from .tensor import (Tensor, bias_add, concat, dropout, gather_rows, log_softmax,
                     matmul, neg, pick, relu, reshape, softmax, tile_rows, transpose)


class SpanIndex(NamedTuple):
    """Inclusive token span, 0-based."""

    l: int
    r: int

    @property
    def length(self) -> int:
        return self.r - self.l + 1


@dataclass
class Ff:
    """Single hidden layer feed-forward net: relu(x @ w + b), width d_f."""

    w: Tensor
    b: Tensor

    def __call__(self, x: Tensor, mode: str, rng, rate: float) -> Tensor:
        h = relu(bias_add(matmul(x, self.w), self.b))
        return dropout(h, rate, mode, rng)

    def named(self, prefix: str) -> dict[str, Tensor]:
        return {f"{prefix}.w": self.w, f"{prefix}.b": self.b}


def init_ff(input_dim: int, d_f: int, rng: np.random.Generator, dtype=np.float32) -> Ff:
    bound = 1.0 / np.sqrt(input_dim)
    return Ff(w=Tensor(rng.uniform(-bound, bound, (input_dim, d_f)).astype(dtype),
                       requires_grad=True),
              b=Tensor(np.zeros(d_f, dtype=dtype), requires_grad=True))


@dataclass
class RasorParams:
    question_bilstm: BiLstmStack
    att_ff: Ff
    w_q: Tensor                 # (d_f, 1)
    align_ff_q: Ff
    align_ff_p: Ff
    passage_bilstm: BiLstmStack
    pred_ff: Ff
    w_c: Tensor                 # (d_f, 1)
    ff_dropout: float = 0.2

    def named(self, prefix: str) -> dict[str, Tensor]:
        out = self.question_bilstm.named(f"{prefix}.question_bilstm")
        out.update(self.att_ff.named(f"{prefix}.att_ff"))
        out[f"{prefix}.w_q"] = self.w_q
        out.update(self.align_ff_q.named(f"{prefix}.align_ff_q"))
        out.update(self.align_ff_p.named(f"{prefix}.align_ff_p"))
        out.update(self.passage_bilstm.named(f"{prefix}.passage_bilstm"))
        out.update(self.pred_ff.named(f"{prefix}.pred_ff"))
        out[f"{prefix}.w_c"] = self.w_c
        return out


def question_indep(question_reps: Tensor, params: RasorParams, mode: str,
                   rng=None) -> tuple[Tensor, Tensor]:
    """Attention-pooled question summary; returns (q_indep (1, 2*d_h), v)."""
    m = question_reps.shape[0]
    if m < 1:
        raise ValueError("question_indep: empty question")
    v = bilstm_forward(question_reps, params.question_bilstm, mode, rng)[-1]
    logits = matmul(params.att_ff(v, mode, rng, params.ff_dropout), params.w_q)  # (m, 1)
    alpha = softmax(reshape(logits, (1, m)), axis=1)
    return matmul(alpha, v), v


def question_aligned(passage_reps: Tensor, question_reps: Tensor, params: RasorParams,
                     mode: str, rng=None) -> Tensor:
    """Per-passage-position attention over question representations."""
    if passage_reps.shape[0] < 1 or question_reps.shape[0] < 1:
        raise ValueError("question_aligned: empty input sequence")
    fp = params.align_ff_p(passage_reps, mode, rng, params.ff_dropout)   # (n, d_f)
    fq = params.align_ff_q(question_reps, mode, rng, params.ff_dropout)  # (m, d_f)
    logits = matmul(fp, transpose(fq))                                   # (n, m)
    beta = softmax(logits, axis=1)
    return matmul(beta, question_reps)


def encode_passage(passage_reps: Tensor, q_aligned: Tensor, q_indep: Tensor,
                   params: RasorParams, mode: str, rng=None) -> Tensor:
    """BiLSTM over [p_i; q_i_aligned; q_indep] rows -> (n, 2*d_h)."""
    n = passage_reps.shape[0]
    if q_aligned.shape[0] != n:
        raise ValueError(
            f"encode_passage: passage has {n} rows, aligned question {q_aligned.shape[0]}")
    augmented = concat([passage_reps, q_aligned, tile_rows(q_indep, n)], axis=1)
    return bilstm_forward(augmented, params.passage_bilstm, mode, rng)[-1]


def enumerate_spans(n: int, max_len: int = 30) -> list[SpanIndex]:
    """All candidate spans of length <= max_len, l-major then r."""
    if n < 1:
        raise ValueError(f"enumerate_spans: sequence length must be >= 1, got {n}")
    if max_len < 1:
        raise ValueError(f"enumerate_spans: max_len must be >= 1, got {max_len}")
    return [SpanIndex(l, r)
            for l in range(n)
            for r in range(l, min(l + max_len, n))]


@dataclass
class SpanDistribution:
    """Candidate spans with normalized probabilities (and graph logits)."""

    spans: list[SpanIndex]
    logits: Tensor

    @property
    def probabilities(self) -> np.ndarray:
        x = self.logits.data
        e = np.exp(x - x.max())
        return e / e.sum()

    def index_of(self, span: SpanIndex) -> int | None:
        try:
            return self.spans.index(SpanIndex(*span))
        except ValueError:
            return None


def score_spans(h: Tensor, spans: list[SpanIndex], params: RasorParams, mode: str,
                rng=None) -> SpanDistribution:
    """Logit per span from [h_l; h_r], jointly softmax-normalized."""
    n = h.shape[0]
    ls = np.asarray([s.l for s in spans], dtype=np.intp)
    rs = np.asarray([s.r for s in spans], dtype=np.intp)
    if len(spans) == 0:
        raise ValueError("score_spans: no candidate spans")
    if ls.min() < 0 or rs.max() >= n:
        raise IndexError(f"score_spans: span index out of range for {n} positions")
    reps = concat([gather_rows(h, ls), gather_rows(h, rs)], axis=1)   # (K, 4*d_h)
    hidden = params.pred_ff(reps, mode, rng, params.ff_dropout)
    logits = reshape(matmul(hidden, params.w_c), (len(spans),))
    return SpanDistribution(spans=spans, logits=logits)


class GoldSpanError(ValueError):
    """The gold answer span is not among the scored candidates."""


def span_loss(dist: SpanDistribution, gold_span: SpanIndex) -> Tensor:
    """Negative log probability of the gold span."""
    idx = dist.index_of(gold_span)
    if idx is None:
        raise GoldSpanError(
            f"gold span {tuple(gold_span)} (length {SpanIndex(*gold_span).length}) "
            f"is not a candidate")
    return neg(pick(log_softmax(dist.logits), idx))


def predict(dist: SpanDistribution) -> SpanIndex:
    """Most probable span; ties resolve to the (l, r)-lexicographically first."""
    return dist.spans[int(np.argmax(dist.probabilities))]
