"""The full reader: token embedding, gated re-embedding, span prediction.

Question and passage are processed one example at a time, each sequence
re-embedded independently, so nothing from the passage can leak into the
question-side representations (and vice versa) before the attention
stages of the span model.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import rasor
from .config import RunConfig
from .data import EncodedExample
from .embedder import (CharCnn, Vocabulary, WordEmbeddingTable, embed_sequence,
                       word_dropout)
from .encoders import init_bilstm, init_mlp
from .lm_states import LMStateStore, join
from .rasor import RasorParams, SpanDistribution, SpanIndex, init_ff
from .reembedder import Reembedder, Variant, init_reembedder_params
from .tensor import Tensor


@dataclass
class ForwardResult:
    distribution: SpanDistribution
    question_gates: np.ndarray | None = None
    passage_gates: np.ndarray | None = None


class ReaderModel:
    def __init__(self, config: RunConfig, vocab: Vocabulary,
                 word_table: WordEmbeddingTable, rng: np.random.Generator,
                 dtype=np.float32):
        config.validate()
        if word_table.dim != config.d_w:
            raise ValueError(
                f"embedding table dim {word_table.dim} != configured d_w {config.d_w}")
        self.config = config
        self.vocab = vocab
        self.word_table = word_table
        self.variant = Variant(config.variant)
        self.dtype = dtype

        chars = sorted({ch for tok in vocab.tokens() for ch in tok})
        self.char_cnn = CharCnn(chars, config.char_dim,
                                list(zip(config.char_widths, config.char_filters)),
                                rng, dtype=dtype)

        x_dim = config.d_w + config.d_c
        self._lm_dim: int | None = None
        if self.variant == Variant.TR_MLP:
            context_mlp = init_mlp(x_dim, tuple(config.mlp_dims), rng,
                                   dropout_rate=config.ff_dropout, dtype=dtype)
            context_bilstm = None
            u_dim = context_mlp.output_dim
        else:
            context_bilstm = init_bilstm(
                x_dim, config.d_h, config.num_layers, rng,
                input_dropout=config.input_dropout, hidden_dropout=config.hidden_dropout,
                variational=config.variational_dropout, dtype=dtype)
            context_mlp = None
            u_dim = context_bilstm.output_dim
        self._base_u_dim = u_dim
        self.reembedder: Reembedder | None = None
        if not self.variant.uses_lm:
            self._build_reembedder(context_bilstm, context_mlp, u_dim, rng)
        else:
            # LM layer width comes from the state file; finished by attach_lm_store.
            # A child generator keeps deferred init deterministic.
            self._pending_context = (context_bilstm, context_mlp)
            self._deferred_rng = np.random.default_rng(int(rng.integers(0, 2 ** 63 - 1)))

        d_w, d_h, d_f = config.d_w, config.d_h, config.d_f
        self.rasor = RasorParams(
            question_bilstm=init_bilstm(d_w, d_h, config.num_layers, rng,
                                        config.input_dropout, config.hidden_dropout,
                                        config.variational_dropout, dtype),
            att_ff=init_ff(2 * d_h, d_f, rng, dtype),
            w_q=Tensor(rng.uniform(-1 / np.sqrt(d_f), 1 / np.sqrt(d_f), (d_f, 1)).astype(dtype),
                       requires_grad=True),
            align_ff_q=init_ff(d_w, d_f, rng, dtype),
            align_ff_p=init_ff(d_w, d_f, rng, dtype),
            passage_bilstm=init_bilstm(2 * d_w + 2 * d_h, d_h, config.num_layers, rng,
                                       config.input_dropout, config.hidden_dropout,
                                       config.variational_dropout, dtype),
            pred_ff=init_ff(4 * d_h, d_f, rng, dtype),
            w_c=Tensor(rng.uniform(-1 / np.sqrt(d_f), 1 / np.sqrt(d_f), (d_f, 1)).astype(dtype),
                       requires_grad=True),
            ff_dropout=config.ff_dropout)
        self.lm_store: LMStateStore | None = None

    def _build_reembedder(self, context_bilstm, context_mlp, u_dim, rng):
        params = init_reembedder_params(
            self.config.d_w + self.config.d_c, u_dim, self.config.d_w, rng,
            use_bias=self.config.reembed_bias, dtype=self.dtype)
        self.reembedder = Reembedder(variant=self.variant, params=params,
                                     context_bilstm=context_bilstm,
                                     context_mlp=context_mlp)

    def attach_lm_store(self, store: LMStateStore) -> None:
        """Provide LM states; sizes the gate projections on first attach."""
        if not self.variant.uses_lm:
            raise ValueError(f"variant {self.variant.value} does not consume LM states")
        lm_dim = store.layer_dim(self.variant.lm_layer)
        if self.reembedder is None:
            context_bilstm, context_mlp = self._pending_context
            self._build_reembedder(context_bilstm, context_mlp,
                                   self._base_u_dim + lm_dim, self._deferred_rng)
            self._lm_dim = lm_dim
        elif self._lm_dim != lm_dim:
            raise ValueError(
                f"LM layer dim {lm_dim} differs from the dim this model was "
                f"built with ({self._lm_dim})")
        self.lm_store = store

    def named_parameters(self) -> dict[str, Tensor]:
        if self.reembedder is None:
            raise ValueError("model incomplete: attach_lm_store() has not run")
        out = self.char_cnn.named("char_cnn")
        out.update(self.reembedder.named("reembedder"))
        out.update(self.rasor.named("rasor"))
        return out

    # ------------------------------------------------------------------

    def _reembed_sequence(self, ids: np.ndarray, surfaces: list[str], qid: str,
                          kind: str, mode: str, rng, force_gate):
        """Word-dropout, embed, contextualize, and gate one sequence."""
        cfg = self.config
        ids_used, dropped = word_dropout(ids, cfg.word_dropout, rng, mode,
                                         return_mask=True)
        words = ["" if d else w for d, w in zip(dropped, surfaces)]
        x, w = embed_sequence(ids_used, words, self.word_table, self.char_cnn)
        lm_mat = None
        if self.variant.uses_lm:
            if self.lm_store is None:
                raise ValueError("LM variant forward pass without an attached LM store")
            lm_mat = join(self.lm_store, qid, kind, self.variant.lm_layer, len(ids))
            lm_mat = lm_mat.astype(self.dtype, copy=False)
        u = self.reembedder.compute_context(x, mode, rng, lm_mat)
        w_prime, gate = self.reembedder.reembed(x, w, u, force_gate=force_gate)
        return w_prime, w, gate

    def forward(self, ex: EncodedExample, mode: str, rng=None,
                collect_gates: bool = False, force_gate: float | None = None) -> ForwardResult:
        tok = ex.tokenized
        q_surfaces = [t.text for t in tok.question_tokens]
        p_surfaces = [t.text for t in tok.passage_tokens]
        q_prime, q_raw, q_gate = self._reembed_sequence(
            ex.question_ids, q_surfaces, ex.qid, "question", mode, rng, force_gate)
        p_prime, p_raw, p_gate = self._reembed_sequence(
            ex.passage_ids, p_surfaces, ex.qid, "passage", mode, rng, force_gate)

        if self.config.align_on_raw_embeddings:
            p_align_in, q_align_in = p_raw, q_raw
        else:
            p_align_in, q_align_in = p_prime, q_prime

        q_indep, _ = rasor.question_indep(q_prime, self.rasor, mode, rng)
        q_aligned = rasor.question_aligned(p_align_in, q_align_in, self.rasor, mode, rng)
        h = rasor.encode_passage(p_prime, q_aligned, q_indep, self.rasor, mode, rng)
        spans = rasor.enumerate_spans(len(tok.passage_tokens), self.config.max_span_len)
        dist = rasor.score_spans(h, spans, self.rasor, mode, rng)
        return ForwardResult(
            distribution=dist,
            question_gates=q_gate.data.copy() if collect_gates else None,
            passage_gates=p_gate.data.copy() if collect_gates else None)

    def loss(self, ex: EncodedExample, mode: str = "train", rng=None,
             force_gate: float | None = None) -> Tensor:
        """Negative log likelihood of the example's first gold span."""
        result = self.forward(ex, mode, rng, force_gate=force_gate)
        gold = SpanIndex(*ex.tokenized.gold_spans[0])
        return rasor.span_loss(result.distribution, gold)

    def predict_answer(self, ex: EncodedExample) -> str:
        result = self.forward(ex, "eval")
        span = rasor.predict(result.distribution)
        return ex.tokenized.span_text(span.l, span.r)
