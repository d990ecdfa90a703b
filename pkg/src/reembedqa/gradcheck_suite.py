"""Finite-difference verification of every differentiable operation.

Each registered check builds a float64 scalar function over fresh
parameters and compares tape gradients to central differences. The final
checks drive the whole reader loss end to end on a tiny example.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import tensor as T
from .config import RunConfig
from .data import encode_examples, build_vocab, tokenize_examples, SquadExample
from .embedder import CharCnn
from .encoders import (init_bilstm, init_lstm_params, init_mlp, bilstm_forward,
                       lstm_sequence, lstm_step, mlp_forward)
from .model import ReaderModel
from .rasor import (RasorParams, SpanIndex, enumerate_spans, encode_passage,
                    init_ff, question_aligned, question_indep, score_spans,
                    span_loss)
from .reembedder import Variant, init_reembedder_params, Reembedder
from .tensor import Tensor, grad_check

DEFAULT_EPS = 1e-5
DEFAULT_THRESHOLD = 1e-4


@dataclass
class Check:
    name: str
    run: Callable[[int], float]   # seed -> max relative error


def _t(rng, *shape) -> Tensor:
    return Tensor(rng.normal(size=shape), requires_grad=True, dtype=np.float64)


def _unary(op, *shape, post=T.sum_all):
    def run(seed: int) -> float:
        rng = np.random.default_rng(seed)
        x = _t(rng, *shape)
        return grad_check(lambda: post(op(x)), [x], eps=DEFAULT_EPS)
    return run


def _check_matmul(seed):
    rng = np.random.default_rng(seed)
    a, b = _t(rng, 3, 4), _t(rng, 4, 2)
    weights = Tensor(rng.normal(size=(3, 2)), dtype=np.float64)
    return grad_check(lambda: T.sum_all(T.mul(T.matmul(a, b), weights)), [a, b])


def _check_binary(op):
    def run(seed):
        rng = np.random.default_rng(seed)
        a, b = _t(rng, 3, 4), _t(rng, 3, 4)
        w = Tensor(rng.normal(size=(3, 4)), dtype=np.float64)
        return grad_check(lambda: T.sum_all(T.mul(op(a, b), w)), [a, b])
    return run


def _check_bias_add(seed):
    rng = np.random.default_rng(seed)
    a, b = _t(rng, 4, 3), _t(rng, 3)
    w = Tensor(rng.normal(size=(4, 3)), dtype=np.float64)
    return grad_check(lambda: T.sum_all(T.mul(T.bias_add(a, b), w)), [a, b])


def _check_softmax(axis_op):
    def run(seed):
        rng = np.random.default_rng(seed)
        x = _t(rng, 2, 5)
        w = Tensor(rng.normal(size=(2, 5)), dtype=np.float64)
        return grad_check(lambda: T.sum_all(T.mul(axis_op(x, axis=1), w)), [x])
    return run


def _check_pick(seed):
    rng = np.random.default_rng(seed)
    x = _t(rng, 7)
    return grad_check(lambda: T.pick(T.log_softmax(x), 3), [x])


def _check_concat(seed):
    rng = np.random.default_rng(seed)
    a, b = _t(rng, 2, 3), _t(rng, 2, 2)
    w = Tensor(rng.normal(size=(2, 5)), dtype=np.float64)
    return grad_check(lambda: T.sum_all(T.mul(T.concat([a, b], axis=1), w)), [a, b])


def _check_slices(seed):
    rng = np.random.default_rng(seed)
    x = _t(rng, 5, 4)
    w1 = Tensor(rng.normal(size=(2, 4)), dtype=np.float64)
    w2 = Tensor(rng.normal(size=(5, 2)), dtype=np.float64)
    return grad_check(
        lambda: T.add(T.sum_all(T.mul(T.slice_rows(x, 1, 3), w1)),
                      T.sum_all(T.mul(T.slice_cols(x, 1, 3), w2))), [x])


def _check_gather(seed):
    rng = np.random.default_rng(seed)
    x = _t(rng, 4, 3)
    idx = np.asarray([0, 2, 2, 3, 1])
    w = Tensor(rng.normal(size=(5, 3)), dtype=np.float64)
    return grad_check(lambda: T.sum_all(T.mul(T.gather_rows(x, idx), w)), [x])


def _check_tile(seed):
    rng = np.random.default_rng(seed)
    x = _t(rng, 1, 4)
    w = Tensor(rng.normal(size=(6, 4)), dtype=np.float64)
    return grad_check(lambda: T.sum_all(T.mul(T.tile_rows(x, 6), w)), [x])


def _check_segment_max(seed):
    rng = np.random.default_rng(seed)
    x = _t(rng, 7, 3)
    w = Tensor(rng.normal(size=(3, 3)), dtype=np.float64)
    starts, ends = [0, 2, 5], [2, 5, 7]
    return grad_check(lambda: T.sum_all(T.mul(T.segment_max(x, starts, ends), w)), [x])


def _check_dropout(seed):
    rng = np.random.default_rng(seed)
    x = _t(rng, 6, 5)
    w = Tensor(rng.normal(size=(6, 5)), dtype=np.float64)

    def f():
        mask_rng = np.random.default_rng(seed + 99)  # frozen mask across FD probes
        return T.sum_all(T.mul(T.dropout(x, 0.4, "train", mask_rng), w))

    return grad_check(f, [x])


def _check_flip(seed):
    rng = np.random.default_rng(seed)
    x = _t(rng, 5, 3)
    w = Tensor(rng.normal(size=(5, 3)), dtype=np.float64)
    return grad_check(lambda: T.sum_all(T.mul(T.flip_rows(x), w)), [x])


def _check_reshape(seed):
    rng = np.random.default_rng(seed)
    x = _t(rng, 4, 6)
    w = Tensor(rng.normal(size=(8, 3)), dtype=np.float64)
    return grad_check(lambda: T.sum_all(T.mul(T.reshape(x, (8, 3)), w)), [x])


def _check_transpose(seed):
    rng = np.random.default_rng(seed)
    x = _t(rng, 4, 6)
    w = Tensor(rng.normal(size=(6, 4)), dtype=np.float64)
    return grad_check(lambda: T.sum_all(T.mul(T.transpose(x), w)), [x])


def _check_lstm_step(seed):
    rng = np.random.default_rng(seed)
    params = init_lstm_params(4, 3, rng, dtype=np.float64)
    x = _t(rng, 1, 4)
    h0 = _t(rng, 1, 3)
    c0 = _t(rng, 1, 3)
    wh = Tensor(rng.normal(size=(1, 3)), dtype=np.float64)
    wc = Tensor(rng.normal(size=(1, 3)), dtype=np.float64)

    def f():
        h, c = lstm_step(x, h0, c0, params)
        return T.add(T.sum_all(T.mul(h, wh)), T.sum_all(T.mul(c, wc)))

    return grad_check(f, [x, h0, c0, params.w, params.u, params.b])


def _check_lstm_sequence(seed):
    rng = np.random.default_rng(seed)
    params = init_lstm_params(4, 3, rng, dtype=np.float64)
    xs = _t(rng, 6, 4)
    w = Tensor(rng.normal(size=(6, 3)), dtype=np.float64)
    return grad_check(lambda: T.sum_all(T.mul(lstm_sequence(xs, params), w)),
                      [xs, params.w, params.u, params.b])


def _check_bilstm(seed):
    rng = np.random.default_rng(seed)
    stack = init_bilstm(4, 3, 2, rng, input_dropout=0.0, hidden_dropout=0.0,
                        dtype=np.float64)
    xs = _t(rng, 5, 4)
    w = Tensor(rng.normal(size=(5, 6)), dtype=np.float64)
    params = [xs] + list(stack.named("s").values())
    return grad_check(
        lambda: T.sum_all(T.mul(bilstm_forward(xs, stack, "eval")[-1], w)), params)


def _check_mlp(seed):
    rng = np.random.default_rng(seed)
    params = init_mlp(5, (7, 4), rng, dropout_rate=0.0, dtype=np.float64)
    xs = _t(rng, 3, 5)
    w = Tensor(rng.normal(size=(3, 4)), dtype=np.float64)
    plist = [xs] + list(params.named("m").values())
    return grad_check(lambda: T.sum_all(T.mul(mlp_forward(xs, params, "eval"), w)), plist)


def _check_char_cnn(seed):
    rng = np.random.default_rng(seed)
    cnn = CharCnn(list("abcdef"), 4, [(1, 2), (2, 2), (3, 2)], rng, dtype=np.float64)
    for _, b in cnn.conv:
        # Zero biases put pure-padding windows exactly on the relu kink,
        # where finite differences are undefined; probe away from it.
        b.data[:] = rng.normal(scale=0.3, size=b.shape)
    words = ["cab", "fee", "a", ""]
    w = Tensor(rng.normal(size=(4, 6)), dtype=np.float64)
    plist = list(cnn.named("c").values())
    return grad_check(lambda: T.sum_all(T.mul(cnn.forward(words), w)), plist)


def _check_reembed(seed):
    rng = np.random.default_rng(seed)
    params = init_reembedder_params(6, 4, 3, rng, dtype=np.float64)
    re = Reembedder(variant=Variant.TR, params=params)
    xs = _t(rng, 5, 6)
    ws = _t(rng, 5, 3)
    us = _t(rng, 5, 4)
    mix = Tensor(rng.normal(size=(5, 3)), dtype=np.float64)

    def f():
        w_prime, gate = re.reembed(xs, ws, us)
        return T.sum_all(T.mul(w_prime, mix))

    plist = [xs, ws, us, params.w_g, params.u_g, params.w_z, params.u_z,
             params.b_g, params.b_z]
    return grad_check(f, plist)


def _tiny_rasor(rng) -> RasorParams:
    d_w, d_h, d_f = 5, 3, 4
    return RasorParams(
        question_bilstm=init_bilstm(d_w, d_h, 1, rng, 0.0, 0.0, dtype=np.float64),
        att_ff=init_ff(2 * d_h, d_f, rng, dtype=np.float64),
        w_q=_t(rng, d_f, 1),
        align_ff_q=init_ff(d_w, d_f, rng, dtype=np.float64),
        align_ff_p=init_ff(d_w, d_f, rng, dtype=np.float64),
        passage_bilstm=init_bilstm(2 * d_w + 2 * d_h, d_h, 1, rng, 0.0, 0.0,
                                   dtype=np.float64),
        pred_ff=init_ff(4 * d_h, d_f, rng, dtype=np.float64),
        w_c=_t(rng, d_f, 1),
        ff_dropout=0.0)


def _check_question_indep(seed):
    rng = np.random.default_rng(seed)
    params = _tiny_rasor(rng)
    q = _t(rng, 4, 5)
    w = Tensor(rng.normal(size=(1, 6)), dtype=np.float64)
    plist = [q] + list(params.question_bilstm.named("q").values()) + \
        list(params.att_ff.named("a").values()) + [params.w_q]
    return grad_check(
        lambda: T.sum_all(T.mul(question_indep(q, params, "eval")[0], w)), plist)


def _check_question_aligned(seed):
    rng = np.random.default_rng(seed)
    params = _tiny_rasor(rng)
    p = _t(rng, 6, 5)
    q = _t(rng, 4, 5)
    w = Tensor(rng.normal(size=(6, 5)), dtype=np.float64)
    plist = [p, q] + list(params.align_ff_p.named("fp").values()) + \
        list(params.align_ff_q.named("fq").values())
    return grad_check(
        lambda: T.sum_all(T.mul(question_aligned(p, q, params, "eval"), w)), plist)


def _check_encode_and_score(seed):
    rng = np.random.default_rng(seed)
    params = _tiny_rasor(rng)
    p = _t(rng, 5, 5)
    q_aligned = _t(rng, 5, 5)
    q_indep = _t(rng, 1, 6)
    spans = enumerate_spans(5, 3)
    gold = SpanIndex(1, 2)

    def f():
        h = encode_passage(p, q_aligned, q_indep, params, "eval")
        dist = score_spans(h, spans, params, "eval")
        return span_loss(dist, gold)

    plist = [p, q_aligned, q_indep] + \
        list(params.passage_bilstm.named("pb").values()) + \
        list(params.pred_ff.named("pf").values()) + [params.w_c]
    return grad_check(f, plist)


def _tiny_squad_example() -> SquadExample:
    return SquadExample(
        qid="grad-1",
        paragraph="the red fox jumped over it",
        question="what jumped high",
        answers=[("red fox", 4)])


def _tiny_config(variant: str) -> RunConfig:
    # Word dropout stays off: a dropped token is all-zero input and parks
    # the relu nets exactly on their kink, where central differences are
    # undefined. It has no gradient path of its own to verify.
    return RunConfig(
        variant=variant, d_w=6, d_c=6, char_dim=4, char_widths=(1, 2, 3),
        char_filters=(2, 2, 2), num_layers=1, d_h=3, d_f=4, mlp_dims=(5, 6),
        input_dropout=0.1, hidden_dropout=0.1, word_dropout=0.0, ff_dropout=0.1,
        max_span_len=5, lm_states="unused" if variant.startswith("tr-lm") else None)


def _check_full_model(variant: str, mode: str = "train"):
    def run(seed):
        tokenized, _ = tokenize_examples([_tiny_squad_example()])
        vocab = build_vocab(tokenized)
        encoded = encode_examples(tokenized, vocab)[0]
        config = _tiny_config(variant)
        rng = np.random.default_rng(seed)
        from .embedder import random_embedding_table
        table = random_embedding_table(vocab, config.d_w, rng)
        table.vectors = table.vectors.astype(np.float64)
        model = ReaderModel(config, vocab, table, rng, dtype=np.float64)
        if model.variant.uses_lm:
            from .lm_states import LMStateStore, LMStateSet
            records = {}
            for kind, count in (("question", len(encoded.question_ids)),
                                ("passage", len(encoded.passage_ids))):
                mats = [rng.normal(size=(count, d)).astype(np.float64)
                        for d in (4, 3, 3)]
                records[(encoded.qid, kind)] = LMStateSet(
                    example_id=encoded.qid, kind=kind,
                    emb=mats[0], l1=mats[1], l2=mats[2])
            model.attach_lm_store(LMStateStore(records, (4, 3, 3)))
        params = model.named_parameters()
        # Zero-initialized biases put relu layers exactly on their kink
        # whenever an upstream layer goes fully dead for a token; probe at
        # a generic point instead, as one would mid-training.
        bias_rng = np.random.default_rng(seed + 29)
        for p in params.values():
            if p.data.ndim == 1:
                p.data[:] = bias_rng.normal(scale=0.05, size=p.data.shape)

        def f():
            return model.loss(encoded, mode, np.random.default_rng(seed + 7))

        return grad_check(f, list(params.values()), max_probes_per_param=6,
                          rng=np.random.default_rng(seed + 13),
                          skip_nonsmooth=True)

    return run


def default_checks() -> list[Check]:
    return [
        Check("add", _check_binary(T.add)),
        Check("sub", _check_binary(T.sub)),
        Check("mul", _check_binary(T.mul)),
        Check("neg", _unary(T.neg, 3, 4)),
        Check("scale", _unary(lambda x: T.scale(x, 2.5), 3, 4)),
        Check("one_minus", _unary(T.one_minus, 3, 4)),
        Check("bias_add", _check_bias_add),
        Check("matmul", _check_matmul),
        Check("transpose", _check_transpose),
        Check("reshape", _check_reshape),
        Check("sum", _unary(lambda x: x, 4, 4)),
        Check("sigmoid", _unary(T.sigmoid, 3, 4)),
        Check("tanh", _unary(T.tanh, 3, 4)),
        Check("relu", _unary(T.relu, 3, 4)),
        Check("softmax", _check_softmax(T.softmax)),
        Check("log_softmax", _check_softmax(T.log_softmax)),
        Check("pick", _check_pick),
        Check("concat", _check_concat),
        Check("slice", _check_slices),
        Check("flip_rows", _check_flip),
        Check("gather_rows", _check_gather),
        Check("tile_rows", _check_tile),
        Check("segment_max", _check_segment_max),
        Check("dropout", _check_dropout),
        Check("lstm_step", _check_lstm_step),
        Check("lstm_sequence", _check_lstm_sequence),
        Check("bilstm_forward", _check_bilstm),
        Check("mlp_forward", _check_mlp),
        Check("char_cnn", _check_char_cnn),
        Check("reembed", _check_reembed),
        Check("question_indep", _check_question_indep),
        Check("question_aligned", _check_question_aligned),
        Check("encode_and_score_spans", _check_encode_and_score),
        Check("full_loss_tr", _check_full_model("tr")),
        Check("full_loss_tr_mlp", _check_full_model("tr-mlp")),
        Check("full_loss_tr_lm_l1", _check_full_model("tr-lm-l1")),
    ]


def run_suite(checks: list[Check] | None = None, seed: int = 0,
              threshold: float = DEFAULT_THRESHOLD, out=None
              ) -> tuple[bool, list[dict]]:
    """Run every check once; returns (all passed, per-check report rows)."""
    checks = default_checks() if checks is None else checks
    rows = []
    all_ok = True
    for check in checks:
        err = check.run(seed)
        ok = err < threshold
        all_ok = all_ok and ok
        rows.append({"op": check.name, "max_relative_error": err, "pass": ok})
        if out is not None:
            out(f"{'PASS' if ok else 'FAIL'}  {check.name:28s} max_rel_err={err:.3e}")
    return all_ok, rows


def write_report(rows: list[dict], path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(rows, f, indent=2)
