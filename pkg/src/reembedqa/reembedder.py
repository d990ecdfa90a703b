"""Gated re-embedding of tokens: a highway mix of fixed and contextual vectors.

Per token: w' = g * w + (1 - g) * z with
    g = sigmoid(x W_g + u U_g + b_g)
    z = tanh(x W_z + u U_z + b_z)
where x is the non-contextual [w; c] vector and u a contextual term whose
source depends on the variant. The output has the word-embedding width,
so it drops in wherever the fixed embeddings were consumed.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .encoders import BiLstmStack, MlpParams, bilstm_forward, mlp_forward
from .tensor import Tensor, bias_add, concat, matmul, mul, one_minus, sigmoid, tanh


class Variant(str, Enum):
    TR = "tr"
    TR_MLP = "tr-mlp"
    TR_LM_EMB = "tr-lm-emb"
    TR_LM_L1 = "tr-lm-l1"
    TR_LM_L2 = "tr-lm-l2"

    @property
    def uses_lm(self) -> bool:
        return self in (Variant.TR_LM_EMB, Variant.TR_LM_L1, Variant.TR_LM_L2)

    @property
    def lm_layer(self) -> str:
        return {Variant.TR_LM_EMB: "emb", Variant.TR_LM_L1: "l1",
                Variant.TR_LM_L2: "l2"}[self]


class LmStatesRequired(ValueError):
    """An LM variant was run without language-model states."""


@dataclass
class ReembedderParams:
    """Gate and transform projections; outputs are word-embedding sized."""

    w_g: Tensor
    u_g: Tensor
    w_z: Tensor
    u_z: Tensor
    b_g: Tensor
    b_z: Tensor
    use_bias: bool = True

    def named(self, prefix: str) -> dict[str, Tensor]:
        out = {f"{prefix}.w_g": self.w_g, f"{prefix}.u_g": self.u_g,
               f"{prefix}.w_z": self.w_z, f"{prefix}.u_z": self.u_z}
        if self.use_bias:
            out[f"{prefix}.b_g"] = self.b_g
            out[f"{prefix}.b_z"] = self.b_z
        return out


def init_reembedder_params(x_dim: int, u_dim: int, d_w: int, rng: np.random.Generator,
                           use_bias: bool = True, dtype=np.float32) -> ReembedderParams:
    def mat(rows):
        bound = 1.0 / np.sqrt(rows)
        return Tensor(rng.uniform(-bound, bound, size=(rows, d_w)).astype(dtype),
                      requires_grad=True)

    return ReembedderParams(
        w_g=mat(x_dim), u_g=mat(u_dim), w_z=mat(x_dim), u_z=mat(u_dim),
        b_g=Tensor(np.zeros(d_w, dtype=dtype), requires_grad=True),
        b_z=Tensor(np.zeros(d_w, dtype=dtype), requires_grad=True),
        use_bias=use_bias)


@dataclass
class Reembedder:
    """One re-embedding module, applied independently to each sequence."""

    variant: Variant
    params: ReembedderParams
    context_bilstm: BiLstmStack | None = None
    context_mlp: MlpParams | None = None

    def named(self, prefix: str) -> dict[str, Tensor]:
        out = self.params.named(f"{prefix}.gate")
        if self.context_bilstm is not None:
            out.update(self.context_bilstm.named(f"{prefix}.bilstm"))
        if self.context_mlp is not None:
            out.update(self.context_mlp.named(f"{prefix}.mlp"))
        return out

    def compute_context(self, xs: Tensor, mode: str,
                        rng: np.random.Generator | None = None,
                        lm_states: np.ndarray | None = None) -> Tensor:
        """Contextual term u per token; shape (n, u_dim) for this variant."""
        if self.variant.uses_lm:
            if lm_states is None:
                raise LmStatesRequired(
                    f"variant {self.variant.value} requires LM states for every sequence")
            if lm_states.shape[0] != xs.shape[0]:
                raise ValueError(
                    f"LM states cover {lm_states.shape[0]} tokens but sequence has "
                    f"{xs.shape[0]}")
        elif lm_states is not None:
            raise ValueError(f"variant {self.variant.value} does not accept LM states")

        if self.variant == Variant.TR_MLP:
            return mlp_forward(xs, self.context_mlp, mode, rng)
        inner = bilstm_forward(xs, self.context_bilstm, mode, rng)[-1]
        if not self.variant.uses_lm:
            return inner
        return concat([inner, Tensor(lm_states)], axis=1)

    def reembed(self, xs: Tensor, ws: Tensor, us: Tensor,
                force_gate: float | None = None) -> tuple[Tensor, Tensor]:
        """Highway-combine fixed and transformed vectors; returns (w', gate).

        ``force_gate`` is a test hook that pins every gate entry to a
        constant (1.0 makes re-embedding the identity on w).
        """
        p = self.params
        g_pre = matmul(xs, p.w_g) + matmul(us, p.u_g)
        z_pre = matmul(xs, p.w_z) + matmul(us, p.u_z)
        if p.use_bias:
            g_pre = bias_add(g_pre, p.b_g)
            z_pre = bias_add(z_pre, p.b_z)
        if force_gate is None:
            g = sigmoid(g_pre)
        else:
            g = Tensor(np.full(g_pre.shape, force_gate, dtype=g_pre.data.dtype))
        z = tanh(z_pre)
        w_prime = mul(g, ws) + mul(one_minus(g), z)
        return w_prime, g


class GateStats:
    """Running per-word-type gate averages.

    Pools every gate-vector entry of every occurrence (questions and
    passages alike), so the mean is over entries, not over tokens.
    Accumulation is order-independent and mergeable across shards.
    """

    def __init__(self):
        self.sums: dict[int, float] = {}
        self.counts: dict[int, int] = {}

    def record(self, gate_values: np.ndarray, token_ids: np.ndarray) -> None:
        if gate_values.shape[0] != len(token_ids):
            raise ValueError("gate rows and token ids must align")
        row_sums = gate_values.sum(axis=1, dtype=np.float64)
        width = gate_values.shape[1]
        for tid, s in zip(np.asarray(token_ids).tolist(), row_sums.tolist()):
            self.sums[tid] = self.sums.get(tid, 0.0) + s
            self.counts[tid] = self.counts.get(tid, 0) + width

    def merge(self, other: "GateStats") -> None:
        for tid, s in other.sums.items():
            self.sums[tid] = self.sums.get(tid, 0.0) + s
            self.counts[tid] = self.counts.get(tid, 0) + other.counts[tid]

    def mean(self, token_id: int) -> float:
        return self.sums[token_id] / self.counts[token_id]

    def observed_types(self) -> list[int]:
        return sorted(self.sums)

    def __len__(self) -> int:
        return len(self.sums)


GATE_CSV_HEADER = "word_type,frequency,mean_gate"


def export_gate_csv(stats: GateStats, vocab, path, split: str = "",
                    config_json: str = "") -> None:
    """Write per-type gate means, highest corpus frequency first.

    A leading comment line records the split the averages were pooled
    over and the effective configuration; the header line is fixed.
    """
    if len(stats) == 0:
        raise ValueError("export_gate_csv: no gate statistics recorded")
    rows = []
    for tid in stats.observed_types():
        token = vocab.token_of(tid)
        rows.append((vocab.frequency_of(tid), token, stats.mean(tid)))
    rows.sort(key=lambda r: (-r[0], r[1]))
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"# split={split} config={config_json}\n")
        f.write(GATE_CSV_HEADER + "\n")
        for freq, token, mean in rows:
            escaped = '"' + token.replace('"', '""') + '"' if ("," in token or '"' in token) else token
            f.write(f"{escaped},{freq},{mean:.6f}\n")


def read_gate_csv(path) -> list[tuple[str, int, float]]:
    """Parse rows written by :func:`export_gate_csv`."""
    import csv

    rows = []
    with open(path, encoding="utf-8") as f:
        content = [line for line in f if not line.startswith("#")]
    reader = csv.reader(content)
    header = next(reader)
    if ",".join(header) != GATE_CSV_HEADER:
        raise ValueError(f"{path}: unexpected header {header}")
    for rec in reader:
        rows.append((rec[0], int(rec[1]), float(rec[2])))
    return rows
