"""Fixed, precomputed language-model token states loaded from binary files.

Stands in for running a large pre-trained LM: states are produced once
(see :mod:`reembedqa.toy_lm`), written to disk, and consumed read-only.
No gradient ever flows into them.

File layout (little-endian):

    magic "RQLMS1\\n" | version u32 | emb_dim u32 | l1_dim u32 | l2_dim u32 |
    record count u32 |
    per record: id length u32 | id (utf-8) | kind byte (0=question, 1=passage) |
                token count u32 | emb f32[t, emb_dim] | l1 f32[t, l1_dim] |
                l2 f32[t, l2_dim]
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAGIC = b"RQLMS1\n"
VERSION = 1

KIND_QUESTION = "question"
KIND_PASSAGE = "passage"
_KIND_BYTES = {KIND_QUESTION: 0, KIND_PASSAGE: 1}
_KIND_NAMES = {v: k for k, v in _KIND_BYTES.items()}

LAYERS = ("emb", "l1", "l2")


class LmStateFormatError(IOError):
    """Malformed, truncated, or inconsistent LM state file."""


class LmStateNotFound(KeyError):
    """Requested (example id, kind) absent from the store."""


class LmAlignmentError(ValueError):
    """Stored token count disagrees with the tokenized sequence length."""


@dataclass
class LMStateSet:
    """Per-token vectors for one sequence, one matrix per LM layer."""

    example_id: str
    kind: str
    emb: np.ndarray
    l1: np.ndarray
    l2: np.ndarray

    @property
    def token_count(self) -> int:
        return self.emb.shape[0]

    def layer(self, name: str) -> np.ndarray:
        if name not in LAYERS:
            raise ValueError(f"unknown LM layer {name!r}; expected one of {LAYERS}")
        return getattr(self, name)


def write_lm_states(records: list[LMStateSet], path) -> None:
    records = list(records)
    dims = None
    for rec in records:
        rec_dims = (rec.emb.shape[1], rec.l1.shape[1], rec.l2.shape[1])
        if dims is None:
            dims = rec_dims
        elif rec_dims != dims:
            raise LmStateFormatError(
                f"record {rec.example_id}/{rec.kind}: layer dims {rec_dims} "
                f"differ from {dims}")
        if not (rec.emb.shape[0] == rec.l1.shape[0] == rec.l2.shape[0]):
            raise LmStateFormatError(
                f"record {rec.example_id}/{rec.kind}: layers disagree on token count")
    if dims is None:
        dims = (0, 0, 0)
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<IIIII", VERSION, *dims, len(records)))
        for rec in records:
            encoded = rec.example_id.encode("utf-8")
            f.write(struct.pack("<I", len(encoded)))
            f.write(encoded)
            f.write(struct.pack("<BI", _KIND_BYTES[rec.kind], rec.token_count))
            for name in LAYERS:
                f.write(np.ascontiguousarray(rec.layer(name), dtype="<f4").tobytes())


class LMStateStore:
    """Immutable O(1) lookup of LM states by (example id, kind)."""

    def __init__(self, records: dict[tuple[str, str], LMStateSet],
                 dims: tuple[int, int, int]):
        self._records = records
        self.dims = dims

    def layer_dim(self, name: str) -> int:
        return self.dims[LAYERS.index(name)]

    def __len__(self) -> int:
        return len(self._records)

    def __contains__(self, key: tuple[str, str]) -> bool:
        return key in self._records

    def get(self, example_id: str, kind: str) -> LMStateSet:
        try:
            return self._records[(example_id, kind)]
        except KeyError:
            raise LmStateNotFound(
                f"no LM states for example {example_id!r} kind {kind!r}") from None

    def payload_bytes(self) -> int:
        return sum(r.emb.nbytes + r.l1.nbytes + r.l2.nbytes for r in self._records.values())


def load_lm_states(path) -> LMStateStore:
    path = Path(path)
    blob = path.read_bytes()
    offset = 0

    def take(n: int, what: str) -> bytes:
        nonlocal offset
        if offset + n > len(blob):
            raise LmStateFormatError(f"{path}: truncated while reading {what} at byte {offset}")
        chunk = blob[offset:offset + n]
        offset += n
        return chunk

    if take(len(MAGIC), "magic") != MAGIC:
        raise LmStateFormatError(f"{path}: bad magic; not an LM state file")
    version, emb_dim, l1_dim, l2_dim, count = struct.unpack("<IIIII", take(20, "header"))
    if version != VERSION:
        raise LmStateFormatError(f"{path}: unsupported version {version}")

    records: dict[tuple[str, str], LMStateSet] = {}
    for i in range(count):
        (id_len,) = struct.unpack("<I", take(4, f"id length of record {i}"))
        example_id = take(id_len, f"id of record {i}").decode("utf-8")
        kind_byte, tokens = struct.unpack("<BI", take(5, f"header of record {i}"))
        if kind_byte not in _KIND_NAMES:
            raise LmStateFormatError(f"{path}: record {i}: unknown kind byte {kind_byte}")
        kind = _KIND_NAMES[kind_byte]
        mats = []
        for name, dim in zip(LAYERS, (emb_dim, l1_dim, l2_dim)):
            raw = take(4 * tokens * dim, f"{name} matrix of record {i}")
            mats.append(np.frombuffer(raw, dtype="<f4").reshape(tokens, dim).copy())
        key = (example_id, kind)
        if key in records:
            raise LmStateFormatError(f"{path}: duplicate record for {key}")
        records[key] = LMStateSet(example_id=example_id, kind=kind,
                                  emb=mats[0], l1=mats[1], l2=mats[2])
    if offset != len(blob):
        raise LmStateFormatError(f"{path}: {len(blob) - offset} trailing bytes")
    return LMStateStore(records, (emb_dim, l1_dim, l2_dim))


def join(store: LMStateStore, example_id: str, kind: str, selector: str,
         expected_tokens: int) -> np.ndarray:
    """Per-token vectors of the selected layer, length-checked.

    A token-count mismatch means the states were precomputed with a
    different tokenization of the same text and must not be joined.
    """
    rec = store.get(example_id, kind)
    if rec.token_count != expected_tokens:
        raise LmAlignmentError(
            f"example {example_id!r} {kind}: stored {rec.token_count} tokens, "
            f"sequence has {expected_tokens}")
    return rec.layer(selector)
