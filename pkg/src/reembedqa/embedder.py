"""Non-contextual token representations: frozen word vectors plus a char CNN.

x_t = [w_t; c_t] where w_t comes from a frozen pre-trained table (lookup
on the lowercased form) and c_t from a trainable CNN over character
embeddings of the original surface form.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import (Tensor, bias_add, concat, gather_rows, matmul, relu,
                     reshape, segment_max)

UNK_TOKEN = "<unk>"
UNK_ID = 0


class EmbeddingFormatError(ValueError):
    """Malformed pre-trained embedding file."""


class Vocabulary:
    """Dense token<->id map with corpus frequency counts.

    Id 0 is always the unknown token. Ids are assigned by descending
    corpus frequency (ties broken by token string) so the mapping is
    deterministic for a given corpus.
    """

    def __init__(self, counts: dict[str, int], min_count: int = 1):
        kept = [(t, c) for t, c in counts.items() if c >= min_count and t != UNK_TOKEN]
        kept.sort(key=lambda tc: (-tc[1], tc[0]))
        dropped = sum(c for t, c in counts.items() if c < min_count and t != UNK_TOKEN)
        self._tokens = [UNK_TOKEN] + [t for t, _ in kept]
        self._counts = [dropped] + [c for _, c in kept]
        self._ids = {t: i for i, t in enumerate(self._tokens)}

    def __len__(self) -> int:
        return len(self._tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._ids

    def id_of(self, token: str) -> int:
        return self._ids.get(token, UNK_ID)

    def token_of(self, token_id: int) -> str:
        return self._tokens[token_id]

    def frequency_of(self, token_id: int) -> int:
        return self._counts[token_id]

    def tokens(self) -> list[str]:
        return list(self._tokens)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            for i, (t, c) in enumerate(zip(self._tokens, self._counts)):
                f.write(f"{t}\t{i}\t{c}\n")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        vocab = cls.__new__(cls)
        tokens, counts = [], []
        with open(path, encoding="utf-8") as f:
            for line_no, line in enumerate(f):
                token, idx, count = line.rstrip("\n").split("\t")
                if int(idx) != line_no:
                    raise ValueError(f"{path}:{line_no + 1}: id {idx} out of order")
                tokens.append(token)
                counts.append(int(count))
        if not tokens or tokens[0] != UNK_TOKEN:
            raise ValueError(f"{path}: first entry must be {UNK_TOKEN}")
        vocab._tokens = tokens
        vocab._counts = counts
        vocab._ids = {t: i for i, t in enumerate(tokens)}
        return vocab

    def fingerprint(self) -> str:
        import hashlib
        h = hashlib.sha256()
        for t, c in zip(self._tokens, self._counts):
            h.update(t.encode("utf-8"))
            h.update(str(c).encode())
            h.update(b"\x00")
        return h.hexdigest()[:16]


@dataclass
class WordEmbeddingTable:
    """Frozen |V| x d_w matrix; gradients never flow into it."""

    vectors: np.ndarray
    misses: int = 0
    duplicates: int = 0

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def rows(self, token_ids) -> Tensor:
        """Constant tensor of embedding rows; not part of the gradient graph."""
        return Tensor(self.vectors[np.asarray(token_ids, dtype=np.intp)])


def load_pretrained_embeddings(path, vocab: Vocabulary, dim: int = 300) -> WordEmbeddingTable:
    """Read a GloVe-style text file (token then dim floats per line).

    Lookup is on the lowercased vocab form. Vocab tokens absent from the
    file keep the all-zero unknown vector; the first file occurrence of a
    token wins and later ones are counted as duplicates.
    """
    wanted: dict[str, list[int]] = {}
    for i, token in enumerate(vocab.tokens()):
        if i == UNK_ID:
            continue
        wanted.setdefault(token.lower(), []).append(i)

    vectors = np.zeros((len(vocab), dim), dtype=np.float32)
    filled: set[str] = set()
    duplicates = 0
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            parts = line.rstrip("\n").split(" ")
            if len(parts) != dim + 1:
                raise EmbeddingFormatError(
                    f"{path}:{line_no}: expected token + {dim} floats, got {len(parts)} fields")
            token = parts[0]
            if token not in wanted:
                continue
            if token in filled:
                duplicates += 1
                continue
            try:
                vec = np.asarray([float(v) for v in parts[1:]], dtype=np.float32)
            except ValueError as exc:
                raise EmbeddingFormatError(f"{path}:{line_no}: non-numeric value ({exc})") from exc
            for row in wanted[token]:
                vectors[row] = vec
            filled.add(token)
    misses = sum(len(rows) for tok, rows in wanted.items() if tok not in filled)
    return WordEmbeddingTable(vectors=vectors, misses=misses, duplicates=duplicates)


def random_embedding_table(vocab: Vocabulary, dim: int,
                           rng: np.random.Generator) -> WordEmbeddingTable:
    """Seeded stand-in for a pre-trained file; unknown row stays zero."""
    vectors = rng.uniform(-0.5, 0.5, size=(len(vocab), dim)).astype(np.float32)
    vectors[UNK_ID] = 0.0
    return WordEmbeddingTable(vectors=vectors)


PAD_CHAR_ID = 0
UNK_CHAR_ID = 1


class CharCnn:
    """Convolutional character encoder; output dim = sum of filter counts.

    The padding character's embedding row is a frozen all-zero row (the
    trainable table starts at row 1). For each filter width k, windows
    slide over max(word_len, k) positions, so padding beyond the longest
    filter window can never influence the output.
    """

    def __init__(self, chars: list[str], char_dim: int,
                 filters: list[tuple[int, int]], rng: np.random.Generator,
                 dtype=np.float32):
        self.char_to_id = {"<pad>": PAD_CHAR_ID, "<unkc>": UNK_CHAR_ID}
        for ch in chars:
            if ch not in self.char_to_id:
                self.char_to_id[ch] = len(self.char_to_id)
        self.char_dim = char_dim
        self.filters = list(filters)
        self.max_width = max(w for w, _ in self.filters)
        # Extra trailing pad rows per word; windows never reach them, so
        # any value must leave outputs bit-identical (asserted in tests).
        self._extra_padding = 0
        n_rows = len(self.char_to_id)
        bound = 1.0 / np.sqrt(char_dim)
        self.char_emb = Tensor(
            rng.uniform(-bound, bound, size=(n_rows - 1, char_dim)).astype(dtype),
            requires_grad=True)
        self._pad_row = Tensor(np.zeros((1, char_dim), dtype=dtype))
        self.conv: list[tuple[Tensor, Tensor]] = []
        for width, count in self.filters:
            fan_in = width * char_dim
            w = Tensor(rng.uniform(-1.0 / np.sqrt(fan_in), 1.0 / np.sqrt(fan_in),
                                   size=(fan_in, count)).astype(dtype), requires_grad=True)
            b = Tensor(np.zeros(count, dtype=dtype), requires_grad=True)
            self.conv.append((w, b))

    @property
    def output_dim(self) -> int:
        return sum(c for _, c in self.filters)

    def named(self, prefix: str) -> dict[str, Tensor]:
        out = {f"{prefix}.char_emb": self.char_emb}
        for (width, _), (w, b) in zip(self.filters, self.conv):
            out[f"{prefix}.conv{width}.w"] = w
            out[f"{prefix}.conv{width}.b"] = b
        return out

    def _char_ids(self, word: str) -> list[int]:
        if not word:
            return [PAD_CHAR_ID]
        return [self.char_to_id.get(ch, UNK_CHAR_ID) for ch in word]

    def forward(self, words: list[str]) -> Tensor:
        """Encode each word string to one row of width output_dim."""
        if not words:
            raise ValueError("CharCnn.forward: empty word list")
        ids: list[int] = []
        offsets: list[int] = []
        true_lens: list[int] = []
        for word in words:
            wid = self._char_ids(word)
            offsets.append(len(ids))
            true_lens.append(len(wid))
            padded = max(len(wid), self.max_width) + self._extra_padding
            ids.extend(wid + [PAD_CHAR_ID] * (padded - len(wid)))

        table = concat([self._pad_row, self.char_emb], axis=0)
        embedded = gather_rows(table, np.asarray(ids, dtype=np.intp))

        per_width: list[Tensor] = []
        for (width, count), (w, b) in zip(self.filters, self.conv):
            window_idx: list[int] = []
            starts: list[int] = []
            ends: list[int] = []
            n_windows = 0
            for off, length in zip(offsets, true_lens):
                span = max(length, width) - width + 1
                starts.append(n_windows)
                for j in range(span):
                    base = off + j
                    window_idx.extend(range(base, base + width))
                n_windows += span
                ends.append(n_windows)
            stacked = gather_rows(embedded, np.asarray(window_idx, dtype=np.intp))
            stacked = reshape(stacked, (n_windows, width * self.char_dim))
            activated = relu(bias_add(matmul(stacked, w), b))
            per_width.append(segment_max(activated, starts, ends))
        return concat(per_width, axis=1)


def word_dropout(token_ids: np.ndarray, rate: float, rng: np.random.Generator | None,
                 mode: str, return_mask: bool = False):
    """Train-mode replacement of each token id with the unknown id at `rate`.

    With ``return_mask`` the boolean drop mask comes back too, so callers
    can blank the dropped tokens' surface forms (the char path drops with
    the word path).
    """
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"word_dropout: rate must be in [0, 1), got {rate}")
    if mode not in ("train", "eval"):
        raise ValueError(f"word_dropout: bad mode {mode!r}")
    ids = np.asarray(token_ids, dtype=np.intp)
    if mode == "eval" or rate == 0.0:
        out = ids.copy()
        mask = np.zeros(ids.shape, dtype=bool)
    else:
        if rng is None:
            raise ValueError("word_dropout: train mode needs an rng")
        mask = rng.random(ids.shape) < rate
        out = ids.copy()
        out[mask] = UNK_ID
    return (out, mask) if return_mask else out


def embed_sequence(token_ids: np.ndarray, words: list[str], table: WordEmbeddingTable,
                   char_cnn: CharCnn) -> tuple[Tensor, Tensor]:
    """Build (x, w) for one sequence: x = [w; c] per row.

    The char CNN runs once per distinct surface form and results are
    gathered back to positions, so duplicate word-types share one value
    (and one gradient path) within the sequence.
    """
    if len(words) != len(token_ids):
        raise ValueError("embed_sequence: ids and words must align")
    unique: dict[str, int] = {}
    positions = np.empty(len(words), dtype=np.intp)
    for i, word in enumerate(words):
        if word not in unique:
            unique[word] = len(unique)
        positions[i] = unique[word]
    c_types = char_cnn.forward(list(unique))
    c = gather_rows(c_types, positions)
    w = table.rows(token_ids)
    return concat([w, c], axis=1), w


def embed_token(token_id: int, word: str, table: WordEmbeddingTable,
                char_cnn: CharCnn) -> Tensor:
    """Single-token x_t = [w_t; c_t]; dimension table.dim + char_cnn.output_dim."""
    x, _ = embed_sequence(np.asarray([token_id]), [word], table, char_cnn)
    return x
