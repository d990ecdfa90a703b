"""SQuAD-format ingestion, tokenization, answer alignment, and batching."""

from __future__ import annotations

import json
import string
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .embedder import Vocabulary

_PUNCT = set(string.punctuation)


class SquadParseError(ValueError):
    """Input JSON does not follow the SQuAD v1.1 layout."""


class AlignmentError(ValueError):
    """A gold answer's character offsets do not land on token boundaries."""


@dataclass
class SquadExample:
    qid: str
    paragraph: str
    question: str
    answers: list[tuple[str, int]]  # (text, char start offset)


@dataclass
class Token:
    text: str
    start: int  # char offset, inclusive
    end: int    # char offset, exclusive


@dataclass
class TokenizedExample:
    qid: str
    paragraph: str
    passage_tokens: list[Token]
    question_tokens: list[Token]
    gold_spans: list[tuple[int, int]]   # 0-based inclusive token spans
    answer_texts: list[str]

    def span_text(self, l: int, r: int) -> str:
        """Recover the exact source substring for a token span."""
        return self.paragraph[self.passage_tokens[l].start:self.passage_tokens[r].end]


def parse_squad_json(path) -> list[SquadExample]:
    """One SquadExample per qa entry; adversarial files share the layout."""
    path = Path(path)
    with open(path, encoding="utf-8") as f:
        raw = json.load(f)
    examples: list[SquadExample] = []
    try:
        articles = raw["data"]
    except (KeyError, TypeError) as exc:
        raise SquadParseError(f"{path}: missing top-level 'data'") from exc
    for ai, article in enumerate(articles):
        try:
            paragraphs = article["paragraphs"]
        except (KeyError, TypeError) as exc:
            raise SquadParseError(f"{path}: data[{ai}] missing 'paragraphs'") from exc
        for pi, para in enumerate(paragraphs):
            where = f"data[{ai}].paragraphs[{pi}]"
            try:
                context = para["context"]
                qas = para["qas"]
            except (KeyError, TypeError) as exc:
                raise SquadParseError(f"{path}: {where} missing 'context' or 'qas'") from exc
            for qi, qa in enumerate(qas):
                here = f"{where}.qas[{qi}]"
                try:
                    qid = qa["id"]
                    question = qa["question"]
                    answers = [(a["text"], int(a["answer_start"])) for a in qa["answers"]]
                except (KeyError, TypeError) as exc:
                    raise SquadParseError(f"{path}: {here} missing field ({exc})") from exc
                if not answers:
                    raise SquadParseError(f"{path}: {here} has no answers")
                examples.append(SquadExample(qid=qid, paragraph=context,
                                             question=question, answers=answers))
    return examples


def tokenize(text: str) -> list[Token]:
    """Whitespace split, then detach leading/trailing ASCII punctuation.

    Each detached punctuation character becomes its own token. Interior
    punctuation (hyphens, apostrophes, commas in numbers) stays attached.
    Offsets always satisfy text[start:end] == token text.
    """
    tokens: list[Token] = []
    i = 0
    n = len(text)
    while i < n:
        if text[i].isspace():
            i += 1
            continue
        j = i
        while j < n and not text[j].isspace():
            j += 1
        lo, hi = i, j
        while lo < hi and text[lo] in _PUNCT:
            tokens.append(Token(text[lo], lo, lo + 1))
            lo += 1
        trailing: list[Token] = []
        while hi > lo and text[hi - 1] in _PUNCT:
            trailing.append(Token(text[hi - 1], hi - 1, hi))
            hi -= 1
        if lo < hi:
            tokens.append(Token(text[lo:hi], lo, hi))
        tokens.extend(reversed(trailing))
        i = j
    return tokens


def align_answer(passage_tokens: list[Token], answer_text: str,
                 answer_start: int) -> tuple[int, int]:
    """Smallest token span [l, r] covering the answer's character range."""
    answer_end = answer_start + len(answer_text)  # exclusive
    l = r = -1
    for idx, tok in enumerate(passage_tokens):
        if tok.start <= answer_start < tok.end:
            l = idx
        if tok.start <= answer_end - 1 < tok.end:
            r = idx
    if l < 0 or r < 0 or r < l:
        raise AlignmentError(
            f"answer {answer_text!r} at char {answer_start} does not align to tokens")
    return l, r


@dataclass
class SkipRecord:
    qid: str
    reason: str


def tokenize_examples(examples: list[SquadExample]) -> tuple[list[TokenizedExample], list[SkipRecord]]:
    """Tokenize and align every example; misaligned ones are skipped and counted."""
    out: list[TokenizedExample] = []
    skipped: list[SkipRecord] = []
    for ex in examples:
        passage_tokens = tokenize(ex.paragraph)
        question_tokens = tokenize(ex.question)
        spans: list[tuple[int, int]] = []
        failed = None
        for text, start in ex.answers:
            try:
                spans.append(align_answer(passage_tokens, text, start))
            except AlignmentError as exc:
                failed = str(exc)
                break
        if failed is not None:
            skipped.append(SkipRecord(qid=ex.qid, reason=failed))
            continue
        out.append(TokenizedExample(
            qid=ex.qid, paragraph=ex.paragraph, passage_tokens=passage_tokens,
            question_tokens=question_tokens, gold_spans=spans,
            answer_texts=[t for t, _ in ex.answers]))
    return out, skipped


def write_skip_report(path, skipped: list[SkipRecord]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for rec in skipped:
            f.write(json.dumps({"id": rec.qid, "reason": rec.reason}) + "\n")


def build_vocab(examples: list[TokenizedExample], min_count: int = 1) -> Vocabulary:
    """Frequency-counted vocabulary over passage and question tokens.

    Paragraphs shared by several questions are counted once so type
    frequencies reflect corpus occurrences, not question multiplicity.
    """
    if not examples:
        raise ValueError("build_vocab: empty example list")
    counts: dict[str, int] = {}
    seen_paragraphs: set[str] = set()
    for ex in examples:
        if ex.paragraph not in seen_paragraphs:
            seen_paragraphs.add(ex.paragraph)
            for tok in ex.passage_tokens:
                counts[tok.text] = counts.get(tok.text, 0) + 1
        for tok in ex.question_tokens:
            counts[tok.text] = counts.get(tok.text, 0) + 1
    return Vocabulary(counts, min_count=min_count)


@dataclass
class EncodedExample:
    """A tokenized example with vocabulary ids attached."""

    tokenized: TokenizedExample
    passage_ids: np.ndarray
    question_ids: np.ndarray

    @property
    def qid(self) -> str:
        return self.tokenized.qid


def encode_examples(examples: list[TokenizedExample], vocab: Vocabulary) -> list[EncodedExample]:
    out = []
    for ex in examples:
        out.append(EncodedExample(
            tokenized=ex,
            passage_ids=np.asarray([vocab.id_of(t.text) for t in ex.passage_tokens],
                                   dtype=np.intp),
            question_ids=np.asarray([vocab.id_of(t.text) for t in ex.question_tokens],
                                    dtype=np.intp)))
    return out


@dataclass
class Batch:
    """Up to batch_size examples with padded id matrices and length masks."""

    examples: list[EncodedExample]
    passage_ids: np.ndarray = field(init=False)
    passage_mask: np.ndarray = field(init=False)
    question_ids: np.ndarray = field(init=False)
    question_mask: np.ndarray = field(init=False)
    passage_lengths: np.ndarray = field(init=False)
    question_lengths: np.ndarray = field(init=False)

    def __post_init__(self):
        self.passage_ids, self.passage_mask, self.passage_lengths = _pad(
            [ex.passage_ids for ex in self.examples])
        self.question_ids, self.question_mask, self.question_lengths = _pad(
            [ex.question_ids for ex in self.examples])

    def __len__(self) -> int:
        return len(self.examples)


def _pad(rows: list[np.ndarray]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    lengths = np.asarray([len(r) for r in rows], dtype=np.intp)
    width = int(lengths.max()) if len(rows) else 0
    ids = np.zeros((len(rows), width), dtype=np.intp)
    mask = np.zeros((len(rows), width), dtype=np.float32)
    for i, r in enumerate(rows):
        ids[i, :len(r)] = r
        mask[i, :len(r)] = 1.0
    return ids, mask, lengths


def batches(examples: list[EncodedExample], batch_size: int,
            shuffle_seed: int | None = None, sort_by_length: bool = False):
    """Yield batches covering every example exactly once; final batch may be short."""
    if batch_size < 1:
        raise ValueError(f"batches: batch_size must be >= 1, got {batch_size}")
    order = list(range(len(examples)))
    if sort_by_length:
        # Batch similar lengths together; shuffle batch order, not examples.
        order.sort(key=lambda i: (len(examples[i].passage_ids), i))
        chunks = [order[s:s + batch_size] for s in range(0, len(order), batch_size)]
        if shuffle_seed is not None:
            np.random.default_rng(shuffle_seed).shuffle(chunks)
    else:
        if shuffle_seed is not None:
            np.random.default_rng(shuffle_seed).shuffle(order)
        chunks = [order[s:s + batch_size] for s in range(0, len(order), batch_size)]
    for chunk in chunks:
        yield Batch(examples=[examples[i] for i in chunk])
