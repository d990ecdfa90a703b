"""Exact-match and token-F1 scoring with SQuAD answer normalization."""

from __future__ import annotations

import json
import re
import string
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from .data import SquadExample, parse_squad_json

_ARTICLES = re.compile(r"\b(a|an|the)\b")
_ASCII_PUNCT = set(string.punctuation)


def normalize_answer(text: str, unicode_punctuation: bool = False) -> list[str]:
    """Lowercase, strip punctuation, drop articles, split on whitespace.

    ASCII punctuation is stripped by default for parity with the official
    scorer; ``unicode_punctuation`` widens removal to all unicode
    punctuation categories.
    """
    text = text.lower()
    if unicode_punctuation:
        text = "".join(ch for ch in text
                       if not unicodedata.category(ch).startswith("P"))
    else:
        text = "".join(ch for ch in text if ch not in _ASCII_PUNCT)
    text = _ARTICLES.sub(" ", text)
    return text.split()


def exact_match(prediction: str, golds: list[str],
                unicode_punctuation: bool = False) -> int:
    """1 iff the normalized prediction equals any normalized gold."""
    if not golds:
        raise ValueError("exact_match: need at least one gold answer")
    pred = normalize_answer(prediction, unicode_punctuation)
    return int(any(pred == normalize_answer(g, unicode_punctuation) for g in golds))


def _f1_single(pred_tokens: list[str], gold_tokens: list[str]) -> float:
    if not pred_tokens and not gold_tokens:
        return 1.0
    if not pred_tokens or not gold_tokens:
        return 0.0
    common = Counter(pred_tokens) & Counter(gold_tokens)
    overlap = sum(common.values())
    if overlap == 0:
        return 0.0
    precision = overlap / len(pred_tokens)
    recall = overlap / len(gold_tokens)
    return 2 * precision * recall / (precision + recall)


def f1(prediction: str, golds: list[str], unicode_punctuation: bool = False) -> float:
    """Max over golds of the bag-of-tokens F1 (multiset overlap)."""
    if not golds:
        raise ValueError("f1: need at least one gold answer")
    pred_tokens = normalize_answer(prediction, unicode_punctuation)
    return max(_f1_single(pred_tokens, normalize_answer(g, unicode_punctuation))
               for g in golds)


@dataclass
class EvalResult:
    em: float   # percent, one decimal
    f1: float   # percent, one decimal
    total: int
    missing: int
    per_question: dict[str, dict[str, float]] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"em": self.em, "f1": self.f1, "total": self.total,
                "missing": self.missing, "per_question": self.per_question}


def evaluate(predictions: dict[str, str], golds: list[SquadExample],
             unicode_punctuation: bool = False, warn=None) -> EvalResult:
    """Dataset-mean EM and F1 in percent over gold question ids.

    Gold ids absent from the predictions score zero and are counted as
    missing (with a warning). Duplicate gold ids count once.
    """
    seen: set[str] = set()
    em_sum = 0.0
    f1_sum = 0.0
    missing = 0
    per_question: dict[str, dict[str, float]] = {}
    for ex in golds:
        if ex.qid in seen:
            continue
        seen.add(ex.qid)
        gold_texts = [t for t, _ in ex.answers]
        if ex.qid not in predictions:
            missing += 1
            if warn is not None:
                warn(f"missing prediction for question {ex.qid}")
            per_question[ex.qid] = {"em": 0.0, "f1": 0.0}
            continue
        q_em = exact_match(predictions[ex.qid], gold_texts, unicode_punctuation)
        q_f1 = f1(predictions[ex.qid], gold_texts, unicode_punctuation)
        em_sum += q_em
        f1_sum += q_f1
        per_question[ex.qid] = {"em": float(q_em), "f1": q_f1}
    total = len(seen)
    if total == 0:
        raise ValueError("evaluate: gold file has no questions")
    return EvalResult(em=round(100.0 * em_sum / total, 1),
                      f1=round(100.0 * f1_sum / total, 1),
                      total=total, missing=missing, per_question=per_question)


def evaluate_files(predictions_path, gold_path,
                   unicode_punctuation: bool = False, warn=None) -> EvalResult:
    with open(predictions_path, encoding="utf-8") as f:
        try:
            predictions = json.load(f)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{predictions_path}: not valid JSON ({exc})") from exc
    if not isinstance(predictions, dict):
        raise ValueError(f"{predictions_path}: expected an object mapping id -> answer")
    golds = parse_squad_json(Path(gold_path))
    return evaluate(predictions, golds, unicode_punctuation, warn)
