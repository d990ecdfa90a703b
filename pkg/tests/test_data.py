import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from reembedqa.data import (AlignmentError, Batch, SquadParseError, align_answer,
                            batches, build_vocab, encode_examples,
                            parse_squad_json, tokenize, tokenize_examples,
                            write_skip_report)
from reembedqa.embedder import UNK_TOKEN


def write_squad(tmp_path, data):
    path = tmp_path / "data.json"
    path.write_text(json.dumps(data))
    return path


def minimal(contexts_qas):
    return {"version": "1.1",
            "data": [{"title": "t",
                      "paragraphs": [{"context": c, "qas": qas}
                                     for c, qas in contexts_qas]}]}


def qa(qid, question, text, start):
    return {"id": qid, "question": question,
            "answers": [{"text": text, "answer_start": start}]}


class TestParse:
    def test_minimal_single_example(self, tmp_path):
        path = write_squad(tmp_path, minimal([
            ("the cat sat", [qa("q1", "who sat?", "cat", 4)])]))
        examples = parse_squad_json(path)
        assert len(examples) == 1
        assert examples[0].qid == "q1"
        assert examples[0].answers == [("cat", 4)]

    def test_multiple_answers_preserved_in_order(self, tmp_path):
        data = minimal([("a b c", [{
            "id": "q1", "question": "?",
            "answers": [{"text": "a", "answer_start": 0},
                        {"text": "b", "answer_start": 2},
                        {"text": "c", "answer_start": 4}]}])])
        examples = parse_squad_json(write_squad(tmp_path, data))
        assert examples[0].answers == [("a", 0), ("b", 2), ("c", 4)]

    def test_count_over_paragraphs(self, tmp_path):
        contexts = [(f"paragraph number {i} text", [
            qa(f"q{i}-{j}", "what?", "text", 19 + (i >= 10)) for j in range(2)])
            for i in range(5)]
        examples = parse_squad_json(write_squad(tmp_path, minimal(contexts)))
        assert len(examples) == 10

    def test_missing_field_names_json_path(self, tmp_path):
        bad = {"data": [{"paragraphs": [{"context": "x", "qas": [{"id": "q"}]}]}]}
        with pytest.raises(SquadParseError, match=r"data\[0\].paragraphs\[0\].qas\[0\]"):
            parse_squad_json(write_squad(tmp_path, bad))

    def test_missing_top_level(self, tmp_path):
        with pytest.raises(SquadParseError, match="'data'"):
            parse_squad_json(write_squad(tmp_path, {"rows": []}))


class TestTokenize:
    def test_detaches_trailing_punctuation(self):
        assert [t.text for t in tokenize("in 1879.")] == ["in", "1879", "."]

    def test_empty_text(self):
        assert tokenize("") == []

    def test_leading_and_nested_punctuation(self):
        assert [t.text for t in tokenize('(hello), "world"')] == \
            ["(", "hello", ")", ",", '"', "world", '"']

    def test_interior_punctuation_kept(self):
        assert [t.text for t in tokenize("well-known 1,000 o'clock")] == \
            ["well-known", "1,000", "o'clock"]

    def test_all_punctuation_token(self):
        assert [t.text for t in tokenize("-- !")] == ["-", "-", "!"]

    @given(st.text(min_size=0, max_size=60))
    @settings(max_examples=150, deadline=None)
    def test_offsets_recover_exact_substrings(self, text):
        for tok in tokenize(text):
            assert text[tok.start:tok.end] == tok.text

    def test_offsets_ordered_and_non_overlapping(self):
        toks = tokenize("The Harlow River, (212 km) long.")
        for a, b in zip(toks, toks[1:]):
            assert a.end <= b.start


class TestAlign:
    def test_single_token(self):
        toks = tokenize("the cat sat")
        assert align_answer(toks, "cat", 4) == (1, 1)

    def test_two_token_answer(self):
        toks = tokenize("a red boat crossed")
        assert align_answer(toks, "red boat", 2) == (1, 2)

    def test_whitespace_offset_fails(self):
        toks = tokenize("the cat sat")
        with pytest.raises(AlignmentError):
            align_answer(toks, "cat", 3)  # points at the space

    def test_answer_inside_token(self):
        toks = tokenize("the catalog sat")
        assert align_answer(toks, "cat", 4) == (1, 1)  # smallest covering span

    def test_tokenize_examples_counts_failures(self, tmp_path):
        data = minimal([("the cat sat", [qa("ok", "?", "cat", 4),
                                         qa("bad", "?", "cat", 3)])])
        examples = parse_squad_json(write_squad(tmp_path, data))
        tokenized, skipped = tokenize_examples(examples)
        assert [t.qid for t in tokenized] == ["ok"]
        assert [s.qid for s in skipped] == ["bad"]
        report = tmp_path / "skipped.jsonl"
        write_skip_report(report, skipped)
        rec = json.loads(report.read_text().splitlines()[0])
        assert rec["id"] == "bad"

    def test_span_text_round_trip(self, tmp_path):
        data = minimal([("The Brack joins near Veslow.",
                         [qa("q", "?", "near Veslow", 16)])])
        tokenized, _ = tokenize_examples(parse_squad_json(write_squad(tmp_path, data)))
        ex = tokenized[0]
        l, r = ex.gold_spans[0]
        assert ex.span_text(l, r) == "near Veslow"


class TestBundledFixture:
    def test_alignment_total_on_bundled_file(self, toy_squad):
        examples = parse_squad_json(toy_squad)
        tokenized, skipped = tokenize_examples(examples)
        assert len(examples) == 32
        assert skipped == []
        for ex in tokenized:
            l, r = ex.gold_spans[0]
            assert 0 <= l <= r < len(ex.passage_tokens)

    def test_every_gold_recoverable_from_offsets(self, toy_squad):
        tokenized, _ = tokenize_examples(parse_squad_json(toy_squad))
        for ex in tokenized:
            l, r = ex.gold_spans[0]
            assert ex.span_text(l, r) == ex.answer_texts[0]


class TestVocabBuild:
    def build(self, tmp_path, contexts_qas):
        path = write_squad(tmp_path, minimal(contexts_qas))
        tokenized, _ = tokenize_examples(parse_squad_json(path))
        return tokenized

    def test_counts(self, tmp_path):
        tokenized = self.build(tmp_path, [("a a b", [qa("q1", "c", "a", 0)])])
        vocab = build_vocab(tokenized)
        assert vocab.frequency_of(vocab.id_of("a")) == 2
        assert vocab.frequency_of(vocab.id_of("b")) == 1
        assert vocab.frequency_of(vocab.id_of("c")) == 1

    def test_min_count(self, tmp_path):
        tokenized = self.build(tmp_path, [("a a b", [qa("q1", "a", "a", 0)])])
        vocab = build_vocab(tokenized, min_count=2)
        assert "a" in vocab and "b" not in vocab

    def test_size_is_distinct_tokens_plus_reserved(self, tmp_path):
        tokenized = self.build(tmp_path, [
            ("x y z x", [qa("q1", "w v", "x", 0), qa("q2", "w", "y", 2)])])
        vocab = build_vocab(tokenized)
        distinct = {"x", "y", "z", "w", "v"}
        assert len(vocab) == len(distinct) + 1
        assert vocab.token_of(0) == UNK_TOKEN

    def test_shared_paragraph_counted_once(self, tmp_path):
        tokenized = self.build(tmp_path, [
            ("a b", [qa("q1", "c", "a", 0), qa("q2", "d", "b", 2)])])
        vocab = build_vocab(tokenized)
        assert vocab.frequency_of(vocab.id_of("a")) == 1

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            build_vocab([])


class TestBatches:
    def encode(self, tmp_path, n):
        contexts = [(f"token{i} alpha beta", [qa(f"q{i}", "what?", "alpha", 6 + len(str(i)))])
                    for i in range(n)]
        tokenized, skipped = tokenize_examples(
            parse_squad_json(write_squad(tmp_path, minimal(contexts))))
        assert not skipped
        vocab = build_vocab(tokenized)
        return encode_examples(tokenized, vocab)

    def test_sizes_with_partial_final_batch(self, tmp_path):
        encoded = self.encode(tmp_path, 5)
        sizes = [len(b) for b in batches(encoded, 2)]
        assert sizes == [2, 2, 1]

    def test_same_seed_identical_order(self, tmp_path):
        encoded = self.encode(tmp_path, 7)
        order1 = [ex.qid for b in batches(encoded, 3, shuffle_seed=9) for ex in b.examples]
        order2 = [ex.qid for b in batches(encoded, 3, shuffle_seed=9) for ex in b.examples]
        assert order1 == order2
        order3 = [ex.qid for b in batches(encoded, 3, shuffle_seed=10) for ex in b.examples]
        assert order1 != order3

    def test_every_example_exactly_once(self, tmp_path):
        encoded = self.encode(tmp_path, 9)
        seen = [ex.qid for b in batches(encoded, 4, shuffle_seed=3) for ex in b.examples]
        assert sorted(seen) == sorted(ex.qid for ex in encoded)

    def test_masks_delimit_true_lengths(self, tmp_path):
        encoded = self.encode(tmp_path, 4)
        encoded[0].passage_ids = encoded[0].passage_ids[:2]  # force ragged lengths
        batch = Batch(examples=encoded)
        for i, ex in enumerate(batch.examples):
            n = len(ex.passage_ids)
            assert batch.passage_mask[i, :n].all()
            assert not batch.passage_mask[i, n:].any()
            assert batch.passage_lengths[i] == n
            assert np.array_equal(batch.passage_ids[i, :n], ex.passage_ids)

    def test_bad_batch_size(self, tmp_path):
        encoded = self.encode(tmp_path, 2)
        with pytest.raises(ValueError):
            list(batches(encoded, 0))

    def test_length_sorted_mode(self, tmp_path):
        encoded = self.encode(tmp_path, 6)
        ordered = [len(ex.passage_ids)
                   for b in batches(encoded, 2, sort_by_length=True)
                   for ex in b.examples]
        assert ordered == sorted(ordered)
