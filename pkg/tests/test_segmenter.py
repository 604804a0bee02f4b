"""Sentence splitting, tokenization, condensation, and end-token targets."""

import random

import pytest

from finespan.corpus import CorpusError, Label, SpanAnnotation
from finespan.segmenter import (
    Granularity,
    SentenceSegment,
    condense,
    majority_label,
    reduce_labels,
    segment_end_tokens,
    split_sentences,
    tokenize,
)

from helpers import brute_force_condense, make_record, random_corpus


class TestSplitSentences:
    def test_two_sentences(self):
        text = "The image features a dog. It is brown."
        assert split_sentences(text) == [(0, 25), (26, 38)]

    def test_single_sentence_without_terminator(self):
        assert split_sentences("Hello") == [(0, 5)]

    def test_empty_text(self):
        assert split_sentences("") == []

    def test_whitespace_only(self):
        assert split_sentences("   \n\t ") == []

    def test_question_and_quoted_terminator(self):
        """Hand-applied rule: terminator plus closing quote ends the sentence.

        'Is it raining? He said "Stop!" Then silence fell' splits at the '?',
        after the closing quote of '"Stop!"', and at end-of-text.
        """
        text = 'Is it raining? He said "Stop!" Then silence fell'
        assert split_sentences(text) == [(0, 14), (15, 30), (31, 48)]

    def test_terminator_at_end_of_text(self):
        assert split_sentences("One. Two.") == [(0, 4), (5, 9)]

    def test_terminator_without_following_whitespace_does_not_split(self):
        # "3.14" has no whitespace after the '.', so it stays one sentence
        assert split_sentences("pi is 3.14 exactly") == [(0, 18)]

    def test_leading_and_trailing_whitespace_excluded(self):
        assert split_sentences("  Hello there.  ") == [(2, 14)]

    def test_coverage_property(self):
        """Every non-whitespace char falls in exactly one trimmed sentence span."""
        rng = random.Random(5)
        for record in random_corpus(5, 30):
            text = record.response
            spans = split_sentences(text)
            seen = [0] * len(text)
            for s, e in spans:
                assert not text[s].isspace() and not text[e - 1].isspace()
                for i in range(s, e):
                    seen[i] += 1
            for i, ch in enumerate(text):
                if not ch.isspace():
                    assert seen[i] == 1, f"position {i} covered {seen[i]} times"
                else:
                    assert seen[i] <= 1


class TestTokenize:
    def test_offsets_with_double_space(self):
        tokens = tokenize("a  b")
        assert [(t.text, t.start, t.end) for t in tokens] == [("a", 0, 1), ("b", 3, 4)]

    def test_empty(self):
        assert len(tokenize("")) == 0

    def test_ten_word_fixture(self):
        words = ["w%d" % i for i in range(10)]
        text = " ".join(words)
        tokens = tokenize(text)
        assert len(tokens) == 10
        for token in tokens:
            assert text[token.start : token.end] == token.text

    def test_reconstruction(self):
        text = " one\ttwo  three\n"
        tokens = tokenize(text)
        rebuilt = list(" " * len(text))
        for t in tokens:
            rebuilt[t.start : t.end] = t.text
        assert "".join(rebuilt).split() == text.split()


class TestCondense:
    def test_inaccurate_subspan_flips_sentence(self):
        text = "The image features a dog and a cat."
        record = make_record(text, [(29, 32, Label.INACCURATE)])
        assert [seg.label for seg in condense(record)] == [Label.INACCURATE]

    def test_unsure_merges_into_inaccurate(self):
        text = "Maybe there is a boat."
        record = make_record(text, [(0, 5, Label.UNSURE)])
        assert [seg.label for seg in condense(record)] == [Label.INACCURATE]

    def test_no_spans_means_accurate(self):
        record = make_record("Nothing was marked here.")
        assert [seg.label for seg in condense(record)] == [Label.ACCURATE]

    def test_majority_analysis(self):
        text = "Cozy mood here."
        # analysis covers 'Cozy mood' = 8 of 13 non-whitespace chars
        record = make_record(text, [(0, 9, Label.ANALYSIS)])
        assert [seg.label for seg in condense(record)] == [Label.ANALYSIS]

    def test_exactly_half_analysis_ties_to_analysis(self):
        text = "abcd efgh"
        record = make_record(text, [(0, 4, Label.ANALYSIS)])
        assert [seg.label for seg in condense(record)] == [Label.ANALYSIS]

    def test_minority_analysis_stays_accurate(self):
        text = "abcd efghij"
        record = make_record(text, [(0, 4, Label.ANALYSIS)])
        assert [seg.label for seg in condense(record)] == [Label.ACCURATE]

    def test_matches_brute_force_on_random_corpora(self):
        for record in random_corpus(23, 60):
            got = [seg.label for seg in condense(record)]
            assert got == brute_force_condense(record), record.response

    def test_monotone_in_inaccurate_spans(self):
        """Covering any uncovered run with an inaccurate span keeps the sentence inaccurate."""
        rng = random.Random(9)
        for record in random_corpus(31, 25):
            text = record.response
            covered = [False] * len(text)
            for span in record.spans:
                for i in range(span.start, span.end):
                    covered[i] = True
            gaps = []
            start = None
            for i in range(len(text) + 1):
                inside = i < len(text) and not covered[i]
                if inside and start is None:
                    start = i
                if not inside and start is not None:
                    gaps.append((start, i))
                    start = None
            if not gaps:
                continue
            gap = rng.choice(gaps)
            extra = sorted(
                record.spans + [SpanAnnotation(gap[0], gap[1], Label.INACCURATE)],
                key=lambda s: s.start,
            )
            mutated = make_record(text, [], rec_id=record.id)
            mutated.spans = extra
            before = condense(record)
            after = condense(mutated)
            for b, a in zip(before, after):
                if b.label is Label.INACCURATE:
                    assert a.label is Label.INACCURATE

    def test_invalid_record_rejected(self):
        record = make_record("abc", [(0, 99, Label.ACCURATE)])
        with pytest.raises(CorpusError):
            condense(record)


class TestReduce:
    def test_binary_mapping(self):
        segments = [
            SentenceSegment(0, 1, Label.ANALYSIS),
            SentenceSegment(1, 2, Label.INACCURATE),
            SentenceSegment(2, 3, Label.ACCURATE),
        ]
        assert reduce_labels(segments, Granularity.BINARY) == [0, 1, 0]

    def test_ternary_is_identity_on_three_labels(self):
        labels = [Label.ACCURATE, Label.INACCURATE, Label.ANALYSIS, Label.INACCURATE]
        assert reduce_labels(labels, Granularity.TERNARY) == [0, 1, 2, 1]

    def test_empty(self):
        assert reduce_labels([], Granularity.BINARY) == []

    def test_commutes_with_permutation(self):
        rng = random.Random(2)
        labels = [rng.choice([Label.ACCURATE, Label.INACCURATE, Label.ANALYSIS]) for _ in range(40)]
        perm = list(range(40))
        rng.shuffle(perm)
        for g in Granularity:
            direct = reduce_labels([labels[i] for i in perm], g)
            permuted = [reduce_labels(labels, g)[i] for i in perm]
            assert direct == permuted

    def test_class_counts(self):
        assert Granularity.BINARY.num_classes == 2
        assert Granularity.TERNARY.num_classes == 3
        assert Granularity.BINARY.class_index(Label.UNSURE) == 1
        assert Granularity.TERNARY.class_index(Label.UNSURE) == 1


class TestSegmentEndTokens:
    def test_sentence_density_targets_last_tokens(self):
        # 5 + 4 tokens across two sentences -> targets at indices 4 and 8
        text = "one two three four five. six seven eight nine."
        record = make_record(text)
        targets = segment_end_tokens(record, tokenize(text), "sentence")
        assert [idx for idx, _ in targets] == [4, 8]

    def test_segment_density_span_end_token(self):
        # tokens: t0..t5; span covers tokens 2..4 -> target at index 4
        text = "t0 t1 t2 t3 t4 t5"
        record = make_record(text, [(6, 14, Label.INACCURATE)])
        targets = segment_end_tokens(record, tokenize(text), "segment")
        assert (4, Label.INACCURATE) in targets

    def test_segment_density_three_spans_two_gaps(self):
        """Hand-computed: spans over tokens (0-1), (3), (5) leave gaps at 2 and 4.

        text tokens: w0 w1 w2 w3 w4 w5 (each 2 chars + space, so token i spans
        [3i, 3i+2)). Spans: [0,5) covers w0,w1; [9,11) covers w3; [15,17) covers
        w5. Expected targets: span->1, gap->2, span->3, gap->4, span->5.
        """
        text = "w0 w1 w2 w3 w4 w5"
        spans = [(0, 5, Label.INACCURATE), (9, 11, Label.ANALYSIS), (15, 17, Label.UNSURE)]
        record = make_record(text, spans)
        targets = segment_end_tokens(record, tokenize(text), "segment")
        assert targets == [
            (1, Label.INACCURATE),
            (2, Label.ACCURATE),
            (3, Label.ANALYSIS),
            (4, Label.ACCURATE),
            (5, Label.INACCURATE),  # unsure folds into inaccurate
        ]

    def test_whitespace_only_unit_skipped(self):
        # the gap between the two spans is the single space: overlaps no token
        text = "ab cd"
        record = make_record(text, [(0, 2, Label.INACCURATE), (3, 5, Label.ANALYSIS)])
        targets = segment_end_tokens(record, tokenize(text), "segment")
        assert targets == [(0, Label.INACCURATE), (1, Label.ANALYSIS)]

    def test_unknown_density_rejected(self):
        record = make_record("ab")
        with pytest.raises(ValueError):
            segment_end_tokens(record, tokenize("ab"), "word")


class TestMajorityLabel:
    def test_gap_is_accurate(self):
        assert majority_label(0, 4, []) is Label.ACCURATE

    def test_majority_wins(self):
        spans = [SpanAnnotation(0, 3, Label.INACCURATE), SpanAnnotation(3, 4, Label.ANALYSIS)]
        assert majority_label(0, 4, spans) is Label.INACCURATE

    def test_tie_goes_to_earlier_span(self):
        spans = [SpanAnnotation(0, 2, Label.ANALYSIS), SpanAnnotation(2, 4, Label.INACCURATE)]
        assert majority_label(0, 4, spans) is Label.ANALYSIS

    def test_tie_with_implicit_accurate(self):
        # span covers [2,4); [0,2) is an uncovered gap: tie, gap starts earlier
        spans = [SpanAnnotation(2, 4, Label.INACCURATE)]
        assert majority_label(0, 4, spans) is Label.ACCURATE

    def test_exhaustive_against_per_char_count(self):
        """Randomized cross-check against a naive per-character tally."""
        rng = random.Random(77)
        for record in random_corpus(77, 40):
            labels = [Label.ACCURATE] * len(record.response)
            for span in record.spans:
                for i in range(span.start, span.end):
                    labels[i] = span.label
            for token in tokenize(record.response):
                got = majority_label(token.start, token.end, record.spans)
                counts = {}
                for i in range(token.start, token.end):
                    counts[labels[i]] = counts.get(labels[i], 0) + 1
                best = max(counts.values())
                assert counts[got] == best
