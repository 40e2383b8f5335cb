import pytest

from chatscreen.corpus_io import (Conversation, Message, author_line_total,
                                  corpus_message_count, filter_corpus,
                                  group_by_author, label_conversations,
                                  load_review_tree, parse_ground_truth,
                                  parse_pan_corpus, write_ground_truth,
                                  write_pan_corpus)
from chatscreen.errors import ConfigError, CorpusParseError

SMALL_XML = b"""<?xml version="1.0" encoding="UTF-8"?>
<conversations>
  <conversation id="conv-1">
    <message line="1">
      <author>alice</author>
      <time>02:31</time>
      <text>hello &amp; welcome</text>
    </message>
    <message line="2">
      <author>bob</author>
      <time>02:32</time>
      <text></text>
    </message>
  </conversation>
</conversations>
"""


class TestParsePanCorpus:
    def test_round_trips_exactly(self):
        first = parse_pan_corpus(SMALL_XML)
        assert first.skipped_messages == 0
        rewritten = write_pan_corpus(first.conversations)
        second = parse_pan_corpus(rewritten)
        assert second.conversations == first.conversations
        conv = first.conversations[0]
        assert conv.id == "conv-1"
        assert [m.author for m in conv.messages] == ["alice", "bob"]
        assert conv.messages[0].text == "hello & welcome"
        assert conv.messages[1].text == ""  # empty text preserved

    def test_empty_conversations_element(self):
        result = parse_pan_corpus(b"<conversations></conversations>")
        assert result.conversations == []

    def test_message_without_author_skipped_and_counted(self):
        xml = b"""<conversations>
          <conversation id="a"><message line="1"><author>x</author>
            <time>1</time><text>hi</text></message></conversation>
          <conversation id="b"><message line="1">
            <time>1</time><text>orphan</text></message>
            <message line="2"><author>y</author><time>2</time>
            <text>ok</text></message></conversation>
          <conversation id="c"><message line="1"><author>z</author>
            <time>3</time><text>yo</text></message></conversation>
        </conversations>"""
        result = parse_pan_corpus(xml)
        assert len(result.conversations) == 3
        assert result.skipped_messages == 1
        assert any("b" in issue for issue in result.issues)
        assert len(result.conversations[1].messages) == 1

    def test_malformed_xml_reports_byte_offset(self):
        bad = b"<conversations><conversation id='x'>"
        with pytest.raises(CorpusParseError, match="byte offset"):
            parse_pan_corpus(bad)

    def test_bad_line_attribute_skipped(self):
        xml = b"""<conversations><conversation id="a">
          <message line="zero"><author>x</author><time>1</time>
          <text>hi</text></message></conversation></conversations>"""
        result = parse_pan_corpus(xml)
        assert result.skipped_messages == 1


class TestGroundTruth:
    def test_dedupe_and_trim(self):
        ids = parse_ground_truth(b"abc\n  def  \nabc\n")
        assert ids == {"abc", "def"}

    def test_empty_file(self):
        assert parse_ground_truth(b"\n\n") == set()

    def test_hex_id_verbatim(self):
        raw = b"004ed4354a09e2c33117335adb24e333\n"
        assert parse_ground_truth(raw) == {"004ed4354a09e2c33117335adb24e333"}

    def test_write_read_round_trip(self, tmp_path):
        path = tmp_path / "truth.txt"
        write_ground_truth({"b", "a"}, path)
        assert path.read_text() == "a\nb\n"
        assert parse_ground_truth(path) == {"a", "b"}


class TestReviewTree:
    def test_labels_from_directories(self, tmp_path):
        (tmp_path / "pos").mkdir()
        (tmp_path / "neg").mkdir()
        (tmp_path / "pos" / "a.txt").write_text("good")
        (tmp_path / "pos" / "b.txt").write_text("great")
        (tmp_path / "neg" / "c.txt").write_text("bad")
        records = load_review_tree(tmp_path)
        assert records == [("good", "pos"), ("great", "pos"), ("bad", "neg")]

    def test_empty_directories(self, tmp_path):
        (tmp_path / "pos").mkdir()
        (tmp_path / "neg").mkdir()
        assert load_review_tree(tmp_path) == []

    def test_missing_subdirectory(self, tmp_path):
        (tmp_path / "pos").mkdir()
        with pytest.raises(ConfigError):
            load_review_tree(tmp_path)

    def test_deterministic_ordering(self, tmp_path):
        (tmp_path / "pos").mkdir()
        (tmp_path / "neg").mkdir()
        for name in ("z.txt", "a.txt", "m.txt"):
            (tmp_path / "pos" / name).write_text(name)
        first = load_review_tree(tmp_path)
        second = load_review_tree(tmp_path)
        assert first == second
        assert [t for t, _ in first] == ["a.txt", "m.txt", "z.txt"]


def conv(conv_id, *author_text_pairs):
    messages = [Message(author=a, line_no=i + 1, time=f"00:{i:02d}", text=t)
                for i, (a, t) in enumerate(author_text_pairs)]
    return Conversation(id=conv_id, messages=messages)


class TestLabeling:
    def test_single_predator_message_is_positive(self):
        labeled = label_conversations([conv("c", ("p", "hi"), ("v", "yo"))],
                                      {"p"})
        assert labeled[0][1] is True

    def test_no_predators_negative(self):
        labeled = label_conversations([conv("c", ("a", "hi"))], {"p"})
        assert labeled[0][1] is False

    def test_fixture_enumeration(self):
        convs = [conv("c1", ("a", "x")), conv("c2", ("p1", "x")),
                 conv("c3", ("b", "x")), conv("c4", ("b", "x"), ("p2", "y")),
                 conv("c5", ("c", "x"))]
        labeled = label_conversations(convs, {"p1", "p2"})
        positives = {c.id for c, pos in labeled if pos}
        assert positives == {"c2", "c4"}

    def test_monotone_in_predator_set(self):
        convs = [conv("c1", ("a", "x"), ("b", "y")), conv("c2", ("c", "z"))]
        small = label_conversations(convs, {"a"})
        large = label_conversations(convs, {"a", "c"})
        for (_, was), (_, now) in zip(small, large):
            assert now or not was


class TestFilterCorpus:
    def test_emoticon_only_conversation_dropped(self):
        # ":)" normalizes to an empty string upstream of the filter
        labeled = [(conv("c", ("a", "")), False)]
        filtered, report = filter_corpus(labeled)
        assert filtered == []
        assert report.conversations_before == 1
        assert report.conversations_after == 0

    def test_normal_conversation_retained(self):
        labeled = [(conv("c", ("a", "hello there")), False)]
        filtered, _ = filter_corpus(labeled)
        assert len(filtered) == 1

    def test_counts_reported(self):
        labeled = []
        for i in range(7):
            labeled.append((conv(f"keep{i}", ("a", "words here")), i < 2))
        for i in range(3):
            labeled.append((conv(f"drop{i}", ("b", "")), False))
        filtered, report = filter_corpus(labeled, predator_ids={"a"})
        assert len(filtered) == 7
        assert report.conversations_before == 10
        assert report.conversations_after == 7
        assert report.positive_before == 2 and report.positive_after == 2
        table = report.format_table()
        assert "Original" in table and "Filtered" in table
        assert "Predators" in table

    def test_participant_with_only_empty_lines_dropped(self):
        labeled = [(conv("c", ("a", "hello"), ("ghost", "")), False)]
        filtered, _ = filter_corpus(labeled)
        authors = {m.author for m in filtered[0][0].messages}
        assert authors == {"a"}


class TestGroupByAuthor:
    def test_two_authors_two_documents(self):
        labeled = [(conv("c", ("a", "one"), ("b", "two")), False)]
        docs = group_by_author(labeled)
        assert sorted(d.author for d in docs) == ["a", "b"]

    def test_author_across_conversations(self):
        labeled = [(conv("c1", ("a", "one")), False),
                   (conv("c2", ("a", "two")), False)]
        docs = group_by_author(labeled)
        assert len(docs) == 1
        assert set(docs[0].per_conversation_lines) == {"c1", "c2"}

    def test_interleaved_lines_keep_order(self):
        labeled = [(conv("c", ("a", "first"), ("b", "noise"), ("a", "second"),
                         ("a", "third")), False)]
        docs = {d.author: d for d in group_by_author(labeled)}
        assert docs["a"].per_conversation_lines["c"] == ["first", "second",
                                                         "third"]

    def test_line_totals_match_message_totals(self):
        labeled = [(conv("c1", ("a", "x"), ("b", "y"), ("a", "z")), False),
                   (conv("c2", ("b", "w")), True)]
        docs = group_by_author(labeled)
        assert author_line_total(docs) == corpus_message_count(labeled)


class TestReviewTreeFeedsModelPath:
    def test_reviews_flow_through_vocab_and_sentence_vectors(self, tmp_path):
        """Review records normalize, build a vocabulary (one review = one
        document), and yield sentence vectors through the same machinery
        the chat path uses."""
        from chatscreen.core_math import Rng
        from chatscreen.language_model import LanguageModel, sentence_vector
        from chatscreen.preprocessing import (build_vocabulary, encode,
                                              normalize_text, tokenize)

        (tmp_path / "pos").mkdir()
        (tmp_path / "neg").mkdir()
        (tmp_path / "pos" / "a.txt").write_text("a great great movie :)")
        (tmp_path / "pos" / "b.txt").write_text("great fun for 12 yrs")
        (tmp_path / "neg" / "c.txt").write_text("dull dull dull movie")
        records = load_review_tree(tmp_path)
        docs = [tokenize(normalize_text(text)) for text, _label in records]
        vocab = build_vocabulary(docs, min_tf=1)
        assert "great" in vocab.index_of and "00NUM" in vocab.index_of
        model = LanguageModel.create(vocab, 4, 4, window=50, rng=Rng(3))
        for doc, (_text, label) in zip(docs, records):
            assert label in ("pos", "neg")
            vec = sentence_vector(model, doc)
            assert vec.values.shape == (4,)
            assert vec.source_len == len(encode(doc, vocab, 50))
