"""Chat-corpus ingestion: conversation XML, ground-truth author lists,
labeled review trees, and the grouping/filtering steps between parsing and
training.

The XML dialect is one <conversations> root holding <conversation id="...">
elements, each a sequence of <message line="N"> elements with <author>,
<time>, and <text> children. Parsing streams through expat so malformed
input reports a byte offset; messages with missing or unusable fields are
skipped and counted rather than failing the file.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from pathlib import Path
from xml.parsers import expat
from xml.sax.saxutils import escape, quoteattr

from .errors import ConfigError, CorpusParseError
from .preprocessing import tokenize


@dataclass
class Message:
    author: str
    line_no: int
    time: str
    text: str


@dataclass
class Conversation:
    id: str
    messages: list[Message]

    def authors(self) -> list[str]:
        """Participants in first-appearance order."""
        seen: dict[str, None] = {}
        for m in self.messages:
            seen.setdefault(m.author, None)
        return list(seen)


@dataclass
class LabeledCorpus:
    conversations: list[Conversation]
    predator_ids: set[str]
    split: str = "train"


@dataclass
class AuthorDocument:
    author: str
    per_conversation_lines: dict[str, list[str]]

    def line_count(self) -> int:
        return sum(len(v) for v in self.per_conversation_lines.values())


@dataclass
class PanParseResult:
    conversations: list[Conversation]
    skipped_messages: int = 0
    issues: list[str] = field(default_factory=list)


class _PanHandler:
    def __init__(self):
        self.conversations: list[Conversation] = []
        self.skipped = 0
        self.issues: list[str] = []
        self._conv: Conversation | None = None
        self._line_attr: str | None = None
        self._fields: dict[str, str] = {}
        self._capture: str | None = None
        self._buf: list[str] = []

    def start(self, name, attrs):
        if name == "conversation":
            self._conv = Conversation(id=attrs.get("id", ""), messages=[])
            if "id" not in attrs:
                self.issues.append("conversation without id attribute")
        elif name == "message":
            self._line_attr = attrs.get("line")
            self._fields = {}
        elif name in ("author", "time", "text"):
            self._capture = name
            self._buf = []

    def end(self, name):
        if name in ("author", "time", "text"):
            self._fields[name] = "".join(self._buf)
            self._capture = None
        elif name == "message":
            self._finish_message()
        elif name == "conversation":
            if self._conv is not None:
                self.conversations.append(self._conv)
            self._conv = None

    def chars(self, data):
        if self._capture is not None:
            self._buf.append(data)

    def _finish_message(self):
        conv = self._conv
        if conv is None:
            return
        author = self._fields.get("author", "").strip()
        where = f"conversation {conv.id!r}"
        if not author:
            self.issues.append(f"{where}: message without author skipped")
            self.skipped += 1
            return
        if self._line_attr is None:
            self.issues.append(f"{where}: message without line attribute skipped")
            self.skipped += 1
            return
        try:
            line_no = int(self._line_attr)
        except ValueError:
            line_no = -1
        if line_no < 1:
            self.issues.append(f"{where}: bad line attribute "
                               f"{self._line_attr!r} skipped")
            self.skipped += 1
            return
        conv.messages.append(Message(author=author, line_no=line_no,
                                     time=self._fields.get("time", ""),
                                     text=self._fields.get("text", "")))


def parse_pan_corpus(source) -> PanParseResult:
    """Parse conversation XML from a path, bytes, or binary file object."""
    if isinstance(source, (str, Path)):
        with open(source, "rb") as fh:
            return _parse_stream(fh)
    if isinstance(source, bytes):
        return _parse_stream(io.BytesIO(source))
    return _parse_stream(source)


def _parse_stream(fh) -> PanParseResult:
    handler = _PanHandler()
    parser = expat.ParserCreate()
    parser.buffer_text = True
    parser.StartElementHandler = handler.start
    parser.EndElementHandler = handler.end
    parser.CharacterDataHandler = handler.chars
    try:
        parser.ParseFile(fh)
    except expat.ExpatError as exc:
        raise CorpusParseError(
            f"malformed XML: {expat.errors.messages[exc.code]} at line "
            f"{exc.lineno}, byte offset {parser.ErrorByteIndex}") from exc
    return PanParseResult(handler.conversations, handler.skipped, handler.issues)


def write_pan_corpus(conversations, path=None) -> bytes:
    """Serialize conversations to the XML dialect parse_pan_corpus reads.

    Returns the bytes; also writes them when a path is given.
    """
    parts = ['<?xml version="1.0" encoding="UTF-8"?>\n<conversations>\n']
    for conv in conversations:
        parts.append(f"  <conversation id={quoteattr(conv.id)}>\n")
        for m in conv.messages:
            parts.append(
                f'    <message line="{m.line_no}">\n'
                f"      <author>{escape(m.author)}</author>\n"
                f"      <time>{escape(m.time)}</time>\n"
                f"      <text>{escape(m.text)}</text>\n"
                f"    </message>\n")
        parts.append("  </conversation>\n")
    parts.append("</conversations>\n")
    data = "".join(parts).encode("utf-8")
    if path is not None:
        Path(path).write_bytes(data)
    return data


def parse_ground_truth(source) -> set[str]:
    """Newline-delimited author ids; trimmed, deduplicated, blanks skipped."""
    if isinstance(source, (str, Path)):
        text = Path(source).read_text(encoding="utf-8")
    elif isinstance(source, bytes):
        text = source.decode("utf-8")
    else:
        text = source.read()
    return {line.strip() for line in text.splitlines() if line.strip()}


def write_ground_truth(author_ids, path) -> None:
    lines = "".join(f"{a}\n" for a in sorted(author_ids))
    Path(path).write_text(lines, encoding="utf-8")


def load_review_tree(root) -> list[tuple[str, str]]:
    """Read pos/ and neg/ subdirectories of UTF-8 text files into
    (text, label) records, files in lexicographic order."""
    root = Path(root)
    records: list[tuple[str, str]] = []
    for label in ("pos", "neg"):
        sub = root / label
        if not sub.is_dir():
            raise ConfigError(f"review tree {root} is missing the {label}/ "
                              "subdirectory")
        for f in sorted(sub.iterdir()):
            if f.is_file():
                records.append((f.read_text(encoding="utf-8"), label))
    return records


def label_conversations(conversations,
                        predator_ids) -> list[tuple[Conversation, bool]]:
    """Positive iff any message author is a known predator."""
    return [(c, any(m.author in predator_ids for m in c.messages))
            for c in conversations]


@dataclass
class FilterReport:
    """Before/after corpus attributes in the four-row layout used by the
    filter stage's report file."""

    conversations_before: int = 0
    conversations_after: int = 0
    positive_before: int = 0
    positive_after: int = 0
    negative_before: int = 0
    negative_after: int = 0
    authors_before: int = 0
    authors_after: int = 0
    predators_before: int = 0
    predators_after: int = 0

    def format_table(self) -> str:
        rows = [
            ("Positive", self.positive_before, self.positive_after),
            ("Negative", self.negative_before, self.negative_after),
            ("Non-predators", self.authors_before - self.predators_before,
             self.authors_after - self.predators_after),
            ("Predators", self.predators_before, self.predators_after),
        ]
        lines = [f"{'':<16}{'Original':>12}{'Filtered':>12}"]
        for name, before, after in rows:
            lines.append(f"{name:<16}{before:>12}{after:>12}")
        return "\n".join(lines) + "\n"


def filter_corpus(labeled, predator_ids=None):
    """Drop messages that normalize to zero tokens, participants left with
    no lines, and conversations left empty. Texts must already be
    normalized. Returns (filtered labeled list, FilterReport)."""
    predator_ids = predator_ids or set()
    report = FilterReport()
    filtered: list[tuple[Conversation, bool]] = []
    authors_before: set[str] = set()
    authors_after: set[str] = set()
    for conv, positive in labeled:
        report.conversations_before += 1
        if positive:
            report.positive_before += 1
        else:
            report.negative_before += 1
        authors_before.update(m.author for m in conv.messages)
        kept = [m for m in conv.messages if tokenize(m.text)]
        if not kept:
            continue
        authors_after.update(m.author for m in kept)
        filtered.append((Conversation(conv.id, kept), positive))
        report.conversations_after += 1
        if positive:
            report.positive_after += 1
        else:
            report.negative_after += 1
    report.authors_before = len(authors_before)
    report.authors_after = len(authors_after)
    report.predators_before = len(authors_before & predator_ids)
    report.predators_after = len(authors_after & predator_ids)
    return filtered, report


def group_by_author(labeled) -> list[AuthorDocument]:
    """One document per author, lines keyed by conversation id, original
    order preserved."""
    docs: dict[str, AuthorDocument] = {}
    for conv, _positive in labeled:
        for m in conv.messages:
            doc = docs.get(m.author)
            if doc is None:
                doc = AuthorDocument(m.author, {})
                docs[m.author] = doc
            doc.per_conversation_lines.setdefault(conv.id, []).append(m.text)
    return list(docs.values())


def corpus_message_count(labeled) -> int:
    return sum(len(c.messages) for c, _ in labeled)


def author_line_total(docs) -> int:
    return sum(d.line_count() for d in docs)
