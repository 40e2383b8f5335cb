"""Text normalization, tokenization, vocabulary construction, and integer
encoding.

Normalization applies six rules in a fixed order: strip non-ASCII, remove
emoticons, replace URLs with 00URL, replace over-long tokens with 00LW,
replace numeric tokens with 00NUM, lowercase, then recover chat
abbreviations (including collapsing letter runs of three or more, so
"sorryyyy" becomes "sorry"). URLs are handled before numbers so digits
inside a URL are not rewritten twice. The result is idempotent: a second
pass changes nothing.

Vocabularies keep six reserved entries at fixed indices and order the rest
by descending tf-idf weight, ties broken lexicographically, after dropping
tokens below the minimum term frequency.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources

from .errors import ConfigError, UsageError

NUM_TOKEN = "00NUM"
LONGWORD_TOKEN = "00LW"
URL_TOKEN = "00URL"
PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"
EOS_TOKEN = "<eos>"

RESERVED_TOKENS = (PAD_TOKEN, UNK_TOKEN, EOS_TOKEN,
                   NUM_TOKEN, LONGWORD_TOKEN, URL_TOKEN)
_PLACEHOLDERS = {NUM_TOKEN, LONGWORD_TOKEN, URL_TOKEN}

DEFAULT_MIN_TF = 10
DEFAULT_LONG_WORD_LIMIT = 30

_URL_RE = re.compile(r"(?:(?:https?|ftp)://|www\.)\S*", re.IGNORECASE)
_NUMBER_RE = re.compile(r"[+-]?(?:\d+\.?\d*|\.\d+)")
_ELONGATION_RE = re.compile(r"(.)\1{2,}")
_TOKEN_RE = re.compile(r"[A-Za-z0-9]+|[^A-Za-z0-9\s]")


@dataclass
class NormRuleSet:
    """Normalization tables: abbreviation map, emoticon patterns, length cap."""

    abbreviation_map: dict[str, str]
    emoticon_patterns: list[re.Pattern]
    long_word_limit: int = DEFAULT_LONG_WORD_LIMIT


def load_abbreviations(path) -> dict[str, str]:
    """Parse a short<TAB>expansion table; '#' starts a comment line."""
    table: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            if "\t" not in line:
                raise ConfigError(f"{path}:{lineno}: expected short<TAB>expansion")
            short, expansion = line.split("\t", 1)
            short = short.strip()
            if short != short.lower() or " " in short:
                raise ConfigError(f"{path}:{lineno}: abbreviation keys must be "
                                  "lowercase single tokens")
            table[short] = expansion.strip().lower()
    return table


def load_emoticon_patterns(path) -> list[re.Pattern]:
    """One regular expression per line; a whitespace-delimited token is
    removed when a pattern matches the entire token. '#' comments."""
    patterns = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            try:
                patterns.append(re.compile(line))
            except re.error as exc:
                raise ConfigError(f"{path}:{lineno}: bad pattern: {exc}") from exc
    return patterns


_default_rules: NormRuleSet | None = None


def default_rules() -> NormRuleSet:
    """Rule set backed by the data files shipped with the package."""
    global _default_rules
    if _default_rules is None:
        data = resources.files("chatscreen") / "data"
        _default_rules = NormRuleSet(
            abbreviation_map=load_abbreviations(data / "abbreviations.tsv"),
            emoticon_patterns=load_emoticon_patterns(data / "emoticons.txt"))
    return _default_rules


def _split_punctuation(token: str):
    i, j = 0, len(token)
    while i < j and not token[i].isalnum():
        i += 1
    while j > i and not token[j - 1].isalnum():
        j -= 1
    return token[:i], token[i:j], token[j:]


def _recover_abbreviation(core: str, table: dict[str, str]) -> str:
    if core in table:
        return table[core]
    collapsed = _ELONGATION_RE.sub(r"\1", core)
    if collapsed != core:
        return table.get(collapsed, collapsed)
    return core


def normalize_text(raw: str, rules: NormRuleSet | None = None) -> str:
    """Apply the normalization rules; total function, empty in -> empty out."""
    if rules is None:
        rules = default_rules()
    ascii_text = raw.encode("ascii", "ignore").decode("ascii")
    out: list[str] = []
    for token in ascii_text.split():
        if any(p.fullmatch(token) for p in rules.emoticon_patterns):
            continue
        if _URL_RE.fullmatch(token):
            out.append(URL_TOKEN)
            continue
        prefix, core, suffix = _split_punctuation(token)
        if core and core not in _PLACEHOLDERS:
            if len(core) > rules.long_word_limit:
                core = LONGWORD_TOKEN
            elif _NUMBER_RE.fullmatch(token):
                # signed number: the sign sits outside the alnum core
                out.append(NUM_TOKEN)
                continue
            elif _NUMBER_RE.fullmatch(core):
                core = NUM_TOKEN
            else:
                core = _recover_abbreviation(core.lower(),
                                             rules.abbreviation_map)
        rebuilt = prefix + core + suffix
        if rebuilt:
            out.append(rebuilt)
    return " ".join(out)


def tokenize(normalized: str) -> list[str]:
    """Whitespace split with punctuation characters as their own tokens."""
    return _TOKEN_RE.findall(normalized)


@dataclass
class Vocabulary:
    """Token-to-index map with reserved symbols pinned at indices 0-5."""

    tokens: list[str]
    min_term_frequency: int = DEFAULT_MIN_TF
    index_of: dict[str, int] = field(init=False, repr=False)

    PAD = 0
    UNK = 1
    EOS = 2
    NUM = 3
    LONGWORD = 4
    URL = 5

    def __post_init__(self):
        if tuple(self.tokens[:len(RESERVED_TOKENS)]) != RESERVED_TOKENS:
            raise UsageError("vocabulary must start with the reserved symbols "
                             f"{RESERVED_TOKENS}")
        self.index_of = {tok: i for i, tok in enumerate(self.tokens)}
        if len(self.index_of) != len(self.tokens):
            raise UsageError("vocabulary contains duplicate tokens")

    def __len__(self) -> int:
        return len(self.tokens)

    def lookup(self, token: str) -> int:
        return self.index_of.get(token, self.UNK)


def build_vocabulary(documents, min_tf: int = DEFAULT_MIN_TF) -> Vocabulary:
    """Count term and document frequencies over token-list documents, drop
    tokens with tf < min_tf, and order survivors by tf * ln(N/df)
    descending (ties lexicographic)."""
    if min_tf < 1:
        raise UsageError(f"min_tf must be >= 1, got {min_tf}")
    documents = list(documents)
    if not documents:
        raise UsageError("build_vocabulary: empty corpus")
    tf: Counter = Counter()
    df: Counter = Counter()
    for doc in documents:
        tf.update(doc)
        df.update(set(doc))
    n_docs = len(documents)
    reserved = set(RESERVED_TOKENS)
    weight = {}
    for token, count in tf.items():
        if token in reserved or count < min_tf:
            continue
        weight[token] = count * math.log(n_docs / df[token])
    ordered = sorted(weight, key=lambda t: (-weight[t], t))
    return Vocabulary(list(RESERVED_TOKENS) + ordered, min_term_frequency=min_tf)


def encode(tokens, vocab: Vocabulary, max_len: int) -> list[int]:
    """Map tokens to indices (unknown -> UNK), append EOS, truncate to
    max_len. Never pads; that is the consumer's concern."""
    if max_len < 1:
        raise UsageError(f"encode: max_len must be >= 1, got {max_len}")
    ids = [vocab.lookup(t) for t in tokens]
    ids.append(Vocabulary.EOS)
    return ids[:max_len]


def vocab_to_lines(vocab: Vocabulary) -> list[str]:
    return [f"#min_tf={vocab.min_term_frequency}"] + list(vocab.tokens)


def vocab_from_lines(lines) -> Vocabulary:
    min_tf = DEFAULT_MIN_TF
    tokens = []
    for line in lines:
        line = line.rstrip("\n")
        if line.startswith("#min_tf="):
            min_tf = int(line.split("=", 1)[1])
            continue
        if line:
            tokens.append(line)
    return Vocabulary(tokens, min_term_frequency=min_tf)
