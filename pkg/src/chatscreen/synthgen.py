"""Deterministic synthetic chat-corpus generator.

Emits the same XML and ground-truth formats the corpus reader consumes,
with a planted predator pattern: in each positive conversation one
participant (the predator, listed in the ground truth) salts their lines
with tokens from a marker pool, and the other participant draws from a
separate victim-marker pool.

Token pools are rings and every line is a walk: each token is, with high
probability, the ring successor of the previous token from the same pool.
That gives the corpus real sequential structure, so a language model
trained on it must keep ring position (including marker-ring position) in
its hidden state, which is what makes the sentence vectors carry class
signal. Everything is driven by one seeded generator; a fixed seed
reproduces the corpus byte for byte.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .core_math import Rng
from .corpus_io import Conversation, Message, write_pan_corpus
from .errors import UsageError


def _syllables() -> list[str]:
    return [c + v for c in "bcdfghklmnprstv" for v in "aeiou"]


def _default_background(count: int = 240) -> tuple[str, ...]:
    syl = _syllables()
    words = []
    for a in syl:
        for b in syl:
            words.append(a + b)
            if len(words) == count:
                return tuple(words)
    return tuple(words)


def _default_markers(prefix: str, count: int = 8) -> tuple[str, ...]:
    # 'z'/'j' are not background consonants, so these cannot collide
    return tuple(prefix + s for s in _syllables()[:count])


@dataclass
class SynthSpec:
    seed: int
    n_conversations: int = 500
    predator_fraction: float = 0.05
    background_pool: tuple[str, ...] = field(default_factory=_default_background)
    predator_pool: tuple[str, ...] = field(
        default_factory=lambda: _default_markers("zu"))
    victim_pool: tuple[str, ...] = field(
        default_factory=lambda: _default_markers("ju"))
    geometric_p: float = 0.08      # message-count distribution over 1..500
    max_length: int = 500
    marker_density: float = 0.3    # marker share of each predator line
    victim_marker_density: float = 0.2

    def validate(self) -> None:
        if not 0.0 <= self.predator_fraction < 1.0:
            raise UsageError(f"predator_fraction must be in [0, 1), got "
                             f"{self.predator_fraction}")
        if not (self.background_pool and self.predator_pool
                and self.victim_pool):
            raise UsageError("token pools must be non-empty")
        pools = (set(self.background_pool) | set(self.predator_pool)
                 | set(self.victim_pool))
        total = (len(self.background_pool) + len(self.predator_pool)
                 + len(self.victim_pool))
        if len(pools) != total:
            raise UsageError("token pools must be disjoint")
        if self.n_conversations < 1:
            raise UsageError("n_conversations must be >= 1")


@dataclass
class SynthResult:
    xml_bytes: bytes
    predator_ids: list[str]        # sorted
    conversations: list[Conversation]
    positive_conversation_ids: list[str]


RING_ADVANCE = 0.85  # chance the next token from a ring is the successor


class _RingWalk:
    """Seeded walk over a token ring: successor with RING_ADVANCE
    probability, otherwise a jump to a fresh position."""

    def __init__(self, pool, rng: Rng):
        self.pool = pool
        self.rng = rng
        self.pos = rng.choice_index(len(pool))

    def emit(self) -> str:
        if self.rng.random() < RING_ADVANCE:
            self.pos = (self.pos + 1) % len(self.pool)
        else:
            self.pos = self.rng.choice_index(len(self.pool))
        return self.pool[self.pos]


def generate(spec: SynthSpec) -> SynthResult:
    """Build the corpus; round(n * fraction) conversations are positive
    (round half to even, matching Python's round)."""
    spec.validate()
    rng = Rng(spec.seed)
    n_positive = round(spec.n_conversations * spec.predator_fraction)
    positive_slots = set(int(i) for i in
                         rng.permutation(spec.n_conversations)[:n_positive])
    predators: list[str] = []
    positive_ids: list[str] = []
    conversations: list[Conversation] = []
    for slot in range(spec.n_conversations):
        conv_id = rng.hex_id()
        author_a = rng.hex_id()
        author_b = rng.hex_id()
        positive = slot in positive_slots
        if positive:
            predators.append(author_a)
            positive_ids.append(conv_id)
        n_messages = min(rng.geometric(spec.geometric_p), spec.max_length)
        minute = int(rng.integers(0, 1440))
        background = _RingWalk(spec.background_pool, rng)
        predator_walk = _RingWalk(spec.predator_pool, rng)
        victim_walk = _RingWalk(spec.victim_pool, rng)
        messages = []
        for line_no in range(1, n_messages + 1):
            if line_no == 1:
                author = author_a
            else:
                author = author_a if rng.random() < 0.5 else author_b
            n_tokens = 3 + int(rng.integers(0, 8))
            tokens = []
            for _ in range(n_tokens):
                roll = rng.random()
                if positive and author == author_a and roll < spec.marker_density:
                    walk = predator_walk
                elif (positive and author == author_b
                      and roll < spec.victim_marker_density):
                    walk = victim_walk
                else:
                    walk = background
                tokens.append(walk.emit())
            stamp = (minute + line_no - 1) % 1440
            messages.append(Message(author=author, line_no=line_no,
                                    time=f"{stamp // 60:02d}:{stamp % 60:02d}",
                                    text=" ".join(tokens)))
        conversations.append(Conversation(id=conv_id, messages=messages))
    xml_bytes = write_pan_corpus(conversations)
    return SynthResult(xml_bytes=xml_bytes, predator_ids=sorted(predators),
                       conversations=conversations,
                       positive_conversation_ids=positive_ids)
