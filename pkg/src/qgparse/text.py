"""Tokenization and the deterministic token-feature provider."""

from __future__ import annotations

import hashlib
import re
from typing import NamedTuple, Sequence

import numpy as np

from .gsg.numeric import H_RB, QuestionEncoding

CLS = "[CLS]"
SEP = "[SEP]"

_TOKEN = re.compile(r"\w+(?:['’]\w+)*|[^\w\s]")


class Token(NamedTuple):
    text: str
    start: int  # character offsets into the question
    end: int


def tokenize(question: str) -> list[Token]:
    """Split on whitespace and punctuation; word-internal apostrophes stay."""
    return [Token(m.group(0), m.start(), m.end()) for m in _TOKEN.finditer(question)]


def table_tokens(question: str) -> list[str]:
    """[CLS] + question tokens + [SEP], the axis of every score table."""
    return [CLS] + [t.text for t in tokenize(question)] + [SEP]


def words(text: str) -> list[str]:
    return [t.text.lower() for t in tokenize(text) if t.text[0].isalnum()]


class HashFeatureProvider:
    """Stand-in for a pretrained encoder.

    Row i is a standard normal vector drawn from a generator seeded by a
    hash of (seed, token text, position), so features are reproducible
    across processes and platforms.
    """

    def __init__(self, width: int = H_RB, seed: int = 0):
        self.width = width
        self.seed = seed

    def _row(self, token: str, position: int) -> np.ndarray:
        digest = hashlib.blake2b(f"{self.seed}\x1f{token}\x1f{position}".encode("utf-8"),
                                 digest_size=16).digest()
        rng = np.random.default_rng(int.from_bytes(digest, "little"))
        return rng.standard_normal(self.width)

    def encode(self, tokens: Sequence[str]) -> QuestionEncoding:
        feats = np.stack([self._row(t, i) for i, t in enumerate(tokens)])
        return QuestionEncoding(list(tokens), feats)
