"""Shared word-level tokenizer with a frequency-ranked vocabulary."""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

PAD, UNK, BOS, EOS = 0, 1, 2, 3
N_RESERVED = 4
RESERVED_NAMES = ("<pad>", "<unk>", "<bos>", "<eos>")

# word runs, or a single punctuation character
TOKEN_RE = re.compile(r"\w+|[^\w\s]")


def split_text(text: str) -> list[str]:
    return TOKEN_RE.findall(text.lower())


@dataclass(frozen=True)
class Vocab:
    tokens: tuple[str, ...]  # corpus tokens, ids 4..V-1 in order
    stoi: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "stoi", {t: i + N_RESERVED for i, t in enumerate(self.tokens)})

    @property
    def size(self) -> int:
        return len(self.tokens) + N_RESERVED

    def __len__(self) -> int:
        return self.size

    def lookup(self, token: str) -> int:
        return self.stoi.get(token, UNK)

    def save(self, path: str | Path) -> None:
        lines = list(RESERVED_NAMES) + list(self.tokens)
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Vocab":
        lines = Path(path).read_text(encoding="utf-8").split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        if tuple(lines[:N_RESERVED]) != RESERVED_NAMES:
            raise ValueError(f"{path}: missing reserved header lines")
        return cls(tuple(lines[N_RESERVED:]))


@dataclass(frozen=True)
class TokenSequence:
    doc_id: str
    ids: np.ndarray

    @property
    def length(self) -> int:
        return int(self.ids.shape[0])


def build_vocab(texts: Iterable[str], size: int) -> Vocab:
    """Keep the ``size - 4`` most frequent surface tokens; ties break lexicographically."""
    if size < 5:
        raise ValueError("vocab size must be >= 5")
    counts: Counter[str] = Counter()
    n_texts = 0
    for text in texts:
        counts.update(split_text(text))
        n_texts += 1
    if n_texts == 0:
        raise ValueError("cannot build a vocab from no documents")
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return Vocab(tuple(tok for tok, _ in ranked[: size - N_RESERVED]))


def tokenize(text: str, vocab: Vocab, doc_id: str = "") -> TokenSequence:
    if not text:
        raise ValueError("cannot tokenize empty text")
    words = split_text(text)
    if not words:
        raise ValueError(f"text of {doc_id or 'document'} contains no tokens")
    ids = np.fromiter((vocab.lookup(w) for w in words), dtype=np.int64, count=len(words))
    return TokenSequence(doc_id, ids)
