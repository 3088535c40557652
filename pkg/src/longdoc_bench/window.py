"""Overlapping sliding windows over token sequences."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .tokenizer import PAD, TokenSequence


@dataclass(frozen=True)
class WindowingConfig:
    """``window_len == 0`` means the whole document is a single window."""

    window_len: int = 512
    overlap: float = 0.2

    def __post_init__(self):
        if self.window_len != 0 and self.window_len < 2:
            raise ValueError(f"window_len must be >= 2 (or 0 for whole-document), got {self.window_len}")
        if not 0.0 <= self.overlap < 1.0:
            raise ValueError(f"overlap must lie in [0, 1), got {self.overlap}")

    @property
    def whole_document(self) -> bool:
        return self.window_len == 0

    @property
    def stride(self) -> int:
        # floor keeps the realised overlap at or above the requested fraction
        return max(1, math.floor(self.window_len * (1.0 - self.overlap) + 1e-9))


@dataclass(frozen=True)
class WindowSet:
    doc_id: str
    spans: list[tuple[int, int]]
    padded_ids: np.ndarray  # (n_windows, L)
    masks: np.ndarray  # (n_windows, L) bool

    def __len__(self) -> int:
        return len(self.spans)

    @property
    def n_tokens(self) -> int:
        """Real tokens across all windows, overlap counted once per window."""
        return int(self.masks.sum())


def window_count(length: int, cfg: WindowingConfig) -> int:
    if length < 1:
        raise ValueError("length must be >= 1")
    if cfg.whole_document or length <= cfg.window_len:
        return 1
    return -(-(length - cfg.window_len) // cfg.stride) + 1


def window_spans(length: int, cfg: WindowingConfig) -> list[tuple[int, int]]:
    if length < 1:
        raise ValueError("length must be >= 1")
    if cfg.whole_document or length <= cfg.window_len:
        return [(0, length)]
    L, s = cfg.window_len, cfg.stride
    spans = []
    start = 0
    while True:
        end = min(start + L, length)
        spans.append((start, end))
        if end == length:
            return spans
        start += s


def make_windows(tokens: TokenSequence, cfg: WindowingConfig) -> WindowSet:
    ids = np.asarray(tokens.ids)
    spans = window_spans(len(ids), cfg)
    L = len(ids) if cfg.whole_document else cfg.window_len
    padded = np.full((len(spans), L), PAD, dtype=np.int64)
    masks = np.zeros((len(spans), L), dtype=bool)
    for i, (a, b) in enumerate(spans):
        padded[i, : b - a] = ids[a:b]
        masks[i, : b - a] = True
    return WindowSet(tokens.doc_id, spans, padded, masks)
