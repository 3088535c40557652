"""Document ingestion, label vocabularies, deterministic splits and synthetic corpora."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

TASK_KINDS = ("multilabel", "singlelabel", "retrieval")
SPLITS = ("train", "validation", "test", "unassigned")


class CorpusError(ValueError):
    pass


@dataclass(frozen=True)
class Document:
    id: str
    text: str
    labels: tuple[str, ...] = ()
    relevant_ids: frozenset[str] | None = None
    split: str = "unassigned"

    def __post_init__(self):
        if not self.id:
            raise CorpusError("document id must be non-empty")
        if not self.text:
            raise CorpusError(f"document {self.id!r} has empty text")
        if self.split not in SPLITS:
            raise CorpusError(f"unknown split {self.split!r}")
        if self.relevant_ids is not None and self.id in self.relevant_ids:
            raise CorpusError(f"document {self.id!r} lists itself as relevant")

    def with_split(self, split: str) -> "Document":
        return Document(self.id, self.text, self.labels, self.relevant_ids, split)

    def to_record(self) -> dict:
        rec = {"id": self.id, "text": self.text, "labels": list(self.labels)}
        if self.relevant_ids is not None:
            rec["relevant_ids"] = sorted(self.relevant_ids)
        return rec


@dataclass
class LabelVocab:
    """Lexicographically ordered label set with a dense index."""

    labels: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.labels = sorted(set(self.labels))
        self.index = {lab: i for i, lab in enumerate(self.labels)}

    def __len__(self) -> int:
        return len(self.labels)

    def add(self, label: str) -> None:
        if label not in self.index:
            self.labels = sorted(self.labels + [label])
            self.index = {lab: i for i, lab in enumerate(self.labels)}

    @classmethod
    def from_documents(cls, docs: Iterable[Document]) -> "LabelVocab":
        return cls([lab for d in docs for lab in d.labels])

    def encode(self, labels: Iterable[str]) -> np.ndarray:
        """Multi-hot indicator vector over the vocabulary."""
        out = np.zeros(len(self.labels), dtype=np.int8)
        for lab in labels:
            out[self.index[lab]] = 1
        return out


@dataclass(frozen=True)
class SplitSpec:
    train_frac: float = 0.70
    val_frac: float = 0.15
    test_frac: float = 0.15
    seed: int = 0

    def __post_init__(self):
        fracs = (self.train_frac, self.val_frac, self.test_frac)
        if any(f < 0 or f > 1 for f in fracs):
            raise CorpusError(f"split fractions must lie in [0, 1], got {fracs}")
        if abs(sum(fracs) - 1.0) > 1e-9:
            raise CorpusError(f"split fractions must sum to 1, got {sum(fracs)!r}")
        if self.seed < 0:
            raise CorpusError("split seed must be unsigned")


def load_corpus(path: str | Path, task_kind: str) -> tuple[list[Document], LabelVocab]:
    """Read a line-delimited JSON corpus. Returns documents in file order and the label vocab."""
    if task_kind not in TASK_KINDS:
        raise CorpusError(f"unknown task kind {task_kind!r}")
    docs: list[Document] = []
    seen: set[str] = set()
    vocab = LabelVocab()
    raw = Path(path).read_bytes()
    try:
        content = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise CorpusError(f"{path}: not valid UTF-8 ({exc})") from None
    for lineno, line in enumerate(content.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            doc = _parse_record(line, task_kind)
        except (CorpusError, json.JSONDecodeError, TypeError) as exc:
            raise CorpusError(f"{path}:{lineno}: {exc}") from None
        if doc.id in seen:
            raise CorpusError(f"{path}:{lineno}: duplicate document id {doc.id!r}")
        seen.add(doc.id)
        for lab in doc.labels:
            vocab.add(lab)
        docs.append(doc)
    if task_kind == "retrieval":
        for doc in docs:
            missing = (doc.relevant_ids or frozenset()) - seen
            if missing:
                raise CorpusError(f"{path}: {doc.id!r} references unknown ids {sorted(missing)}")
    return docs, vocab


def _parse_record(line: str, task_kind: str) -> Document:
    rec = json.loads(line)
    if not isinstance(rec, dict):
        raise CorpusError("record is not an object")
    for key in ("id", "text", "labels"):
        if key not in rec:
            raise CorpusError(f"missing field {key!r}")
    if not isinstance(rec["id"], str) or not isinstance(rec["text"], str):
        raise CorpusError("fields 'id' and 'text' must be strings")
    labels = rec["labels"]
    if not isinstance(labels, list) or not all(isinstance(x, str) for x in labels):
        raise CorpusError("'labels' must be an array of strings")
    if task_kind == "singlelabel" and len(labels) != 1:
        raise CorpusError(f"single-label record {rec['id']!r} has {len(labels)} labels")
    rel = rec.get("relevant_ids")
    if rel is not None:
        if not isinstance(rel, list) or not all(isinstance(x, str) for x in rel):
            raise CorpusError("'relevant_ids' must be an array of strings")
        rel = frozenset(rel)
    extra = set(rec) - {"id", "text", "labels", "relevant_ids"}
    if extra:
        raise CorpusError(f"unknown fields {sorted(extra)}")
    # order-preserving dedupe keeps round-trips byte-equal
    return Document(rec["id"], rec["text"], tuple(dict.fromkeys(labels)), rel)


def save_corpus(docs: Sequence[Document], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for doc in docs:
            fh.write(json.dumps(doc.to_record(), ensure_ascii=False) + "\n")


def _split_key(doc_id: str, seed: int) -> bytes:
    return hashlib.sha256(f"{seed}\x00{doc_id}".encode("utf-8")).digest()


def largest_remainder(n: int, fracs: Sequence[float]) -> list[int]:
    """Apportion ``n`` items to ``fracs``; leftover units go to the largest remainders, earlier index first on ties."""
    quotas = [n * f for f in fracs]
    counts = [math.floor(q + 1e-9) for q in quotas]
    remainders = [q - c for q, c in zip(quotas, counts)]
    order = sorted(range(len(fracs)), key=lambda i: (-round(remainders[i], 9), i))
    for i in order[: n - sum(counts)]:
        counts[i] += 1
    return counts


def split_corpus(docs: Sequence[Document], spec: SplitSpec) -> list[Document]:
    if len(docs) < 3:
        raise CorpusError("need at least 3 documents to split")
    if any(d.split != "unassigned" for d in docs):
        raise CorpusError("documents already carry split tags")
    n_train, n_val, _ = largest_remainder(len(docs), (spec.train_frac, spec.val_frac, spec.test_frac))
    ranked = sorted(docs, key=lambda d: _split_key(d.id, spec.seed))
    tag = {}
    for rank, doc in enumerate(ranked):
        if rank < n_train:
            tag[doc.id] = "train"
        elif rank < n_train + n_val:
            tag[doc.id] = "validation"
        else:
            tag[doc.id] = "test"
    return [d.with_split(tag[d.id]) for d in docs]


# --- synthetic corpora -------------------------------------------------------

_SYLLABLES = ("ka", "lo", "mi", "ne", "ru", "sa", "ti", "vo", "ze", "pa", "qu", "do")


def _filler_words(n: int) -> list[str]:
    words = []
    for i in range(n):
        a, b = divmod(i, len(_SYLLABLES))
        b2, c = divmod(a, len(_SYLLABLES))
        words.append(_SYLLABLES[c] + _SYLLABLES[b] + _SYLLABLES[b2 % len(_SYLLABLES)])
    return words


def marker_token(label_index: int) -> str:
    return f"marker{label_index}"


def label_name(label_index: int) -> str:
    return f"L{label_index:02d}"


def generate_synthetic_corpus(
    n_docs: int,
    len_range: tuple[int, int],
    n_labels: int,
    task_kind: str,
    seed: int,
    *,
    marker_prob: float = 0.9,
    marker_rate: float = 0.05,
    filler_vocab: int = 400,
) -> list[Document]:
    """Planted-signal corpus: a document with label ``l`` carries ``marker{l}`` tokens with probability ``marker_prob``.

    When planted, a marker occupies roughly ``marker_rate`` of the positions, spread over
    the whole document so every window sees it. Filler words are Zipf-distributed.
    Retrieval corpora pair each query document with an identical copy that is its only
    relevant document.
    """
    if n_docs < 1:
        raise CorpusError("n_docs must be >= 1")
    lo, hi = len_range
    if lo < 1 or hi < lo:
        raise CorpusError(f"bad length range {len_range}")
    if task_kind not in TASK_KINDS:
        raise CorpusError(f"unknown task kind {task_kind!r}")
    if n_labels < 1:
        raise CorpusError("n_labels must be >= 1")
    rng = np.random.default_rng(seed)
    filler = _filler_words(filler_vocab)
    zipf = 1.0 / np.arange(1, filler_vocab + 1)
    zipf /= zipf.sum()

    def body(length: int, planted: list[int]) -> list[str]:
        words = [filler[i] for i in rng.choice(filler_vocab, size=length, p=zipf)]
        for lab in planted:
            k = max(1, int(round(marker_rate * length)))
            for pos in rng.choice(length, size=min(k, length), replace=False):
                words[pos] = marker_token(lab)
        return words

    docs: list[Document] = []
    if task_kind == "retrieval":
        n_pairs = n_docs // 2
        for i in range(n_pairs):
            lab = int(rng.integers(n_labels))
            words = body(int(rng.integers(lo, hi + 1)), [lab])
            twin = list(words)
            qid, cid = f"q{i:05d}", f"c{i:05d}"
            docs.append(Document(qid, " ".join(words), (label_name(lab),), frozenset({cid})))
            docs.append(Document(cid, " ".join(twin), (label_name(lab),)))
        if n_docs % 2:
            lab = int(rng.integers(n_labels))
            words = body(int(rng.integers(lo, hi + 1)), [lab])
            docs.append(Document(f"c{n_pairs:05d}", " ".join(words), (label_name(lab),)))
        return docs

    for i in range(n_docs):
        length = int(rng.integers(lo, hi + 1))
        if task_kind == "singlelabel":
            gold = [int(rng.integers(n_labels))]
        else:
            gold = sorted(int(j) for j in np.flatnonzero(rng.random(n_labels) < 0.3))
            if not gold:
                gold = [int(rng.integers(n_labels))]
        planted = [lab for lab in gold if rng.random() < marker_prob]
        words = body(length, planted)
        docs.append(Document(f"d{i:05d}", " ".join(words), tuple(label_name(j) for j in gold)))
    return docs
