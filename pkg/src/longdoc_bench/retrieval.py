"""Document embeddings, cosine ranking and ranked-list export."""

from __future__ import annotations

import csv
import struct
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .encoder import EncoderWeights, encode_windows
from .tokenizer import TokenSequence
from .window import WindowingConfig, make_windows

_MAGIC = b"LDBS"
_VERSION = 1


class RetrievalError(KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else ""


def embed_document(tokens: TokenSequence, wcfg: WindowingConfig, weights: EncoderWeights) -> np.ndarray:
    """Unweighted mean of the per-window pooled embeddings."""
    ws = make_windows(tokens, wcfg)
    return encode_windows(ws.padded_ids, ws.masks, weights).mean(axis=0)


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch {a.shape} vs {b.shape}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        warnings.warn("cosine with a zero-norm vector; scoring 0", RuntimeWarning, stacklevel=2)
        return 0.0
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


class DocEmbeddingStore:
    def __init__(self, ids: Sequence[str], vectors: np.ndarray, fingerprint: str = ""):
        vectors = np.asarray(vectors, dtype=np.float64)
        if vectors.ndim != 2 or len(ids) != len(vectors):
            raise ValueError("need one row vector per id")
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate ids in store")
        self.ids = list(ids)
        self.vectors = vectors
        self.fingerprint = fingerprint
        self._row = {doc_id: i for i, doc_id in enumerate(self.ids)}

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __len__(self) -> int:
        return len(self.ids)

    def __contains__(self, doc_id: str) -> bool:
        return doc_id in self._row

    def __getitem__(self, doc_id: str) -> np.ndarray:
        try:
            return self.vectors[self._row[doc_id]]
        except KeyError:
            raise RetrievalError(f"no embedding for document {doc_id!r}") from None

    @classmethod
    def build(cls, docs: Iterable[TokenSequence], wcfg: WindowingConfig, weights: EncoderWeights) -> "DocEmbeddingStore":
        docs = list(docs)
        vecs = np.stack([embed_document(t, wcfg, weights) for t in docs])
        return cls([t.doc_id for t in docs], vecs, weights.config.fingerprint())

    def save(self, path: str | Path) -> None:
        fp = self.fingerprint.encode("ascii")
        with open(path, "wb") as fh:
            fh.write(_MAGIC)
            fh.write(struct.pack("<IIIH", _VERSION, self.dim, len(self), len(fp)))
            fh.write(fp)
            for doc_id in self.ids:
                raw = doc_id.encode("utf-8")
                fh.write(struct.pack("<I", len(raw)))
                fh.write(raw)
            fh.write(np.ascontiguousarray(self.vectors, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path: str | Path) -> "DocEmbeddingStore":
        raw = Path(path).read_bytes()
        if raw[:4] != _MAGIC:
            raise ValueError(f"{path}: bad magic")
        version, d, count, n_fp = struct.unpack_from("<IIIH", raw, 4)
        if version != _VERSION:
            raise ValueError(f"{path}: unsupported store version {version}")
        off = 4 + struct.calcsize("<IIIH")
        fingerprint = raw[off : off + n_fp].decode("ascii")
        off += n_fp
        ids = []
        for _ in range(count):
            (n,) = struct.unpack_from("<I", raw, off)
            off += 4
            ids.append(raw[off : off + n].decode("utf-8"))
            off += n
        vecs = np.frombuffer(raw, dtype="<f8", count=count * d, offset=off).reshape(count, d).copy()
        return cls(ids, vecs, fingerprint)


@dataclass(frozen=True)
class RankedList:
    query_id: str
    entries: tuple[tuple[str, float], ...]

    @property
    def ids(self) -> list[str]:
        return [cid for cid, _ in self.entries]


def rank_candidates(query_id: str, store: DocEmbeddingStore, pool: Iterable[str]) -> RankedList:
    """Exhaustively score the pool by cosine similarity; ties go to the smaller id."""
    q = store[query_id]
    pool = sorted(set(pool))
    if query_id in pool:
        raise ValueError(f"query {query_id!r} is in its own candidate pool")
    if not pool:
        return RankedList(query_id, ())
    M = np.stack([store[c] for c in pool])
    qn = np.linalg.norm(q)
    norms = np.linalg.norm(M, axis=1)
    zero = (norms == 0.0) | (qn == 0.0)
    if zero.any():
        warnings.warn(f"{int(zero.sum())} zero-norm vectors in ranking for {query_id!r}; scoring 0", RuntimeWarning, stacklevel=2)
    with np.errstate(divide="ignore", invalid="ignore"):
        scores = np.where(zero, 0.0, (M @ q) / (norms * qn))
    scores = np.clip(scores, -1.0, 1.0)
    # pool is sorted, so a stable sort on -score keeps ascending ids within ties
    order = np.argsort(-scores, kind="stable")
    return RankedList(query_id, tuple((pool[i], float(scores[i])) for i in order))


def write_rankings_csv(lists: Sequence[RankedList], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["query_id", "rank", "candidate_id", "score"])
        for rl in lists:
            for rank, (cid, score) in enumerate(rl.entries, start=1):
                w.writerow([rl.query_id, rank, cid, repr(score)])
