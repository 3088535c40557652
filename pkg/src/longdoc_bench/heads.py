"""Linear probe over pooled embeddings and window-to-document aggregation."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

TASKS = ("multilabel", "singlelabel")


class HeadError(ValueError):
    pass


@dataclass
class ProbeWeights:
    W: np.ndarray  # (n_labels, d)
    b: np.ndarray  # (n_labels,)
    task_kind: str
    loss_trace: list[float] = field(default_factory=list)

    def __post_init__(self):
        if self.task_kind not in TASKS:
            raise HeadError(f"unknown task kind {self.task_kind!r}")
        if self.W.ndim != 2 or self.b.shape != (self.W.shape[0],):
            raise HeadError(f"inconsistent probe shapes {self.W.shape} / {self.b.shape}")

    @property
    def n_labels(self) -> int:
        return self.W.shape[0]

    @property
    def dim(self) -> int:
        return self.W.shape[1]


@dataclass(frozen=True)
class ProbeHyper:
    lr: float = 0.1
    epochs: int = 60
    batch: int = 64
    l2: float = 1e-4
    seed: int = 0
    standardize: bool = True


@dataclass
class DocPrediction:
    doc_id: str
    probs: np.ndarray
    predicted: tuple[int, ...]


def sigmoid(z):
    # split by sign so exp never overflows
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def softmax(z: np.ndarray, axis: int = -1) -> np.ndarray:
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def window_predict(embedding: np.ndarray, probe: ProbeWeights) -> np.ndarray:
    """Sigmoid probabilities (multi-label) or raw logits (single-label). Accepts (d,) or (n, d)."""
    e = np.asarray(embedding, dtype=np.float64)
    if e.shape[-1] != probe.dim:
        raise HeadError(f"embedding dim {e.shape[-1]} does not match probe dim {probe.dim}")
    logits = e @ probe.W.T + probe.b
    if probe.task_kind == "multilabel":
        return sigmoid(logits)
    return logits


def aggregate_multilabel(window_probs: Sequence[np.ndarray], threshold: float = 0.5, doc_id: str = "") -> DocPrediction:
    if len(window_probs) == 0:
        raise HeadError("no windows to aggregate")
    probs = np.mean(np.asarray(window_probs, dtype=np.float64), axis=0)
    predicted = tuple(int(i) for i in np.flatnonzero(probs >= threshold))
    return DocPrediction(doc_id, probs, predicted)


def aggregate_singlelabel(window_logits: Sequence[np.ndarray], doc_id: str = "") -> DocPrediction:
    if len(window_logits) == 0:
        raise HeadError("no windows to aggregate")
    logits = np.mean(np.asarray(window_logits, dtype=np.float64), axis=0)
    probs = softmax(logits)
    # np.argmax returns the first maximum, i.e. the smallest index on ties
    return DocPrediction(doc_id, probs, (int(np.argmax(probs)),))


def predict_document(window_embeddings: np.ndarray, probe: ProbeWeights, threshold: float = 0.5, doc_id: str = "") -> DocPrediction:
    scores = window_predict(window_embeddings, probe)
    if probe.task_kind == "multilabel":
        return aggregate_multilabel(scores, threshold, doc_id)
    return aggregate_singlelabel(scores, doc_id)


# --- training ----------------------------------------------------------------


def _targets(Y, task_kind: str, n_labels: int) -> np.ndarray:
    Y = np.asarray(Y)
    if task_kind == "singlelabel":
        if Y.ndim != 1:
            raise HeadError("single-label gold must be a vector of class indices")
        onehot = np.zeros((len(Y), n_labels))
        onehot[np.arange(len(Y)), Y.astype(np.int64)] = 1.0
        return onehot
    if Y.ndim != 2 or Y.shape[1] != n_labels:
        raise HeadError(f"multi-label gold must have shape (n, {n_labels})")
    return Y.astype(np.float64)


def probe_loss(probe: ProbeWeights, X: np.ndarray, Y, l2: float = 0.0) -> float:
    """Mean cross-entropy (softmax or per-label binary, summed over labels) plus (l2/2)||W||^2."""
    X = np.asarray(X, dtype=np.float64)
    T = _targets(Y, probe.task_kind, probe.n_labels)
    Z = X @ probe.W.T + probe.b
    if probe.task_kind == "singlelabel":
        Zs = Z - Z.max(axis=1, keepdims=True)
        logp = Zs - np.log(np.exp(Zs).sum(axis=1, keepdims=True))
        data = -(T * logp).sum(axis=1).mean()
    else:
        # BCE with logits: log(1 + e^z) - t z
        data = (np.logaddexp(0.0, Z) - T * Z).sum(axis=1).mean()
    return float(data + 0.5 * l2 * np.sum(probe.W**2))


def probe_gradient(probe: ProbeWeights, X: np.ndarray, Y, l2: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """Analytic gradient of ``probe_loss`` with respect to (W, b)."""
    X = np.asarray(X, dtype=np.float64)
    if len(X) == 0:
        raise HeadError("empty batch")
    T = _targets(Y, probe.task_kind, probe.n_labels)
    Z = X @ probe.W.T + probe.b
    P = softmax(Z, axis=1) if probe.task_kind == "singlelabel" else sigmoid(Z)
    R = (P - T) / len(X)
    return R.T @ X + l2 * probe.W, R.sum(axis=0)


def train_probe(X: np.ndarray, Y, task_kind: str, n_labels: int, hyper: ProbeHyper = ProbeHyper()) -> ProbeWeights:
    """Mini-batch gradient descent from a zero init.

    With ``standardize`` the features are z-scored on the training set and the scaling is
    folded back into (W, b) afterwards, so the returned probe acts on raw embeddings.
    ``loss_trace`` holds the full-data objective after every epoch.
    """
    X = np.asarray(X, dtype=np.float64)
    n, d = X.shape
    if n < 2:
        raise HeadError("need at least 2 training examples")
    Yarr = np.asarray(Y)
    if len(np.unique(Yarr, axis=0)) < 2:
        raise HeadError("degenerate label set: fewer than 2 distinct labels")
    if hyper.standardize:
        mu = X.mean(axis=0)
        sd = X.std(axis=0)
        sd[sd < 1e-12] = 1.0
        Xt = (X - mu) / sd
    else:
        Xt = X
    probe = ProbeWeights(np.zeros((n_labels, d)), np.zeros(n_labels), task_kind)
    rng = np.random.default_rng(hyper.seed)
    trace = []
    for _ in range(hyper.epochs):
        order = rng.permutation(n)
        for start in range(0, n, hyper.batch):
            idx = order[start : start + hyper.batch]
            gW, gb = probe_gradient(probe, Xt[idx], Yarr[idx], hyper.l2)
            probe.W -= hyper.lr * gW
            probe.b -= hyper.lr * gb
        trace.append(probe_loss(probe, Xt, Yarr, hyper.l2))
    if hyper.standardize:
        W = probe.W / sd
        b = probe.b - W @ mu
        return ProbeWeights(W, b, task_kind, trace)
    probe.loss_trace = trace
    return probe
