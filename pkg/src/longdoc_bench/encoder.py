"""Toy-scale sequence encoders sharing one embed/encode/pool interface.

Two families:

* ``attention``: post-norm bidirectional multi-head self-attention blocks. Cost is
  quadratic in the window length; a hard ``max_context`` cap is enforced.
* ``scan_sequential`` / ``scan_chunked``: selective state-space scan blocks with
  input-dependent step size, ZOH-discretised diagonal state matrix and a SiLU gate.
  Cost is linear in the sequence length and any length is accepted.

Everything runs forward-only in float64.
"""

from __future__ import annotations

import hashlib
import math
import struct
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import _kernels, _kv

KINDS = ("attention", "scan_sequential", "scan_chunked")
_MAGIC = b"LDBW"
_VERSION = 1


class EncoderError(ValueError):
    pass


class ContextOverflowError(EncoderError):
    def __init__(self, length: int, limit: int):
        super().__init__(f"sequence of {length} tokens exceeds the attention context limit of {limit}")
        self.length = length
        self.limit = limit


class NumericError(EncoderError):
    def __init__(self, position: int, where: str = "scan"):
        super().__init__(f"non-finite value in {where} output at position {position}")
        self.position = position


@dataclass(frozen=True)
class EncoderConfig:
    kind: str = "scan_sequential"
    vocab_size: int = 8192
    model_dim: int = 64
    n_layers: int = 2
    n_heads: int = 4
    state_dim: int = 16
    chunk_len: int = 64
    max_context: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise EncoderError(f"unknown encoder kind {self.kind!r}; expected one of {KINDS}")
        if self.model_dim < 2:
            raise EncoderError("model_dim must be >= 2")
        if self.n_layers < 1:
            raise EncoderError("n_layers must be >= 1")
        if self.vocab_size < 5:
            raise EncoderError("vocab_size must be >= 5")
        if self.kind == "attention":
            if self.n_heads < 1 or self.model_dim % self.n_heads:
                raise EncoderError(f"model_dim {self.model_dim} is not divisible by n_heads {self.n_heads}")
            if self.max_context is None or self.max_context < 1:
                raise EncoderError("attention encoders need a finite max_context")
        else:
            if self.state_dim < 1:
                raise EncoderError("state_dim must be >= 1")
            if self.chunk_len < 1:
                raise EncoderError("chunk_len must be >= 1")

    @property
    def is_scan(self) -> bool:
        return self.kind != "attention"

    def to_kv(self) -> str:
        return _kv.dumps(asdict(self))

    @classmethod
    def from_kv(cls, text: str) -> "EncoderConfig":
        return _kv.to_dataclass(cls, _kv.loads(text))

    @classmethod
    def from_file(cls, path: str | Path) -> "EncoderConfig":
        return cls.from_kv(Path(path).read_text(encoding="utf-8"))

    def fingerprint(self) -> str:
        return hashlib.sha256(self.to_kv().encode()).hexdigest()[:16]


def attention_preset(max_context: int = 512, **overrides) -> EncoderConfig:
    return EncoderConfig(kind="attention", max_context=max_context, **overrides)


@dataclass
class AttentionParams:
    wq: np.ndarray
    wk: np.ndarray
    wv: np.ndarray
    wo: np.ndarray
    ln1_g: np.ndarray
    ln1_b: np.ndarray
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    ln2_g: np.ndarray
    ln2_b: np.ndarray


@dataclass
class ScanParams:
    """Projections act on row vectors: ``x @ w``. ``w_z=None`` disables the output gate."""

    norm_g: np.ndarray  # (d,)
    w_delta: np.ndarray  # (d, d)
    b_delta: np.ndarray  # (d,)
    w_b: np.ndarray  # (d, N)
    w_c: np.ndarray  # (d, N)
    A: np.ndarray  # (d, N), entries <= 0
    D: np.ndarray  # (d,)
    w_z: np.ndarray | None  # (d, d)


@dataclass
class EncoderWeights:
    config: EncoderConfig
    embedding: np.ndarray  # (V, d)
    layers: list = field(default_factory=list)
    final_g: np.ndarray | None = None  # scan kinds: final RMS norm gain

    def blocks(self) -> list[np.ndarray]:
        """Parameter arrays in declaration order (the on-disk order)."""
        out = [self.embedding]
        for layer in self.layers:
            out.extend(getattr(layer, f.name) for f in fields(layer))
        if self.final_g is not None:
            out.append(self.final_g)
        return out


@dataclass
class HiddenStates:
    states: np.ndarray  # (T, d)
    mask: np.ndarray  # (T,) bool


def _normal(rng: np.random.Generator, fan_in: int, shape) -> np.ndarray:
    return rng.standard_normal(shape) / math.sqrt(fan_in)


def init_weights(cfg: EncoderConfig) -> EncoderWeights:
    rng = np.random.default_rng(cfg.seed)
    d = cfg.model_dim
    emb = rng.standard_normal((cfg.vocab_size, d))
    layers: list = []
    for _ in range(cfg.n_layers):
        if cfg.kind == "attention":
            layers.append(
                AttentionParams(
                    wq=_normal(rng, d, (d, d)),
                    wk=_normal(rng, d, (d, d)),
                    wv=_normal(rng, d, (d, d)),
                    wo=_normal(rng, d, (d, d)),
                    ln1_g=np.ones(d),
                    ln1_b=np.zeros(d),
                    w1=_normal(rng, d, (d, 4 * d)),
                    b1=np.zeros(4 * d),
                    w2=_normal(rng, 4 * d, (4 * d, d)),
                    b2=np.zeros(d),
                    ln2_g=np.ones(d),
                    ln2_b=np.zeros(d),
                )
            )
        else:
            N = cfg.state_dim
            # step sizes start log-uniform in [1e-3, 1e-1]; b_delta is their inverse softplus
            dt = np.exp(rng.uniform(math.log(1e-3), math.log(1e-1), size=d))
            layers.append(
                ScanParams(
                    norm_g=np.ones(d),
                    w_delta=_normal(rng, d, (d, d)),
                    b_delta=dt + np.log(-np.expm1(-dt)),
                    w_b=_normal(rng, d, (d, N)),
                    w_c=_normal(rng, d, (d, N)),
                    A=-np.tile(np.arange(1, N + 1, dtype=np.float64), (d, 1)),
                    D=np.ones(d),
                    w_z=_normal(rng, d, (d, d)),
                )
            )
    final_g = np.ones(d) if cfg.is_scan else None
    return EncoderWeights(cfg, emb, layers, final_g)


# --- weight persistence ------------------------------------------------------


def save_weights(weights: EncoderWeights, path: str | Path) -> None:
    cfg_bytes = weights.config.to_kv().encode()
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<II", _VERSION, len(cfg_bytes)))
        fh.write(cfg_bytes)
        for block in weights.blocks():
            fh.write(np.ascontiguousarray(block, dtype="<f8").tobytes())


def load_weights(path: str | Path) -> EncoderWeights:
    raw = Path(path).read_bytes()
    if raw[:4] != _MAGIC:
        raise EncoderError(f"{path}: bad magic")
    version, n_cfg = struct.unpack_from("<II", raw, 4)
    if version != _VERSION:
        raise EncoderError(f"{path}: unsupported weight format version {version}")
    offset = 12
    cfg = EncoderConfig.from_kv(raw[offset : offset + n_cfg].decode())
    offset += n_cfg
    # a fresh init gives the block shapes in declaration order
    template = init_weights(cfg)
    for block in template.blocks():
        n = block.size
        block[...] = np.frombuffer(raw, dtype="<f8", count=n, offset=offset).reshape(block.shape)
        offset += 8 * n
    if offset != len(raw):
        raise EncoderError(f"{path}: {len(raw) - offset} trailing bytes")
    return template


# --- attention ---------------------------------------------------------------


def layer_norm(x: np.ndarray, g: np.ndarray, b: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + eps) * g + b


def gelu(x: np.ndarray) -> np.ndarray:
    return 0.5 * x * (1.0 + np.tanh(math.sqrt(2.0 / math.pi) * (x + 0.044715 * (x * x * x))))


def attention_weights(q: np.ndarray, k: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Row-stochastic (T, T) weights for one head; masked keys get zero weight."""
    scores = q @ k.T
    scores *= 1.0 / math.sqrt(q.shape[1])
    if not mask.all():
        scores += np.where(mask, 0.0, -np.inf)
    scores -= scores.max(axis=1, keepdims=True)
    np.exp(scores, out=scores)
    scores /= scores.sum(axis=1, keepdims=True)
    return scores


def multi_head_attention(
    x: np.ndarray, p: AttentionParams, mask: np.ndarray, n_heads: int, *, return_weights: bool = False
):
    """Multi-head attention output (before residual and norm).

    Heads are processed one at a time so only a single (T, T) score matrix is live.
    """
    T, d = x.shape
    dh = d // n_heads
    q, k, v = x @ p.wq, x @ p.wk, x @ p.wv
    heads = np.empty((T, d))
    kept = []
    for h in range(n_heads):
        sl = slice(h * dh, (h + 1) * dh)
        w = attention_weights(q[:, sl], k[:, sl], mask)
        heads[:, sl] = w @ v[:, sl]
        if return_weights:
            kept.append(w)
        del w
    out = heads @ p.wo
    if return_weights:
        return out, kept
    return out


def self_attention_layer(
    x: np.ndarray, p: AttentionParams, mask: np.ndarray, n_heads: int, max_context: int | None = None
) -> np.ndarray:
    T = x.shape[0]
    if max_context is not None and T > max_context:
        raise ContextOverflowError(T, max_context)
    if mask.shape != (T,):
        raise EncoderError(f"mask shape {mask.shape} does not match {T} positions")
    h = layer_norm(x + multi_head_attention(x, p, mask, n_heads), p.ln1_g, p.ln1_b)
    ff = gelu(h @ p.w1 + p.b1) @ p.w2 + p.b2
    return layer_norm(h + ff, p.ln2_g, p.ln2_b)


# --- selective scan ----------------------------------------------------------


def softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


def silu(x: np.ndarray) -> np.ndarray:
    return x / (1.0 + np.exp(-x))


def rms_norm(x: np.ndarray, g: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    return x / np.sqrt((x * x).mean(axis=-1, keepdims=True) + eps) * g


def selective_scan(x, delta, A, B, C, D, *, chunk_len: int | None = None) -> np.ndarray:
    """Run the recurrence on precomputed step sizes and projections.

    h_t = exp(delta_t * A) * h_{t-1} + delta_t * B_t * x_t,  y_t = <C_t, h_t> + D * x_t.
    ``chunk_len=None`` selects the sequential kernel.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    delta = np.ascontiguousarray(delta, dtype=np.float64)
    A = np.ascontiguousarray(A, dtype=np.float64)
    B = np.ascontiguousarray(B, dtype=np.float64)
    C = np.ascontiguousarray(C, dtype=np.float64)
    D = np.ascontiguousarray(D, dtype=np.float64)
    T, d = x.shape
    N = A.shape[1]
    y = np.empty((T, d))
    if chunk_len is None:
        _kernels.scan_sequential(x, delta, A, B, C, D, y)
    else:
        if chunk_len < 1:
            raise EncoderError("chunk_len must be >= 1")
        n_chunks = -(-T // chunk_len)
        scratch = [np.empty((n_chunks, d, N)) for _ in range(3)]
        _kernels.scan_chunked(x, delta, A, B, C, D, chunk_len, y, *scratch)
    return y


def _check_finite(y: np.ndarray, where: str) -> None:
    if not np.isfinite(y).all():
        bad = np.flatnonzero(~np.isfinite(y).all(axis=1))
        raise NumericError(int(bad[0]), where)


def ssm_scan_layer(x: np.ndarray, p: ScanParams, mask: np.ndarray, chunk_len: int | None = None) -> np.ndarray:
    """Selective scan op on (T, d) inputs. Masked positions carry state through and emit zeros."""
    T = x.shape[0]
    if mask.shape != (T,):
        raise EncoderError(f"mask shape {mask.shape} does not match {T} positions")
    # non-finite values are reported with their position below, not as numpy warnings
    with np.errstate(invalid="ignore", over="ignore"):
        delta = softplus(x @ p.w_delta + p.b_delta)
        delta[~mask] = 0.0
        B = x @ p.w_b
        C = x @ p.w_c
        y = selective_scan(x, delta, p.A, B, C, p.D, chunk_len=chunk_len)
        if p.w_z is not None:
            y *= silu(x @ p.w_z)
    y[~mask] = 0.0
    _check_finite(y, "scan")
    return y


def ssm_scan_sequential(x, p: ScanParams, mask) -> np.ndarray:
    return ssm_scan_layer(x, p, mask, None)


def ssm_scan_chunked(x, p: ScanParams, mask, chunk_len: int) -> np.ndarray:
    return ssm_scan_layer(x, p, mask, chunk_len)


# --- encode ------------------------------------------------------------------


def masked_mean(states: np.ndarray, mask: np.ndarray) -> np.ndarray:
    n = int(mask.sum())
    if n == 0:
        raise EncoderError("cannot pool a window with no valid tokens")
    return states[mask].sum(axis=0) / n


def encode(ids: np.ndarray, mask: np.ndarray, weights: EncoderWeights) -> tuple[HiddenStates, np.ndarray]:
    """Embed one (padded) window, run every layer, and mean-pool the valid positions."""
    cfg = weights.config
    ids = np.asarray(ids)
    mask = np.asarray(mask, dtype=bool)
    T = ids.shape[0]
    if cfg.kind == "attention" and T > cfg.max_context:
        raise ContextOverflowError(T, cfg.max_context)
    if ids.max(initial=0) >= cfg.vocab_size or ids.min(initial=0) < 0:
        raise EncoderError("token id outside the embedding table")
    x = weights.embedding[ids]
    if cfg.kind == "attention":
        for layer in weights.layers:
            x = self_attention_layer(x, layer, mask, cfg.n_heads, cfg.max_context)
    else:
        chunk = cfg.chunk_len if cfg.kind == "scan_chunked" else None
        for layer in weights.layers:
            x = x + ssm_scan_layer(rms_norm(x, layer.norm_g), layer, mask, chunk)
        x = rms_norm(x, weights.final_g)
    _check_finite(x, cfg.kind)
    return HiddenStates(x, mask), masked_mean(x, mask)


def encode_windows(padded_ids: np.ndarray, masks: np.ndarray, weights: EncoderWeights) -> np.ndarray:
    """Pooled embedding per window, shape (n_windows, d)."""
    return np.stack([encode(ids, m, weights)[1] for ids, m in zip(padded_ids, masks)])
