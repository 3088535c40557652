import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from longdoc_bench import _kernels
from longdoc_bench.encoder import (
    AttentionParams,
    ContextOverflowError,
    EncoderConfig,
    EncoderError,
    NumericError,
    ScanParams,
    attention_preset,
    encode,
    init_weights,
    load_weights,
    multi_head_attention,
    save_weights,
    selective_scan,
    self_attention_layer,
    ssm_scan_chunked,
    ssm_scan_sequential,
)

from oracles import dense_attention_oracle, numpy_scan_oracle, random_scan_inputs


# --- config / init -----------------------------------------------------------


def test_init_is_deterministic():
    cfg = EncoderConfig(kind="scan_chunked", vocab_size=30, model_dim=6, state_dim=3, seed=9)
    a, b = init_weights(cfg), init_weights(cfg)
    for x, y in zip(a.blocks(), b.blocks()):
        assert np.array_equal(x, y)


def test_head_divisibility_checked_before_init():
    with pytest.raises(EncoderError, match="divisible"):
        attention_preset(512, model_dim=8, n_heads=3)


def test_A_init_rule():
    w = init_weights(EncoderConfig(kind="scan_sequential", vocab_size=10, model_dim=3, state_dim=4))
    for layer in w.layers:
        assert np.array_equal(layer.A, np.tile([-1.0, -2.0, -3.0, -4.0], (3, 1)))


def test_projection_scale(rng):
    w = init_weights(attention_preset(16, vocab_size=10, model_dim=256, n_heads=4, n_layers=1))
    # entries drawn with std 1/sqrt(fan_in)
    assert abs(w.layers[0].wq.std() * math.sqrt(256) - 1.0) < 0.02
    assert abs(w.layers[0].w2.std() * math.sqrt(1024) - 1.0) < 0.02


def test_config_kv_round_trip(tmp_path):
    cfg = attention_preset(4096, model_dim=32, n_heads=2, seed=5)
    p = tmp_path / "enc.cfg"
    p.write_text(cfg.to_kv())
    assert EncoderConfig.from_file(p) == cfg
    scan = EncoderConfig(kind="scan_sequential")
    assert EncoderConfig.from_kv(scan.to_kv()) == scan


def test_config_rejects_unknown_keys():
    with pytest.raises(ValueError, match="unknown keys"):
        EncoderConfig.from_kv("kind = attention\nmax_context = 8\nbogus = 1\n")


@pytest.mark.parametrize("kind", ["attention", "scan_chunked"])
def test_weights_binary_round_trip(tmp_path, kind):
    cfg = EncoderConfig(kind=kind, vocab_size=20, model_dim=4, n_heads=2, state_dim=3, max_context=32 if kind == "attention" else None)
    w = init_weights(cfg)
    save_weights(w, tmp_path / "w.bin")
    raw = (tmp_path / "w.bin").read_bytes()
    assert raw[:4] == b"LDBW"
    back = load_weights(tmp_path / "w.bin")
    assert back.config == cfg
    for x, y in zip(w.blocks(), back.blocks()):
        assert np.array_equal(x, y)


# --- attention ---------------------------------------------------------------


def _attn_params(rng, d):
    return AttentionParams(
        wq=rng.standard_normal((d, d)), wk=rng.standard_normal((d, d)), wv=rng.standard_normal((d, d)),
        wo=rng.standard_normal((d, d)), ln1_g=np.ones(d), ln1_b=np.zeros(d),
        w1=rng.standard_normal((d, 4 * d)), b1=np.zeros(4 * d), w2=rng.standard_normal((4 * d, d)),
        b2=np.zeros(d), ln2_g=np.ones(d), ln2_b=np.zeros(d),
    )


def test_single_position_weight_is_one(rng):
    p = _attn_params(rng, 4)
    _, ws = multi_head_attention(rng.standard_normal((1, 4)), p, np.ones(1, bool), 1, return_weights=True)
    assert ws[0].tolist() == [[1.0]]


def test_zero_query_key_projections_give_uniform_weights(rng):
    p = _attn_params(rng, 4)
    p.wq[:] = 0
    p.wk[:] = 0
    mask = np.array([True, True, False, True, False])
    _, ws = multi_head_attention(rng.standard_normal((5, 4)), p, mask, 2, return_weights=True)
    for w in ws:
        assert np.allclose(w[:, mask], 1 / 3, atol=1e-15)
        assert np.all(w[:, ~mask] == 0)


def test_single_head_matches_dense_formula(rng):
    p = _attn_params(rng, 4)
    x = rng.standard_normal((3, 4))
    mask = np.ones(3, bool)
    out, ws = multi_head_attention(x, p, mask, 1, return_weights=True)
    ref_out, ref_w = dense_attention_oracle(x, p.wq, p.wk, p.wv, p.wo, mask)
    assert np.max(np.abs(out - ref_out)) < 1e-6
    assert np.max(np.abs(ws[0] - ref_w)) < 1e-6


def test_layer_matches_composed_formula(rng):
    d = 4
    p = _attn_params(rng, d)
    x = rng.standard_normal((6, d))
    mask = np.array([1, 1, 1, 0, 1, 0], bool)
    attn, _ = dense_attention_oracle(x, p.wq, p.wk, p.wv, p.wo, mask)

    def ln(v):
        return (v - v.mean()) / math.sqrt(v.var() + 1e-5)

    def gelu(z):
        return 0.5 * z * (1 + math.tanh(math.sqrt(2 / math.pi) * (z + 0.044715 * z**3)))

    expected = np.zeros_like(x)
    for t in range(len(x)):
        h = ln(x[t] + attn[t])
        ff = np.array([gelu(u) for u in h @ p.w1]) @ p.w2
        expected[t] = ln(h + ff)
    got = self_attention_layer(x, p, mask, 1)
    assert np.max(np.abs(got - expected)) < 1e-9


def test_context_overflow_names_limit():
    w = init_weights(attention_preset(8, vocab_size=20, model_dim=4, n_heads=2))
    with pytest.raises(ContextOverflowError, match="limit of 8"):
        encode(np.full(9, 5), np.ones(9, bool), w)


def test_attention_rows_sum_to_one_in_every_layer(small_attention, rng):
    w = small_attention
    T = 20
    ids = rng.integers(4, 50, T)
    mask = np.ones(T, bool)
    mask[15:] = False
    x = w.embedding[ids]
    for layer in w.layers:
        _, ws = multi_head_attention(x, layer, mask, w.config.n_heads, return_weights=True)
        for head in ws:
            assert np.max(np.abs(head.sum(axis=1) - 1)) < 1e-6
            assert np.all(head[:, ~mask] == 0)
        x = self_attention_layer(x, layer, mask, w.config.n_heads)


# --- selective scan ----------------------------------------------------------


def _forced(T, N=1, d=1):
    # step size 1, unit projections, no skip
    return dict(delta=np.ones((T, d)), B=np.ones((T, N)), C=np.ones((T, N)), D=np.zeros(d))


def test_pure_integrator():
    x = np.array([[1.0], [0.0], [0.0]])
    f = _forced(3)
    y = selective_scan(x, f["delta"], np.zeros((1, 1)), f["B"], f["C"], f["D"])
    assert y.ravel().tolist() == [1.0, 1.0, 1.0]


def test_halving_decay():
    x = np.array([[1.0], [0.0], [0.0]])
    f = _forced(3)
    y = selective_scan(x, f["delta"], np.full((1, 1), -math.log(2)), f["B"], f["C"], f["D"])
    assert np.allclose(y.ravel(), [1.0, 0.5, 0.25], atol=1e-15)
    y2 = selective_scan(x, f["delta"], np.full((1, 1), -math.log(2)), f["B"], f["C"], f["D"], chunk_len=2)
    assert np.allclose(y2.ravel(), [1.0, 0.5, 0.25], atol=1e-15)


def _scan_params(rng, d, N, gate=True):
    return ScanParams(
        norm_g=np.ones(d), w_delta=rng.standard_normal((d, d)) / math.sqrt(d), b_delta=np.full(d, -1.0),
        w_b=rng.standard_normal((d, N)), w_c=rng.standard_normal((d, N)), A=-np.tile(np.arange(1.0, N + 1), (d, 1)),
        D=np.ones(d), w_z=rng.standard_normal((d, d)) if gate else None,
    )


def test_skip_path_identity(rng):
    p = _scan_params(rng, 3, 2, gate=False)
    p.w_b[:] = 0
    x = rng.standard_normal((7, 3))
    assert np.array_equal(ssm_scan_sequential(x, p, np.ones(7, bool)), x)


def test_kernel_matches_numpy_oracle(rng):
    x, delta, A, B, C, D = random_scan_inputs(rng, 40, 5, 3)
    ref = numpy_scan_oracle(x, delta, A, B, C, D)
    assert np.max(np.abs(selective_scan(x, delta, A, B, C, D) - ref)) < 1e-12


def test_uncompiled_kernel_agrees(rng):
    x, delta, A, B, C, D = random_scan_inputs(rng, 12, 3, 2)
    y_jit, y_py = np.empty((12, 3)), np.empty((12, 3))
    _kernels.scan_sequential(x, delta, A, B, C, D, y_jit)
    _kernels.scan_sequential.py_func(x, delta, A, B, C, D, y_py)
    assert np.max(np.abs(y_jit - y_py)) < 1e-12


def test_chunk_equal_to_length_is_exact(rng):
    x, delta, A, B, C, D = random_scan_inputs(rng, 50, 4, 3)
    assert np.array_equal(selective_scan(x, delta, A, B, C, D), selective_scan(x, delta, A, B, C, D, chunk_len=50))


def test_unit_chunks_match(rng):
    x, delta, A, B, C, D = random_scan_inputs(rng, 50, 4, 3)
    diff = selective_scan(x, delta, A, B, C, D) - selective_scan(x, delta, A, B, C, D, chunk_len=1)
    assert np.max(np.abs(diff)) < 1e-12


def test_chunked_257_by_64(rng):
    p = _scan_params(rng, 6, 4)
    x = rng.standard_normal((257, 6))
    mask = np.ones(257, bool)
    diff = ssm_scan_sequential(x, p, mask) - ssm_scan_chunked(x, p, mask, 64)
    assert np.max(np.abs(diff)) < 1e-5


@given(st.integers(1, 300), st.integers(1, 6), st.integers(1, 4), st.integers(1, 80), st.integers(0, 2**31))
def test_chunked_equivalence_property(T, d, N, Q, seed):
    rng = np.random.default_rng(seed)
    args = random_scan_inputs(rng, T, d, N)
    assert np.max(np.abs(selective_scan(*args) - selective_scan(*args, chunk_len=Q))) < 1e-5


def test_masked_positions_hold_state_and_emit_zero(rng):
    p = _scan_params(rng, 4, 3)
    x = rng.standard_normal((10, 4))
    mask = np.ones(10, bool)
    mask[[3, 4]] = False
    y = ssm_scan_sequential(x, p, mask)
    assert np.all(y[[3, 4]] == 0)
    # dropping the masked rows entirely gives the same outputs elsewhere
    keep = np.flatnonzero(mask)
    y_dropped = ssm_scan_sequential(x[keep], p, np.ones(len(keep), bool))
    assert np.max(np.abs(y[keep] - y_dropped)) < 1e-12


def test_numeric_error_reports_position(rng):
    p = _scan_params(rng, 3, 2)
    x = rng.standard_normal((9, 3))
    x[5, 1] = np.inf
    with pytest.raises(NumericError) as err:
        ssm_scan_sequential(x, p, np.ones(9, bool))
    assert err.value.position == 5


@pytest.mark.parametrize("kind", ["scan_sequential", "scan_chunked"])
def test_long_random_input_stays_finite(kind):
    w = init_weights(EncoderConfig(kind=kind, vocab_size=500, model_dim=16, state_dim=8, chunk_len=64, seed=1))
    ids = np.random.default_rng(0).integers(4, 500, 10_000)
    hs, pooled = encode(ids, np.ones(10_000, bool), w)
    assert np.isfinite(hs.states).all() and np.isfinite(pooled).all()


def test_state_bounded_by_input_sum(rng):
    x, delta, A, B, C, D = random_scan_inputs(rng, 2000, 3, 2)
    # with C = one-hot the output reads off one state coordinate directly
    C = np.zeros_like(C)
    C[:, 0] = 1.0
    y = selective_scan(x, delta, A, B, C, np.zeros(3))
    bound = np.cumsum(np.abs(delta * B[:, [0]] * x), axis=0)
    assert np.all(np.abs(y) <= bound + 1e-9)


# --- encode ------------------------------------------------------------------


@pytest.fixture(params=["small_attention", "small_scan", "small_scan_chunked"])
def weights(request):
    return request.getfixturevalue(request.param)


def test_single_valid_token_pools_to_its_state(weights):
    ids = np.zeros(16, dtype=np.int64)
    ids[0] = 7
    mask = np.zeros(16, bool)
    mask[0] = True
    hs, pooled = encode(ids, mask, weights)
    assert np.array_equal(pooled, hs.states[0])


def test_identical_windows_identical_pooled(weights, rng):
    ids = rng.integers(4, 50, 30)
    a = encode(ids, np.ones(30, bool), weights)[1]
    b = encode(ids.copy(), np.ones(30, bool), weights)[1]
    assert np.array_equal(a, b)


def test_pooled_is_masked_average(weights, rng):
    ids = rng.integers(4, 50, 40)
    mask = np.ones(40, bool)
    mask[25:] = False
    hs, pooled = encode(ids, mask, weights)
    manual = sum(hs.states[i] for i in range(40) if mask[i]) / 25
    assert np.max(np.abs(pooled - manual)) < 1e-7


@given(st.integers(1, 30), st.integers(0, 30), st.integers(0, 2**31))
def test_appending_pad_keeps_pooled(small_attention, small_scan, small_scan_chunked, n, extra, seed):
    rng = np.random.default_rng(seed)
    ids = rng.integers(4, 50, n)
    padded = np.concatenate([ids, np.zeros(extra, dtype=ids.dtype)])
    mask = np.concatenate([np.ones(n, bool), np.zeros(extra, bool)])
    for w in (small_attention, small_scan, small_scan_chunked):
        base = encode(ids, np.ones(n, bool), w)[1]
        assert np.max(np.abs(encode(padded, mask, w)[1] - base)) < 1e-7


def test_chunked_encoder_matches_sequential_encoder(rng):
    kw = dict(vocab_size=100, model_dim=8, n_layers=2, state_dim=4, seed=11)
    seq_w = init_weights(EncoderConfig(kind="scan_sequential", **kw))
    chk_w = init_weights(EncoderConfig(kind="scan_chunked", chunk_len=7, **kw))
    ids = rng.integers(4, 100, 100)
    m = np.ones(100, bool)
    assert np.max(np.abs(encode(ids, m, seq_w)[1] - encode(ids, m, chk_w)[1])) < 1e-10
