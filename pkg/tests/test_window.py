import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from longdoc_bench.tokenizer import PAD, TokenSequence
from longdoc_bench.window import WindowingConfig, make_windows, window_count, window_spans

from oracles import enumerate_starts


def seq(n):
    return TokenSequence("d", np.arange(4, 4 + n))


def test_canonical_case():
    ws = make_windows(seq(1000), WindowingConfig(512, 0.2))
    assert ws.spans == [(0, 512), (409, 921), (818, 1000)]
    assert window_count(1000, WindowingConfig(512, 0.2)) == 3
    assert ws.padded_ids.shape == (3, 512)
    assert ws.masks[2].sum() == 182
    assert (ws.padded_ids[2, 182:] == PAD).all()


def test_short_document_is_padded():
    ws = make_windows(seq(300), WindowingConfig(512))
    assert ws.spans == [(0, 300)]
    assert ws.padded_ids.shape == (1, 512)
    assert ws.masks.sum() == 300


def test_zero_overlap_gives_disjoint_windows():
    ws = make_windows(seq(1024), WindowingConfig(512, 0.0))
    assert ws.spans == [(0, 512), (512, 1024)]


def test_boundary_length_equal_to_window():
    for rho in (0.0, 0.2, 0.9):
        assert window_count(512, WindowingConfig(512, rho)) == 1


def test_whole_document_mode():
    ws = make_windows(seq(2000), WindowingConfig(0))
    assert ws.spans == [(0, 2000)] and ws.padded_ids.shape == (1, 2000)


def test_bench_windowed_case():
    # cap 4096, stride floor(4096 * 0.8) = 3276 -> ceil((8192 - 4096) / 3276) + 1 = 3
    cfg = WindowingConfig(4096, 0.2)
    assert cfg.stride == 3276
    assert window_count(8192, cfg) == 3


def test_config_validation():
    with pytest.raises(ValueError):
        WindowingConfig(1)
    with pytest.raises(ValueError):
        WindowingConfig(10, 1.0)


@given(st.integers(1, 5000), st.integers(2, 700), st.floats(0.0, 0.99))
def test_count_matches_enumeration(length, L, rho):
    cfg = WindowingConfig(L, rho)
    spans = window_spans(length, cfg)
    assert window_count(length, cfg) == len(spans) == len(enumerate_starts(length, L, rho))
    assert [a for a, _ in spans] == enumerate_starts(length, L, rho)


@given(st.integers(1, 3000), st.integers(2, 400), st.floats(0.0, 0.95))
def test_coverage_and_stride(length, L, rho):
    cfg = WindowingConfig(L, rho)
    ws = make_windows(seq(length), cfg)
    covered = np.zeros(length, dtype=bool)
    for a, b in ws.spans:
        covered[a:b] = True
        assert 1 <= b - a <= L
    assert covered.all()
    starts = [a for a, _ in ws.spans]
    assert all(b - a == cfg.stride for a, b in zip(starts, starts[1:]))
    assert ws.masks.any(axis=1).all()
    # real tokens land where the spans say
    for (a, b), ids, m in zip(ws.spans, ws.padded_ids, ws.masks):
        assert np.array_equal(ids[m], np.arange(4 + a, 4 + b))


@given(st.integers(1, 5000), st.integers(2, 600), st.integers(1, 300), st.floats(0.0, 0.9))
def test_larger_window_never_adds_windows(length, L, extra, rho):
    assert window_count(length, WindowingConfig(L + extra, rho)) <= window_count(length, WindowingConfig(L, rho))
