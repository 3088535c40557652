import numpy as np
import pytest
from hypothesis import settings

from longdoc_bench.encoder import EncoderConfig, attention_preset, init_weights

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_attention():
    return init_weights(attention_preset(64, vocab_size=50, model_dim=8, n_layers=2, n_heads=2, seed=3))


@pytest.fixture(scope="session")
def small_scan():
    return init_weights(EncoderConfig(kind="scan_sequential", vocab_size=50, model_dim=8, n_layers=2, state_dim=4, seed=3))


@pytest.fixture(scope="session")
def small_scan_chunked():
    return init_weights(EncoderConfig(kind="scan_chunked", vocab_size=50, model_dim=8, n_layers=2, state_dim=4, chunk_len=5, seed=3))


# --- acceptance summary ------------------------------------------------------

_CRITERIA: dict[int, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion checked by this test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        _CRITERIA[number] = (title, "PASS" if rep.passed else "FAIL")


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, verdict = _CRITERIA[number]
        terminalreporter.write_line(f"[{verdict}] criterion {number:>2}: {title}")
