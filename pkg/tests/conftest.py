import numpy as np
import pytest

from dagshare.sites import (
    IdentityRef,
    KeyedDigestScheme,
    ModelParams,
    Site,
    StyleIndicator,
    build_site,
)


@pytest.fixture
def scheme():
    return KeyedDigestScheme()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_site(rng, scheme, key=None, parents=None, difficulty=0):
    """Fully-formed random site; parents default to two random digests."""
    if key is None:
        key = scheme.new_key(rng)
    if parents is None:
        parents = (rng.bytes(32), rng.bytes(32))
    payload = ModelParams(rng.standard_normal(int(rng.integers(1, 6))))
    return build_site(
        payload=payload,
        feature=StyleIndicator(float(rng.uniform())),
        parents=parents,
        key=key,
        scheme=scheme,
        scope=int(rng.integers(0, 5)),
        difficulty_bits=difficulty,
    )


def pytest_terminal_summary(terminalreporter):
    """Replay the acceptance pass/fail lines after the run, despite capture."""
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.write_line("")
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
