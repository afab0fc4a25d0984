import numpy as np
import pytest

from latentmark.keys import PrcParams, keygen
from latentmark.pipeline import WatermarkConfig

DEFAULT_SHAPE = (4, 64, 64)
SMALL_SHAPE = (4, 16, 16)

# criterion id -> (passed, detail); filled by tests/test_acceptance.py
ACCEPTANCE = {}


@pytest.fixture(scope="session")
def default_ks():
    return keygen(PrcParams.for_shape(DEFAULT_SHAPE), rng_seed=0, signature=True)


@pytest.fixture(scope="session")
def small_ks():
    return keygen(PrcParams.for_shape(SMALL_SHAPE), rng_seed=1, signature=True)


@pytest.fixture(scope="session")
def small_cfg():
    from latentmark.gs import GsParams

    # q = 2/2 * 8 * 8 = 64 bits, num = 2 * 2**2 = 8
    return WatermarkConfig(shape=SMALL_SHAPE, gs=GsParams(f_ch=2, f_hw=2))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[cid]
        terminalreporter.write_line(f"criterion {cid:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
