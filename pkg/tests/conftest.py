import pytest

from vrvi import _kernels


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    # compile (or load from cache) every jitted kernel before any timed
    # acceptance criterion runs
    _kernels.warm_up()
