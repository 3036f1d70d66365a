import pytest

from pmpkit import kernels


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    # compile the jit kernels once so timed tests measure run time, not
    # compilation
    kernels.warm_up()
