import numpy as np
import pytest

from fa_precode.constellation import AlphabetKind, build_constellation


@pytest.fixture(scope="session")
def bpsk():
    return build_constellation(AlphabetKind.BPSK)


@pytest.fixture(scope="session")
def qpsk():
    return build_constellation(AlphabetKind.QPSK)


def assert_unitary(U, tol=1e-10):
    n = U.shape[0]
    assert np.linalg.norm(U.conj().T @ U - np.eye(n)) < tol


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])
