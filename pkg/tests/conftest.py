from pathlib import Path

import numpy as np
import pytest

FIXTURES = Path(__file__).parent / "fixtures"
PAIR_NAMES = ("scalar", "sample2", "degenerate3", "complex4", "zero5")

# filled by test_acceptance.py, echoed in the terminal summary
ACCEPTANCE_LINES: dict = {}


def rel_err(a, b) -> float:
    return abs(complex(a) - complex(b)) / (1.0 + abs(complex(a)))


def random_hermitian(rng, n, scale=1.0):
    a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    h = 0.5 * (a + a.conj().T)
    return h * scale


def random_unitary(rng, n):
    q, r = np.linalg.qr(rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n)))
    return q * (np.diag(r) / np.abs(np.diag(r)))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(params=PAIR_NAMES)
def fixture_pair(request):
    d = FIXTURES / request.param
    return request.param, d / "h0.json", d / "v.json"


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
