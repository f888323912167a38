import numpy as np
import pytest

from qstoch.coeffs import CoefficientBlock

SIGMA_MINUS = np.array([[0, 1], [0, 0]], dtype=complex)
SIGMA_PLUS = SIGMA_MINUS.conj().T
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Z = np.diag([1.0, -1.0]).astype(complex)


def crandn(rng, *shape):
    return rng.normal(size=shape) + 1j * rng.normal(size=shape)


def random_block(rng, d, n, kind="strat", scale=1.0):
    return CoefficientBlock(scale * crandn(rng, n + 1, n + 1, d, d), kind=kind)


def random_selfadjoint_block(rng, d, n, e11_norm=None):
    """E_ab = (R_ab + R_ba^dag)/2, with the channel block rescaled to ``e11_norm``."""
    r = crandn(rng, n + 1, n + 1, d, d)
    e = 0.5 * (r + np.conj(np.swapaxes(r, 0, 1)).swapaxes(-1, -2))
    if e11_norm is not None:
        blk = CoefficientBlock(e, kind="strat")
        norm = np.linalg.norm(blk.channel_matrix(), 2)
        e[1:, 1:] *= e11_norm / norm
    return CoefficientBlock(e, kind="strat")


def random_unitary(rng, n):
    q, r = np.linalg.qr(crandn(rng, n, n))
    return q * (np.diag(r) / np.abs(np.diag(r)))


def random_hermitian(rng, n):
    a = crandn(rng, n, n)
    return 0.5 * (a + a.conj().T)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_hp(rng, d, n):
    from qstoch.coeffs import HPTriple

    return HPTriple(random_unitary(rng, n * d), crandn(rng, n * d, d), random_hermitian(rng, d))


def random_unitary_ito(rng, d, n):
    from qstoch.coeffs import ito_from_hp

    return ito_from_hp(random_hp(rng, d, n))


_ACCEPTANCE = []


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line for an acceptance criterion."""

    def record(number, title, ok, detail):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {title}: {detail}"
        _ACCEPTANCE.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)
