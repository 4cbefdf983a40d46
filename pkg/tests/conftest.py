import numpy as np
import pytest

from fracevo import _kernels

BACKENDS = ["numpy"] + (["numba"] if _kernels.HAVE_NUMBA else [])


@pytest.fixture(params=BACKENDS)
def backend(request):
    prev = _kernels.set_backend(request.param)
    yield request.param
    _kernels.set_backend(prev)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def ml_eig(alpha, beta, M, scale=1.0):
    """Matrix Mittag-Leffler via eigendecomposition (diagonalisable M only)."""
    import mpmath

    w, V = np.linalg.eig(np.asarray(M, dtype=float) * scale)
    d = [complex(ml_mp(alpha, beta, complex(z))) for z in w]
    return (V @ np.diag(d) @ np.linalg.inv(V)).real


def ml_mp(alpha, beta, z, terms=400, dps=60):
    """Extended-precision brute-force series."""
    import mpmath

    with mpmath.workdps(dps):
        a, b, z = mpmath.mpf(alpha), mpmath.mpf(beta), mpmath.mpmathify(z)
        return mpmath.fsum(z**k * mpmath.rgamma(k * a + b) for k in range(terms))


ACCEPTANCE_LINES = []


def record(criterion, ok, detail):
    """Register one pass/fail line for the acceptance summary."""
    line = f"criterion {criterion:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
