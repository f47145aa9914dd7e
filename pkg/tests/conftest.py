import numpy as np
import pytest

from mipdmn.tensors import iso_stiffness, ortho_stiffness

RESULTS = {}


def record(criterion: int, ok: bool, detail: str = ""):
    """Store the outcome of an acceptance criterion for the terminal summary."""
    RESULTS[criterion] = (ok, detail)


def pytest_terminal_summary(terminalreporter):
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(RESULTS):
        ok, detail = RESULTS[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_spd(rng, n=6, scale=1.0):
    A = rng.standard_normal((n, n))
    return scale * (A @ A.T + n * np.eye(n))


def random_ortho(rng, scale=1.0):
    """Admissible orthotropic stiffness with moderately random constants."""
    while True:
        E = scale * rng.uniform(1e3, 1e4, 3)
        nu = rng.uniform(0.1, 0.4, 3)
        G = scale * rng.uniform(3e2, 4e3, 3)
        try:
            return ortho_stiffness(*E, *nu, *G)
        except Exception:
            continue


MATRIX = iso_stiffness(3300.0, 0.41)
FIBER = iso_stiffness(72000.0, 0.22)
