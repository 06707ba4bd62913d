import math

import numpy as np
import pytest

from xpmqudit.hybrid_state import HybridState, HybridTerm, QuditKet, product_state
from xpmqudit.protocols import QuditSpec


def random_coeffs(rng, n):
    c = rng.normal(size=n) + 1j * rng.normal(size=n)
    return c / np.linalg.norm(c)


def random_spec(rng, n=3):
    return QuditSpec(n, tuple(random_coeffs(rng, n)))


def random_state(rng, dim=3, n_modes=2, n_terms=None, scale=2.0):
    """Random superposition with arbitrary (possibly repeated) kets and labels."""
    n_terms = n_terms or int(rng.integers(1, 8))
    terms = []
    for _ in range(n_terms):
        bus = tuple(scale * (rng.normal() + 1j * rng.normal()) / math.sqrt(2) for _ in range(n_modes))
        terms.append(
            HybridTerm(
                complex(rng.normal() + 1j * rng.normal()),
                QuditKet(dim, int(rng.integers(dim))),
                QuditKet(dim, int(rng.integers(dim))),
                bus,
            )
        )
    return HybridState(tuple(terms), n_modes=n_modes)


def fock_coherent(beta, cutoff):
    """Independent textbook expansion used as a test oracle."""
    n = np.arange(cutoff + 1)
    fact = np.array([math.factorial(int(k)) for k in n], dtype=float)
    return np.exp(-abs(beta) ** 2 / 2) * beta**n / np.sqrt(fact)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def maximal3():
    return QuditSpec.maximal(3)


@pytest.fixture
def maximal_product():
    c = [1 / math.sqrt(3)] * 3
    return product_state(c, c)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
