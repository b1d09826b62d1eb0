"""Shared fixtures.

Eigendecompositions dominate setup cost (cyclic Jacobi is O(n^3) per
sweep), so (operator, basis) pairs are memoized for the whole session,
keyed by geometry and order.  Grids are cheap and rebuilt per request so
tests can vary T and n_t freely without spoiling the cache.
"""

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

import fracwave as fw

settings.register_profile(
    "suite",
    max_examples=20,
    derandomize=True,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")

_SPECTRAL_CACHE: dict[tuple, tuple] = {}


def case(n_int=24, s=0.7, n_t=96, T=1.0, m_collar=3):
    """(grid, op, basis) for a unit interval with collar windows at both
    ends; the spectral pair is shared across all callers with the same
    (n_int, s, m_collar)."""
    grid = fw.build_grid(
        x_min=0.0,
        x_max=1.0,
        n_int=n_int,
        m_collar=m_collar,
        w1=tuple(range(m_collar)),
        w2=tuple(range(m_collar, 2 * m_collar)),
        T=T,
        n_t=n_t,
    )
    key = (n_int, s, m_collar)
    if key not in _SPECTRAL_CACHE:
        op = fw.assemble_operator(grid, s)
        _SPECTRAL_CACHE[key] = (op, fw.eigendecompose(op, grid))
    op, basis = _SPECTRAL_CACHE[key]
    return grid, op, basis


@pytest.fixture(scope="session")
def make_case():
    return case


@pytest.fixture
def rng():
    return np.random.default_rng(20260819)
