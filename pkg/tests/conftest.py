import functools

import numpy as np
import pytest

from blochsum import PotentialSpec, build_basis, build_potential
from blochsum.fiber import assemble_fiber, solve_fiber
from blochsum.momentum import momentum_matrix

SPECS = {
    "free": PotentialSpec("zero", shift=1.0),
    "cosine": PotentialSpec.cosine(),
    "gauss": PotentialSpec("gaussian-decay", width=4.0, shift=2.0),
    "delta": PotentialSpec("truncated-delta", strength=1.0, cutoff=64, shift=1.0),
}


@functools.lru_cache(maxsize=None)
def full_solve(name: str, m_cut: int, k: float):
    """(V, basis, full spectrum, pi matrix along x) for a named 1-d potential, cached."""
    V = build_potential(SPECS[name])
    basis = build_basis(1, m_cut)
    s = solve_fiber(assemble_fiber(V, basis, [k]), basis.size)
    return V, basis, s, momentum_matrix(s, 0)


@pytest.fixture
def cosine():
    return build_potential(SPECS["cosine"])


@pytest.fixture
def free():
    return build_potential(SPECS["free"])


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
