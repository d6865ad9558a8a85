import numpy as np
import pytest

from spinsqueeze import dicke


def dense_operators(n):
    """Dense collective spin matrices on the N-atom Dicke ladder."""
    m = dicke.m_values(n)
    g = dicke.ladder_couplings(n)
    sz = np.diag(m)
    sp = np.zeros((n + 1, n + 1), dtype=complex)
    for i in range(n):
        sp[i + 1, i] = g[i]
    sx = 0.5 * (sp + sp.conj().T)
    sy = -0.5j * (sp - sp.conj().T)
    return sx, sy, sz


@pytest.fixture
def dense_ops():
    return dense_operators


def random_state(n, rng):
    psi = rng.standard_normal(n + 1) + 1j * rng.standard_normal(n + 1)
    psi /= np.linalg.norm(psi)
    return dicke.CollectiveSpinState(n, psi)


@pytest.fixture
def make_random_state():
    return random_state
