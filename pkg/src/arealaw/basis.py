"""Product-basis conventions and local operators.

Basis ordering used everywhere in the package: a configuration
``(s_0, s_1, ..., s_{N-1})`` of ``N`` sites with local dimension ``d`` has the
flat index ``sum_k s_k * d**k`` (little-endian, site 0 least significant).

Local two-site matrices follow the usual Kronecker convention instead:
a term acting on the ordered pair ``(i, j)`` is a ``d**2 x d**2`` matrix whose
row index is ``s_i * d + s_j``, so ``np.kron(A, B)`` means ``A`` on ``i`` and
``B`` on ``j``.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np
from scipy.stats import unitary_group

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
SIGMA_PLUS = np.array([[0, 1], [0, 0]], dtype=complex)  # |up><down|, up = index 0
SIGMA_MINUS = SIGMA_PLUS.T.copy()
IDENTITY_2 = np.eye(2, dtype=complex)


def site_tensor(vec: np.ndarray, n_sites: int, d: int) -> np.ndarray:
    """View a state (or a stack of states along a trailing axis) as a tensor
    whose axis ``k`` is site ``k``."""
    extra = vec.shape[1:]
    t = vec.reshape((d,) * n_sites + extra)
    order = list(range(n_sites - 1, -1, -1)) + list(range(n_sites, n_sites + len(extra)))
    return t.transpose(order)


def flatten_site_tensor(t: np.ndarray, n_sites: int) -> np.ndarray:
    """Inverse of :func:`site_tensor`."""
    extra = t.shape[n_sites:]
    order = list(range(n_sites - 1, -1, -1)) + list(range(n_sites, n_sites + len(extra)))
    out = np.ascontiguousarray(t.transpose(order))
    return out.reshape((-1,) + extra) if extra else out.reshape(-1)


def apply_local(vec: np.ndarray, op: np.ndarray, sites: Sequence[int], n_sites: int,
                d: int) -> np.ndarray:
    """Apply a local operator acting on ``sites`` (Kronecker ordered) to ``vec``.

    ``vec`` may carry trailing batch axes.
    """
    k = len(sites)
    t = site_tensor(vec, n_sites, d)
    opt = op.reshape((d,) * (2 * k))
    out = np.tensordot(opt, t, axes=(list(range(k, 2 * k)), list(sites)))
    # tensordot puts the new site axes first; move them back into place
    rest = [a for a in range(t.ndim) if a not in sites]
    current = list(sites) + rest
    out = np.moveaxis(out, list(range(t.ndim)), current)
    return flatten_site_tensor(out, n_sites)


def embed(op: np.ndarray, sites: Sequence[int], n_sites: int, d: int = 2) -> np.ndarray:
    """Dense matrix of a local operator on the full product space."""
    dim = d ** n_sites
    return apply_local(np.eye(dim, dtype=complex), op, sites, n_sites, d)


def digits(n_sites: int, d: int) -> np.ndarray:
    """Array ``D[k, idx]`` holding the local state of site ``k`` in basis state ``idx``."""
    idx = np.arange(d ** n_sites)
    return np.stack([(idx // d ** k) % d for k in range(n_sites)])


def product_state(local_states: Sequence[int], d: int = 2) -> np.ndarray:
    """Basis vector for a product configuration (``0`` = spin up for qubits)."""
    n = len(local_states)
    vec = np.zeros(d ** n, dtype=complex)
    vec[sum(int(s) * d ** k for k, s in enumerate(local_states))] = 1.0
    return vec


def random_state(n_sites: int, d: int = 2, rng: np.random.Generator | None = None) -> np.ndarray:
    rng = np.random.default_rng() if rng is None else rng
    v = rng.normal(size=d ** n_sites) + 1j * rng.normal(size=d ** n_sites)
    return v / np.linalg.norm(v)


def random_hermitian(dim: int, rng: np.random.Generator | None = None) -> np.ndarray:
    rng = np.random.default_rng() if rng is None else rng
    a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return (a + a.conj().T) / 2


def random_unitary(dim: int, rng: np.random.Generator | None = None) -> np.ndarray:
    """Haar-random unitary (a random phase when ``dim == 1``)."""
    rng = np.random.default_rng() if rng is None else rng
    if dim == 1:
        return np.exp(2j * np.pi * rng.random()) * np.ones((1, 1))
    return unitary_group.rvs(dim, random_state=rng)
