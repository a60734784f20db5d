"""Independent oracles shared by the test modules.

These deliberately avoid the package's tensor reshapes: operators are built
with explicit Kronecker products and partial traces with index loops.
"""

from __future__ import annotations

import itertools

import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


def kron_site_op(op: np.ndarray, site: int, n: int) -> np.ndarray:
    """Single-site operator on ``n`` qubits; site 0 is the least significant bit."""
    out = np.eye(1, dtype=complex)
    for s in reversed(range(n)):
        out = np.kron(out, op if s == site else np.eye(2))
    return out


def naive_partial_trace(vec: np.ndarray, keep: list[int], n: int, d: int = 2) -> np.ndarray:
    """``rho_V`` by explicit loops over basis configurations."""
    keep = sorted(keep)
    rest = [k for k in range(n) if k not in keep]
    dv = d ** len(keep)
    rho = np.zeros((dv, dv), dtype=complex)

    def index(cfg):
        return sum(c * d ** k for k, c in enumerate(cfg))

    for env in itertools.product(range(d), repeat=len(rest)):
        for a in itertools.product(range(d), repeat=len(keep)):
            for b in itertools.product(range(d), repeat=len(keep)):
                ca, cb = [0] * n, [0] * n
                for k, s in zip(rest, env):
                    ca[k] = cb[k] = s
                for k, s in zip(keep, a):
                    ca[k] = s
                for k, s in zip(keep, b):
                    cb[k] = s
                ia = sum(s * d ** m for m, s in enumerate(a))
                ib = sum(s * d ** m for m, s in enumerate(b))
                rho[ia, ib] += vec[index(ca)] * np.conj(vec[index(cb)])
    return rho


def naive_operator_partial_trace(A: np.ndarray, keep: list[int], n: int) -> np.ndarray:
    """``tr_out A`` for qubits by explicit loops; indexed little-endian over ``keep``."""
    keep = sorted(keep)
    rest = [k for k in range(n) if k not in keep]
    dv = 2 ** len(keep)
    out = np.zeros((dv, dv), dtype=complex)
    for env in itertools.product(range(2), repeat=len(rest)):
        for a in range(dv):
            for b in range(dv):
                ia = sum(s << k for k, s in zip(rest, env)) + sum(((a >> m) & 1) << k for m, k in enumerate(keep))
                ib = sum(s << k for k, s in zip(rest, env)) + sum(((b >> m) & 1) << k for m, k in enumerate(keep))
                out[a, b] += A[ia, ib]
    return out


def dense_ising(n: int, alpha: float, J: float = 1.0, h: float = 0.0) -> np.ndarray:
    """Open-chain long-range Ising Hamiltonian from explicit Kronecker products."""
    Z = np.diag([1.0, -1.0]).astype(complex)
    X = np.array([[0, 1], [1, 0]], dtype=complex)
    zs = [kron_site_op(Z, k, n) for k in range(n)]
    H = np.zeros((2 ** n, 2 ** n), dtype=complex)
    for i in range(n):
        for j in range(i + 1, n):
            H += J / abs(i - j) ** alpha * zs[i] @ zs[j]
        H += h * kron_site_op(X, i, n)
    return H
