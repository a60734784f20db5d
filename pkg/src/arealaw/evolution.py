"""Exact Schroedinger and Heisenberg time evolution.

States evolve as ``exp(-iHt)|psi>``; operators as ``A(t) = exp(iHt) A exp(-iHt)``.
Small systems use a cached dense eigendecomposition, larger ones a Lanczos
(Krylov) exponential with adaptive sub-stepping.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .hamiltonian import DENSE_MAX_SITES, TwoBodyHamiltonian
from .qstate import PureState, entropy, entropy_rate, fd_entropy_rate

logger = logging.getLogger(__name__)

KRYLOV_DIM = 30
KRYLOV_TOL = 1e-12
AUTO_DENSE_SITES = 10


class EvolutionError(RuntimeError):
    pass


class KrylovError(EvolutionError):
    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual estimate {residual:.3e})")
        self.residual = residual


def eigensystem(H) -> tuple[np.ndarray, np.ndarray]:
    """Cached ``(E, U)`` for a TwoBodyHamiltonian or a dense Hermitian matrix."""
    if isinstance(H, TwoBodyHamiltonian):
        cache = H.__dict__
        if "_eigensystem" not in cache:
            cache["_eigensystem"] = np.linalg.eigh(H.to_dense())
        return cache["_eigensystem"]
    return np.linalg.eigh(np.asarray(H))


def dense_evolve(vec: np.ndarray, E: np.ndarray, U: np.ndarray, t: float) -> np.ndarray:
    return U @ (np.exp(-1j * E * t) * (U.conj().T @ vec))


def krylov_evolve(apply: Callable[[np.ndarray], np.ndarray], vec: np.ndarray, t: float,
                  m: int = KRYLOV_DIM, tol: float = KRYLOV_TOL, max_steps: int = 10_000) -> np.ndarray:
    """``exp(-i t A) vec`` for Hermitian ``A`` given as a matvec.

    Lanczos with full re-orthogonalization; the total time is split into
    sub-steps whose size adapts to the a-posteriori error estimate
    ``beta * h_{m+1,m} * |[exp(-i tau T_m) e_1]_m|`` (kept below
    ``tol * tau / |t|``).
    """
    w = np.asarray(vec, dtype=complex).copy()
    if t == 0:
        return w
    sign = np.sign(t)
    total = abs(t)
    done = 0.0
    tau = total
    steps = 0
    err = 0.0
    while done < total * (1 - 1e-15):
        steps += 1
        if steps > max_steps:
            raise KrylovError("Krylov propagation did not converge within max_steps", err)
        beta = np.linalg.norm(w)
        if beta == 0:
            return w
        n = w.size
        kmax = min(m, n)
        V = np.zeros((kmax + 1, n), dtype=complex)
        alpha = np.zeros(kmax)
        betas = np.zeros(kmax)
        V[0] = w / beta
        k_used = kmax
        h_next = 0.0
        for k in range(kmax):
            u = apply(V[k])
            alpha[k] = np.vdot(V[k], u).real
            u = u - alpha[k] * V[k] - (betas[k - 1] * V[k - 1] if k > 0 else 0)
            # full re-orthogonalization keeps the basis orthonormal at double precision
            u -= V[:k + 1].T @ (V[:k + 1].conj() @ u)
            b = np.linalg.norm(u)
            if b < 1e-13 * beta:  # invariant subspace: projection is exact
                k_used = k + 1
                h_next = 0.0
                break
            betas[k] = b
            V[k + 1] = u / b
            h_next = b
        T = np.diag(alpha[:k_used]) + np.diag(betas[:k_used - 1], 1) + np.diag(betas[:k_used - 1], -1)
        theta, S = np.linalg.eigh(T)
        remaining = total - done
        tau = min(tau, remaining)
        while True:
            y = S @ (np.exp(-1j * sign * tau * theta) * S[0].conj())
            err = beta * h_next * abs(y[-1])
            if h_next == 0.0 or err <= tol * tau / total:
                break
            tau *= 0.5
            if tau < total * 1e-12:
                raise KrylovError("Krylov step size underflow", err)
        w = beta * (V[:k_used].T @ y)
        done += tau
        tau = 2 * tau if h_next else total - done
    return w


def evolve(psi: PureState, H: TwoBodyHamiltonian, t: float, method: str = "auto") -> PureState:
    """``exp(-iHt)|psi>``; ``method`` is ``"dense"``, ``"krylov"`` or ``"auto"``."""
    if not np.isfinite(t):
        raise EvolutionError("evolution time must be finite")
    if method == "auto":
        method = "dense" if H.n_sites <= AUTO_DENSE_SITES else "krylov"
    if method == "dense":
        E, U = eigensystem(H)
        out = dense_evolve(psi.vector, E, U, t)
    elif method == "krylov":
        out = krylov_evolve(H.apply, psi.vector, t)
    else:
        raise ValueError(f"unknown evolution method {method!r}")
    # renormalize away accumulated rounding (drift is tested separately)
    return psi.with_vector(out / np.linalg.norm(out))


def propagator_for(generator) -> Callable[[np.ndarray, float], np.ndarray]:
    """Return ``(vec, dt) -> exp(-i G dt) vec`` for a Hamiltonian or dense matrix."""
    if isinstance(generator, TwoBodyHamiltonian) and generator.n_sites > AUTO_DENSE_SITES:
        return lambda v, dt: krylov_evolve(generator.apply, v, dt)
    E, U = eigensystem(generator)
    return lambda v, dt: dense_evolve(v, E, U, dt)


def heisenberg(A: np.ndarray, H, t: float) -> np.ndarray:
    """``exp(iHt) A exp(-iHt)`` (dense, at most ``DENSE_MAX_SITES`` sites)."""
    if isinstance(H, TwoBodyHamiltonian) and H.n_sites > DENSE_MAX_SITES:
        raise EvolutionError(
            f"Heisenberg evolution needs dense operators (N <= {DENSE_MAX_SITES}); "
            "use state evolution or commutator-free observables instead")
    if t == 0:  # exact, avoids eigenbasis round-off
        return np.array(A, dtype=complex, copy=True)
    E, U = eigensystem(H)
    return heisenberg_eig(U.conj().T @ A @ U, E, U, t)


def heisenberg_eig(A_eig: np.ndarray, E: np.ndarray, U: np.ndarray, t: float) -> np.ndarray:
    """Heisenberg evolution of an operator already expressed in the eigenbasis."""
    ph = np.exp(1j * E * t)
    return U @ ((ph[:, None] * A_eig) * ph.conj()[None, :]) @ U.conj().T


@dataclass(frozen=True)
class TrajectoryPoint:
    t: float
    entropy: float
    rate: float
    rate_method: str
    rate_fd: float
    min_eigenvalue: float


def trajectory(psi0: PureState, H: TwoBodyHamiltonian, times: Sequence[float], region,
               method: str = "auto") -> list[TrajectoryPoint]:
    """Entropy and entropy rate of ``region`` along ``exp(-iHt)|psi0>``.

    ``rate`` is the analytic rate when ``rho_V`` is full rank (finite
    difference otherwise); ``rate_fd`` is always the Richardson-checked
    finite-difference value so the two can be compared.
    """
    times = np.asarray(times, dtype=float)
    if times.size > 1 and np.any(np.diff(times) <= 0):
        raise EvolutionError("time grid must be strictly ascending")
    if method == "auto":
        method = "dense" if H.n_sites <= AUTO_DENSE_SITES else "krylov"
    if method == "dense":
        E, U = eigensystem(H)

        def prop(v, dt):
            return dense_evolve(v, E, U, dt)
    else:
        def prop(v, dt):
            return krylov_evolve(H.apply, v, dt)

    out = []
    current = psi0
    t_prev = 0.0
    for t in times:
        if t != t_prev:
            current = psi0.with_vector(_normalized(prop(current.vector, t - t_prev)))
        t_prev = t
        s = entropy(current, region)
        rate = entropy_rate(current, H, region, propagate=prop)

        def s_at(dt, _v=current.vector):
            return entropy(psi0.with_vector(_normalized(prop(_v, dt))), region)

        fd, _ = fd_entropy_rate(s_at)
        out.append(TrajectoryPoint(float(t), s, rate.value, rate.method, fd, rate.min_eigenvalue))
    return out


def _normalized(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)

