"""Pure states, reduced density matrices, entanglement entropy and its rate.

Entropies are in nats.  ``rho_V`` is indexed little-endian over the sites of
``V`` in ascending order: the first site of ``V`` is the least significant
digit.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Literal

import numpy as np

from .basis import site_tensor
from .lattice import LatticeGeometry, Region

NORM_TOL = 1e-10
EIG_CLIP = 1e-10
FULL_RANK_TOL = 1e-9
FD_STEP = 1e-5


class StateError(ValueError):
    pass


@dataclass(frozen=True)
class PureState:
    vector: np.ndarray
    lattice: LatticeGeometry
    d: int = 2

    def __post_init__(self):
        v = np.asarray(self.vector, dtype=complex).reshape(-1)
        if v.size != self.d ** self.lattice.n_sites:
            raise StateError(f"vector length {v.size} != d**N = {self.d ** self.lattice.n_sites}")
        if abs(np.linalg.norm(v) - 1) > NORM_TOL:
            raise StateError(f"state not normalized (norm={np.linalg.norm(v):.12g})")
        object.__setattr__(self, "vector", v)

    @classmethod
    def normalized(cls, vector, lattice, d=2) -> "PureState":
        v = np.asarray(vector, dtype=complex).reshape(-1)
        return cls(v / np.linalg.norm(v), lattice, d)

    def with_vector(self, vector) -> "PureState":
        return PureState(vector, self.lattice, self.d)

    @property
    def n_sites(self) -> int:
        return self.lattice.n_sites


@dataclass(frozen=True)
class ReducedDensityMatrix:
    matrix: np.ndarray
    sites: tuple[int, ...]

    def __post_init__(self):
        m = self.matrix
        if not np.allclose(m, m.conj().T, atol=1e-10):
            raise StateError("reduced density matrix not Hermitian")
        if abs(np.trace(m).real - 1) > 1e-10:
            raise StateError(f"reduced density matrix trace {np.trace(m).real:.12g} != 1")

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.matrix)


def _sites_of(region) -> list[int]:
    if isinstance(region, Region):
        return region.sorted
    return sorted(set(int(i) for i in region))


def _bipartite_matrix(vec: np.ndarray, n: int, d: int, sites: list[int]) -> np.ndarray:
    """Reshape ``vec`` to ``M[v, vbar]`` with ``rho_V = M M^dagger``."""
    comp = [k for k in range(n) if k not in sites]
    t = site_tensor(vec, n, d)
    # C-order flatten makes the last axis fastest: reverse to get little-endian
    m = t.transpose(sites[::-1] + comp[::-1])
    return m.reshape(d ** len(sites), d ** len(comp))


def _check_region(sites: list[int], n: int) -> None:
    if not sites or len(sites) == n or sites[0] < 0 or sites[-1] >= n:
        raise StateError("region must be a non-trivial subset of the lattice sites")


def reduce(psi: PureState, region) -> ReducedDensityMatrix:
    """Partial trace of ``|psi><psi|`` over the complement of ``region``."""
    sites = _sites_of(region)
    _check_region(sites, psi.n_sites)
    m = _bipartite_matrix(psi.vector, psi.n_sites, psi.d, sites)
    return ReducedDensityMatrix(m @ m.conj().T, tuple(sites))


def entropy_from_eigenvalues(lam: np.ndarray) -> float:
    lam = np.asarray(lam, dtype=float)
    if np.any(lam < -EIG_CLIP):
        raise StateError(f"density matrix has eigenvalue {lam.min():.3g} < -{EIG_CLIP}")
    lam = lam[lam > 0]
    return float(-np.sum(lam * np.log(lam)))


def schmidt_probabilities(psi: PureState, region) -> np.ndarray:
    """Eigenvalues of ``rho_V`` via singular values (ascending)."""
    sites = _sites_of(region)
    _check_region(sites, psi.n_sites)
    m = _bipartite_matrix(psi.vector, psi.n_sites, psi.d, sites)
    return np.sort(np.linalg.svd(m, compute_uv=False) ** 2)


def entropy(psi: PureState, region) -> float:
    """Von Neumann entropy ``-tr rho_V ln rho_V`` (nats)."""
    return entropy_from_eigenvalues(reduce(psi, region).eigenvalues())


@dataclass(frozen=True)
class EntropyRate:
    value: float
    method: Literal["analytic", "finite-difference"]
    min_eigenvalue: float
    fd_error: float | None = None


def _generator_action(generator) -> Callable[[np.ndarray], np.ndarray]:
    if hasattr(generator, "apply"):
        return generator.apply
    g = np.asarray(generator)
    return lambda v: g @ v


def analytic_entropy_rate(psi: PureState, generator, region) -> tuple[float, float]:
    """``dS/dt = -tr(rho_dot ln rho)`` for ``d|psi>/dt = -i G |psi>``.

    Returns ``(rate, min_eigenvalue_of_rho_V)``.  Only meaningful when
    ``rho_V`` is full rank.
    """
    sites = _sites_of(region)
    _check_region(sites, psi.n_sites)
    n, d = psi.n_sites, psi.d
    phi = _generator_action(generator)(psi.vector)
    m = _bipartite_matrix(psi.vector, n, d, sites)
    f = _bipartite_matrix(phi, n, d, sites)
    rho = m @ m.conj().T
    x = f @ m.conj().T
    rho_dot = -1j * (x - x.conj().T)
    lam, vecs = np.linalg.eigh(rho)
    lam_min = float(lam[0])
    if lam_min <= 0:
        return float("nan"), lam_min
    rd = vecs.conj().T @ rho_dot @ vecs
    rate = -float(np.real(np.sum(np.diag(rd) * np.log(lam))))
    return rate, lam_min


def fd_entropy_rate(entropy_at: Callable[[float], float], step: float = FD_STEP) -> tuple[float, float]:
    """Central difference of an entropy trajectory around 0, Richardson-checked.

    Returns the extrapolated rate and the discrepancy between steps ``h`` and ``2h``.
    """
    d1 = (entropy_at(step) - entropy_at(-step)) / (2 * step)
    d2 = (entropy_at(2 * step) - entropy_at(-2 * step)) / (4 * step)
    return (4 * d1 - d2) / 3, abs(d1 - d2)


def entropy_rate(psi: PureState, generator, region, *, propagate=None,
                 full_rank_tol: float = FULL_RANK_TOL, step: float = FD_STEP) -> EntropyRate:
    """Rate of change of ``S_V`` under ``d|psi>/dt = -i G |psi>``.

    Uses the analytic formula when ``rho_V`` is numerically full rank and a
    central finite difference of the evolved entropy otherwise.  ``propagate``
    maps ``(vector, dt)`` to the evolved vector; by default the generator is
    exponentiated via :func:`arealaw.evolution.propagator_for`.
    """
    rate, lam_min = analytic_entropy_rate(psi, generator, region)
    if lam_min > full_rank_tol and np.isfinite(rate):
        return EntropyRate(rate, "analytic", lam_min)
    if propagate is None:
        from .evolution import propagator_for
        propagate = propagator_for(generator)

    def s_at(dt: float) -> float:
        return entropy(psi.with_vector(propagate(psi.vector, dt)), region)

    try:
        value, err = fd_entropy_rate(s_at, step)
    except Exception as exc:  # pragma: no cover - pathological inputs only
        raise StateError(f"entropy rate unavailable: {exc}") from exc
    if not np.isfinite(value):
        raise StateError("entropy rate unavailable: both analytic and finite-difference paths failed")
    return EntropyRate(value, "finite-difference", lam_min, err)
