"""Two-body long-range Hamiltonians ``H = sum_ij h_ij`` with ``||h_ij|| <= r_ij**-alpha``.

A :class:`TwoBodyHamiltonian` stores its terms locally and can act on states
matrix-free (any system size the memory allows), or be assembled into a
bit-indexed sparse matrix / dense matrix for exact diagonalization.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .basis import SIGMA_X, SIGMA_Y, SIGMA_Z, apply_local, digits
from .lattice import LatticeGeometry

logger = logging.getLogger(__name__)

HERMITIAN_TOL = 1e-10
NORM_TOL = 1e-12
DENSE_MAX_SITES = 12
DEGENERACY_TOL = 1e-8


class HamiltonianError(ValueError):
    """Invalid Hamiltonian input: non-Hermitian term, norm-bound violation, ..."""


def is_hermitian(m: np.ndarray, tol: float = HERMITIAN_TOL) -> bool:
    m = np.asarray(m)
    return m.ndim == 2 and m.shape[0] == m.shape[1] and np.allclose(m, m.conj().T, atol=tol, rtol=0)


def operator_norm(m: np.ndarray) -> float:
    """Largest |eigenvalue| of a Hermitian matrix."""
    m = np.asarray(m)
    if not is_hermitian(m):
        raise HamiltonianError("operator_norm expects a Hermitian matrix")
    if m.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvalsh(m))))


def spectral_norm(m: np.ndarray) -> float:
    """Largest singular value; for non-Hermitian operators such as commutators."""
    return float(np.linalg.norm(np.asarray(m), 2))


@dataclass(frozen=True)
class TwoBodyHamiltonian:
    """Sum of two-site and on-site terms on a lattice.

    ``terms`` maps an ordered pair ``(i, j)`` with ``i < j`` to a ``d**2 x d**2``
    Hermitian matrix in Kronecker order (``i`` is the first factor);
    ``onsite`` maps a site to a ``d x d`` Hermitian matrix.
    """

    lattice: LatticeGeometry
    alpha: float
    terms: Mapping[tuple[int, int], np.ndarray]
    onsite: Mapping[int, np.ndarray] = field(default_factory=dict)
    d: int = 2
    check_bound: bool = True

    def __post_init__(self):
        n = self.lattice.n_sites
        if not 2 <= self.d <= 4:
            raise HamiltonianError(f"local dimension d={self.d} outside supported range 2..4")
        terms = {}
        for (i, j), h in self.terms.items():
            h = np.asarray(h, dtype=complex)
            if i == j or not (0 <= i < n and 0 <= j < n):
                raise HamiltonianError(f"invalid pair ({i}, {j})")
            if i > j:  # store with i < j; swap the tensor factors to match
                d = self.d
                h = h.reshape(d, d, d, d).transpose(1, 0, 3, 2).reshape(d * d, d * d)
                i, j = j, i
            if (i, j) in terms:
                raise HamiltonianError(f"pair ({i}, {j}) given twice")
            if h.shape != (self.d ** 2, self.d ** 2):
                raise HamiltonianError(f"term ({i}, {j}) has shape {h.shape}")
            if not is_hermitian(h):
                raise HamiltonianError(f"term ({i}, {j}) is not Hermitian")
            if self.check_bound:
                r = self.lattice.distance(i, j)
                norm = operator_norm(h)
                if norm > r ** (-self.alpha) * (1 + NORM_TOL) + NORM_TOL:
                    raise HamiltonianError(
                        f"term ({i}, {j}) violates ||h_ij|| <= r^-alpha: "
                        f"{norm:.6g} > {r ** (-self.alpha):.6g} (r={r:g}, alpha={self.alpha:g})")
            terms[(i, j)] = h
        onsite = {}
        for i, h in self.onsite.items():
            h = np.asarray(h, dtype=complex)
            if not 0 <= i < n:
                raise HamiltonianError(f"invalid site {i}")
            if h.shape != (self.d, self.d) or not is_hermitian(h):
                raise HamiltonianError(f"on-site term {i} must be a Hermitian {self.d}x{self.d} matrix")
            onsite[int(i)] = h
        object.__setattr__(self, "terms", terms)
        object.__setattr__(self, "onsite", onsite)

    @property
    def n_sites(self) -> int:
        return self.lattice.n_sites

    @property
    def dim(self) -> int:
        return self.d ** self.n_sites

    def term_norms(self) -> dict[tuple[int, int], float]:
        return {k: operator_norm(h) for k, h in self.terms.items()}

    def bound_ratio(self) -> float:
        """``max ||h_ij|| r_ij**alpha`` over pairs (<= 1 for a valid instance)."""
        if not self.terms:
            return 0.0
        return max(n * self.lattice.distance(i, j) ** self.alpha for (i, j), n in self.term_norms().items())

    # ----- assembly ---------------------------------------------------------

    @cached_property
    def _split(self):
        """Diagonal vector of all terms plus the list of terms with off-diagonal parts."""
        d, n = self.d, self.n_sites
        dig = digits(n, d)
        diag = np.zeros(self.dim, dtype=complex)
        offdiag = []
        for (i, j), h in self.terms.items():
            hd = np.diag(h)
            diag += hd[dig[i] * d + dig[j]]
            off = h - np.diag(hd)
            if np.any(off != 0):
                offdiag.append(((i, j), off))
        for i, h in self.onsite.items():
            hd = np.diag(h)
            diag += hd[dig[i]]
            off = h - np.diag(hd)
            if np.any(off != 0):
                offdiag.append(((i,), off))
        if np.allclose(diag.imag, 0):
            diag = diag.real.astype(complex)
        return diag, offdiag

    def apply(self, vec: np.ndarray) -> np.ndarray:
        """Matrix-free ``H @ vec``; ``vec`` may have trailing batch axes."""
        diag, offdiag = self._split
        vec = np.asarray(vec, dtype=complex)
        out = diag.reshape((-1,) + (1,) * (vec.ndim - 1)) * vec
        for sites, op in offdiag:
            out += apply_local(vec, op, sites, self.n_sites, self.d)
        return out

    def __matmul__(self, vec):
        return self.apply(vec)

    def to_sparse(self) -> sp.csr_matrix:
        """Bit-indexed sparse assembly."""
        d, n = self.d, self.n_sites
        dig = digits(n, d)
        idx = np.arange(self.dim)
        diag, offdiag = self._split
        rows, cols, vals = [idx], [idx], [diag]
        for sites, op in offdiag:
            k = len(sites)
            local = np.zeros(self.dim, dtype=int)
            for s in sites:
                local = local * d + dig[s]
            for r, c in zip(*np.nonzero(op)):
                src = idx[local == c]
                shift = 0
                for pos, s in enumerate(sites):
                    rd = (r // d ** (k - 1 - pos)) % d
                    cd = (c // d ** (k - 1 - pos)) % d
                    shift += (rd - cd) * d ** s
                rows.append(src + shift)
                cols.append(src)
                vals.append(np.full(src.size, op[r, c]))
        m = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(self.dim, self.dim))
        return m.tocsr()

    def to_dense(self) -> np.ndarray:
        if self.n_sites > DENSE_MAX_SITES:
            raise HamiltonianError(
                f"dense assembly limited to {DENSE_MAX_SITES} sites (got {self.n_sites}); "
                "use apply()/to_sparse()")
        return self.to_sparse().toarray()

    def linear_operator(self) -> spla.LinearOperator:
        return spla.LinearOperator((self.dim, self.dim), matvec=self.apply, dtype=complex)

    # ----- algebra ----------------------------------------------------------

    def scaled_sum(self, other: "TwoBodyHamiltonian", a: float, b: float,
                   check_bound: bool = True) -> "TwoBodyHamiltonian":
        """Term-wise ``a*self + b*other``."""
        _require_compatible(self, other)
        terms = {}
        for k in set(self.terms) | set(other.terms):
            terms[k] = a * self.terms.get(k, 0) + b * other.terms.get(k, 0)
        onsite = {}
        for k in set(self.onsite) | set(other.onsite):
            onsite[k] = a * self.onsite.get(k, 0) + b * other.onsite.get(k, 0)
        zero2 = np.zeros((self.d ** 2,) * 2)
        zero1 = np.zeros((self.d,) * 2)
        terms = {k: np.asarray(v) + zero2 for k, v in terms.items()}
        onsite = {k: np.asarray(v) + zero1 for k, v in onsite.items()}
        return TwoBodyHamiltonian(self.lattice, self.alpha, terms, onsite, self.d, check_bound)

    def anchored_terms(self) -> dict[tuple[int, int], np.ndarray]:
        """All terms keyed by anchor pair; on-site terms use ``(i, i)``."""
        out = dict(self.terms)
        out.update({(i, i): h for i, h in self.onsite.items()})
        return out


def _require_compatible(a: TwoBodyHamiltonian, b: TwoBodyHamiltonian) -> None:
    if a.lattice != b.lattice or a.d != b.d:
        raise HamiltonianError("Hamiltonians live on different lattices or local dimensions")


def build_long_range_ising(lattice: LatticeGeometry, alpha: float, J: float = 1.0,
                           h: float = 0.0) -> TwoBodyHamiltonian:
    """``sum_{i<j} J r_ij**-alpha Z_i Z_j + h sum_i X_i``."""
    if abs(J) > 1 + NORM_TOL:
        raise HamiltonianError(f"|J|={abs(J):g} > 1 violates the norm bound")
    zz = np.kron(SIGMA_Z, SIGMA_Z)
    n = lattice.n_sites
    terms = {(i, j): J * lattice.distance(i, j) ** (-alpha) * zz
             for i in range(n) for j in range(i + 1, n) if J != 0}
    onsite = {i: h * SIGMA_X for i in range(n)} if h != 0 else {}
    return TwoBodyHamiltonian(lattice, alpha, terms, onsite)


def build_long_range_xy(lattice: LatticeGeometry, alpha: float, J: float = 1.0,
                        h: float = 0.0) -> TwoBodyHamiltonian:
    """``sum_{i<j} J (X_i X_j + Y_i Y_j) / (2 r_ij**alpha) + h sum_i Z_i``."""
    if abs(J) > 1 + NORM_TOL:
        raise HamiltonianError(f"|J|={abs(J):g} > 1 violates the norm bound")
    xy = (np.kron(SIGMA_X, SIGMA_X) + np.kron(SIGMA_Y, SIGMA_Y)) / 2
    n = lattice.n_sites
    terms = {(i, j): J * lattice.distance(i, j) ** (-alpha) * xy
             for i in range(n) for j in range(i + 1, n) if J != 0}
    onsite = {i: h * SIGMA_Z for i in range(n)} if h != 0 else {}
    return TwoBodyHamiltonian(lattice, alpha, terms, onsite)


def build_custom(lattice: LatticeGeometry, alpha: float,
                 terms: Mapping[tuple[int, int], np.ndarray],
                 onsite: Mapping[int, np.ndarray] | None = None, d: int = 2) -> TwoBodyHamiltonian:
    return TwoBodyHamiltonian(lattice, alpha, dict(terms), dict(onsite or {}), d)


# ----- custom term files -----------------------------------------------------

def load_terms(path: str | Path, d: int = 2):
    """Read terms from the plain-text matrix format.

    Each block starts with a header ``pair i j`` (a ``d**2 x d**2`` matrix) or
    ``site i`` (a ``d x d`` matrix) followed by one line per matrix row holding
    ``re im`` pairs in row-major order.  ``#`` starts a comment.
    """
    lines = []
    for no, raw in enumerate(Path(path).read_text().splitlines(), 1):
        text = raw.split("#", 1)[0].strip()
        if text:
            lines.append((no, text.split()))
    terms, onsite = {}, {}
    k = 0
    while k < len(lines):
        no, head = lines[k]
        if head[0] == "pair" and len(head) == 3:
            key, size, target = (int(head[1]), int(head[2])), d * d, terms
        elif head[0] == "site" and len(head) == 2:
            key, size, target = int(head[1]), d, onsite
        else:
            raise HamiltonianError(f"{path}:{no}: expected 'pair i j' or 'site i'")
        rows = lines[k + 1:k + 1 + size]
        if len(rows) < size:
            raise HamiltonianError(f"{path}:{no}: block needs {size} rows")
        mat = np.empty((size, size), dtype=complex)
        for r, (rno, vals) in enumerate(rows):
            if len(vals) != 2 * size:
                raise HamiltonianError(f"{path}:{rno}: expected {2 * size} numbers, got {len(vals)}")
            v = np.array(vals, dtype=float)
            mat[r] = v[0::2] + 1j * v[1::2]
        target[key] = mat
        k += 1 + size
    return terms, onsite


def dump_terms(path: str | Path, terms: Mapping[tuple[int, int], np.ndarray],
               onsite: Mapping[int, np.ndarray] | None = None) -> None:
    out = ["# arealaw term file: 'pair i j' / 'site i' blocks, rows of (re im) pairs"]
    blocks = [(f"pair {i} {j}", m) for (i, j), m in terms.items()]
    blocks += [(f"site {i}", m) for i, m in (onsite or {}).items()]
    for head, m in blocks:
        out.append(head)
        for row in np.asarray(m, dtype=complex):
            out.append(" ".join(f"{z.real:.17g} {z.imag:.17g}" for z in row))
    Path(path).write_text("\n".join(out) + "\n")


# ----- paths and spectra -------------------------------------------------------

@dataclass(frozen=True)
class HamiltonianPath:
    """Linear interpolation ``H(s) = (1-s) H(0) + s H(1)`` with a declared gap floor."""

    start: TwoBodyHamiltonian
    end: TwoBodyHamiltonian
    gap_floor: float | None = None

    def __post_init__(self):
        _require_compatible(self.start, self.end)

    @property
    def lattice(self) -> LatticeGeometry:
        return self.start.lattice

    def at(self, s: float) -> TwoBodyHamiltonian:
        # convex combination of bound-respecting terms stays in the class
        return self.start.scaled_sum(self.end, 1.0 - s, s)

    def derivative(self) -> TwoBodyHamiltonian:
        return path_derivative(self)

    def verify_gap(self, s_grid: Iterable[float]) -> np.ndarray:
        """Measured gaps on ``s_grid``; raises if any falls below the floor."""
        gaps, degenerate = spectral_gap(self, s_grid)
        if np.any(degenerate):
            raise HamiltonianError("degenerate ground state along the path")
        if self.gap_floor is not None and np.min(gaps) < self.gap_floor:
            s_bad = list(s_grid)[int(np.argmin(gaps))]
            raise HamiltonianError(
                f"path gap {np.min(gaps):.6g} at s={s_bad:g} below declared floor {self.gap_floor:g}")
        return gaps


def path_derivative(path: HamiltonianPath) -> TwoBodyHamiltonian:
    """``dH/ds = H(1) - H(0)``; pair norms may reach ``2 r**-alpha``."""
    return path.end.scaled_sum(path.start, 1.0, -1.0, check_bound=False)


def lowest_levels(H: TwoBodyHamiltonian, k: int = 2) -> np.ndarray:
    if H.n_sites <= DENSE_MAX_SITES:
        return np.linalg.eigvalsh(H.to_dense())[:k]
    vals = spla.eigsh(H.to_sparse(), k=k, which="SA", tol=1e-12, return_eigenvectors=False)
    return np.sort(vals.real)


def spectral_gap(H, s_grid: Iterable[float] | None = None,
                 tol: float = DEGENERACY_TOL) -> tuple[np.ndarray, np.ndarray]:
    """Gap ``E1 - E0`` for a Hamiltonian or along a path.

    Returns ``(gaps, degenerate)`` arrays; ``degenerate`` flags gaps below
    ``tol`` (ground state not unique).
    """
    if isinstance(H, HamiltonianPath):
        grid = [0.0] if s_grid is None else list(s_grid)
        hams = [H.at(s) for s in grid]
    else:
        hams = [H]
    gaps = []
    for ham in hams:
        e = lowest_levels(ham, 2)
        gaps.append(e[1] - e[0])
    gaps = np.array(gaps)
    degenerate = gaps < tol
    if np.any(degenerate):
        logger.warning("degenerate ground state detected (gap < %g)", tol)
    return gaps, degenerate
