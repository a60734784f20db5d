"""Operator truncation and the shell decomposition of local generators.

The Haar average of ``A`` over unitaries acting outside a site set equals
``tr_out(A) / dim_out`` tensored with the identity on the discarded sites.
Truncating at radius ``R`` keeps every site within distance ``R`` of the
operator's support.  Shells are differences of successive truncations,
``g(R) = T_R(A) - T_{R-1}(A)`` with ``T_0 = 0``, so they telescope to ``A``
once ``R`` covers the lattice.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .basis import embed, random_unitary
from .evolution import eigensystem, heisenberg, heisenberg_eig
from .hamiltonian import DENSE_MAX_SITES, HamiltonianPath, TwoBodyHamiltonian, spectral_norm
from .lattice import LatticeGeometry


class LocalityError(ValueError):
    pass


# ----- Haar truncation -----------------------------------------------------------

def _site_axes(keep: Sequence[int], n: int) -> tuple[list[int], list[int]]:
    out = [s for s in range(n) if s not in keep]
    # row axis of site s in the C-ordered [d]*2N reshape is N-1-s (little-endian)
    rows = [n - 1 - s for s in keep] + [n - 1 - s for s in out]
    return rows, out


def reduced_operator(A: np.ndarray, keep: Iterable[int], n_sites: int, d: int = 2) -> np.ndarray:
    """Normalized partial trace ``tr_out(A) / dim_out`` on the sites ``keep``.

    The result is indexed with the Kronecker order of ``sorted(keep)`` read
    from the highest site down, i.e. little-endian like every full operator.
    """
    keep = sorted(set(keep))
    rows, out = _site_axes(keep[::-1], n_sites)
    dk, do = d ** len(keep), d ** len(out)
    t = np.asarray(A).reshape((d,) * (2 * n_sites)).transpose(rows + [n_sites + r for r in rows])
    t = t.reshape(dk, do, dk, do)
    return np.einsum("aibi->ab", t) / do


def haar_truncate(A: np.ndarray, keep: Iterable[int], n_sites: int, d: int = 2) -> np.ndarray:
    """Exact Haar average of ``A`` over unitaries on the complement of ``keep``."""
    keep = sorted(set(int(k) for k in keep))
    if any(k < 0 or k >= n_sites for k in keep):
        raise LocalityError(f"keep set {keep} not within {n_sites} sites")
    if len(keep) == n_sites:
        return np.array(A, dtype=complex, copy=True)
    red = reduced_operator(A, keep, n_sites, d)
    if not keep:
        return red[0, 0] * np.eye(d ** n_sites, dtype=complex)
    rows, out = _site_axes(keep[::-1], n_sites)
    do = d ** len(out)
    full = (red[:, None, :, None] * np.eye(do)[None, :, None, :]).reshape((d,) * (2 * n_sites))
    perm = rows + [n_sites + r for r in rows]
    return full.transpose(np.argsort(perm)).reshape(d ** n_sites, d ** n_sites)


def sampled_haar_truncate(A: np.ndarray, keep: Iterable[int], n_sites: int, d: int = 2,
                          samples: int = 100, rng: np.random.Generator | None = None
                          ) -> tuple[np.ndarray, np.ndarray]:
    """Monte Carlo Haar average; returns the sample mean and its standard error."""
    rng = np.random.default_rng() if rng is None else rng
    keep = sorted(set(keep))
    out = [s for s in range(n_sites) if s not in keep]
    if not out:
        return np.array(A, dtype=complex), np.zeros_like(A, dtype=float)
    acc = np.zeros_like(A, dtype=complex)
    acc2 = np.zeros(A.shape)
    for _ in range(samples):
        u = embed(random_unitary(d ** len(out), rng), out, n_sites, d)
        x = u @ A @ u.conj().T
        acc += x
        acc2 += np.abs(x) ** 2
    mean = acc / samples
    var = np.maximum(acc2 / samples - np.abs(mean) ** 2, 0.0)
    return mean, np.sqrt(var / (samples - 1))


def sampling_deviation(mean: np.ndarray, stderr: np.ndarray, exact: np.ndarray) -> float:
    """Frobenius deviation of a sampled average in units of its pooled standard error."""
    scale = math.sqrt(float(np.sum(stderr ** 2)))
    dev = float(np.linalg.norm(mean - exact))
    return dev / scale if scale > 0 else (0.0 if dev == 0 else math.inf)


def truncation_keep(lattice: LatticeGeometry, support: Iterable[int], radius: float) -> frozenset[int]:
    """Sites within distance ``radius`` of ``support`` (radius 0 keeps nothing)."""
    return lattice.ball(support, radius) if radius > 0 else frozenset()


def truncation_error(A: np.ndarray, H: TwoBodyHamiltonian, t: float, R: float,
                     support: Iterable[int]) -> float:
    """Exact ``||A(t) - A(t, R)||`` for ``A`` supported on ``support``."""
    if H.n_sites > DENSE_MAX_SITES:
        raise LocalityError(f"truncation_error needs N <= {DENSE_MAX_SITES}")
    at = heisenberg(A, H, t)
    keep = truncation_keep(H.lattice, support, R)
    return spectral_norm(at - haar_truncate(at, keep, H.n_sites, H.d))


# ----- shells --------------------------------------------------------------------

@dataclass(frozen=True)
class ShellOperator:
    """Radius-``R`` shell anchored at ``(i, j)`` (``i == j`` for on-site terms)."""

    matrix: np.ndarray
    anchor: tuple[int, int]
    radius: int
    support: frozenset[int]

    def __post_init__(self):
        if self.radius < 1:
            raise LocalityError("shell radius must be >= 1")
        if not np.all(np.isfinite(self.matrix)):
            raise LocalityError("shell operator has non-finite entries")

    @property
    def norm(self) -> float:
        return spectral_norm(self.matrix)

    @property
    def support_size(self) -> int:
        return len(self.support)


def shell_radius_cover(lattice: LatticeGeometry, anchor: tuple[int, int]) -> int:
    """Smallest integer ``R`` whose ball around the anchor is the whole lattice."""
    d = lattice.distance_matrix[list(set(anchor))].min(axis=0).max()
    return max(1, int(np.ceil(d - 1e-12)))


def shells_of(A: np.ndarray, lattice: LatticeGeometry, anchor: tuple[int, int], r_max: int,
              d: int = 2) -> list[ShellOperator]:
    """Telescoping shells ``T_R(A) - T_{R-1}(A)`` for ``R = 1..r_max``."""
    n = lattice.n_sites
    out = []
    prev = np.zeros_like(A, dtype=complex)
    for R in range(1, r_max + 1):
        keep = truncation_keep(lattice, anchor, R)
        cur = haar_truncate(A, keep, n, d)
        out.append(ShellOperator(cur - prev, tuple(anchor), R, keep))
        prev = cur
    return out


def local_term(H: TwoBodyHamiltonian, anchor: tuple[int, int]) -> np.ndarray:
    """Dense embedding of the term of ``H`` anchored at ``anchor``."""
    terms = H.anchored_terms()
    i, j = anchor
    key = (min(i, j), max(i, j))
    if key not in terms:
        return np.zeros((H.dim, H.dim), dtype=complex)
    sites = [i] if i == j else list(key)
    return embed(terms[key], sites, H.n_sites, H.d)


def shell_term(h_tilde: np.ndarray, H: TwoBodyHamiltonian, t: float, i: int, j: int,
               R: int) -> ShellOperator:
    """``g_ij(t, R) = T_R(h(t)) - T_{R-1}(h(t))`` for the local matrix ``h_tilde``.

    ``h_tilde`` is a ``d**2 x d**2`` pair matrix (or ``d x d`` when ``i == j``).
    """
    if R < 1:
        raise LocalityError("shell radius must be >= 1")
    sites = [i] if i == j else [i, j]
    ht = heisenberg(embed(np.asarray(h_tilde), sites, H.n_sites, H.d), H, t)
    n, lat = H.n_sites, H.lattice
    keep = truncation_keep(lat, (i, j), R)
    inner = truncation_keep(lat, (i, j), R - 1)
    g = haar_truncate(ht, keep, n, H.d)
    if R > 1:  # the radius-0 truncation is zero by convention
        g = g - haar_truncate(ht, inner, n, H.d)
    return ShellOperator(g, (i, j), R, keep)


def shell_terms(h_tilde: np.ndarray, H: TwoBodyHamiltonian, t: float, i: int, j: int,
                r_max: int | None = None) -> list[ShellOperator]:
    """All shells ``R = 1..r_max`` (default: until the lattice is covered)."""
    r_max = shell_radius_cover(H.lattice, (i, j)) if r_max is None else r_max
    sites = [i] if i == j else [i, j]
    ht = heisenberg(embed(np.asarray(h_tilde), sites, H.n_sites, H.d), H, t)
    return shells_of(ht, H.lattice, (i, j), r_max, H.d)


class QuadratureConvergenceError(RuntimeError):
    pass


def generator_kernels(H: TwoBodyHamiltonian, quad):
    """``(E, U, K, K_coarse)``: eigensystem and fine/half-resolution kernel matrices."""
    E, U = eigensystem(H)
    return E, U, quad.kernel_matrix(E), quad.kernel_matrix(E, coarse=True)


def generator_shell_table(path: HamiltonianPath, s: float, quad,
                          anchors: Sequence[tuple[int, int]] | None = None,
                          tol: float = 1e-6) -> list[ShellNorm]:
    """Shell norms of every anchored piece of the generator at ``s``.

    Anchors default to every term of ``dH/ds`` with non-zero norm.
    """
    dH = path.derivative()
    if anchors is None:
        anchors = [a for a, h in sorted(dH.anchored_terms().items()) if np.abs(h).max() > 0]
    H = path.at(s)
    kernel = generator_kernels(H, quad)
    rows: list[ShellNorm] = []
    for a in anchors:
        shells = shell_generator_terms(path, s, a, quad, tol=tol, kernel=kernel)
        rows.extend(shell_norm_rows(shells, H.lattice, H.alpha))
    return rows


def shell_generator_terms(path: HamiltonianPath, s: float, anchor: tuple[int, int], quad,
                          r_max: int | None = None, method: str = "linear",
                          tol: float = 1e-6, kernel=None) -> list[ShellOperator]:
    """Shells ``G_ij(s, R)`` of the quasi-adiabatic generator piece for ``anchor``.

    ``method="linear"`` builds ``D_ij`` from the eigenbasis kernel and truncates
    it (truncation is linear, so this equals integrating the shells).
    ``method="direct"`` integrates ``g_ij(t, R)`` node by node in time.  Both
    compare against the half-resolution rule and raise
    :class:`QuadratureConvergenceError` when any shell norm moves by more than ``tol``.
    ``kernel`` may pass a precomputed :func:`generator_kernels` result for ``H(s)``.
    """
    H = path.at(s)
    lat, n, d = H.lattice, H.n_sites, H.d
    r_max = shell_radius_cover(lat, anchor) if r_max is None else r_max
    h_loc = local_term(path.derivative(), anchor)
    E, U, K, Kc = generator_kernels(H, quad) if kernel is None else kernel
    h_eig = U.conj().T @ h_loc @ U
    if method == "linear":
        fine = shells_of(U @ (K * h_eig) @ U.conj().T, lat, anchor, r_max, d)
        coarse = shells_of(U @ (Kc * h_eig) @ U.conj().T, lat, anchor, r_max, d)
    elif method == "direct":
        keeps = [truncation_keep(lat, anchor, R) for R in range(r_max + 1)]
        acc = [np.zeros((H.dim, H.dim), dtype=complex) for _ in range(r_max)]
        acc_c = [np.zeros((H.dim, H.dim), dtype=complex) for _ in range(r_max)]
        for t, c, cc in zip(quad.t, quad.coef, quad.coef_coarse):
            if c == 0 and cc == 0:
                continue
            odd = heisenberg_eig(h_eig, E, U, t) - heisenberg_eig(h_eig, E, U, -t)
            prev = np.zeros_like(odd)
            for R in range(1, r_max + 1):
                cur = haar_truncate(odd, keeps[R], n, d)
                g = cur - prev
                acc[R - 1] += c * g
                if cc:
                    acc_c[R - 1] += cc * g
                prev = cur
        fine = [ShellOperator(m, tuple(anchor), R, keeps[R]) for R, m in enumerate(acc, 1)]
        coarse = [ShellOperator(m, tuple(anchor), R, keeps[R]) for R, m in enumerate(acc_c, 1)]
    else:
        raise ValueError(f"unknown shell method {method!r}")
    shift = max(abs(a.norm - b.norm) for a, b in zip(fine, coarse))
    if shift > tol:
        raise QuadratureConvergenceError(
            f"shell norms move by {shift:.3e} > {tol:g} when the time resolution is halved")
    return fine


# ----- shell norm tables ---------------------------------------------------------

@dataclass(frozen=True)
class ShellNorm:
    i: int
    j: int
    R: int
    r_ij: float
    norm: float
    support_size: int
    bound_envelope: float = float("nan")


def shell_norm_rows(shells: Sequence[ShellOperator], lattice: LatticeGeometry, alpha: float,
                    D: int | None = None) -> list[ShellNorm]:
    """Table rows with the reference envelope ``R**(D - alpha) / r_ij**alpha``."""
    D = lattice.dimension if D is None else D
    rows = []
    for sh in shells:
        i, j = sh.anchor
        r = lattice.distance(i, j)
        env = sh.radius ** (D - alpha) * (r ** (-alpha) if r > 0 else 1.0)
        rows.append(ShellNorm(i, j, sh.radius, r, sh.norm, sh.support_size, env))
    return rows


def write_shell_table(path: str | Path, rows: Sequence[ShellNorm]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["i", "j", "R", "r_ij", "norm", "bound_envelope"])
        for r in rows:
            w.writerow([r.i, r.j, r.R, f"{r.r_ij:.12g}", f"{r.norm:.12e}", f"{r.bound_envelope:.12e}"])


def decay_slope(radii: Sequence[float], norms: Sequence[float], floor: float = 1e-14) -> float:
    """Least-squares slope of ``log norm`` against ``log R`` over the largest
    ``R`` decade with norms above ``floor``."""
    r = np.asarray(radii, dtype=float)
    v = np.asarray(norms, dtype=float)
    ok = v > floor
    r, v = r[ok], v[ok]
    if r.size < 2:
        raise LocalityError("need at least two non-zero shells to fit a slope")
    sel = r >= r.max() / 10
    return float(np.polyfit(np.log(r[sel]), np.log(v[sel]), 1)[0])
