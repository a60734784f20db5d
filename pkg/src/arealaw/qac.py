"""Quasi-adiabatic continuation along gapped Hamiltonian paths.

The generator is ``D(s) = -i int f(Delta t) exp(iHt) dH exp(-iHt) dt``.  We
write ``f = -i k`` with ``k`` a real odd kernel, so ``D = -int k(Delta t) A(t) dt``.
``k`` is the inverse sine transform of the odd profile

    p(u) = (1 - phi(u)) / u,   phi(u) = exp(a - a / (1 - u**2)) for |u| < 1, else 0,

which equals ``1/u`` exactly for ``|u| >= 1``; consequently the generator acts
on any pair of levels separated by at least ``Delta`` exactly like the
spectral (adiabatic gauge potential) construction.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.integrate import simpson
from scipy.special import sici

from .evolution import eigensystem
from .hamiltonian import HamiltonianPath, TwoBodyHamiltonian
from .qstate import PureState, entropy, entropy_rate

logger = logging.getLogger(__name__)

TEST_FREQUENCIES = (1.0, 1.25, 1.5, 2.0, 3.0, 5.0, 8.0)
DEGENERACY_TOL = 1e-8


class QACError(RuntimeError):
    pass


# ----- filter -------------------------------------------------------------------

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(600)
_U = (_GL_NODES + 1) / 2
_WU = _GL_WEIGHTS / 2


def _bump(u: np.ndarray, sharpness: float) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    inside = np.abs(u) < 1
    out = np.zeros_like(u)
    out[inside] = np.exp(sharpness - sharpness / (1 - u[inside] ** 2))
    return out


@dataclass(frozen=True)
class FilterFunction:
    """Real odd kernel ``k`` tabulated on ``|x| <= x_max``.

    Attributes
    ----------
    x, values : the table (``x >= 0`` half; ``k(-x) = -k(x)``)
    decay_exponent, decay_constant : certificate ``|k(x)| <= c exp(-|x|**delta)``
        holding over the tabulated range
    """

    sharpness: float
    x_max: float
    step: float
    x: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)
    decay_exponent: float = 0.0
    decay_constant: float = 0.0
    tail_at_xmax: float = 0.0
    transform_residual: float = 0.0

    def kernel(self, x) -> np.ndarray:
        """Exact evaluation of ``k`` (not interpolated from the table)."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        inner = (np.sin(np.outer(np.abs(x), _U)) * (_bump(_U, self.sharpness) / _U)) @ _WU
        return np.sign(x) * (0.5 - inner / np.pi)

    def profile(self, u) -> np.ndarray:
        """Sine transform ``p(u) = int k(x) sin(ux) dx`` in closed form."""
        u = np.atleast_1d(np.asarray(u, dtype=float))
        out = np.zeros_like(u)
        nz = u != 0
        out[nz] = (1 - _bump(u[nz], self.sharpness)) / u[nz]
        return out

    def tail(self, x) -> np.ndarray:
        """``F(x) = int_x^inf k(t) dt`` for ``x > 0`` via its cosine representation."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        # F(x) = (1/pi) int_0^inf p(u) cos(ux) / u du, split at u = 1
        inner = (np.cos(np.outer(x, _U)) * ((1 - _bump(_U, self.sharpness)) / _U ** 2)) @ _WU
        si, _ = sici(x)
        outer = np.cos(x) - x * (np.pi / 2 - si)
        return (inner + outer) / np.pi

    def transform(self, u) -> np.ndarray:
        """Quadrature of ``int_{-x_max}^{x_max} k(x) sin(ux) dx`` on the table."""
        u = np.atleast_1d(np.asarray(u, dtype=float))
        return np.array([2 * simpson(self.values * np.sin(w * self.x), x=self.x) for w in u])


def _decay_certificate(x: np.ndarray, k: np.ndarray, cap: float = 10.0) -> tuple[float, float]:
    """Largest ``delta`` (step 0.01) with ``max |k| exp(x**delta) <= cap`` on the table."""
    mask = x >= 1
    xs, ks = x[mask], np.abs(k[mask])
    best = (0.0, float(np.max(ks)))
    for delta in np.arange(0.01, 2.0, 0.01):
        c = float(np.max(ks * np.exp(xs ** delta)))
        if c > cap:
            break
        best = (round(float(delta), 2), c)
    return best


def build_filter(x_max: float = 60.0, step: float = 0.05, sharpness: float = 4.0,
                 tol: float = 1e-4) -> FilterFunction:
    """Tabulate and validate the kernel.

    Raises :class:`QACError` when the grid is too short/coarse or the
    tabulated transform misses ``1/u`` by more than ``tol`` at a test frequency.
    """
    if x_max < 50 or step > 0.05:
        raise QACError(f"filter grid needs x_max >= 50 and step <= 0.05 (got {x_max}, {step})")
    n = int(round(x_max / step))
    if n % 2:
        n += 1
    x = np.linspace(0.0, n * step, n + 1)
    base = FilterFunction(sharpness, float(x[-1]), step, x, np.zeros_like(x))
    vals = base.kernel(x)
    vals[0] = 0.0  # k(0+) = 1/2 but sin(0) kills it in every sine integral
    delta, c = _decay_certificate(x, vals)
    filt = FilterFunction(sharpness, float(x[-1]), step, x, vals, delta, c,
                          float(abs(base.tail(x[-1])[0])))
    u = np.array(TEST_FREQUENCIES)
    residual = float(np.max(np.abs(filt.transform(u) - 1 / u)))
    if residual > tol:
        raise QACError(f"filter transform misses 1/u by {residual:.3e} > {tol:g}")
    return FilterFunction(sharpness, filt.x_max, step, x, vals, delta, c, filt.tail_at_xmax, residual)


# ----- time quadrature ----------------------------------------------------------

@dataclass(frozen=True)
class TimeQuadrature:
    """Simpson nodes on ``[0, t_max]`` folded with the odd kernel.

    ``D = sum_l coef[l] * (A(t_l) - A(-t_l))`` approximates ``-int k(Delta t) A(t) dt``.
    ``coef_coarse`` is the same rule on every other node, for the
    resolution-doubling stability check.
    """

    delta: float
    t: np.ndarray = field(repr=False)
    coef: np.ndarray = field(repr=False)
    coef_coarse: np.ndarray = field(repr=False)

    @property
    def t_max(self) -> float:
        return float(self.t[-1])

    def kernel_matrix(self, energies: np.ndarray, coarse: bool = False) -> np.ndarray:
        """``K[m, n] = sum_l coef_l 2i sin((E_m - E_n) t_l)`` (antisymmetric).

        The nodes are uniform, ``t_l = l h``, so the sum is the imaginary part
        of a polynomial in ``exp(i w h)`` evaluated by Horner's rule.
        """
        coef, stride = (self.coef_coarse[::2], 2) if coarse else (self.coef, 1)
        h = (self.t[1] - self.t[0]) * stride
        e = np.asarray(energies)
        n = e.size
        iu, ju = np.triu_indices(n, 1)
        z = np.exp(1j * (e[iu] - e[ju]) * h)
        acc = np.zeros_like(z)
        for c in coef[::-1]:
            acc *= z
            acc += c
        K = np.zeros((n, n), dtype=complex)
        K[iu, ju] = 2j * acc.imag
        K[ju, iu] = -2j * acc.imag
        return K


def _simpson_weights(n_intervals: int, h: float) -> np.ndarray:
    w = np.ones(n_intervals + 1)
    w[1:-1:2] = 4
    w[2:-1:2] = 2
    return w * h / 3


def build_time_quadrature(filt: FilterFunction, delta: float, omega_max: float,
                          t_max: float | None = None, phase_step: float = 0.1) -> TimeQuadrature:
    """Time grid resolving both the kernel and the fastest frequency ``omega_max``."""
    if delta <= 0:
        raise QACError("gap floor Delta must be positive")
    t_max = filt.x_max / delta if t_max is None else t_max
    if t_max * delta < filt.x_max - 1e-9:
        raise QACError("t_max * Delta must cover the filter grid")
    dt = min(filt.step / delta, phase_step / max(omega_max, 1e-12))
    n = int(np.ceil(t_max / dt))
    n += (-n) % 4  # divisible by 4 so the coarse rule is Simpson too
    t = np.linspace(0.0, t_max, n + 1)
    k = filt.kernel(delta * t)
    fine = -_simpson_weights(n, t[1] - t[0]) * k
    coarse = np.zeros_like(fine)
    coarse[::2] = -_simpson_weights(n // 2, 2 * (t[1] - t[0])) * k[::2]
    return TimeQuadrature(float(delta), t, fine, coarse)


# ----- generators ---------------------------------------------------------------

@dataclass(frozen=True)
class GeneratorMatrix:
    matrix: np.ndarray
    method: str

    def __post_init__(self):
        if not np.allclose(self.matrix, self.matrix.conj().T, atol=1e-10):
            raise QACError(f"{self.method} generator is not Hermitian")

    def apply(self, v: np.ndarray) -> np.ndarray:
        return self.matrix @ v


def _dense(op) -> np.ndarray:
    return op.to_dense() if isinstance(op, TwoBodyHamiltonian) else np.asarray(op)


def generator_spectral(H, dH, *, tol: float = DEGENERACY_TOL) -> GeneratorMatrix:
    """Exact transport generator in the eigenbasis of ``H``.

    ``D[m, n] = -i <m|dH|n> / (E_m - E_n)`` off the diagonal, zero on it, so
    ``-i D |n>`` is the first-order eigenvector derivative.  Exactly
    degenerate pairs are allowed only when ``dH`` does not couple them.
    """
    E, U = eigensystem(H) if isinstance(H, TwoBodyHamiltonian) else np.linalg.eigh(np.asarray(H))
    dh = U.conj().T @ _dense(dH) @ U
    w = E[:, None] - E[None, :]
    close = np.abs(w) < tol
    np.fill_diagonal(close, False)
    if np.any(close & (np.abs(dh) > 1e-10)):
        m, n = np.argwhere(close & (np.abs(dh) > 1e-10))[0]
        raise QACError(f"near-degenerate levels {m} and {n} (gap {abs(w[m, n]):.3g}) coupled by dH")
    with np.errstate(divide="ignore", invalid="ignore"):
        d = np.where(close | np.eye(E.size, dtype=bool), 0.0, -1j * dh / np.where(w == 0, 1, w))
    return GeneratorMatrix(U @ d @ U.conj().T, "spectral")


def integral_kernel(H, quad: TimeQuadrature, check: bool = True, tol: float = 1e-5):
    """Eigen-decomposition of ``H`` and the quadrature kernel matrix for it."""
    E, U = eigensystem(H) if isinstance(H, TwoBodyHamiltonian) else np.linalg.eigh(np.asarray(H))
    K = quad.kernel_matrix(E)
    if check:
        shift = np.max(np.abs(K - quad.kernel_matrix(E, coarse=True)))
        if shift > tol:
            raise QACError(f"quadrature unstable: halving the resolution moves the kernel by {shift:.3e}")
    return E, U, K


def generator_integral(H, dH, quad: TimeQuadrature, *, check: bool = True,
                       tol: float = 1e-5) -> GeneratorMatrix:
    """``-int k(Delta t) exp(iHt) dH exp(-iHt) dt`` by time quadrature.

    The time evolution is carried out in the eigenbasis of ``H``; the
    coarse/fine Simpson comparison guards against under-resolved frequencies.
    """
    E, U, K = integral_kernel(H, quad, check, tol)
    dh = U.conj().T @ _dense(dH) @ U
    return GeneratorMatrix(U @ (K * dh) @ U.conj().T, "integral")


# ----- transport ------------------------------------------------------------------

@dataclass(frozen=True)
class TransportPoint:
    s: float
    gap: float
    entropy: float
    fidelity: float
    dS_ds: float


def ground_state(H) -> tuple[float, np.ndarray]:
    E, U = eigensystem(H)
    return E[0], U[:, 0]


def _rk4_step(psi: np.ndarray, s: float, h: float, gen) -> np.ndarray:
    k1 = -1j * gen(s) @ psi
    k2 = -1j * gen(s + h / 2) @ (psi + h / 2 * k1)
    k3 = -1j * gen(s + h / 2) @ (psi + h / 2 * k2)
    k4 = -1j * gen(s + h) @ (psi + h * k3)
    return psi + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


def transport(path: HamiltonianPath, s_grid: Sequence[float], region, *, substeps: int = 4,
              max_refinements: int = 5, target: float = 1 - 1e-6,
              min_fidelity: float = 0.999) -> list[TransportPoint]:
    """Integrate ``d|psi>/ds = -i D(s)|psi>`` with the spectral generator.

    Starts from the exact ground state at ``s_grid[0]`` and records entropy,
    fidelity with the exact ground state and ``dS_V/ds`` at every grid point.
    The RK4 step is halved until every fidelity reaches ``target``; failing
    that, a fidelity below ``min_fidelity`` raises.
    """
    s_grid = [float(s) for s in s_grid]
    gaps = path.verify_gap(s_grid)
    dH = path.derivative().to_dense()
    hams: dict[float, TwoBodyHamiltonian] = {}
    cache: dict[float, np.ndarray] = {}

    def ham(s: float) -> TwoBodyHamiltonian:
        if s not in hams:
            hams[s] = path.at(s)
        return hams[s]

    def gen(s: float) -> np.ndarray:
        if s not in cache:
            cache[s] = generator_spectral(ham(s), dH).matrix
        return cache[s]

    lattice = path.lattice
    result = None
    for level in range(max_refinements + 1):
        n_sub = substeps * 2 ** level
        psi = ground_state(ham(s_grid[0]))[1].astype(complex)
        states = [psi]
        for s0, s1 in zip(s_grid[:-1], s_grid[1:]):
            h = (s1 - s0) / n_sub
            for k in range(n_sub):
                psi = _rk4_step(psi, s0 + k * h, h, gen)
            psi = psi / np.linalg.norm(psi)
            states.append(psi)
        fids = [abs(np.vdot(ground_state(ham(s))[1], v)) for s, v in zip(s_grid, states)]
        result = (states, fids)
        if min(fids) >= target:
            break
    states, fids = result
    if min(fids) < min_fidelity:
        raise QACError(f"transport unreliable: fidelity {min(fids):.6f} < {min_fidelity}")
    out = []
    for s, v, g, f in zip(s_grid, states, gaps, fids):
        st = PureState(v, lattice, path.start.d)
        rate = entropy_rate(st, gen(s), region)
        out.append(TransportPoint(s, float(g), entropy(st, region), float(f), rate.value))
    return out


def align_phase(reference: np.ndarray, vec: np.ndarray) -> np.ndarray:
    """Multiply ``vec`` by the global phase maximizing ``Re <reference|vec>``."""
    ov = np.vdot(reference, vec)
    return vec * (np.conj(ov) / abs(ov)) if abs(ov) > 0 else vec
