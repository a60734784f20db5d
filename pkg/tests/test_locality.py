import csv

import numpy as np
import pytest
from scipy.integrate import simpson
from conftest import kron_site_op, naive_operator_partial_trace

from arealaw.basis import SIGMA_X, SIGMA_Z, embed, random_hermitian, random_unitary
from arealaw.evolution import heisenberg
from arealaw.hamiltonian import HamiltonianPath, build_long_range_ising, spectral_norm
from arealaw.lattice import LatticeGeometry
from arealaw.locality import (LocalityError, QuadratureConvergenceError, ShellOperator, decay_slope,
                              haar_truncate, local_term, reduced_operator, sampled_haar_truncate,
                              sampling_deviation, shell_generator_terms, shell_norm_rows,
                              shell_radius_cover, shell_term, shell_terms, truncation_error,
                              truncation_keep, write_shell_table)
from arealaw.qac import TimeQuadrature, build_filter, build_time_quadrature, generator_integral


@pytest.fixture(scope="module")
def filt():
    return build_filter()


def ising_path(n, alpha=3.0, h0=3.0, h1=1.5, floor=1.0):
    # both coupling and field change so pair and on-site anchors carry weight
    lat = LatticeGeometry.chain(n)
    return HamiltonianPath(build_long_range_ising(lat, alpha, 0.5, h0),
                           build_long_range_ising(lat, alpha, 1.0, h1), gap_floor=floor)


def quadrature_for(path, s, filt, **kw):
    e = np.linalg.eigvalsh(path.at(s).to_dense())
    return build_time_quadrature(filt, path.gap_floor, e[-1] - e[0], **kw)


# ----- Haar truncation -----

def test_haar_examples():
    Z0 = kron_site_op(SIGMA_Z, 0, 3)
    assert np.array_equal(haar_truncate(Z0, [0, 1], 3), Z0)
    assert np.abs(haar_truncate(Z0, [1, 2], 3)).max() == 0
    ZZ = embed(np.kron(SIGMA_Z, SIGMA_Z), [0, 1], 3)
    assert np.abs(haar_truncate(ZZ, [0], 3)).max() <= 1e-15
    assert np.allclose(haar_truncate(np.eye(8), [], 3), np.eye(8))


def test_reduced_operator_matches_loops(rng):
    for keep in ([0], [2], [0, 2], [1, 3], [0, 1, 3]):
        A = random_hermitian(16, rng)
        oracle = naive_operator_partial_trace(A, keep, 4) / 2 ** (4 - len(keep))
        assert np.abs(reduced_operator(A, keep, 4) - oracle).max() <= 1e-13
        # truncation = reduced operator tensored with identity on the rest
        rest = [k for k in range(4) if k not in keep]
        assert np.allclose(haar_truncate(A, keep, 4),
                           embed(oracle, keep[::-1], 4) if rest else A, atol=1e-13)


def test_haar_acts_trivially_outside_keep(rng):
    A = random_hermitian(32, rng)
    T = haar_truncate(A, [1, 3], 5)
    u = embed(random_unitary(8, rng), [0, 2, 4], 5)
    assert np.abs(u @ T @ u.conj().T - T).max() <= 1e-12


def test_sampled_average_agrees_within_three_sigma(rng):
    A = random_hermitian(16, rng)
    exact = haar_truncate(A, [0, 1], 4)
    mean, se = sampled_haar_truncate(A, [0, 1], 4, samples=100, rng=rng)
    assert sampling_deviation(mean, se, exact) <= 3.0


def test_truncation_norm_contraction(rng):
    # only <= follows from convexity; equality is checked and reported, not assumed
    ratios = []
    for _ in range(10):
        A = random_hermitian(16, rng)
        T = haar_truncate(A, [0], 4)
        assert spectral_norm(T) <= spectral_norm(A) + 1e-12
        ratios.append(spectral_norm(T) / spectral_norm(A))
    assert min(ratios) < 1 - 1e-3  # equality fails for generic operators


def test_bad_keep_rejected():
    with pytest.raises(LocalityError):
        haar_truncate(np.eye(4), [2], 2)


# ----- truncation errors -----

def test_truncation_error_edges():
    lat = LatticeGeometry.chain(6)
    H = build_long_range_ising(lat, 3.0, 1.0, 1.0)
    Z0 = kron_site_op(SIGMA_Z, 0, 6)
    assert truncation_error(Z0, H, 0.0, 1, [0]) == 0.0
    errors = [truncation_error(Z0, H, 0.7, R, [0]) for R in range(1, 6)]
    assert errors[-1] <= 1e-12
    assert errors[0] == max(errors)
    assert truncation_keep(lat, [0], 0) == frozenset()


# ----- shells -----

def test_shell_term_examples(rng):
    n = 6
    H = build_long_range_ising(LatticeGeometry.chain(n), 3.0, 1.0, 1.2)
    h = random_hermitian(4, rng)
    g = shell_term(h, H, 0.0, 1, 3, 1)
    assert np.allclose(g.matrix, embed(h, [1, 3], n), atol=1e-13)
    with pytest.raises(LocalityError):
        shell_term(h, H, 0.0, 1, 3, 0)


def test_shell_term_matches_direct_subtraction(rng):
    n = 8
    H = build_long_range_ising(LatticeGeometry.chain(n), 3.0, rng.uniform(0.5, 1), rng.uniform(0.5, 2))
    h = random_hermitian(4, rng)
    g = shell_term(h, H, 0.4, 2, 3, 2)
    ht = heisenberg(embed(h, [2, 3], n), H, 0.4)
    # independent truncations from the loop-based partial trace
    outer = embed(naive_operator_partial_trace(ht, [0, 1, 2, 3, 4, 5], n) / 4, [5, 4, 3, 2, 1, 0], n)
    inner = embed(naive_operator_partial_trace(ht, [1, 2, 3, 4], n) / 16, [4, 3, 2, 1], n)
    assert spectral_norm(g.matrix) == pytest.approx(spectral_norm(outer - inner), abs=1e-12)


def test_telescoping_and_support(rng):
    n = 6
    lat = LatticeGeometry.chain(n)
    H = build_long_range_ising(lat, 3.0, 1.0, 1.0)
    h = random_hermitian(4, rng)
    shells = shell_terms(h, H, 0.6, 1, 2)
    assert shells[-1].radius == shell_radius_cover(lat, (1, 2)) == 3
    total = sum(sh.matrix for sh in shells)
    assert np.abs(total - heisenberg(embed(h, [1, 2], n), H, 0.6)).max() <= 1e-12
    for sh in shells:
        out = [k for k in range(n) if k not in sh.support]
        if out:
            u = embed(random_unitary(2 ** len(out), rng), out, n)
            assert np.abs(u @ sh.matrix @ u.conj().T - sh.matrix).max() <= 1e-12


def test_shell_operator_validation():
    with pytest.raises(LocalityError):
        ShellOperator(np.eye(2), (0, 0), 0, frozenset({0}))
    with pytest.raises(LocalityError):
        ShellOperator(np.array([[np.nan]]), (0, 0), 1, frozenset({0}))


def test_local_term_includes_onsite():
    H = build_long_range_ising(LatticeGeometry.chain(3), 2.0, 1.0, 0.5)
    assert np.allclose(local_term(H, (1, 1)), 0.5 * kron_site_op(SIGMA_X, 1, 3))
    assert np.abs(local_term(H, (2, 2)) - local_term(H, (1, 1))).max() > 0


# ----- generator shells -----

def test_generator_shells_sum_to_generator_piece(filt):
    path = ising_path(5)
    s = 0.5
    quad = quadrature_for(path, s, filt)
    shells = shell_generator_terms(path, s, (1, 3), quad)
    assert shells[0].norm > 1e-3
    piece = generator_integral(path.at(s), local_term(path.derivative(), (1, 3)), quad).matrix
    assert np.abs(sum(sh.matrix for sh in shells) - piece).max() <= 1e-8


def test_onsite_generator_shells(filt):
    path = ising_path(5)
    quad = quadrature_for(path, 0.5, filt)
    shells = shell_generator_terms(path, 0.5, (2, 2), quad)
    piece = generator_integral(path.at(0.5), local_term(path.derivative(), (2, 2)), quad).matrix
    assert np.abs(sum(sh.matrix for sh in shells) - piece).max() <= 1e-8


def test_zero_derivative_gives_zero_shells(filt):
    lat = LatticeGeometry.chain(4)
    a = build_long_range_ising(lat, 3.0, 1.0, 2.0)
    path = HamiltonianPath(a, a, gap_floor=1.0)
    quad = quadrature_for(path, 0.0, filt)
    assert all(sh.norm == 0 for sh in shell_generator_terms(path, 0.0, (0, 1), quad))


def test_direct_integration_matches_linear(filt):
    path = ising_path(4)
    quad = quadrature_for(path, 0.3, filt)
    lin = shell_generator_terms(path, 0.3, (0, 1), quad, method="linear")
    direct = shell_generator_terms(path, 0.3, (0, 1), quad, method="direct")
    assert lin[0].norm > 1e-3
    for a, b in zip(lin, direct):
        assert np.abs(a.matrix - b.matrix).max() <= 1e-10


def test_unresolved_quadrature_is_flagged(filt):
    path = ising_path(4)
    fine = quadrature_for(path, 0.3, filt)
    # thin the rule to every 16th node: too coarse for the fastest frequencies
    t = fine.t[::16]
    w = simpson(np.eye(t.size), x=t, axis=1)
    k = filt.kernel(fine.delta * t)
    coarse = np.zeros_like(t)
    coarse[::2] = -simpson(np.eye(t[::2].size), x=t[::2], axis=1) * k[::2]
    quad = TimeQuadrature(fine.delta, t, -w * k, coarse)
    with pytest.raises(QuadratureConvergenceError):
        shell_generator_terms(path, 0.3, (0, 1), quad)
    with pytest.raises(ValueError):
        shell_generator_terms(path, 0.3, (0, 1), fine, method="bogus")


def test_shell_table_csv(tmp_path, filt):
    path = ising_path(4)
    quad = quadrature_for(path, 0.3, filt)
    rows = shell_norm_rows(shell_generator_terms(path, 0.3, (0, 2), quad), path.lattice, 3.0)
    assert rows[0].bound_envelope == pytest.approx(2.0 ** -3)
    f = tmp_path / "shells.csv"
    write_shell_table(f, rows)
    with open(f) as fh:
        table = list(csv.reader(fh))
    assert table[0] == ["i", "j", "R", "r_ij", "norm", "bound_envelope"]
    assert len(table) == 1 + len(rows)


def test_decay_slope():
    r = np.arange(1, 11)
    assert decay_slope(r, 3.0 * r ** -4.0) == pytest.approx(-4.0)
    with pytest.raises(LocalityError):
        decay_slope([1, 2], [1.0, 0.0])
