import numpy as np
import pytest
from scipy.integrate import simpson
from scipy.linalg import expm

from arealaw.basis import SIGMA_X, SIGMA_Y, SIGMA_Z
from arealaw.hamiltonian import HamiltonianPath, build_custom, build_long_range_ising
from arealaw.lattice import LatticeGeometry
from arealaw.qac import (TEST_FREQUENCIES, QACError, TimeQuadrature, align_phase, build_filter,
                         build_time_quadrature, generator_integral, generator_spectral, ground_state,
                         transport)

ZZ = np.kron(SIGMA_Z, SIGMA_Z)


@pytest.fixture(scope="module")
def filt():
    return build_filter()


def ising_path(n=4, floor=1.0):
    lat = LatticeGeometry.chain(n)
    return HamiltonianPath(build_long_range_ising(lat, 3.0, 0.5, 3.0),
                           build_long_range_ising(lat, 3.0, 1.0, 1.5), gap_floor=floor)


def quadrature_for(H, delta, filt, **kw):
    e = np.linalg.eigvalsh(H.to_dense())
    return build_time_quadrature(filt, delta, e[-1] - e[0], **kw)


# ----- filter -----

def test_filter_properties(filt):
    x = np.linspace(0.1, 40, 50)
    assert np.allclose(filt.kernel(-x), -filt.kernel(x))
    assert np.isrealobj(filt.kernel(x))
    assert filt.tail_at_xmax < 1e-6
    assert filt.decay_exponent >= 0.5
    # the certificate holds on the whole table
    mask = filt.x >= 1
    bound = filt.decay_constant * np.exp(-filt.x[mask] ** filt.decay_exponent)
    assert np.all(np.abs(filt.values[mask]) <= bound * (1 + 1e-12))
    u = np.array(TEST_FREQUENCIES)
    assert np.max(np.abs(filt.transform(u) - 1 / u)) <= 1e-4


def test_profile_closed_form(filt):
    u = np.array([0.3, 0.7, 1.0, 1.5, 4.0])
    assert filt.profile(u)[2:] == pytest.approx(1 / u[2:], abs=1e-15)
    assert np.all(filt.profile(u)[:2] < 1 / u[:2])
    # table transform agrees with the closed-form profile inside the bump too
    assert filt.transform(u[:2]) == pytest.approx(filt.profile(u[:2]), abs=1e-4)


def test_tail_matches_numerical_integral(filt):
    x0 = 5.0
    xs = np.linspace(x0, 400.0, 200001)
    numeric = simpson(filt.kernel(xs), x=xs)
    assert filt.tail(x0)[0] == pytest.approx(numeric, abs=5e-5)


def test_transform_at_twice_the_gap(filt):
    delta = 0.7
    t = filt.x / delta
    # int k(Delta t) sin(w t) dt over the full line, at w = 2 Delta
    value = 2 * simpson(filt.values * np.sin(2 * delta * t), x=t)
    assert value == pytest.approx(1 / (2 * delta), abs=1e-4)


def test_filter_grid_requirements():
    with pytest.raises(QACError):
        build_filter(x_max=40)
    with pytest.raises(QACError):
        build_filter(step=0.1)
    with pytest.raises(QACError):
        build_filter(tol=1e-12)


# ----- generators -----

def single_qubit_path(h=1.3):
    lat = LatticeGeometry.chain(1)
    return HamiltonianPath(build_custom(lat, 1.0, {}, {0: h * SIGMA_X}),
                           build_custom(lat, 1.0, {}, {0: h * SIGMA_Z}))


@pytest.mark.parametrize("s", [0.1, 0.5, 0.8])
def test_two_level_gauge_potential(s):
    path = single_qubit_path()
    D = generator_spectral(path.at(s), path.derivative()).matrix
    # H = r (sin(phi) X + cos(phi) Z) with phi = atan2(1 - s, s): D = (phi'/2) Y
    expect = -SIGMA_Y / (2 * ((1 - s) ** 2 + s ** 2))
    assert np.abs(D - expect).max() <= 1e-12


def test_spectral_generator_matches_finite_difference():
    path = ising_path()
    s, ds = 0.4, 1e-4
    g0 = ground_state(path.at(s))[1]
    gp = align_phase(g0, ground_state(path.at(s + ds))[1])
    gm = align_phase(g0, ground_state(path.at(s - ds))[1])
    fd = (gp - gm) / (2 * ds)
    D = generator_spectral(path.at(s), path.derivative()).matrix
    assert np.linalg.norm(-1j * D @ g0 - fd) <= 1e-6


def test_zero_derivative_gives_zero(filt):
    lat = LatticeGeometry.chain(3)
    a = build_long_range_ising(lat, 3.0, 1.0, 2.0)
    path = HamiltonianPath(a, a)
    assert np.abs(generator_spectral(a, path.derivative()).matrix).max() == 0
    quad = quadrature_for(a, 1.0, filt)
    assert np.abs(generator_integral(a, path.derivative(), quad).matrix).max() == 0


def test_degenerate_coupled_levels_rejected():
    H = np.diag([0.0, 1.0, 1.0, 2.0])
    dH = np.zeros((4, 4))
    dH[1, 2] = dH[2, 1] = 0.5
    with pytest.raises(QACError, match="levels 1 and 2"):
        generator_spectral(H, dH)
    # uncoupled degeneracy is harmless
    dH = np.zeros((4, 4))
    dH[0, 1] = dH[1, 0] = 0.5
    assert np.isfinite(generator_spectral(H, dH).matrix).all()


def test_integral_generator_matches_spectral(filt):
    path = ising_path()
    s = 0.5
    H = path.at(s)
    quad = quadrature_for(H, path.gap_floor, filt)
    spectral = generator_spectral(H, path.derivative())
    integral = generator_integral(H, path.derivative(), quad)
    for gen in (spectral, integral):
        assert np.abs(gen.matrix - gen.matrix.conj().T).max() <= 1e-10
    g = ground_state(H)[1]
    assert np.linalg.norm((integral.matrix - spectral.matrix) @ g) <= 1e-3


def test_integral_generator_flags_unresolved_quadrature(filt):
    path = ising_path()
    H = path.at(0.5)
    fine = quadrature_for(H, path.gap_floor, filt)
    t = fine.t[::16]
    k = filt.kernel(fine.delta * t)
    coarse = np.zeros_like(t)
    coarse[::2] = -simpson(np.eye(t[::2].size), x=t[::2], axis=1) * k[::2]
    quad = TimeQuadrature(fine.delta, t, -simpson(np.eye(t.size), x=t, axis=1) * k, coarse)
    with pytest.raises(QACError, match="unstable"):
        generator_integral(H, path.derivative(), quad)


def test_quadrature_validation(filt):
    with pytest.raises(QACError):
        build_time_quadrature(filt, 0.0, 1.0)
    with pytest.raises(QACError):
        build_time_quadrature(filt, 1.0, 1.0, t_max=10.0)
    quad = build_time_quadrature(filt, 2.0, 5.0)
    assert quad.t_max == pytest.approx(30.0)
    assert (quad.t.size - 1) % 4 == 0


# ----- transport -----

def test_transport_single_point():
    path = ising_path()
    V = path.lattice.left_half()
    (point,) = transport(path, [0.0], V)
    assert point.fidelity == pytest.approx(1.0, abs=1e-12)


def test_transport_commuting_path_keeps_entropy():
    lat = LatticeGeometry.chain(4)
    a = build_custom(lat, 2.0, {(0, 1): -0.3 * ZZ, (1, 2): -0.3 * ZZ}, {k: -0.5 * SIGMA_Z for k in range(4)})
    b = build_custom(lat, 2.0, {(0, 1): -0.6 * ZZ, (2, 3): -0.2 * ZZ}, {k: -1.0 * SIGMA_Z for k in range(4)})
    assert np.abs(a.to_dense() @ b.to_dense() - b.to_dense() @ a.to_dense()).max() == 0
    # all-up stays the unique ground state along the whole path
    points = transport(HamiltonianPath(a, b), np.linspace(0, 1, 5), lat.left_half())
    assert np.ptp([p.entropy for p in points]) <= 1e-12
    assert min(p.fidelity for p in points) >= 1 - 1e-12


def test_transport_gauge_consistency_two_step_sizes():
    path = ising_path(6)
    V = path.lattice.left_half()
    grid = np.linspace(0, 1, 6)
    kw = dict(max_refinements=0, min_fidelity=0.0)
    coarse = transport(path, grid, V, substeps=1, **kw)
    fine = transport(path, grid, V, substeps=2, **kw)
    e_coarse = max(1 - p.fidelity for p in coarse)
    e_fine = max(1 - p.fidelity for p in fine)
    assert e_fine <= e_coarse
    assert e_fine <= 1e-6
    refined = transport(path, grid, V)
    assert min(p.fidelity for p in refined) >= 1 - 1e-6


def test_transport_reports_unreliable_integration():
    path = ising_path()
    with pytest.raises(QACError, match="unreliable"):
        transport(path, [0.0, 1.0], path.lattice.left_half(), substeps=1, max_refinements=0,
                  min_fidelity=1 - 1e-15)


def _integrate(path, grid, quads):
    psi = ground_state(path.at(grid[0]))[1].astype(complex)
    dH = path.derivative()
    for (s0, s1), quad in zip(zip(grid[:-1], grid[1:]), quads):
        D = generator_integral(path.at((s0 + s1) / 2), dH, quad).matrix
        psi = expm(-1j * (s1 - s0) * D) @ psi
    return psi


def test_filter_independence(filt):
    path = ising_path()
    other = build_filter(sharpness=6.0)
    grid = np.linspace(0, 1, 21)
    mids = [(a + b) / 2 for a, b in zip(grid[:-1], grid[1:])]
    states = [_integrate(path, grid, [quadrature_for(path.at(m), path.gap_floor, f) for m in mids])
              for f in (filt, other)]
    assert 1 - abs(np.vdot(*states)) <= 1e-3
    exact = ground_state(path.at(1.0))[1]
    assert all(1 - abs(np.vdot(exact, v)) <= 1e-3 for v in states)
