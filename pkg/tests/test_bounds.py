import json
import math

import numpy as np
import pytest
import sympy
from hypothesis import given, settings
from hypothesis import strategies as st

from arealaw.basis import SIGMA_Z, product_state
from arealaw.bounds import (FROZEN_LR_PARAMS, BoundError, BoundFalsified, LRBoundParams, calibrate_velocity,
                            coupling_sum, ghz_correlators, ghz_lower_bound, ghz_model, lr_bound, lr_time_grid,
                            shell_sum_certificate, sie_rate_bound, sie_rate_bound_shells, small_t_slope,
                            theorem1_rate_margin)
from arealaw.evolution import trajectory
from arealaw.hamiltonian import build_custom, build_long_range_ising
from arealaw.lattice import LatticeGeometry, crossing_pair_sum
from arealaw.locality import ShellNorm, truncation_error
from arealaw.qstate import PureState

ZZ = np.kron(SIGMA_Z, SIGMA_Z)


# ----- entanglement rate bound -----

def test_sie_bound_examples():
    chain = LatticeGeometry.chain(4)
    H = build_long_range_ising(chain, 2.0, 1.0, 0.5)
    V = chain.region([0, 1])
    expect = 36 * math.log(2) * crossing_pair_sum(V, 2.0)
    assert sie_rate_bound(H, V) == pytest.approx(expect, rel=1e-12)
    assert sie_rate_bound(H, V) == pytest.approx(40.20, abs=5e-3)
    nn = build_custom(chain, 2.0, {(0, 1): ZZ, (1, 2): ZZ, (2, 3): ZZ})
    assert sie_rate_bound(nn, chain.region([0, 1])) == pytest.approx(36 * math.log(2))
    assert 36 * math.log(2) == pytest.approx(24.953, abs=5e-4)
    decoupled = build_custom(chain, 2.0, {(0, 1): ZZ, (2, 3): ZZ})
    assert sie_rate_bound(decoupled, chain.region([0, 1])) == 0.0
    with pytest.raises(BoundError):
        sie_rate_bound(H, {0, 1})


def test_theorem1_margins():
    lat = LatticeGeometry.chain(6)
    H = build_long_range_ising(lat, 1.5, 1.0, 1.0)
    V = lat.left_half()
    psi = PureState(product_state([0] * 6), lat)
    traj = trajectory(psi, H, np.linspace(0, 2, 21), V)
    margins = theorem1_rate_margin(H, V, traj)
    assert margins.min() >= -1e-6
    e, u = np.linalg.eigh(H.to_dense())
    flat = trajectory(PureState(u[:, 0], lat), H, np.linspace(0, 1, 5), V)
    assert theorem1_rate_margin(H, V, flat) == pytest.approx(sie_rate_bound(H, V), abs=1e-6)


def test_theorem1_falsification_raises():
    lat = LatticeGeometry.chain(4)
    H = build_long_range_ising(lat, 2.0, 1.0, 1.0)
    V = lat.left_half()

    class Fake:
        t, rate = 0.3, 1e6

    with pytest.raises(BoundFalsified):
        theorem1_rate_margin(H, V, [Fake()])


# ----- shell-sum rate bound -----

def shell_rows(anchor, norms):
    return [ShellNorm(anchor[0], anchor[1], R, 1.0, n, 0) for R, n in enumerate(norms, 1)]


def test_shell_bound_zero_and_support_counts():
    lat = LatticeGeometry.chain(4)
    V = lat.region([0, 1])
    assert sie_rate_bound_shells(shell_rows((1, 2), [0, 0]), V) == 0.0
    # shell R=1 around (0, 1) covers {0, 1, 2}: crosses, weight 3; R=2 covers all 4 sites
    value = sie_rate_bound_shells(shell_rows((0, 1), [0.5, 0.25, 0.1]), V)
    assert value == pytest.approx(18 * math.log(2) * (0.5 * 3 + 0.25 * 4 + 0.1 * 4))


def test_shell_bound_extra_radii_do_not_change_sum():
    lat = LatticeGeometry.chain(5)
    V = lat.region([0, 1])
    base = sie_rate_bound_shells(shell_rows((1, 2), [0.3, 0.1, 0.05]), V)
    padded = sie_rate_bound_shells(shell_rows((1, 2), [0.3, 0.1, 0.05, 0, 0, 0]), V)
    assert padded == base


def test_shell_bound_rejects_incomplete_tables():
    lat = LatticeGeometry.chain(5)
    V = lat.region([0, 1])
    with pytest.raises(BoundError, match="incomplete"):
        sie_rate_bound_shells(shell_rows((0, 1), [0.3]), V)
    rows = shell_rows((0, 1), [0.3, 0.2, 0.1, 0.05])
    with pytest.raises(BoundError, match="incomplete"):
        sie_rate_bound_shells(rows[:1] + rows[2:], V)
    with pytest.raises(BoundError, match="duplicate"):
        sie_rate_bound_shells(rows + rows[:1], V)
    with pytest.raises(BoundError, match="missing"):
        sie_rate_bound_shells(rows, V, anchors=[(2, 3)])


# ----- Lieb-Robinson style envelope -----

def test_lr_params_arithmetic():
    p = LRBoundParams(5.0, 1, v=1.0)
    assert p.gamma == pytest.approx(2 / 3)
    assert p.t_R(6) == pytest.approx(1.0)
    with pytest.raises(BoundError):
        LRBoundParams(2.0, 1, v=1.0)
    with pytest.raises(BoundError):
        LRBoundParams(5.0, 1, v=0.0)
    grid = lr_time_grid(p, 6, 20)
    assert grid.size == 20 and 0 < grid[0] and grid[-1] < 1.0


def test_lr_report_window_and_json():
    p = LRBoundParams(5.0, 1, v=1.0)
    inside = lr_bound(p, 0.5, 6, exact=0.0)
    assert inside.inside_window and not inside.falsified
    outside = lr_bound(p, 2.0, 6, exact=1e9)
    assert not outside.inside_window and not outside.falsified
    bad = lr_bound(p, 0.5, 6, exact=1e9)
    assert bad.falsified
    data = json.loads(inside.to_json())
    assert {"bound", "exact", "window", "margin", "params"} <= set(data)


def ising_error(alpha, n=8):
    lat = LatticeGeometry.chain(n)
    H = build_long_range_ising(lat, alpha, 1.0, 1.0)
    Z0 = np.kron(np.eye(2 ** (n - 1)), SIGMA_Z)
    return lambda t, R: truncation_error(Z0, H, t, R, [0])


def test_frozen_alpha5_dominates_example_point():
    err = ising_error(5.0)(0.5, 3)
    report = lr_bound(FROZEN_LR_PARAMS["ising-chain-alpha5"], 0.5, 3, exact=err)
    assert report.inside_window
    assert report.margin >= -1e-6


def test_frozen_alpha3_dominates_its_calibration_point():
    err = ising_error(3.0)(0.5, 2)
    report = lr_bound(FROZEN_LR_PARAMS["ising-chain-alpha3"], 0.5, 2, exact=err)
    assert report.inside_window and report.margin >= -1e-6


def test_calibration_picks_a_dominating_velocity():
    # synthetic errors from a known envelope: only v >= 0.5 dominates
    truth = LRBoundParams(5.0, 1, v=0.5)
    cal = calibrate_velocity(lambda t, R: 0.9 * truth.envelope(t, R), 5.0, 1, [1, 2, 3], [0.1, 0.5, 1.0])
    assert cal.v == 0.5
    assert not cal.candidates[0.1]["dominates"]
    with pytest.raises(BoundError):
        calibrate_velocity(lambda t, R: 1e9, 5.0, 1, [1, 2], [0.5])


# ----- GHZ saturation model -----

def test_ghz_example_arithmetic():
    lat = LatticeGeometry.chain(4)
    assert coupling_sum(lat, [0], [3], 2.0) == pytest.approx(1 / 9)
    value, linear = ghz_lower_bound(lat, [0], [3], 2.0, 1.0)
    assert value == pytest.approx(math.sin(2 / 9), abs=1e-12)
    assert value == pytest.approx(0.22039, abs=1e-5)  # quoted value is truncated
    assert ghz_model(lat, [0], [3], 2.0).window == pytest.approx(9 * math.pi / 4)
    assert 9 * math.pi / 4 == pytest.approx(7.0686, abs=5e-5)
    assert ghz_lower_bound(lat, [0], [3], 2.0, 0.0) == (0.0, 0.0)
    with pytest.raises(BoundError):
        ghz_lower_bound(lat, [0], [3], 2.0, 7.1)


@pytest.mark.parametrize("k,alpha", [(1, 1.5), (2, 3.0), (3, 5.0)])
def test_ghz_closed_forms(k, alpha):
    lat = LatticeGeometry.chain(2 * k + 1)
    X, Y = range(k), range(k + 1, 2 * k + 1)
    model = ghz_model(lat, X, Y, alpha)
    at0 = ghz_correlators(model, 0.0)
    assert at0.commutator_norm <= 1e-12
    for t in np.linspace(0.05, 0.95, 7) * model.window:
        c = ghz_correlators(model, t)
        assert abs(c.forward - c.forward_closed) <= 1e-10
        assert abs(c.backward - c.backward_closed) <= 1e-10
        assert c.commutator_norm >= ghz_lower_bound(lat, X, Y, alpha, t)[0] - 1e-10


def test_ghz_small_t_slopes():
    lat = LatticeGeometry.chain(5)
    model = ghz_model(lat, [0, 1], [3, 4], 3.0)
    times = np.linspace(1e-3, 1e-2, 10) * model.window
    cs = [ghz_correlators(model, t) for t in times]
    J = model.coupling_sum
    # expectation of the commutator grows as 2 sum J; its operator norm as 4 sum J
    assert small_t_slope(times, [c.commutator_expectation for c in cs]) == pytest.approx(2 * J, rel=0.05)
    assert small_t_slope(times, [c.commutator_norm for c in cs]) == pytest.approx(4 * J, rel=0.05)


def test_ghz_model_validation():
    lat = LatticeGeometry.chain(4)
    with pytest.raises(BoundError):
        ghz_model(lat, [0, 1], [1, 2], 2.0)
    with pytest.raises(BoundError):
        ghz_model(lat, [], [1], 2.0)


@settings(max_examples=50, deadline=None)
@given(st.floats(1e-3, 1 - 1e-3), st.floats(0.01, 5.0))
def test_sine_exceeds_linear_comparator_in_window(fraction, J):
    t = fraction * math.pi / (4 * J)
    assert math.sin(2 * t * J) > 4 / math.pi * t * J


# ----- convergence certificates -----

@pytest.mark.parametrize("alpha,D,certified", [(5, 1, True), (7, 2, True), (4, 1, False), (6, 2, False)])
def test_certificate_threshold(alpha, D, certified):
    assert shell_sum_certificate(alpha, D).certified is certified


def test_certificate_bracket_against_symbolic_limit():
    cert = shell_sum_certificate(5, 1)
    R = sympy.symbols("R", positive=True, integer=True)
    limit = float(sympy.summation(R ** (1 + 2 - 5), (R, 1, sympy.oo)))
    lo, hi = cert.bracket
    assert lo <= limit <= hi
    cert = shell_sum_certificate(7.5, 2)
    limit = float(sympy.zeta(cert.exponent))
    assert cert.bracket[0] <= limit <= cert.bracket[1]
