import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from matrix_osc.integrate import integrate_matrix_system, integrate_riccati, integrate_scalar_system
from matrix_osc.oscillation import (
    check_prepared,
    classify_solution,
    detect_scalar_zeros,
    detect_zeros,
    verify_sign_identity,
    zero_report,
)
from matrix_osc.system import CoefficientSystem, preset

TWO_FREQ = CoefficientSystem.from_text(
    [["0", "0"], ["0", "0"]], [["1", "0"], ["0", "1"]], [["-1", "0"], ["0", "-4"]], [["0", "0"], ["0", "0"]]
)


def test_tangential_zeros_of_sin_squared():
    traj = integrate_matrix_system(preset("remark34"), np.zeros((2, 2)), np.eye(2), (0, 10))
    zs = detect_zeros(traj, (0.1, 10))
    assert [z.kind for z in zs] == ["tangential"] * 3
    np.testing.assert_allclose(zs.times, [math.pi, 2 * math.pi, 3 * math.pi], atol=1e-8)
    lo, hi = zs.zeros[0].bracket
    assert lo <= zs.times[0] <= hi


def test_mixed_zero_kinds():
    # det Phi = sin(t + .3) sin(2t + .6) = 2 sin^2(t + .3) cos(t + .3)
    Phi0 = np.diag([math.sin(0.3), math.sin(0.6)])
    Psi0 = np.diag([math.cos(0.3), 2 * math.cos(0.6)])
    traj = integrate_matrix_system(TWO_FREQ, Phi0, Psi0, (0, 10))
    zs = detect_zeros(traj)
    tang = [k * math.pi - 0.3 for k in (1, 2, 3)]
    trans = [math.pi / 2 - 0.3 + k * math.pi for k in (0, 1, 2)]
    got = {(round(z.t, 6), z.kind) for z in zs}
    want = {(round(t, 6), "tangential") for t in tang} | {(round(t, 6), "transversal") for t in trans}
    assert got == want
    for z in zs:
        assert abs(z.t - min(tang + trans, key=lambda s: abs(s - z.t))) < 1e-8


def test_interval_restriction_and_errors():
    traj = integrate_matrix_system(preset("remark34"), np.zeros((2, 2)), np.eye(2), (0, 5))
    assert len(detect_zeros(traj, (0.1, math.pi - 0.1))) == 0
    with pytest.raises(ValueError):
        detect_zeros(traj, (0, 6))
    with pytest.raises(ValueError):
        detect_zeros(integrate_riccati(preset("thm33_demo"), np.eye(2), (0, 1)))


def test_scalar_zeros():
    traj = integrate_scalar_system(preset("remark34"), 1, 1.0, 0.0, (0, 10))
    # phi = cos t
    zs = detect_scalar_zeros(traj)
    np.testing.assert_allclose(zs.times, [math.pi / 2 + k * math.pi for k in range(3)], atol=1e-8)
    assert all(z.kind == "transversal" for z in zs)


def test_prepared_check():
    cs = preset("example31")
    sym = integrate_matrix_system(cs, np.eye(2), np.array([[0.3, 0.7], [0.7, -1.0]]), (1, 30))
    asym = integrate_matrix_system(cs, np.eye(2), np.array([[0.3, 0.7], [-0.7, -1.0]]), (1, 30))
    assert check_prepared(sym).is_prepared
    rep = check_prepared(asym)
    assert not rep.is_prepared
    assert rep.initial_asymmetry == pytest.approx(1.4 * 2 ** 0, rel=1e-12) or rep.initial_asymmetry > 1


def test_classification_is_horizon_bound():
    traj = integrate_matrix_system(preset("remark34"), np.zeros((2, 2)) + np.diag([0.5, 0.5]), np.eye(2), (0, 10))
    assert classify_solution(traj, 2.0).kind == "nonoscillatory_up_to"
    c = classify_solution(traj, 10.0)
    assert c.oscillatory and c.n_zeros == 3
    with pytest.raises(ValueError):
        classify_solution(traj, 11.0)


def test_sign_identities():
    t33 = integrate_matrix_system(preset("thm33_demo"), np.eye(2), np.array([[1.0, 0.5], [-0.5, 1.0]]), (0, 20))
    assert verify_sign_identity(t33, "thm33").holds
    assert not verify_sign_identity(t33, "thm34").holds
    t34 = integrate_matrix_system(preset("thm34_demo"), np.eye(2), np.diag([1.0, -1.0]), (0, 10))
    rep = verify_sign_identity(t34, "thm34")
    assert rep.holds and rep.checked == t34.n_nodes
    with pytest.raises(ValueError):
        verify_sign_identity(t34, "other")


def test_zero_report_shape():
    traj = integrate_matrix_system(preset("remark34"), np.zeros((2, 2)), np.eye(2), (0, 4))
    rep = zero_report(traj)
    assert rep["prepared"] is True
    assert rep["classification"]["kind"] == "oscillatory_on"
    assert {"t", "kind", "bracket"} <= set(rep["zeros"][0])


sym_entries = st.floats(-3, 3, allow_nan=False)


@settings(max_examples=25, deadline=None)
@given(sym_entries, sym_entries, sym_entries)
def test_prepared_is_preserved_by_the_flow(a, b, c):
    Y0 = np.array([[a, b], [b, c]])
    traj = integrate_matrix_system(preset("example33", lam=2.0), np.eye(2), Y0, (0, 15))
    assert check_prepared(traj).is_prepared


@settings(max_examples=25, deadline=None)
@given(sym_entries, sym_entries, sym_entries)
def test_harmonic_prepared_solutions_have_zero_every_pi(a, b, c):
    # Phi = cos t I + sin t Y0, so det Phi vanishes once per eigenvalue per period
    Y0 = np.array([[a, b], [b, c]])
    traj = integrate_matrix_system(preset("remark34"), np.eye(2), Y0, (0, 2 * math.pi))
    zs = detect_zeros(traj, (0, math.pi))
    lam = np.linalg.eigvalsh(Y0)
    want = np.sort(np.mod(np.arctan2(-1.0, lam), math.pi))
    if np.min(np.abs(np.diff(want))) > 1e-3 if len(want) > 1 else True:
        assert len(zs) >= 2 or len(zs) == len(set(np.round(want, 6)))
    for w in want:
        assert min(abs(z - w) for z in zs.times) < 1e-6
