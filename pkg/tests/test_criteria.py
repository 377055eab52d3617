import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from matrix_osc import criteria as cr
from matrix_osc.integrate import integrate_riccati
from matrix_osc.system import CoefficientSystem, F_k, preset

Z = [["0", "0"], ["0", "0"]]
I2 = [["1", "0"], ["0", "1"]]


def const_system(a=0.0, r=1.0):
    return CoefficientSystem.from_text([[str(a), "0"], ["0", str(a)]], I2, [[str(r), "0"], ["0", str(r)]], Z)


def test_I_k_examples():
    assert cr.quad_I_k(const_system(0.0, 1.0), 1, 0.0, 2.5) == pytest.approx(2.5, abs=1e-12)
    for t in (0.5, 2.0, 7.0):
        assert cr.quad_I_k(const_system(1.0, 1.0), 1, 0.0, t) == pytest.approx(1 - math.exp(-t), abs=1e-12)
    assert cr.quad_I_k(const_system(0.3, 0.0), 2, 0.0, 4.0) == 0.0


def test_I_k_vanishes_at_anchor_and_is_additive():
    cs = CoefficientSystem.from_text([["0.3*sin(t)", "0"], ["0", "0"]], I2, [["cos(t)", "0"], ["0", "1"]], [["0.1", "0"], ["0", "0"]])
    assert cr.quad_I_k(cs, 1, 1.0, 1.0) == 0.0
    tau, m, t = 0.0, 2.3, 5.0
    whole = cr.quad_I_k(cs, 1, tau, t)
    # I(tau; t) = exp(-int_m^t a) I(tau; m) + I(m; t)
    from matrix_osc.quadrature import quad

    decay = math.exp(-quad(lambda s: 0.3 * math.sin(s) - 0.1, m, t))
    assert whole == pytest.approx(decay * cr.quad_I_k(cs, 1, tau, m) + cr.quad_I_k(cs, 1, m, t), abs=1e-9)


def test_Itilde_thm34_demo():
    cs = preset("thm34_demo")
    assert cr.quad_Itilde(cs, 1, 1, 0.0, 3.0) == pytest.approx(3.0, abs=1e-12)
    assert cr.quad_Itilde(cs, 1, 2, 0.0, 3.0) == pytest.approx(3.0, abs=1e-12)
    zero = CoefficientSystem.from_text(Z, I2, Z, Z)
    assert cr.quad_Itilde(zero, 1, 1, 0.0, 3.0) == 0.0


def test_lagrangian_examples():
    cs = CoefficientSystem.from_text([["0", "0"], ["3", "0"]], [["1", "0"], ["0", "2"]], [["5", "0"], ["0", "0"]], [["0", "1"], ["0", "0"]])
    assert cr.lagrangian_L_k(cs, 1, 0.0, 0.0, 0.0) == -5.0
    X = -0.5
    assert cr.lagrangian_L_k(cs, 1, X, X, 0.0) == pytest.approx(2 * X * X + 2 * X - 5)
    assert cr.lagrangian_L_k(cs, 1, X, X, 0.0) <= F_k(cs, 1, 0.0)


def _random_system(rng, q_other_sign, r_sign):
    """Constant system whose index-1 data have prescribed signs."""
    q2 = q_other_sign * float(rng.uniform(0.1, 3))
    r11 = r_sign * float(rng.uniform(0, 3))
    p21, s12 = (float(x) for x in rng.uniform(-3, 3, size=2))
    return CoefficientSystem.from_text(
        [["0", "0"], [repr(p21), "0"]],
        [["1", "0"], ["0", repr(q2)]],
        [[repr(r11), "0"], ["0", "0"]],
        [["0", repr(s12)], ["0", "0"]],
    )


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_upper_bound_when_q_other_negative_and_r_nonnegative(seed):
    rng = np.random.default_rng(seed)
    cs = _random_system(rng, -1.0, 1.0)
    F = F_k(cs, 1, 0.0)
    for X in rng.uniform(-100, 100, 17):
        assert cr.lagrangian_L_k(cs, 1, X, X, 0.0) <= F + 1e-9


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_lower_bound_when_q_other_positive_and_r_nonpositive(seed):
    rng = np.random.default_rng(seed)
    cs = _random_system(rng, 1.0, -1.0)
    F = F_k(cs, 1, 0.0)
    for X in rng.uniform(-100, 100, 17):
        assert cr.lagrangian_L_k(cs, 1, X, X, 0.0) >= F - 1e-9


def test_bounds_on_presets():
    rng = np.random.default_rng(3)
    cs = preset("thm34_demo")
    for X, t in zip(rng.uniform(-100, 100, 1000), rng.uniform(0, 50, 1000)):
        assert cr.lagrangian_L_k(cs, 1, X, X, t) <= F_k(cs, 1, t) + 1e-9
    ex33 = preset("example33", lam=2.0)
    ts = rng.uniform(0, 50, 1000)
    for X, t in zip(rng.uniform(-100, 100, 1000), ts):
        if math.sin(t) > 0:
            assert cr.lagrangian_L_k(ex33, 1, X, X, t) >= F_k(ex33, 1, t) - 1e-9


def test_lower_bound_can_fail_when_r_positive():
    # example31 at t = 4: q_2 = 1 > 0 and r_11 > 0, yet L_1(0, 0) = -r_11 < F_1 = r_11
    cs = preset("example31")
    assert F_k(cs, 1, 4.0) > 0
    assert cr.lagrangian_L_k(cs, 1, 0.0, 0.0, 4.0) < F_k(cs, 1, 4.0)


def test_condition_I_examples():
    assert cr.check_condition_I(preset("example31"), 1, (1, 50), ray=True).holds
    rep = cr.check_condition_I(preset("example33"), 1, (0, 20), ray=True)
    assert rep.verdict == "fails" and math.sin(rep.witnesses[0]) < 0
    assert cr.check_condition_I(preset("example32"), 1, (0, 40 * math.pi)).holds
    with pytest.raises(ValueError):
        cr.check_condition_I(preset("example32"), 1, (0, 1), grid=10)


def test_condition_I_proviso():
    # q_2 = 0 everywhere while p_21 != s_12 violates the proviso for j = 1
    cs = CoefficientSystem.from_text([["0", "0"], ["1", "0"]], [["1", "0"], ["0", "0"]], Z, Z)
    assert cr.check_condition_I(cs, 1, (0, 5)).verdict == "fails"
    assert cr.check_condition_I(cs, 2, (0, 5)).holds


def test_condition_III_examples():
    rep = cr.check_condition_III(preset("example32"), 1, 20 * math.pi)
    assert rep.verdict == "undecided_at_horizon" and rep.notes.startswith("supported")
    assert rep.witnesses[-1]["G_q"] == pytest.approx(20.0, abs=1e-6)
    zero_q = CoefficientSystem.from_text(Z, Z, [["-1", "0"], ["0", "-1"]], Z)
    assert cr.check_condition_III(zero_q, 1, 50.0).verdict == "fails"
    rep = cr.check_condition_III(preset("remark34"), 1, 30.0)
    assert rep.supported
    assert rep.witnesses[-1]["G_q"] == pytest.approx(30.0) and rep.witnesses[-1]["G_F"] == pytest.approx(30.0)


def test_condition_IV_examples():
    lam = math.pi / 2
    rep = cr.check_condition_IV(preset("example33", lam=lam), 1, 2 * math.pi, 3 * math.pi)
    assert rep.holds and abs(rep.margin) < 1e-9
    rep = cr.check_condition_IV(preset("example33", lam=1.0), 1, 2 * math.pi, 3 * math.pi)
    assert not rep.holds and rep.margin == pytest.approx(2 - math.pi, abs=1e-9)
    assert cr.check_condition_IV(preset("remark34"), 1, 0, math.pi).holds
    assert not cr.check_condition_IV(preset("remark34"), 1, 0.01, math.pi - 0.01).holds


def test_condition_IV_weighted():
    # a_11 = 1, q_1 = 1, F_1 = -1: min(e^{-(t-t1)}, e^{t-t1}) = e^{-(t-t1)}
    cs = CoefficientSystem.from_text([["1", "0"], ["0", "0"]], I2, [["-1", "0"], ["0", "-1"]], Z)
    rep = cr.check_condition_IV(cs, 1, 2.0, 5.0)
    assert rep.margin == pytest.approx(1 - math.exp(-3) - math.pi, abs=1e-10)


@pytest.mark.parametrize("name, kw, t1, t2", [("example33", {"lam": 2.0}, 2 * math.pi, 3 * math.pi), ("example31", {}, 3.0, 9.0), ("remark34", {}, 0.5, 4.0)])
def test_condition_IV_subdivision_invariance(name, kw, t1, t2):
    cs = preset(name, **kw)
    m1 = cr.check_condition_IV(cs, 1, t1, t2).margin
    for n in (2, 5, 16):
        assert cr.check_condition_IV(cs, 1, t1, t2, subdivisions=n).margin == pytest.approx(m1, abs=1e-9)


def test_windows_example33():
    cs = preset("example33", lam=math.pi / 2)
    rep = cr.find_oscillation_windows(cs, 1, 8 * math.pi)
    assert rep.holds
    wins = rep.witnesses
    for m in (1, 2, 3):
        match = [w for w in wins if abs(w[0] - 2 * math.pi * m) < 1e-6]
        assert match, f"no window starting at 2 pi {m}"
        assert match[0][1] == pytest.approx((2 * m + 1) * math.pi, abs=1e-3)
    for a, b in wins:
        assert cr.check_condition_I(cs, 1, (a, b)).holds
        assert cr.check_condition_IV(cs, 1, a, b).holds


def test_windows_none_for_example32_and_zero_system():
    assert not cr.find_oscillation_windows(preset("example32"), 1, 8 * math.pi).witnesses
    zero = CoefficientSystem.from_text(Z, Z, Z, Z)
    rep = cr.find_oscillation_windows(zero, 1, 10.0)
    assert rep.verdict == "fails" and not rep.witnesses


def test_lemma22_examples():
    rep = cr.check_lemma22(preset("thm33_demo"), [0, 50], [0, 50])
    A, B = rep.components
    assert A.holds and B.holds and "r_kk >= 0" in B.notes
    ex32 = preset("example32")
    period = [2 * math.pi * k for k in range(5)]
    rep = cr.check_lemma22(ex32, period, period)
    A, B = rep.components
    assert A.holds and B.verdict == "fails"
    assert B.witnesses[0]["t"] > math.pi - 1e-3
    zero_r = CoefficientSystem.from_text(Z, I2, Z, Z)
    B = cr.check_lemma22(zero_r, horizon=10.0).components[1]
    assert B.holds and B.margin == 0.0


def test_lemma22_minus_pattern_rejects_thm33_demo():
    rep = cr.check_lemma22(preset("thm33_demo"), horizon=10.0, mode="sign_pattern_minus")
    assert rep.components[0].verdict == "fails"


def test_lemma22_cell_integral_against_nested_quadrature():
    cs = CoefficientSystem.from_text(
        [["0.3*sin(t)", "0"], ["0", "0"]], [["1+0.5*cos(t)", "0"], ["0", "1"]], [["cos(2*t)+0.2", "0"], ["0", "1"]], [["0.1", "0"], ["0", "0"]]
    )
    from matrix_osc.quadrature import quad

    def inner(tau):
        return quad(lambda s: 0.3 * math.sin(s) - 0.1 + (1 + 0.5 * math.cos(s)) * cr.quad_I_k(cs, 1, 0.0, s), 0.0, tau, epsabs=1e-10, epsrel=1e-10)

    ref = quad(lambda tau: math.exp(inner(tau)) * (math.cos(2 * tau) + 0.2), 0.0, 2.0, epsabs=1e-9, epsrel=1e-9)
    r11 = cr._ix("R", 1, 1)
    _, G = cr._cell_integral(cs, 0.0, 2.0, lambda c: c[r11], lambda c: c[r11], 1, 1, 1.0, 1e-12)
    assert G[-1] == pytest.approx(ref, abs=1e-8)


def test_thm34_examples():
    rep = cr.check_thm34(preset("thm34_demo"), 1, [0, 10], [0, 10])
    C, D1, D2 = rep.components
    assert C.holds and D1.holds and D2.holds
    assert "F_1 >= 0" in D1.notes and "F_2 <= 0" in D2.notes
    assert cr.check_thm34(preset("remark34"), 1, horizon=10).components[0].verdict == "fails"
    assert cr.check_thm34(preset("example33"), 1, horizon=10).components[0].verdict == "fails"


def test_thm34_cell_path():
    # F_1 = sin t changes sign, so D1 needs the cell check; it fails once sin < 0 dominates
    cs = CoefficientSystem.from_text(Z, [["1", "0"], ["0", "-1"]], [["sin(t)", "0"], ["0", "-1"]], Z)
    rep = cr.check_thm34(cs, 1, [0, 2 * math.pi], [0, 2 * math.pi])
    C, D1, D2 = rep.components
    assert C.holds and D2.holds
    assert D1.verdict == "fails" and D1.witnesses[0]["t"] > math.pi
    ok = cr.check_thm34(cs, 1, [0, 1.0, 2.0, 3.0], [0, 3.0])
    assert ok.components[1].holds


def test_offdiag_closed_form():
    cs = preset("thm33_demo")
    traj = integrate_riccati(cs, np.eye(2), (0, 10))
    ts = np.linspace(0, 10, 41)
    y12, y21 = cr.offdiag_closed_form(cs, traj, ts)
    np.testing.assert_allclose(y12, traj(ts)[:, 1], atol=1e-6)
    np.testing.assert_allclose(y21, traj(ts)[:, 2], atol=1e-6)
    zero = CoefficientSystem.from_text(Z, I2, [["-1", "0"], ["0", "-2"]], Z)
    traj = integrate_riccati(zero, np.diag([0.5, 0.2]), (0, 1))
    assert cr.offdiag_closed_form(zero, traj, 0.7) == (0.0, 0.0)


def test_offdiag_closed_form_without_q():
    # q = 0, a_21 = 0: y12 = y12(t0) - int (p12 y11 - s12 y22 - r12)
    cs = CoefficientSystem.from_text([["0", "1"], ["0", "0"]], Z, [["0", "2"], ["0", "0"]], Z)
    traj = integrate_riccati(cs, np.array([[1.0, 0.5], [0.0, 1.0]]), (0, 2))
    # y11' = r11 = 0 here, so y11 = 1 and y12 = 0.5 - (t - 2 t)
    y12, _ = cr.offdiag_closed_form(cs, traj, 2.0)
    assert y12 == pytest.approx(0.5 + 2.0, abs=1e-10)


def test_theorem_verdicts():
    assert cr.theorem_verdict(preset("example32"), "cor31", horizon=20 * math.pi).notes.startswith("supported")
    assert cr.theorem_verdict(preset("example33", lam=math.pi / 2), "cor32", t1=2 * math.pi, t2=3 * math.pi).holds
    assert cr.theorem_verdict(preset("thm33_demo"), "thm33", horizon=50.0).holds
    assert cr.theorem_verdict(preset("thm34_demo"), "thm34", j=1, horizon=10.0).holds
    with pytest.raises(ValueError):
        cr.theorem_verdict(preset("thm34_demo"), "cor32")
    with pytest.raises(ValueError):
        cr.theorem_verdict(preset("thm34_demo"), "thm99")


def test_cor32_soundness_on_prepared_solutions():
    # wherever cor32 holds, 20 prepared solutions vanish somewhere in [t1, t2]
    for lam in (math.pi / 2, 2.0):
        cs = preset("example33", lam=lam)
        assert cr.theorem_verdict(cs, "cor32", t1=2 * math.pi, t2=3 * math.pi).holds
        counts = cr.prepared_zero_check(cs, 2 * math.pi, 3 * math.pi, n=20)
        assert min(counts) >= 1, counts


def test_report_json_and_invariants():
    rep = cr.check_condition_IV(preset("remark34"), 1, 0.2, 1.0)
    text = json.dumps(rep.to_dict(), sort_keys=True)
    back = json.loads(text)
    assert set(back) == {"criterion", "verdict", "margin", "witnesses", "notes", "components"}
    assert back["verdict"] == "fails" and back["witnesses"]
    with pytest.raises(ValueError):
        cr.CriterionReport("nope", "holds", 0.0)
    with pytest.raises(ValueError):
        cr.CriterionReport("cond_I", "maybe", 0.0)


def test_partition():
    p = cr.Partition.uniform(0, 10, 3)
    assert p.points == (0.0, 3.0, 6.0, 9.0, 10.0)
    with pytest.raises(ValueError):
        cr.Partition((0, 0))
    with pytest.raises(ValueError):
        cr.check_lemma22(preset("thm33_demo"), [1, 2], [0, 2])
