import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from tikhoflow._io import read_csv
from tikhoflow.diagnostics import (RATES_HEADER, K_bound, ProofConstants, certify,
                                   claimed_exponents, coefficients, constant_violations,
                                   default_grid, energy, fit_rate, ratio_growth, s5_interval,
                                   select_proof_constants, write_rates_csv)
from tikhoflow.dynamics import FlowParams, tikhonov_bound
from tikhoflow.errors import AllZero, DimensionMismatch, EmptyWindow, NonPositive, NotCertified
from tikhoflow.operators import make_affine
from tikhoflow.problems import get_problem
from tikhoflow.tikhonov import epsilon, tikhonov_point

EXAMPLE = FlowParams(alpha=2.0, q=0.75, s=1 / 6, beta=1.0, gamma=1.0, c=0.5)
SWEEP_A = FlowParams(alpha=2.0, q=0.5, s=0.3, beta=1.0, gamma=1.0, c=0.5)
BENCH = FlowParams(alpha=2.0, q=0.75, s=1 / 6, beta=0.5, gamma=1.0, c=0.25)


def test_constants_example_by_hand():
    k = select_proof_constants(EXAMPLE)
    # tau_max = 2 - 0.5 * 12 / 8 = 1.25
    assert k.b == 2.0 and k.s2 == 0.5
    assert k.tau == pytest.approx(0.625)
    lo, hi = s5_interval(EXAMPLE, k)
    # 2 / (4 (1.375 / 0.5 - 1)) = 2/7
    assert lo == pytest.approx(2 / 7) and hi == pytest.approx(1.0)
    assert k.s5 == pytest.approx(math.sqrt(2 / 7))
    # min(2 * 0.625 / 6, 1 / 6) = 1/6
    assert K_bound(EXAMPLE, k) == pytest.approx(1 / 6)
    assert k.K == pytest.approx(0.15)
    assert constant_violations(EXAMPLE, k) == []


def test_constants_need_positive_c():
    with pytest.raises(NonPositive):
        select_proof_constants(replace(EXAMPLE, c=0.0))


def test_leading_discriminant_identity():
    # b = alpha, s-values and K to zero: 16 (1 - alpha) + 8 s5 alpha
    tiny = 1e-12
    k = ProofConstants(b=2.0, tau=0.625, s1=tiny, s2=0.5, s3=0.0, s4=0.0, s5=0.5, s6=tiny, K=0.0)
    with np.errstate(all="ignore"):
        cv = coefficients(10.0, EXAMPLE, k)
    assert cv.discriminant_leading == pytest.approx(-8.0, abs=1e-9)


def test_example_leading_signs():
    k = select_proof_constants(EXAMPLE)
    cv = coefficients(1.0, EXAMPLE, k)
    b = k.b
    assert 2 * b + k.s3 * b + k.s5 * b - 4 * EXAMPLE.alpha < 0
    assert -2 + k.s1 + b * k.s4 + k.K * k.s6 * b / 2 < 0
    assert cv.discriminant_leading < 0
    assert cv.R4_leading_coef == pytest.approx(-2 * 0.5 + 3 * k.K * 4 / 2)
    assert cv.R4_leading_coef < 0 and cv.R5_leading_coef < 0


def _R4_R5_by_identities(t, p, k):
    """R4, R5 rewritten with c(t)^2 eps = c t^-s and c(t) beta(t) eps = beta c t^-s."""
    al, q, s, be, ga, c = p.alpha, p.q, p.s, p.beta, p.gamma, p.c
    b, K, r = k.b, k.K, q + s
    eps = c * t ** (-2 * q - s)
    cbd = 2 * q * be * t ** (2 * q - 1)
    inner = b * (cbd - t ** q + ga * t ** (q - s)) - be * c * t ** (q - s)
    R4 = (b * ((al - q * t ** (q - 1)) * k.s2 - 1) * c * t ** (-q - s) - b * q * (q - 1) * t ** (q - 2)
          + inner * eps + K * (b * (2 * al + b - 2 * q * t ** (q - 1)) / (2 * t ** r)
                               + b * be / (2 * k.s6) * t ** (q - 2 * r)))
    R5 = (-2 * s * c * t ** (-s - 1) - b * s * be * c * t ** (-s - 1) / 2
          + b * be ** 2 * c ** 2 * t ** (-q - 2 * s) / (4 * k.s5) - b * c * t ** (-q - s)
          - inner * eps + K * (2 * c * t ** (-s - r) + b * be * c * t ** (-s - r) / 2))
    return R4, R5


@pytest.mark.parametrize("t", [1.0, 7.5, 1e3, 1e6])
def test_R4_R5_against_identity_form(t):
    k = select_proof_constants(SWEEP_A)
    cv = coefficients(t, SWEEP_A, k)
    R4, R5 = _R4_R5_by_identities(t, SWEEP_A, k)
    assert cv.R4[0] == pytest.approx(R4, rel=1e-10, abs=1e-14 * t ** -0.5)
    assert cv.R5[0] == pytest.approx(R5, rel=1e-10, abs=1e-14 * t ** -0.5)


def test_R1_R3_against_powers():
    p, k = SWEEP_A, select_proof_constants(SWEEP_A)
    t = 37.0
    q, s, b, K = p.q, p.s, k.b, k.K
    R1 = (2 * b + k.s3 * b + k.s5 * b + 4 * q * t ** (q - 1) - 4 * p.alpha
          + 8 * K * t ** (-s)) * t ** q
    assert coefficients(t, p, k).R1[0] == pytest.approx(R1, rel=1e-13)


def test_coefficients_vectorised_and_finite():
    k = select_proof_constants(SWEEP_A)
    t = np.logspace(0, 8, 33)
    cv = coefficients(t, SWEEP_A, k)
    for name in ("R1", "R2", "R3", "R4", "R5", "R6_leading", "discriminant"):
        arr = getattr(cv, name)
        assert arr.shape == t.shape and np.all(np.isfinite(arr))
    np.testing.assert_allclose(coefficients(t[5], SWEEP_A, k).R3, cv.R3[5:6])


def test_baseline_tikhonov_terms_vanish():
    k = select_proof_constants(SWEEP_A)
    with np.errstate(divide="ignore"):
        cv = coefficients(1.0, replace(SWEEP_A, c=0.0), replace(k, K=0.0))
    assert cv.R4_leading_coef == 0.0 and cv.R5_leading_coef == 0.0


def test_asymptotic_consistency():
    k = select_proof_constants(SWEEP_A)
    devs = []
    for t in (1e4, 1e6, 1e8):
        cv = coefficients(t, SWEEP_A, k)
        devs.append([abs(cv.R1[0] / cv.R1_leading[0] - 1), abs(cv.R3[0] / cv.R3_leading[0] - 1)])
    devs = np.array(devs)
    assert np.all(np.diff(devs, axis=0) < 0)
    assert np.all(devs[-1] <= 1e-2)


def test_certify_valid_constants():
    k = select_proof_constants(SWEEP_A)
    rep = certify(SWEEP_A, k, default_grid(SWEEP_A, 1e6))
    assert rep.certified and math.isfinite(rep.T_star) and rep.T_star <= 1e6
    assert rep.violating == []
    text = rep.to_text()
    assert "certified: yes" in text and "T_star:" in text and "b=2" in text


def test_certify_T_star_is_tail_start():
    k = select_proof_constants(SWEEP_A)
    grid = default_grid(SWEEP_A, 1e6)
    rep = certify(SWEEP_A, k, grid)
    cv = coefficients(grid, SWEEP_A, k)
    ok = ((cv.R1 < 0) & (cv.R3 < 0) & (cv.discriminant < 0) & (cv.R4 <= 0) & (cv.R5 <= 0))
    i = int(np.searchsorted(grid, rep.T_star))
    assert ok[i:].all() and (i == 0 or not ok[i - 1])


def test_certify_K_doubled_fails_on_R4():
    k = select_proof_constants(SWEEP_A)
    bad = replace(k, K=2 * k.K)
    assert coefficients(1.0, SWEEP_A, bad).R4_leading_coef > 0
    with pytest.raises(NotCertified) as info:
        certify(SWEEP_A, bad)
    assert "R4<=0" in info.value.report.violating
    assert info.value.report.constant_violations


def test_certify_s5_below_interval_fails_on_R5():
    k = select_proof_constants(SWEEP_A)
    lo, _ = s5_interval(SWEEP_A, k)
    bad = replace(k, s5=lo / 2)
    assert coefficients(1.0, SWEEP_A, bad).R5_leading_coef > 0
    with pytest.raises(NotCertified) as info:
        certify(SWEEP_A, bad)
    assert info.value.report.violating == ["R5<=0"]


def test_certify_grid_preconditions():
    k = select_proof_constants(SWEEP_A)
    with pytest.raises(ValueError):
        certify(SWEEP_A, k, np.logspace(0, 3, 20))
    with pytest.raises(ValueError):
        certify(SWEEP_A, k, [1.0, 1e5, 1e4, 1e6])


def test_benchmark_parameters_not_certifiable():
    # alpha beta = 1: the t^4q coefficient of R2^2 - 4 R1 R3 is positive once
    # the beta factor carried by R3 is kept, although the stated form is negative
    k = select_proof_constants(BENCH)
    cv = coefficients(1.0, BENCH, k)
    assert cv.discriminant_leading < 0 < cv.discriminant_leading_exact
    with pytest.raises(NotCertified) as info:
        certify(BENCH, k, default_grid(BENCH, 1e12))
    assert "R2^2-4R1R3<0" in info.value.report.violating


def test_example_certifies_only_past_1e6():
    k = select_proof_constants(EXAMPLE)
    rep = certify(EXAMPLE, k, default_grid(EXAMPLE, 1e6), raise_on_fail=False)
    assert not rep.certified and rep.violating == ["R4<=0"]
    far = certify(EXAMPLE, k, default_grid(EXAMPLE, 1e10))
    assert 1e8 < far.T_star < 1e9


@given(alpha=st.floats(1.05, 8), q=st.floats(0.2, 0.6), sf=st.floats(0.0, 1.0),
       beta=st.floats(0.1, 4), gamma=st.floats(0.2, 4), cf=st.floats(0.05, 0.95))
def test_negative_leading_terms_certify(alpha, q, sf, beta, gamma, cf):
    # every correction exponent (q, s, 1 - q - s) is kept at least 0.2 so the
    # leading terms take over on a finite grid
    s = 0.2 + sf * (0.6 - q)
    p = FlowParams(alpha, q, s, beta, gamma, cf * tikhonov_bound(alpha, beta, gamma))
    k = select_proof_constants(p, certify_candidates=False)
    assert constant_violations(p, k) == []
    cv = coefficients(1.0, p, k)
    leading = [cv.R1_leading[0], cv.R3_leading[0], cv.discriminant_leading_exact,
               cv.R4_leading_coef, cv.R5_leading_coef]
    assume(all(v < -0.05 for v in leading))
    assert certify(p, k, default_grid(p, 1e16, 20)).certified


# -- energy -----------------------------------------------------------------------

def test_energy_zero_at_origin_zero():
    op = get_problem("identity2")
    k = select_proof_constants(SWEEP_A)
    eb = energy((3.0, np.zeros(2), np.zeros(2), op(np.zeros(2))), np.zeros(2), SWEEP_A, k)
    assert eb.E == 0.0 and eb.u == 0.0 and eb.v == 0.0
    assert set(eb.terms) == {"v", "u", "operator", "tikhonov", "anchor"}


def test_energy_terms_sum_and_weight():
    op = get_problem("fullrank")
    k = select_proof_constants(SWEEP_A)
    t, x, xd = 4.0, np.array([0.3, -0.2, 1.0]), np.array([0.1, 0.0, -0.4])
    xt = tikhonov_point(op, epsilon(t, SWEEP_A), tol=1e-14)
    eb = energy((t, x, xd, op(x)), xt, SWEEP_A, k)
    assert eb.E == pytest.approx(sum(eb.terms.values()))
    q, b = SWEEP_A.q, k.b
    w = b * (2 * SWEEP_A.alpha - b - 2 * q * t ** (q - 1) + t ** q * SWEEP_A.beta * t ** q
             * epsilon(t, SWEEP_A)) / 2
    assert eb.coupling_weight == pytest.approx(w)
    v = 0.5 * np.sum((b * (x - xt.x) + t ** q * (2 * xd + SWEEP_A.beta * t ** q * op(x))) ** 2)
    assert eb.v == pytest.approx(v)


def test_energy_dimension_mismatch():
    k = select_proof_constants(SWEEP_A)
    with pytest.raises(DimensionMismatch):
        energy((2.0, np.zeros(3), np.zeros(3), np.zeros(3)), np.zeros(2), SWEEP_A, k)


def test_u_nonnegative_and_equal_both_ways():
    rng = np.random.default_rng(3)
    S = rng.normal(size=(4, 4))
    M = S @ S.T * 0.3 + (S - S.T)
    M[:, 3] = M[3, :] = 0.0  # rank deficient
    op = make_affine(M, rng.normal(size=4))
    k = select_proof_constants(SWEEP_A)
    us = []
    for _ in range(1000):
        t = 10 ** rng.uniform(0, 4)
        eps = epsilon(t, SWEEP_A)
        xt = tikhonov_point(op, eps, tol=1e-13 * (1 + np.linalg.norm(op(np.zeros(4)))))
        x = xt.x + rng.normal(size=4) * 10 ** rng.uniform(-3, 1)
        eb = energy((t, x, rng.normal(size=4), op(x)), xt, SWEEP_A, k)
        scale = k.b * t ** (2 * SWEEP_A.q) * SWEEP_A.beta
        alt = scale * float((op(x) - op(xt.x)) @ (x - xt.x))
        assert eb.u == pytest.approx(alt, rel=1e-6, abs=1e-9 * scale * (1 + x @ x))
        us.append(eb.u)
    assert min(us) >= -1e-10


# -- rates ------------------------------------------------------------------------

def test_fit_rate_exact_power_law():
    t = np.logspace(0, 4, 100)
    fit = fit_rate(t, t ** -1.5, (1.0, 1e4), claimed_exponent=-1.5, quantity="x")
    assert fit.slope == pytest.approx(-1.5, abs=1e-12)
    assert fit.r2 == pytest.approx(1.0)
    assert fit.sup_ratio == pytest.approx(1.0)
    assert fit.n == 100 and fit.dropped_zeros == 0


def test_fit_rate_perturbed():
    t = np.logspace(0, 4, 200)
    fit = fit_rate(t, 3 * t ** -0.8 * (1 + 0.01 * np.sin(np.log(t))), (1.0, 1e4))
    assert -0.85 <= fit.slope <= -0.75
    assert math.isnan(fit.sup_ratio)


def test_fit_rate_constant_and_zeros():
    t = np.logspace(0, 2, 30)
    fit = fit_rate(t, np.full(30, 2.0), (1.0, 100.0))
    assert fit.slope == pytest.approx(0.0, abs=1e-12) and 0.0 <= fit.r2 <= 1.0
    vals = t ** -1.0
    vals[::3] = 0.0
    fit = fit_rate(t, vals, (1.0, 100.0))
    assert fit.dropped_zeros == 10 and fit.slope == pytest.approx(-1.0)


def test_fit_rate_errors():
    t = np.logspace(0, 4, 50)
    with pytest.raises(EmptyWindow):
        fit_rate(t, t, (1e5, 1e6))
    with pytest.raises(EmptyWindow):
        fit_rate(t, t, (10.0, 10.0))
    with pytest.raises(AllZero):
        fit_rate(t, np.zeros_like(t), (1.0, 1e4))


@given(st.floats(-3, 1), st.floats(1e-3, 1e3))
def test_fit_rate_recovers_exponent(e, amp):
    t = np.logspace(1, 5, 40)
    fit = fit_rate(t, amp * t ** e, (10.0, 1e5), claimed_exponent=e)
    assert fit.slope == pytest.approx(e, abs=1e-9)
    assert fit.sup_ratio == pytest.approx(amp, rel=1e-9)


def test_ratio_growth():
    t = np.logspace(0, 4, 81)
    assert ratio_growth(t, 5 * t ** -0.5, [-0.5], 1e2, 1e4)[2] == pytest.approx(0.0, abs=1e-12)
    grow = ratio_growth(t, t ** -0.4, [-0.5], 1e2, 1e4)
    assert grow[2] == pytest.approx(10 ** 0.1 - 1, rel=1e-9)


def test_claimed_exponents_at_balanced_s():
    q = 0.75
    ex = claimed_exponents(FlowParams(2.0, q, 2 * (1 - q) / 3, 0.5, 1.0, 0.25))
    assert max(ex["norm_xdot"]) == pytest.approx(-(1 + 2 * q) / 3)
    assert max(ex["norm_Ax"]) == pytest.approx(-(1 + 5 * q) / 3)
    assert ex["norm_xdot"][0] == pytest.approx(ex["norm_xdot"][1])


def test_rates_csv(tmp_path):
    t = np.logspace(0, 2, 20)
    fit = fit_rate(t, t ** -1.0, (1.0, 100.0), claimed_exponent=-1.0, quantity="norm_Ax")
    header, cols = read_csv(write_rates_csv(tmp_path / "r.csv", [fit]))
    assert header == RATES_HEADER
    assert cols["quantity"] == ["norm_Ax"] and cols["claimed_exponent"] == [-1.0]
