import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.optimize import brentq

from tikhoflow._io import read_csv
from tikhoflow.dynamics import FlowParams
from tikhoflow.errors import ContinuationStalled, MaxIterations
from tikhoflow.operators import gradient_quadratic, make_affine, make_opaque
from tikhoflow.problems import get_problem
from tikhoflow.tikhonov import (PATH_HEADER, default_tol, epsilon, minimal_norm_solution,
                                path_checks, project_origin, tikhonov_path, tikhonov_point,
                                write_path_csv)

P = FlowParams(alpha=2.0, q=0.75, s=1 / 6, beta=0.5, gamma=1.0, c=0.25)


def test_epsilon_and_default_tol():
    assert epsilon(10.0, P) == pytest.approx(0.25 * 10 ** (-(1.5 + 1 / 6)))
    np.testing.assert_allclose(epsilon(np.array([1.0, 2.0]), P), 0.25 * np.array([1.0, 2.0]) ** -P.p)
    assert default_tol(1.0) == 1e-10
    assert default_tol(1e-9) == pytest.approx(1e-13)


def test_rankdef_closed_form_by_hand():
    op = get_problem("rankdef")
    for eps in (1.0, 1e-3, 1e-7):
        pt = tikhonov_point(op, eps)
        np.testing.assert_allclose(pt.x, np.array([1, 1, 0, 0]) / (1 + eps), rtol=1e-13, atol=1e-15)
        assert pt.residual <= default_tol(eps)


def test_rotation_closed_form_by_hand():
    # (J + eps I) x = J a with J the rotation; solved by hand via complex numbers
    op = get_problem("rotation_shift")
    eps = 0.3
    a = 1 + 2j
    x = 1j * a / (1j + eps)
    np.testing.assert_allclose(tikhonov_point(op, eps).x, [x.real, x.imag], rtol=1e-13)


@pytest.mark.parametrize("name", ["fullrank", "rankdef", "skew_shift", "rotation_shift"])
@pytest.mark.parametrize("eps", [1.0, 1e-2, 1e-5])
def test_fixed_point_agrees_with_closed_form(name, eps):
    op = get_problem(name)
    tol = max(1e-15, min(1e-13, eps * 1e-8))
    a = tikhonov_point(op, eps, tol=tol, method="closed_form")
    b = tikhonov_point(op, eps, tol=tol, method="fixed_point")
    assert b.method == "fixed_point" and b.residual <= tol
    assert np.linalg.norm(a.x - b.x) <= 1e-8


def test_nonlinear_operator_against_scalar_root():
    a = np.array([1.0, -2.0, 0.5])
    op = make_opaque(lambda x: x ** 3 - a, 3)
    eps = 0.1
    pt = tikhonov_point(op, eps)
    oracle = [brentq(lambda u, ai=ai: u ** 3 + eps * u - ai, -5, 5, xtol=1e-15) for ai in a]
    np.testing.assert_allclose(pt.x, oracle, atol=1e-10)


def test_tikhonov_point_errors():
    op = get_problem("fullrank")
    with pytest.raises(ValueError):
        tikhonov_point(op, 0.0)
    with pytest.raises(ValueError):
        tikhonov_point(make_opaque(lambda x: x, 2), 0.1, method="closed_form")
    with pytest.raises(MaxIterations):
        tikhonov_point(op, 1e-6, method="fixed_point", max_iter=2)


def test_minimal_norm_closed_form_is_projection():
    op = get_problem("rankdef")
    sol = minimal_norm_solution(op)
    anchor, basis = op.solution
    np.testing.assert_allclose(sol.x_star, project_origin(anchor, basis), atol=1e-14)
    np.testing.assert_allclose(sol.x_star, [1, 1, 0, 0], atol=1e-14)
    assert sol.method == "closed_form" and sol.certified_residual <= 1e-12


@pytest.mark.parametrize("name", ["rankdef", "fullrank", "skew_shift", "rotation"])
def test_continuation_matches_closed_form(name):
    op = get_problem(name)
    opaque = make_opaque(op.fn, op.dim)
    cont = minimal_norm_solution(opaque)
    assert cont.method == "continuation"
    np.testing.assert_allclose(cont.x_star, minimal_norm_solution(op).x_star, atol=1e-6)


def test_continuation_stalls_without_zero():
    op = gradient_quadratic(np.diag([1.0, 0.0]), [0.0, 1.0])  # no zero
    with pytest.raises(ContinuationStalled):
        minimal_norm_solution(op, max_rungs=3)


def test_project_origin_without_kernel():
    np.testing.assert_array_equal(project_origin([1.0, 2.0], []), [1.0, 2.0])


@pytest.mark.parametrize("name", ["fullrank", "rankdef", "skew_shift"])
def test_path_checks_pass(name):
    grid = np.logspace(0, 4, 50)
    rep = path_checks(get_problem(name), P, grid)
    assert rep.passed and rep.derivative_failures == 0
    assert np.all(rep.norm_xt <= rep.x_star_norm * (1 + 1e-8))
    assert np.max(rep.deriv_ratio) <= 1.0


def test_path_checks_detects_wrong_x_star():
    rep = path_checks(get_problem("rankdef"), P, np.logspace(0, 2, 10), x_star=np.zeros(4))
    assert not rep.norm_bound_ok and not rep.passed


def _monotone_matrix(S, skew):
    return S @ S.T + (skew - skew.T)


@given(arrays(np.float64, (3, 3), elements=st.floats(-2, 2)),
       arrays(np.float64, (3, 3), elements=st.floats(-2, 2)),
       arrays(np.float64, 3, elements=st.floats(-3, 3)),
       st.floats(1e-4, 10.0), st.floats(1.01, 10.0))
def test_path_norm_bounded_and_increasing(S, K, a, eps, ratio):
    op = make_affine(_monotone_matrix(S, K), a)
    xs = minimal_norm_solution(op).x_star
    x1 = tikhonov_point(op, eps).x
    x2 = tikhonov_point(op, eps / ratio).x
    scale = 1e-8 * (1 + np.linalg.norm(xs))
    assert np.linalg.norm(x1) <= np.linalg.norm(xs) + scale
    assert np.linalg.norm(x1) <= np.linalg.norm(x2) + scale


@given(arrays(np.float64, (2, 2), elements=st.floats(-2, 2)),
       arrays(np.float64, 2, elements=st.floats(-3, 3)), st.floats(1.0, 1e3))
def test_path_derivative_bound(S, a, t):
    op = make_affine(_monotone_matrix(S, np.array([[0.0, 1.0], [0.0, 0.0]])), a)
    h = t * 1e-4
    tol = 1e-13 * (1 + np.linalg.norm(op(np.zeros(2))))
    lo, mid, hi = (tikhonov_point(op, epsilon(u, P), tol=tol).x for u in (t - h, t, t + h))
    deriv = np.linalg.norm(hi - lo) / (2 * h)
    # a residual r moves x_t by at most r / eps
    noise = 2 * tol / epsilon(t + h, P) / (2 * h)
    assert deriv <= P.p / t * np.linalg.norm(mid) * (1 + 1e-5) + noise


def test_path_csv(tmp_path):
    pts = tikhonov_path(get_problem("fullrank"), P, [1.0, 10.0, 100.0])
    header, cols = read_csv(write_path_csv(tmp_path / "p.csv", pts))
    assert header == PATH_HEADER
    assert cols["t"] == [1.0, 10.0, 100.0]
    np.testing.assert_allclose(cols["eps"], epsilon(np.array([1.0, 10.0, 100.0]), P))
