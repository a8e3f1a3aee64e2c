import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from tikhoflow.errors import DimensionMismatch, NonFiniteOutput, NotMonotone, ProblemFileError
from tikhoflow.operators import (evaluate, fd_jacobian, gradient_quadratic, load_problem,
                                 make_affine, make_gradient, make_opaque, monotonicity_probe,
                                 problem_from_dict, problem_to_dict)
from tikhoflow.problems import REGISTRY, get_problem, problem_names
from tikhoflow.primal_dual import saddle_operator

ROT = [[0.0, -1.0], [1.0, 0.0]]


def test_rotation_eval():
    op = make_affine(ROT)
    np.testing.assert_array_equal(evaluate(op, [1.0, 0.0]), [0.0, 1.0])
    np.testing.assert_array_equal(evaluate(op, [1.0, 2.0]), [-2.0, 1.0])


def test_rankdef_eval_at_origin():
    op = make_affine(np.diag([1.0, 1.0, 0.0, 0.0]), np.ones(4))
    np.testing.assert_array_equal(evaluate(op, np.zeros(4)), [-1.0, -1.0, 0.0, 0.0])


def test_identity_and_gradient_eval():
    np.testing.assert_array_equal(evaluate(make_affine(np.eye(2)), [3.0, -2.0]), [3.0, -2.0])
    op = make_gradient(lambda x: 0.5 * x @ x, lambda x: x, 2)
    np.testing.assert_array_equal(evaluate(op, [1.0, 1.0]), [1.0, 1.0])


def test_symmetric_part_psd_is_accepted():
    # [[1,2],[0,1]] has symmetric part [[1,1],[1,1]] with eigenvalues {0, 2}
    make_affine([[1.0, 2.0], [0.0, 1.0]])


def test_indefinite_symmetric_part_rejected():
    with pytest.raises(NotMonotone):
        make_affine([[0.0, 2.0], [0.0, 0.0]])


def test_dimension_errors():
    op = make_affine(np.eye(3))
    with pytest.raises(DimensionMismatch):
        evaluate(op, [1.0, 2.0])
    with pytest.raises(DimensionMismatch):
        make_affine(np.ones((2, 3)))
    with pytest.raises(DimensionMismatch):
        make_affine(np.eye(2), [1.0, 2.0, 3.0])


def test_non_finite_output():
    op = make_opaque(lambda x: x / 0.0, 2)
    with np.errstate(divide="ignore", invalid="ignore"):
        with pytest.raises(NonFiniteOutput):
            evaluate(op, [1.0, 0.0])


def test_probe_rotation_is_exactly_zero():
    rep = monotonicity_probe(make_affine(ROT), pairs=1000)
    assert rep.passed
    assert abs(rep.min_inner_product) < 1e-12


def test_probe_psd_and_antimonotone():
    assert monotonicity_probe(make_affine(np.diag([1.0, 0.0])), pairs=1000).min_inner_product >= 0
    rep = monotonicity_probe(make_opaque(lambda x: -x, 3), pairs=50)
    assert not rep.passed and rep.min_inner_product < 0
    x, y = rep.witness
    assert np.dot(-x + y, x - y) == pytest.approx(rep.min_inner_product)


def test_probe_custom_sampler():
    op = make_affine(np.eye(2))
    rep = monotonicity_probe(op, pairs=5, sampler=lambda rng: (np.ones(2), np.zeros(2)))
    assert rep.min_inner_product == pytest.approx(2.0)


@pytest.mark.parametrize("name", problem_names())
def test_builtin_operators_are_monotone(name):
    obj = get_problem(name)
    op = obj if hasattr(obj, "dim") else saddle_operator(obj)
    assert monotonicity_probe(op, pairs=1000, seed=7).min_inner_product >= -1e-10


def test_fd_jacobian_examples():
    M = np.array([[2.0, 0.5, 0.0], [-0.5, 1.0, 0.3], [0.0, -0.3, 1.5]])
    op = make_affine(M, [1.0, -1.0, 0.5])
    assert np.max(np.abs(fd_jacobian(op, [0.3, 2.0, -1.0]) - M)) < 1e-6
    q = gradient_quadratic(np.diag([2.0, 3.0]))
    assert np.max(np.abs(fd_jacobian(q, [1.0, -4.0]) - np.diag([2.0, 3.0]))) < 1e-6
    assert np.max(np.abs(fd_jacobian(make_affine(ROT), [5.0, 7.0]) - np.array(ROT))) < 1e-6
    with pytest.raises(ValueError):
        fd_jacobian(op, np.zeros(3), h=0.0)


def test_fd_jacobian_symmetric_for_gradient_operators():
    f = lambda x: np.log(np.sum(np.exp(x)))  # noqa: E731

    def grad(x):
        e = np.exp(x - x.max())
        return e / e.sum()

    J = fd_jacobian(make_gradient(f, grad, 3), [0.2, -0.5, 1.0])
    assert np.max(np.abs(J - J.T)) <= 1e-5 * np.max(np.abs(J))


@given(arrays(np.float64, (3, 3), elements=st.floats(-5, 5)),
       arrays(np.float64, 3, elements=st.floats(-5, 5)),
       arrays(np.float64, 3, elements=st.floats(-5, 5)))
def test_affine_eval_matches_matrix_arithmetic(S, a, x):
    # skew-symmetric plus psd is always monotone
    M = (S - S.T) + S @ S.T
    op = make_affine(M, a)
    np.testing.assert_allclose(evaluate(op, x), M @ (x - a), rtol=0, atol=1e-12)


def test_gradient_quadratic_affine_and_opaque():
    op = gradient_quadratic(np.diag([1.0, 0.0]), [-1.0, 0.0])
    assert op.is_affine and op.kind == "gradient"
    np.testing.assert_allclose(op.anchor, [1.0, 0.0])
    # -q outside range(Q): no zero, kept opaque
    op2 = gradient_quadratic(np.diag([1.0, 0.0]), [0.0, 1.0])
    assert not op2.is_affine
    np.testing.assert_allclose(evaluate(op2, [1.0, 1.0]), [1.0, 1.0])


def test_problem_file_round_trip(tmp_path):
    d = {"dim": 4, "kind": "affine", "M": np.diag([1.0, 1, 0, 0]).tolist(), "a": [1.0] * 4,
         "solution": {"anchor": [1.0] * 4, "kernel_basis": [[0, 0, 1.0, 0], [0, 0, 0, 1.0]]}}
    p = tmp_path / "rd.json"
    p.write_text(json.dumps(d))
    op = load_problem(p)
    assert op.is_affine and op.name == "rd"
    again = problem_from_dict(problem_to_dict(op))
    np.testing.assert_array_equal(again.M, op.M)
    np.testing.assert_array_equal(again.anchor, op.anchor)
    np.testing.assert_array_equal(again.solution[1], op.solution[1])


def test_problem_file_errors(tmp_path):
    with pytest.raises(ProblemFileError):
        problem_from_dict({"dim": 2, "kind": "affine", "M": [[1.0]]})
    with pytest.raises(ProblemFileError):
        problem_from_dict({"dim": 2, "kind": "cubic"})
    with pytest.raises(ProblemFileError):
        problem_from_dict({"kind": "affine"})
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    with pytest.raises(ProblemFileError):
        load_problem(p)


def test_gradient_quadratic_file():
    op = problem_from_dict({"dim": 2, "kind": "gradient_quadratic", "Q": [[2.0, 0], [0, 3.0]],
                            "q": [2.0, -3.0]})
    np.testing.assert_allclose(evaluate(op, [0.0, 0.0]), [2.0, -3.0])
    back = problem_to_dict(op)
    assert back["kind"] == "gradient_quadratic"
    np.testing.assert_allclose(back["q"], [2.0, -3.0])


def test_registry_is_complete():
    assert {"rankdef", "fullrank", "skew_shift", "toy_qp", "rotation"} <= set(REGISTRY)
    with pytest.raises(KeyError):
        get_problem("nope")


def test_operator_is_read_only():
    op = make_affine(np.eye(2))
    with pytest.raises(ValueError):
        op.M[0, 0] = 5.0
