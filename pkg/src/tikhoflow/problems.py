"""Built-in test problems, addressable by name from configs and the CLI."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .operators import MonotoneOperator, gradient_quadratic, make_affine
from .primal_dual import ConstrainedProblem, quadratic_problem

__all__ = ["BuiltinProblem", "REGISTRY", "get_problem", "problem_names"]


@dataclass(frozen=True)
class BuiltinProblem:
    name: str
    description: str
    build: Callable[[], object]
    kind: str  # operator | qp

    def make(self):
        return self.build()


def _with_solution(op: MonotoneOperator, anchor, kernel) -> MonotoneOperator:
    return MonotoneOperator(dim=op.dim, fn=op.fn, kind=op.kind, M=op.M, anchor=op.anchor,
                            value=op.value, name=op.name,
                            solution=(np.asarray(anchor, float), np.asarray(kernel, float)))


def _identity2():
    return make_affine(np.eye(2), name="identity2")


def _rotation():
    return make_affine([[0.0, -1.0], [1.0, 0.0]], name="rotation")


def _rotation_shift():
    return make_affine([[0.0, -1.0], [1.0, 0.0]], [1.0, 2.0], name="rotation_shift")


def _rankdef():
    op = make_affine(np.diag([1.0, 1.0, 0.0, 0.0]), np.ones(4), name="rankdef")
    return _with_solution(op, np.ones(4), [[0, 0, 1, 0], [0, 0, 0, 1]])


def _fullrank():
    M = [[2.0, 0.5, 0.0], [-0.5, 1.0, 0.3], [0.0, -0.3, 1.5]]
    return make_affine(M, [1.0, -1.0, 0.5], name="fullrank")


def _skew_shift():
    M = np.zeros((4, 4))
    M[0, 1], M[1, 0] = -1.0, 1.0
    M[2, 3], M[3, 2] = -2.0, 2.0
    return make_affine(M, [1.0, 0.0, -1.0, 2.0], name="skew_shift")


def _quadratic():
    return gradient_quadratic(np.diag([2.0, 3.0]), name="quadratic")


def _rankdef_grad():
    op = gradient_quadratic(np.diag([1.0, 1.0, 0.0, 0.0]), -np.array([1.0, 1.0, 0.0, 0.0]),
                            name="rankdef_grad")
    return _with_solution(op, [1.0, 1.0, 0.0, 0.0], [[0, 0, 1, 0], [0, 0, 0, 1]])


def _toy_qp() -> ConstrainedProblem:
    return quadratic_problem(np.eye(2), None, [[1.0, 1.0]], [1.0], name="toy_qp")


def _singular_qp() -> ConstrainedProblem:
    return quadratic_problem(np.diag([1.0, 0.0]), None, [[0.0, 1.0]], [1.0], name="singular_qp")


REGISTRY = {p.name: p for p in [
    BuiltinProblem("identity2", "A(x) = x on R^2", _identity2, "operator"),
    BuiltinProblem("rotation", "skew rotation (x, y) -> (-y, x)", _rotation, "operator"),
    BuiltinProblem("rotation_shift", "rotation about (1, 2)", _rotation_shift, "operator"),
    BuiltinProblem("rankdef", "M = diag(1,1,0,0), a = (1,1,1,1); x* = (1,1,0,0)", _rankdef,
                   "operator"),
    BuiltinProblem("fullrank", "3x3 non-symmetric positive definite, a = (1,-1,0.5)",
                   _fullrank, "operator"),
    BuiltinProblem("skew_shift", "4x4 with two skew blocks, a = (1,0,-1,2)", _skew_shift,
                   "operator"),
    BuiltinProblem("quadratic", "gradient of x'diag(2,3)x/2", _quadratic, "operator"),
    BuiltinProblem("rankdef_grad", "gradient of ||P(x - a)||^2/2, P = diag(1,1,0,0)",
                   _rankdef_grad, "operator"),
    BuiltinProblem("toy_qp", "min ||x||^2/2 s.t. x1 + x2 = 1", _toy_qp, "qp"),
    BuiltinProblem("singular_qp", "min x1^2/2 s.t. x2 = 1", _singular_qp, "qp"),
]}


def problem_names():
    return sorted(REGISTRY)


def get_problem(name: str):
    try:
        return REGISTRY[name].make()
    except KeyError:
        raise KeyError(f"unknown problem {name!r}; known: {', '.join(problem_names())}") from None
