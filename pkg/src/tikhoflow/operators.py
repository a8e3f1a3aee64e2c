"""Monotone operators on R^n: construction, evaluation, problem files, probes.

Every operator carries a plain callable ``fn``.  Operators with affine
structure additionally carry ``M`` and an ``anchor`` ``a`` such that
``A(x) = M (x - a)``; the integrator and the Tikhonov solvers use that
structure for fast kernels and closed-form solves.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .errors import DimensionMismatch, NonFiniteOutput, NotMonotone, ProblemFileError

PSD_TOL = 1e-10

__all__ = [
    "MonotoneOperator",
    "ProbeReport",
    "make_affine",
    "make_gradient",
    "gradient_quadratic",
    "make_opaque",
    "evaluate",
    "monotonicity_probe",
    "fd_jacobian",
    "load_problem",
    "problem_from_dict",
    "problem_to_dict",
]


@dataclass(frozen=True, eq=False)
class MonotoneOperator:
    dim: int
    fn: Callable[[np.ndarray], np.ndarray]
    kind: str = "opaque"  # affine | gradient | saddle | opaque
    M: Optional[np.ndarray] = None
    anchor: Optional[np.ndarray] = None
    value: Optional[Callable[[np.ndarray], float]] = None
    name: str = ""
    # known solution set {anchor + span(kernel_basis)}, from a problem file
    solution: Optional[tuple] = None
    meta: dict = field(default_factory=dict)

    @property
    def is_affine(self) -> bool:
        """True when ``A(x) = M (x - anchor)`` is available."""
        return self.M is not None and self.anchor is not None

    def __call__(self, x):
        return evaluate(self, x)


def _as_vector(x, dim=None) -> np.ndarray:
    v = np.asarray(x, dtype=float)
    if v.ndim != 1:
        raise DimensionMismatch(f"expected a vector, got shape {v.shape}")
    if dim is not None and v.shape[0] != dim:
        raise DimensionMismatch(f"expected dimension {dim}, got {v.shape[0]}")
    return v


def _min_sym_eig(M: np.ndarray) -> float:
    return float(np.linalg.eigvalsh(0.5 * (M + M.T)).min())


def make_affine(M, a=None, name: str = "affine", kind: str = "affine") -> MonotoneOperator:
    """Affine operator ``A(x) = M (x - a)``.

    Raises
    ------
    DimensionMismatch
        If ``M`` is not square or ``a`` has the wrong length.
    NotMonotone
        If the symmetric part of ``M`` has an eigenvalue below ``-1e-10``.
    """
    M = np.array(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1] or M.shape[0] < 1:
        raise DimensionMismatch(f"M must be a non-empty square matrix, got shape {M.shape}")
    n = M.shape[0]
    a = np.zeros(n) if a is None else _as_vector(a, n).copy()
    if not (np.all(np.isfinite(M)) and np.all(np.isfinite(a))):
        raise NonFiniteOutput("affine operator data must be finite")
    lam = _min_sym_eig(M)
    if lam < -PSD_TOL:
        raise NotMonotone(f"symmetric part of M has eigenvalue {lam:.3e} < 0")
    M.setflags(write=False)
    a.setflags(write=False)

    def fn(x):
        return M @ (x - a)

    return MonotoneOperator(dim=n, fn=fn, kind=kind, M=M, anchor=a, name=name)


def make_gradient(f, grad, dim: int, name: str = "gradient") -> MonotoneOperator:
    """Gradient of a smooth convex functional, ``A = grad f``."""
    return MonotoneOperator(dim=int(dim), fn=grad, kind="gradient", value=f, name=name)


def gradient_quadratic(Q, q=None, name: str = "gradient_quadratic") -> MonotoneOperator:
    """Gradient of ``f(x) = x'Qx/2 + q'x``, i.e. ``A(x) = Q x + q``.

    When ``-q`` lies in the range of ``Q`` the operator is stored in affine
    form with the least-norm zero as anchor; otherwise it is kept opaque.
    """
    Q = np.array(Q, dtype=float)
    if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
        raise DimensionMismatch(f"Q must be square, got shape {Q.shape}")
    n = Q.shape[0]
    q = np.zeros(n) if q is None else _as_vector(q, n).copy()
    if not np.allclose(Q, Q.T, atol=1e-12, rtol=0):
        raise NotMonotone("Q must be symmetric for a gradient operator")
    lam = _min_sym_eig(Q)
    if lam < -PSD_TOL:
        raise NotMonotone(f"Q has eigenvalue {lam:.3e} < 0")

    def f(x):
        return 0.5 * float(x @ Q @ x) + float(q @ x)

    anchor = np.linalg.lstsq(Q, -q, rcond=None)[0]
    if np.linalg.norm(Q @ anchor + q) <= 1e-10 * max(1.0, np.linalg.norm(q)):
        op = make_affine(Q, anchor, name=name, kind="gradient")
        return MonotoneOperator(
            dim=n, fn=op.fn, kind="gradient", M=op.M, anchor=op.anchor, value=f, name=name
        )
    Q.setflags(write=False)
    q.setflags(write=False)
    return MonotoneOperator(dim=n, fn=lambda x: Q @ x + q, kind="gradient", value=f, name=name)


def make_opaque(fn, dim: int, name: str = "opaque") -> MonotoneOperator:
    return MonotoneOperator(dim=int(dim), fn=fn, kind="opaque", name=name)


def evaluate(op: MonotoneOperator, x) -> np.ndarray:
    """Return ``A(x)``; pure."""
    x = _as_vector(x, op.dim)
    y = np.asarray(op.fn(x), dtype=float)
    if y.shape != (op.dim,):
        raise DimensionMismatch(f"operator returned shape {y.shape}, expected ({op.dim},)")
    if not np.all(np.isfinite(y)):
        raise NonFiniteOutput(f"operator {op.name!r} produced non-finite output")
    return y


@dataclass
class ProbeReport:
    min_inner_product: float
    passed: bool
    witness: tuple
    pairs: int


def monotonicity_probe(op, pairs: int = 1000, tol: float = 1e-10, seed: int = 0,
                       sampler=None, scale: float = 3.0) -> ProbeReport:
    """Sample point pairs and record the smallest ``<A(x)-A(y), x-y>``.

    ``sampler(rng)`` may return a custom ``(x, y)`` pair; by default both
    points are Gaussian with standard deviation ``scale``.
    """
    if pairs < 1:
        raise ValueError("pairs must be >= 1")
    rng = np.random.default_rng(seed)
    best = np.inf
    witness = (None, None)
    for _ in range(pairs):
        if sampler is None:
            x = scale * rng.standard_normal(op.dim)
            y = scale * rng.standard_normal(op.dim)
        else:
            x, y = sampler(rng)
        ip = float(np.dot(evaluate(op, x) - evaluate(op, y), x - y))
        if ip < best:
            best, witness = ip, (x, y)
    return ProbeReport(min_inner_product=best, passed=best >= -tol, witness=witness, pairs=pairs)


def fd_jacobian(op, x, h: float = 1e-5) -> np.ndarray:
    """Central-difference Jacobian; column j is ``(A(x+h e_j) - A(x-h e_j)) / 2h``."""
    if h <= 0:
        raise ValueError("h must be positive")
    x = _as_vector(x, op.dim)
    J = np.empty((op.dim, op.dim))
    for j in range(op.dim):
        e = np.zeros(op.dim)
        e[j] = h
        J[:, j] = (evaluate(op, x + e) - evaluate(op, x - e)) / (2 * h)
    return J


# -- problem files -------------------------------------------------------------

def _matrix(d, key, n):
    try:
        m = np.array(d[key], dtype=float)
    except KeyError:
        raise ProblemFileError(f"missing field {key!r}") from None
    if m.shape != (n, n):
        raise ProblemFileError(f"{key} has shape {m.shape}, expected ({n}, {n})")
    if not np.all(np.isfinite(m)):
        raise ProblemFileError(f"{key} contains non-finite entries")
    return m


def _vector(d, key, n, default_zero=False):
    if key not in d:
        if default_zero:
            return np.zeros(n)
        raise ProblemFileError(f"missing field {key!r}")
    v = np.array(d[key], dtype=float)
    if v.shape != (n,):
        raise ProblemFileError(f"{key} has shape {v.shape}, expected ({n},)")
    if not np.all(np.isfinite(v)):
        raise ProblemFileError(f"{key} contains non-finite entries")
    return v


def problem_from_dict(d: dict, name: str = "problem") -> MonotoneOperator:
    """Build an operator from the JSON problem schema (see README)."""
    try:
        n = int(d["dim"])
        kind = d["kind"]
    except KeyError as exc:
        raise ProblemFileError(f"missing field {exc.args[0]!r}") from None
    if n < 1:
        raise ProblemFileError("dim must be >= 1")
    if kind == "affine":
        op = make_affine(_matrix(d, "M", n), _vector(d, "a", n, default_zero=True), name=name)
    elif kind == "gradient_quadratic":
        op = gradient_quadratic(_matrix(d, "Q", n), _vector(d, "q", n, default_zero=True), name=name)
    else:
        raise ProblemFileError(f"unknown kind {kind!r}")
    sol = d.get("solution")
    if sol is not None:
        anchor = _vector(sol, "anchor", n)
        basis = np.array(sol.get("kernel_basis", []), dtype=float).reshape(-1, n)
        object.__setattr__(op, "solution", (anchor, basis))
    return op


def problem_to_dict(op: MonotoneOperator) -> dict:
    if not op.is_affine:
        raise ProblemFileError("only affine-structured operators can be serialised")
    d = {"dim": op.dim}
    if op.kind == "gradient":
        d.update(kind="gradient_quadratic", Q=op.M.tolist(), q=(-(op.M @ op.anchor)).tolist())
    else:
        d.update(kind="affine", M=op.M.tolist(), a=op.anchor.tolist())
    if op.solution is not None:
        anchor, basis = op.solution
        d["solution"] = {"anchor": list(anchor), "kernel_basis": np.asarray(basis).tolist()}
    return d


def load_problem(path) -> MonotoneOperator:
    path = Path(path)
    try:
        d = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ProblemFileError(f"{path}: {exc}") from None
    return problem_from_dict(d, name=path.stem)
