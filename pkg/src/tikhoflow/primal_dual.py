"""Linearly constrained convex programs ``min f(x) s.t. Bx = b`` through the
flow on the saddle operator ``A(x, y) = (grad f(x) + B'y, b - Bx)``.

The primal-dual second-order system is the flow applied to this operator:
its correction term ``hess f(x) x' + B'y'`` is exactly the time derivative of
``A`` along the trajectory, so the reformulated integrator applies as is and
no Hessian is ever evaluated.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from ._io import write_csv
from .dynamics import FlowParams, Trajectory, integrate
from .errors import DimensionMismatch, Infeasible, NotMonotone
from .operators import MonotoneOperator, make_affine, make_opaque

__all__ = [
    "ConstrainedProblem",
    "SaddlePoint",
    "PDMetrics",
    "PDResult",
    "GapReport",
    "quadratic_problem",
    "saddle_operator",
    "kkt_oracle",
    "solve_pd",
    "pd_metrics",
    "gap_bound_check",
    "distance_decreasing",
    "gradient_check",
    "write_pd_csv",
    "PD_HEADER",
]

PD_HEADER = ["t", "feasibility", "dual_residual", "gap", "dist_saddle"]


@dataclass(frozen=True, eq=False)
class ConstrainedProblem:
    """``min f(x)`` subject to ``B x = b``.

    ``Q`` and ``q`` are set for quadratic objectives ``x'Qx/2 + q'x``; they
    expose the affine structure of the saddle operator.
    """
    f: Callable
    grad: Callable
    B: np.ndarray
    b: np.ndarray
    Q: Optional[np.ndarray] = None
    q: Optional[np.ndarray] = None
    hvp: Optional[Callable] = None
    name: str = "problem"

    def __post_init__(self):
        B = np.atleast_2d(np.asarray(self.B, dtype=float))
        b = np.atleast_1d(np.asarray(self.b, dtype=float))
        if B.ndim != 2 or b.shape != (B.shape[0],):
            raise DimensionMismatch(f"B has shape {B.shape} but b has shape {b.shape}")
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "b", b)
        if self.Q is not None:
            n = B.shape[1]
            Q = np.asarray(self.Q, dtype=float)
            q = np.zeros(n) if self.q is None else np.asarray(self.q, dtype=float)
            if Q.shape != (n, n) or q.shape != (n,):
                raise DimensionMismatch(f"Q {Q.shape} and q {q.shape} do not match n={n}")
            object.__setattr__(self, "Q", Q)
            object.__setattr__(self, "q", q)

    @property
    def n(self) -> int:
        return self.B.shape[1]

    @property
    def m(self) -> int:
        return self.B.shape[0]

    @property
    def is_quadratic(self) -> bool:
        return self.Q is not None

    def split(self, w):
        w = np.asarray(w, dtype=float)
        return w[..., : self.n], w[..., self.n:]


def quadratic_problem(Q, q, B, b, name: str = "qp") -> ConstrainedProblem:
    """Quadratic program with ``f(x) = x'Qx/2 + q'x`` and ``Q`` symmetric psd."""
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    n = Q.shape[0]
    q = np.zeros(n) if q is None else np.asarray(q, dtype=float)
    if Q.shape != (n, n) or not np.allclose(Q, Q.T, atol=1e-12, rtol=0):
        raise DimensionMismatch("Q must be a symmetric square matrix")
    if np.linalg.eigvalsh(Q).min() < -1e-10:
        raise NotMonotone("Q must be positive semidefinite")
    return ConstrainedProblem(
        f=lambda x: 0.5 * float(x @ Q @ x) + float(q @ x),
        grad=lambda x: Q @ x + q,
        B=B, b=b, Q=Q, q=q, hvp=lambda x, v: Q @ v, name=name,
    )


def gradient_check(problem: ConstrainedProblem, points: int = 5, seed: int = 0,
                   h: float = 1e-6) -> float:
    """Largest relative gap between ``grad`` and central differences of ``f``."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(points):
        x = rng.normal(size=problem.n)
        g = np.asarray(problem.grad(x), dtype=float)
        fd = np.array([(problem.f(x + h * e) - problem.f(x - h * e)) / (2 * h)
                       for e in np.eye(problem.n)])
        worst = max(worst, np.linalg.norm(g - fd) / max(np.linalg.norm(g), 1e-12))
    return float(worst)


def saddle_operator(problem: ConstrainedProblem) -> MonotoneOperator:
    """``A(x, y) = (grad f(x) + B'y, b - Bx)`` on ``R^(n+m)``."""
    n, m, B, b = problem.n, problem.m, problem.B, problem.b
    if problem.is_quadratic:
        M = np.block([[problem.Q, B.T], [-B, np.zeros((m, m))]])
        g = np.concatenate([problem.q, b])
        # A(w) = M w + g = M (w - a) whenever -g is in the range of M
        a = np.linalg.lstsq(M, -g, rcond=None)[0]
        if np.linalg.norm(M @ a + g) <= 1e-10 * max(1.0, np.linalg.norm(g)):
            op = make_affine(M, a, name=problem.name, kind="saddle")
            return MonotoneOperator(dim=n + m, fn=op.fn, kind="saddle", M=op.M,
                                    anchor=op.anchor, name=problem.name,
                                    meta={"n": n, "m": m})

    def fn(w):
        x, y = w[:n], w[n:]
        return np.concatenate([np.asarray(problem.grad(x), dtype=float) + B.T @ y, b - B @ x])

    op = make_opaque(fn, n + m, name=problem.name)
    return MonotoneOperator(dim=n + m, fn=fn, kind="saddle", name=problem.name,
                            meta={"n": n, "m": m, **(op.meta or {})})


@dataclass
class SaddlePoint:
    x_star: np.ndarray
    y_star: np.ndarray
    kkt_residual: float

    @property
    def w(self):
        return np.concatenate([self.x_star, self.y_star])


def kkt_oracle(problem: ConstrainedProblem, tol: float = 1e-9) -> SaddlePoint:
    """Least-norm solution of ``[[Q, B'], [B, 0]] (x, y) = (-q, b)``.

    This is the minimal-norm zero of the saddle operator.
    """
    if not problem.is_quadratic:
        raise ValueError("kkt_oracle needs a quadratic objective")
    n, m, B, b = problem.n, problem.m, problem.B, problem.b
    xb = np.linalg.lstsq(B, b, rcond=None)[0]
    if np.linalg.norm(B @ xb - b) > tol * max(1.0, np.linalg.norm(b)):
        raise Infeasible(f"Bx = b has no solution (residual {np.linalg.norm(B @ xb - b):.3e})")
    K = np.block([[problem.Q, B.T], [B, np.zeros((m, m))]])
    rhs = np.concatenate([-problem.q, b])
    sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
    x, y = sol[:n], sol[n:]
    res = float(max(np.linalg.norm(problem.Q @ x + problem.q + B.T @ y),
                    np.linalg.norm(B @ x - b)))
    if res > tol * max(1.0, np.linalg.norm(rhs)):
        raise Infeasible(f"KKT system has no solution (residual {res:.3e}); f is unbounded "
                         "on the feasible set")
    return SaddlePoint(x_star=x, y_star=y, kkt_residual=res)


@dataclass
class PDMetrics:
    t: np.ndarray
    feasibility: np.ndarray
    dual_residual: np.ndarray
    gap: np.ndarray  # f(x) - f(x*), signed; nan without a saddle point
    dist_saddle: np.ndarray
    dist_x: np.ndarray
    norm_y: np.ndarray


@dataclass
class PDResult:
    trajectory: Trajectory
    metrics: PDMetrics
    saddle: Optional[SaddlePoint]


def pd_metrics(problem: ConstrainedProblem, traj: Trajectory,
               saddle: Optional[SaddlePoint] = None) -> PDMetrics:
    X, Y = problem.split(traj.x)
    grads = np.array([problem.grad(x) for x in X])
    feas = np.linalg.norm(X @ problem.B.T - problem.b, axis=1)
    dual = np.linalg.norm(grads + Y @ problem.B, axis=1)
    if saddle is not None:
        fstar = problem.f(saddle.x_star)
        gap = np.array([problem.f(x) - fstar for x in X])
        dist = np.linalg.norm(traj.x - saddle.w, axis=1)
        dist_x = np.linalg.norm(X - saddle.x_star, axis=1)
    else:
        gap = dist = dist_x = np.full(len(traj), np.nan)
    return PDMetrics(t=traj.t, feasibility=feas, dual_residual=dual, gap=gap,
                     dist_saddle=dist, dist_x=dist_x, norm_y=np.linalg.norm(Y, axis=1))


def solve_pd(problem: ConstrainedProblem, params: FlowParams, init, schedule,
             rtol: float = 1e-10, atol: float = 1e-12, saddle: Optional[SaddlePoint] = None,
             ) -> PDResult:
    """Run the flow on the saddle operator and compute the primal-dual metrics.

    ``init`` is ``(u0, v0)`` in joint ``(x, y)`` coordinates.  For quadratic
    problems the KKT oracle supplies the saddle point unless one is given.
    """
    op = saddle_operator(problem)
    u0, v0 = init
    traj = integrate(op, params, u0, v0, schedule, rtol=rtol, atol=atol)
    if saddle is None and problem.is_quadratic:
        saddle = kkt_oracle(problem)
    return PDResult(trajectory=traj, metrics=pd_metrics(problem, traj, saddle), saddle=saddle)


@dataclass
class GapReport:
    upper_ok: bool
    lower_ok: bool
    M1: float
    M2: float
    worst_upper: float  # max of |gap| - bound (<= 0 when it holds)
    worst_lower: float  # max of -||y*|| feas - gap
    n: int

    @property
    def passed(self) -> bool:
        return self.upper_ok and self.lower_ok


def gap_bound_check(metrics: PDMetrics, saddle: SaddlePoint, window=None,
                    rtol: float = 1e-9, atol: float = 1e-12) -> GapReport:
    """Check ``|f - f*| <= M1 ||grad f + B'y|| + M2 ||Bx - b||`` and
    ``f - f* >= -||y*|| ||Bx - b||`` at each sample of ``window``.

    ``M1 = sup ||x - x*||`` and ``M2 = sup ||y||`` over the window.
    """
    t = metrics.t
    lo, hi = (t[0], t[-1]) if window is None else window
    m = (t >= lo) & (t <= hi)
    M1 = float(metrics.dist_x[m].max())
    M2 = float(metrics.norm_y[m].max())
    gap, feas, dual = metrics.gap[m], metrics.feasibility[m], metrics.dual_residual[m]
    upper = M1 * dual + M2 * feas
    lower = -np.linalg.norm(saddle.y_star) * feas
    slack_u = atol + rtol * np.maximum(upper, np.abs(gap))
    slack_l = atol + rtol * np.maximum(np.abs(lower), np.abs(gap))
    return GapReport(
        upper_ok=bool(np.all(np.abs(gap) <= upper + slack_u)),
        lower_ok=bool(np.all(gap >= lower - slack_l)),
        M1=M1, M2=M2,
        worst_upper=float(np.max(np.abs(gap) - upper)),
        worst_lower=float(np.max(lower - gap)),
        n=int(m.sum()),
    )


def distance_decreasing(t, dist, lo, rel: float = 1e-3) -> bool:
    """True if no sample after ``lo`` exceeds its predecessor by more than ``rel``."""
    t = np.asarray(t)
    d = np.asarray(dist)[t >= lo]
    return bool(np.all(d[1:] <= d[:-1] * (1 + rel)))


def write_pd_csv(path, metrics: PDMetrics):
    rows = zip(metrics.t, metrics.feasibility, metrics.dual_residual, np.abs(metrics.gap),
               metrics.dist_saddle)
    return write_csv(path, PD_HEADER, rows)
