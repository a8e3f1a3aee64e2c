"""The Tikhonov-regularised inertial flow and its integration.

The second-order system

    x'' + (alpha/t^q) x' + beta t^q d/dt A(x) + (1 - gamma/t^s) A(x) + c/t^(2q+s) x = 0

is integrated through the change of variables ``z = x' + beta t^q A(x)``,
which turns it into the first-order system

    x' = z - beta t^q A(x)
    z' = -alpha t^-q z + (alpha beta - 1 + gamma t^-s + beta q t^(q-1)) A(x) - c t^-(2q+s) x

with no Jacobian and no time derivative of ``A(x(t))``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from . import _dopri
from ._io import write_csv
from .errors import (
    AlphaTooSmall,
    ExponentRange,
    InsufficientSamples,
    NonFiniteOutput,
    NonFiniteState,
    NonPositive,
    ParamError,
    StepSizeUnderflow,
    TikhonovBound,
)
from .operators import MonotoneOperator, evaluate

__all__ = [
    "FlowParams",
    "FlowState",
    "Trajectory",
    "CoefficientSignWarning",
    "validate_params",
    "tikhonov_bound",
    "rhs",
    "integrate",
    "log_schedule",
    "ds_residual",
    "ResidualSeries",
    "write_trajectory_csv",
    "TRAJECTORY_HEADER",
]

TRAJECTORY_HEADER = ["t", "norm_x", "norm_xdot", "norm_Ax", "dist_to_xstar", "dist_to_xt"]


class CoefficientSignWarning(UserWarning):
    """The factor ``1 - gamma/t^s`` is nonpositive at the start time."""


@dataclass(frozen=True)
class FlowParams:
    alpha: float
    q: float
    s: float
    beta: float
    gamma: float
    c: float
    t0: float = 1.0

    @property
    def r(self) -> float:
        return self.q + self.s

    @property
    def p(self) -> float:
        """Exponent of the Tikhonov weight ``c / t^p``."""
        return 2 * self.q + self.s

    def as_array(self) -> np.ndarray:
        return np.array([self.alpha, self.q, self.s, self.beta, self.gamma, self.c])

    def to_dict(self) -> dict:
        return asdict(self)


def tikhonov_bound(alpha, beta, gamma) -> float:
    """Upper bound on ``c``: ``8 alpha (alpha-1) gamma / (alpha^2 beta^2 + 8 (alpha-1) beta)``."""
    return 8 * alpha * (alpha - 1) * gamma / (alpha ** 2 * beta ** 2 + 8 * (alpha - 1) * beta)


def validate_params(params: FlowParams, baseline: bool = False) -> FlowParams:
    """Check the admissibility conditions and return ``params`` unchanged.

    ``baseline=True`` allows ``c = 0`` and skips the bound on ``c``.
    """
    vals = params.to_dict()
    bad = [k for k, v in vals.items() if not math.isfinite(v)]
    if bad:
        raise ParamError(f"non-finite parameters: {', '.join(bad)}")
    if params.alpha <= 1:
        raise AlphaTooSmall(f"alpha must exceed 1, got {params.alpha}")
    if params.q <= 0 or params.s <= 0 or not (0 < params.q + params.s < 1):
        raise ExponentRange(f"need q, s > 0 and 0 < q+s < 1, got q={params.q}, s={params.s}")
    for name in ("beta", "gamma", "t0"):
        if vals[name] <= 0:
            raise NonPositive(f"{name} must be positive, got {vals[name]}")
    if params.c < 0 or (params.c == 0 and not baseline):
        raise NonPositive(f"c must be positive, got {params.c}")
    if not baseline:
        bound = tikhonov_bound(params.alpha, params.beta, params.gamma)
        if params.c >= bound:
            raise TikhonovBound(f"c={params.c} violates c < {bound:.17g}")
    if params.t0 ** params.s <= params.gamma:
        warnings.warn(
            f"1 - gamma/t^s <= 0 at t0={params.t0}; it turns positive for t > "
            f"{params.gamma ** (1 / params.s):.6g}",
            CoefficientSignWarning,
            stacklevel=2,
        )
    return params


@dataclass(frozen=True)
class FlowState:
    t: float
    x: np.ndarray
    z: np.ndarray


def rhs(t, state: FlowState, op: MonotoneOperator, params: FlowParams):
    """Return ``(x', z')`` of the reformulated system; one evaluation of ``A``."""
    x = np.asarray(state.x, dtype=float)
    z = np.asarray(state.z, dtype=float)
    Ax = evaluate(op, x)
    y = _dopri._reformulated(Ax, params.as_array(), float(t), np.concatenate([x, z]))
    if not np.all(np.isfinite(y)):
        raise NonFiniteOutput(f"non-finite right-hand side at t={t}")
    n = op.dim
    return y[:n], y[n:]


@dataclass
class Trajectory:
    t: np.ndarray
    x: np.ndarray
    z: np.ndarray
    Ax: np.ndarray
    xdot: np.ndarray
    params: FlowParams
    stats: dict = field(default_factory=dict)

    @property
    def norm_x(self):
        return np.linalg.norm(self.x, axis=1)

    @property
    def norm_xdot(self):
        return np.linalg.norm(self.xdot, axis=1)

    @property
    def norm_Ax(self):
        return np.linalg.norm(self.Ax, axis=1)

    def __len__(self):
        return self.t.shape[0]

    def sample(self, i):
        return self.t[i], self.x[i], self.xdot[i], self.Ax[i]


def log_schedule(t0: float, t_end: float, points_per_decade: int = 200) -> np.ndarray:
    """Logarithmically spaced sample times with exact endpoints."""
    if not (t_end > t0 > 0):
        raise ValueError("need 0 < t0 < t_end")
    n = max(2, int(math.ceil(math.log10(t_end / t0) * points_per_decade)) + 1)
    ts = np.logspace(math.log10(t0), math.log10(t_end), n)
    ts[0], ts[-1] = t0, t_end
    return ts


def _apply_all(op, X):
    if op.is_affine:
        return (X - op.anchor) @ op.M.T
    return np.array([evaluate(op, x) for x in X])


def integrate(op: MonotoneOperator, params: FlowParams, u0, v0, schedule,
              rtol: float = 1e-10, atol: float = 1e-12, max_steps: int = 10 ** 8) -> Trajectory:
    """Integrate the flow from ``(u0, v0)`` at ``params.t0`` and sample at ``schedule``.

    Affine operators use the compiled kernel; anything else runs the same
    algorithm interpreted.  Raises ``StepSizeUnderflow`` or
    ``NonFiniteState`` carrying the last accepted state.
    """
    ts = np.asarray(schedule, dtype=float)
    if ts.ndim != 1 or ts.size < 1 or np.any(np.diff(ts) <= 0):
        raise ValueError("schedule must be a strictly increasing 1-d sequence")
    if ts[0] < params.t0:
        raise ValueError(f"schedule starts at {ts[0]} before t0={params.t0}")
    if rtol <= 0 or atol <= 0:
        raise ValueError("tolerances must be positive")
    u0 = np.asarray(u0, dtype=float).copy()
    v0 = np.asarray(v0, dtype=float).copy()
    n = op.dim
    if u0.shape != (n,) or v0.shape != (n,):
        raise ValueError(f"initial conditions must have dimension {n}")
    z0 = v0 + params.beta * params.t0 ** params.q * evaluate(op, u0)
    y0 = np.concatenate([u0, z0])
    pars = params.as_array()
    if op.is_affine:
        M = np.ascontiguousarray(op.M, dtype=float)
        a = np.ascontiguousarray(op.anchor, dtype=float)
        res = _dopri.run_core(None, M, a, pars, float(params.t0), y0, ts, rtol, atol, max_steps)
    else:
        res = _dopri.run_core(op.fn, None, None, pars, float(params.t0), y0, ts, rtol, atol,
                              max_steps)
    status, filled, t_last, y_last, st, out = res
    if status != _dopri.OK:
        cls = NonFiniteState if status == _dopri.NONFINITE else StepSizeUnderflow
        what = {_dopri.UNDERFLOW: "step size underflow", _dopri.NONFINITE: "non-finite state",
                _dopri.MAXSTEPS: "step budget exhausted"}[status]
        raise cls(f"{what} at t={t_last:.6g}", t=t_last, x=y_last[:n].copy(),
                  z=y_last[n:].copy())
    X, Z = out[:, :n].copy(), out[:, n:].copy()
    Ax = _apply_all(op, X)
    xdot = Z - (params.beta * ts ** params.q)[:, None] * Ax
    stats = {"steps": int(st[0]), "rejections": int(st[1]), "rhs_evals": int(st[2])}
    return Trajectory(t=ts.copy(), x=X, z=Z, Ax=Ax, xdot=xdot, params=params, stats=stats)


# -- second-order residual -------------------------------------------------------

@dataclass
class ResidualSeries:
    t: np.ndarray
    residual: np.ndarray
    # <d/dt A(x(t)), x'(t)>, nonnegative for monotone A
    dA_dot_xdot: np.ndarray
    h: float


def _rk4_local(op, params, t, x, z, dt, substeps):
    pars = params.as_array()
    n = op.dim
    y = np.concatenate([x, z])

    def f(tt, yy):
        return _dopri._reformulated(evaluate(op, yy[:n]), pars, tt, yy)

    k = dt / substeps
    for _ in range(substeps):
        k1 = f(t, y)
        k2 = f(t + k / 2, y + k / 2 * k1)
        k3 = f(t + k / 2, y + k / 2 * k2)
        k4 = f(t + k, y + k * k3)
        y = y + k / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        t += k
    return y[:n], y[n:]


def ds_residual(traj: Trajectory, op: MonotoneOperator, params: FlowParams, h: float,
                substeps: int = 32) -> ResidualSeries:
    """Plug the trajectory back into the second-order equation.

    At each interior sample the neighbours at ``t +- h`` are produced by a
    short classical RK4 re-integration from the sampled state; ``x''`` and
    ``d/dt A(x(t))`` are then central differences, so the residual is
    ``O(h^2)`` when the reformulation is exact.
    """
    if len(traj) < 3:
        raise InsufficientSamples("ds_residual needs at least 3 samples")
    if h <= 0:
        raise ValueError("stencil width must be positive")
    idx = [i for i in range(1, len(traj) - 1) if traj.t[i] - h >= params.t0]
    if not idx:
        raise InsufficientSamples(f"no interior sample with t - h >= t0 for h={h}")
    al, q, s, be, ga, c = params.as_array()
    res, ip = [], []
    for i in idx:
        t, x, z = traj.t[i], traj.x[i], traj.z[i]
        xp, zp = _rk4_local(op, params, t, x, z, h, substeps)
        xm, zm = _rk4_local(op, params, t, x, z, -h, substeps)
        Ap, Am, A0 = evaluate(op, xp), evaluate(op, xm), evaluate(op, x)
        vp = zp - be * (t + h) ** q * Ap
        vm = zm - be * (t - h) ** q * Am
        v0 = z - be * t ** q * A0
        acc = (vp - vm) / (2 * h)
        dA = (Ap - Am) / (2 * h)
        r = (acc + al / t ** q * v0 + be * t ** q * dA + (1 - ga / t ** s) * A0
             + c / t ** (2 * q + s) * x)
        res.append(np.linalg.norm(r))
        ip.append(float(dA @ v0))
    return ResidualSeries(t=traj.t[idx], residual=np.array(res), dA_dot_xdot=np.array(ip), h=h)


def write_trajectory_csv(path, traj: Trajectory, x_star=None, x_path=None):
    """Write the trajectory CSV; ``x_path`` holds the Tikhonov point per sample."""
    n = len(traj)
    dstar = (np.linalg.norm(traj.x - np.asarray(x_star), axis=1) if x_star is not None
             else np.full(n, np.nan))
    dpath = (np.linalg.norm(traj.x - np.asarray(x_path), axis=1) if x_path is not None
             else np.full(n, np.nan))
    rows = zip(traj.t, traj.norm_x, traj.norm_xdot, traj.norm_Ax, dstar, dpath)
    return write_csv(path, TRAJECTORY_HEADER, rows)
