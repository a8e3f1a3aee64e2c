"""Lyapunov analysis of the flow: proof constants, coefficient certificates,
the energy functional, and empirical rate checks.

Notation follows the flow: ``c(t) = t^q`` (energy weight, distinct from the
Tikhonov scale ``c``), ``alpha(t) = alpha t^-q``, ``beta(t) = beta t^q``,
``gamma(t) = 1 - gamma t^-s``, ``eps(t) = c t^-(2q+s)``, ``r = q + s``.
The coefficients R1..R5 are evaluated from their exact (non-asymptotic)
expressions; the leading terms are kept only as cross-checks.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from ._io import fmt, write_csv
from .dynamics import FlowParams
from .errors import AllZero, EmptyWindow, InfeasibleConstants, NonPositive, NotCertified

__all__ = [
    "ProofConstants",
    "CoefficientValues",
    "CertificateReport",
    "EnergyBreakdown",
    "RateFit",
    "select_proof_constants",
    "coefficients",
    "certify",
    "energy",
    "energy_series",
    "fit_rate",
    "ratio_growth",
    "claimed_exponents",
    "write_rates_csv",
    "RATES_HEADER",
    "CONDITIONS",
    "constant_violations",
    "s5_interval",
    "K_bound",
    "default_grid",
    "coupling_positive_threshold",
]

RATES_HEADER = ["quantity", "window_lo", "window_hi", "slope", "r2", "claimed_exponent",
                "sup_ratio"]
DELTAS = tuple(10.0 ** -k for k in range(1, 9))


@dataclass(frozen=True)
class ProofConstants:
    b: float
    tau: float
    s1: float
    s2: float
    s3: float
    s4: float
    s5: float
    s6: float
    K: float

    def to_dict(self):
        return asdict(self)


def _bounds(params: FlowParams, b: float, tau: float):
    al, be, ga, c = params.alpha, params.beta, params.gamma, params.c
    s5_lo = al * be ** 2 / (4 * ((al * ga - tau) / c - be))
    s5_hi = 2 * (al - 1) / al
    K_hi = min(2 * tau / (4 + al * be), 2 * c / (3 * al))
    c_hi = 8 * (al - 1) * (al * ga - tau) / (al ** 2 * be ** 2 + 8 * (al - 1) * be)
    return s5_lo, s5_hi, K_hi, c_hi


def s5_interval(params: FlowParams, consts: ProofConstants):
    """Open interval ``(lo, hi)`` admissible for ``s5`` given ``tau``."""
    lo, hi, _, _ = _bounds(params, consts.b, consts.tau)
    return lo, hi


def K_bound(params: FlowParams, consts: ProofConstants) -> float:
    """``min(2 tau/(4 + alpha beta), 2c/(3 alpha))``; ``K`` must stay below it."""
    return _bounds(params, consts.b, consts.tau)[2]


def constant_violations(params: FlowParams, k: ProofConstants) -> list:
    """Names of the constant conditions that ``k`` violates."""
    al = params.alpha
    s5_lo, s5_hi, K_hi, c_hi = _bounds(params, k.b, k.tau)
    bad = []
    if not 0 < k.b < 2 * al:
        bad.append("0 < b < 2 alpha")
    if not math.isclose(k.s2, 1 / al):
        bad.append("s2 = 1/alpha")
    if not (k.tau > 0 and params.c < c_hi):
        bad.append("tau > 0 and c < 8(alpha-1)(alpha gamma - tau)/(...)")
    if not (0 < s5_lo < k.s5 < s5_hi):
        bad.append("s5 interval")
    if not 0 < k.K < K_hi:
        bad.append("0 < K < min(2 tau/(4+alpha beta), 2c/(3 alpha))")
    if min(k.s1, k.s3, k.s4, k.s6) <= 0:
        bad.append("s1, s3, s4, s6 > 0")
    return bad


def _forneg(params: FlowParams, b, s1, s3, s4, s5, s6, K):
    al, be = params.alpha, params.beta
    return (((2 * b - 2 * al) * be - 4) ** 2
            - 4 * (2 * b + s3 * b + s5 * b - 4 * al) * (-2 + s1 + b * s4 + K * s6 * b / 2))


def select_proof_constants(params: FlowParams, t_grid=None, certify_candidates: bool = True
                           ) -> ProofConstants:
    """Deterministic choice of the proof constants.

    ``b = alpha``, ``s2 = 1/alpha``, ``tau`` half its admissible maximum,
    ``s5`` the geometric mean of its interval, ``K`` 90% of its bound and
    ``s1 = s3 = s4 = s6 = delta``: the largest ``delta in {1e-1, ..., 1e-8}``
    that makes the leading discriminant negative and, when
    ``certify_candidates``, certifies on ``t_grid``.  If no candidate
    certifies, the largest one with a negative discriminant is returned.
    """
    if params.c <= 0:
        raise NonPositive("proof constants need c > 0")
    al, be, ga, c = params.alpha, params.beta, params.gamma, params.c
    tau_max = al * ga - c * (al ** 2 * be ** 2 + 8 * (al - 1) * be) / (8 * (al - 1))
    if tau_max <= 0:
        raise InfeasibleConstants(f"tau_max = {tau_max:.6g} <= 0; c is at or above its bound")
    b, tau = al, tau_max / 2
    s5_lo, s5_hi, K_hi, _ = _bounds(params, b, tau)
    if not 0 < s5_lo < s5_hi:
        raise InfeasibleConstants(f"empty s5 interval ({s5_lo:.6g}, {s5_hi:.6g})")
    s5 = math.sqrt(s5_lo * s5_hi)
    K = 0.9 * K_hi
    negative = [d for d in DELTAS if _forneg(params, b, d, d, d, s5, d, K) < 0]
    if not negative:
        raise InfeasibleConstants("no delta makes the leading discriminant negative")
    chosen = negative[0]
    if certify_candidates:
        grid = default_grid(params) if t_grid is None else t_grid
        for d in negative:
            k = ProofConstants(b, tau, d, 1 / al, d, d, s5, d, K)
            if certify(params, k, grid, raise_on_fail=False).certified:
                chosen = d
                break
    consts = ProofConstants(b, tau, chosen, 1 / al, chosen, chosen, s5, chosen, K)
    bad = constant_violations(params, consts)
    if bad:
        raise InfeasibleConstants("selected constants violate: " + "; ".join(bad))
    return consts


def default_grid(params: FlowParams, t_max: float = 1e6, per_decade: int = 50):
    n = int(math.ceil(math.log10(t_max / params.t0) * per_decade)) + 1
    return np.logspace(math.log10(params.t0), math.log10(t_max), n)


# -- coefficients ----------------------------------------------------------------

@dataclass
class CoefficientValues:
    t: np.ndarray
    R1: np.ndarray
    R2: np.ndarray
    R3: np.ndarray
    R4: np.ndarray
    R5: np.ndarray
    R6_leading: np.ndarray
    discriminant: np.ndarray  # R2^2 - 4 R1 R3, exact
    discriminant_leading: float  # leading discriminant as stated in the proof
    discriminant_leading_exact: float  # same coefficient with the beta factor of R3 kept
    R1_leading: np.ndarray
    R3_leading: np.ndarray
    R4_leading_coef: float
    R5_leading_coef: float


def coefficients(t, params: FlowParams, k: ProofConstants) -> CoefficientValues:
    """Exact R1..R5 on ``t`` (array or scalar) plus leading-order companions."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    al, q, s, be, ga, c = params.as_array()
    b, K = k.b, k.K
    p, r = 2 * q + s, q + s
    ct = t ** q
    cd = q * t ** (q - 1)
    cdd = q * (q - 1) * t ** (q - 2)
    at = al * t ** (-q)
    bt = be * t ** q
    bd = q * be * t ** (q - 1)
    gt = 1 - ga * t ** (-s)
    eps = c * t ** (-p)
    epsd = -p * c * t ** (-p - 1)
    tr = t ** r
    cbd = cd * bt + ct * bd  # (c(t) beta(t))'

    R1 = (2 * b + k.s3 * b + k.s5 * b + 4 * cd - 4 * at * ct + 8 * K * ct / tr) * ct
    R2 = (2 * b + 2 * cd - 2 * at * ct) * ct * bt + 2 * (cd * bt + ct * bd - 2 * ct * gt) * ct
    R3 = ((2 * cd * bt + 2 * ct * bd - 2 * ct * gt + k.s1 * ct + b * k.s4 * ct) * ct * bt
          + K * ((k.s6 * b * tr + 5 * bt) / (2 * tr)) * ct ** 2 * bt)
    R4 = (b * ((at * ct - cd) * k.s2 - 1) * ct * eps - b * cdd
          + (b * (cbd - ct * gt) - ct ** 2 * bt * eps) * eps
          + K * (b * (2 * at * ct + b - 2 * cd) / (2 * tr) + b * bt / (2 * k.s6 * tr ** 2)))
    d_c2eps = 2 * ct * cd * eps + ct ** 2 * epsd
    d_cbeps = cbd * eps + ct * bt * epsd
    R5 = (2 * d_c2eps + b * d_cbeps / 2 + b * ct * bt ** 2 * eps ** 2 / (4 * k.s5)
          - b * ct * eps - (b * (cbd - ct * gt) - ct ** 2 * bt * eps) * eps
          + K * (2 * ct ** 2 * eps / tr + b * ct * bt * eps / (2 * tr)))

    L1 = 2 * b + k.s3 * b + k.s5 * b - 4 * al
    L2 = (2 * b - 2 * al) * be - 4
    L3 = -2 + k.s1 + b * k.s4 + K * k.s6 * b / 2
    R6_lead = (b * al * p ** 2 / (k.s2 * c) * t ** (q + s - 2)
               + (be * c ** 2 * (1 / k.s1 - 1) - b * K * be * c / 2 + b * ga * c) * t ** (-q - 2 * s))
    return CoefficientValues(
        t=t, R1=R1, R2=R2, R3=R3, R4=R4, R5=R5, R6_leading=R6_lead,
        discriminant=R2 ** 2 - 4 * R1 * R3,
        discriminant_leading=float(L2 ** 2 - 4 * L1 * L3),
        discriminant_leading_exact=float(L2 ** 2 - 4 * be * L1 * L3),
        R1_leading=L1 * ct,
        R3_leading=L3 * be * t ** (3 * q),
        R4_leading_coef=float(b * (al * k.s2 - 2) * c + K * b * (2 * al + b) / 2),
        R5_leading_coef=float(-b * ga * c + (b * be ** 2 / (4 * k.s5) + be) * c ** 2
                              + K * c * (4 + b * be) / 2),
    )


CONDITIONS = ("R1<0", "R3<0", "R2^2-4R1R3<0", "R4<=0", "R5<=0")


@dataclass
class CertificateReport:
    params: FlowParams
    constants: ProofConstants
    certified: bool
    T_star: float
    per_condition: dict  # name -> first grid time after which it holds (inf if never)
    violating: list
    leading: dict
    t_max: float
    constant_violations: list = field(default_factory=list)

    def to_text(self) -> str:
        lines = ["# tikhoflow certificate"]
        lines.append("params: " + " ".join(f"{k}={fmt(v)}" for k, v in self.params.to_dict().items()))
        lines.append("constants: " + " ".join(f"{k}={fmt(v)}" for k, v in self.constants.to_dict().items()))
        lines.append("constant_conditions: " + ("pass" if not self.constant_violations
                                                else "FAIL " + "; ".join(self.constant_violations)))
        for name, v in self.leading.items():
            lines.append(f"leading {name}: {fmt(v)}")
        for name in CONDITIONS:
            t_hold = self.per_condition[name]
            status = f"pass from t={fmt(t_hold)}" if math.isfinite(t_hold) else "FAIL"
            lines.append(f"condition {name}: {status}")
        lines.append(f"grid_t_max: {fmt(self.t_max)}")
        lines.append(f"certified: {'yes' if self.certified else 'no'}")
        lines.append(f"T_star: {fmt(self.T_star)}")
        if self.violating:
            lines.append("violating: " + ", ".join(self.violating))
        return "\n".join(lines) + "\n"


def _tail_start(ok: np.ndarray, t: np.ndarray) -> float:
    """First grid time from which ``ok`` holds to the end of the grid."""
    if not ok[-1]:
        return math.inf
    bad = np.flatnonzero(~ok)
    return float(t[0] if bad.size == 0 else t[bad[-1] + 1])


def certify(params: FlowParams, consts: ProofConstants, t_grid=None,
            raise_on_fail: bool = True) -> CertificateReport:
    """Find ``T*`` beyond which R1<0, R3<0, R2^2-4R1R3<0, R4<=0, R5<=0 on the grid.

    Raises ``NotCertified`` (with the report attached) when some condition
    still fails at the last grid point, unless ``raise_on_fail`` is false.
    """
    t = default_grid(params) if t_grid is None else np.asarray(t_grid, dtype=float)
    if np.any(np.diff(t) <= 0):
        raise ValueError("t_grid must be increasing")
    if t[-1] < 1e4:
        raise ValueError("certification grid must reach t >= 1e4")
    cv = coefficients(t, params, consts)
    checks = {
        "R1<0": cv.R1 < 0,
        "R3<0": cv.R3 < 0,
        "R2^2-4R1R3<0": cv.discriminant < 0,
        "R4<=0": cv.R4 <= 0,
        "R5<=0": cv.R5 <= 0,
    }
    per = {name: _tail_start(ok, t) for name, ok in checks.items()}
    violating = [name for name, ok in checks.items() if not ok[-1]]
    all_ok = np.logical_and.reduce(list(checks.values()))
    T_star = _tail_start(all_ok, t)
    leading = {
        "R1 (t^q)": float(cv.R1_leading[0] / t[0] ** params.q),
        "R2 (t^2q)": (2 * consts.b - 2 * params.alpha) * params.beta - 4,
        "R3 (t^3q)": float(cv.R3_leading[0] / t[0] ** (3 * params.q)),
        "discriminant (as stated)": cv.discriminant_leading,
        "discriminant (exact, t^4q)": cv.discriminant_leading_exact,
        "R4 (t^-q-s)": cv.R4_leading_coef,
        "R5 (t^-q-2s)": cv.R5_leading_coef,
    }
    rep = CertificateReport(params=params, constants=consts, certified=not violating,
                            T_star=T_star, per_condition=per, violating=violating,
                            leading=leading, t_max=float(t[-1]),
                            constant_violations=constant_violations(params, consts))
    if violating and raise_on_fail:
        raise NotCertified("not certified on the grid; violating: " + ", ".join(violating),
                           report=rep)
    return rep


# -- energy ------------------------------------------------------------------------

@dataclass
class EnergyBreakdown:
    t: float
    v: float
    u: float
    E: float
    coupling_weight: float
    terms: dict


def energy(sample, x_t, params: FlowParams, consts: ProofConstants) -> EnergyBreakdown:
    """Energy functional at one trajectory sample.

    ``sample`` is ``(t, x, xdot, A(x))`` (see ``Trajectory.sample``) and
    ``x_t`` the Tikhonov point at the same time (array or object with ``.x``).
    """
    t, x, xdot, Ax = sample
    xt = np.asarray(getattr(x_t, "x", x_t), dtype=float)
    x = np.asarray(x, dtype=float)
    if xt.shape != x.shape:
        from .errors import DimensionMismatch
        raise DimensionMismatch(f"x has shape {x.shape} but x_t has shape {xt.shape}")
    al, q, s, be, ga, c = params.as_array()
    b = consts.b
    ct = t ** q
    bt = be * t ** q
    eps = c * t ** (-(2 * q + s))
    d = x - xt
    w = b * d + ct * (2 * xdot + bt * Ax)
    v = 0.5 * float(w @ w)
    u = (b * ct * bt * float(Ax @ d)
         + b * ct * bt * eps / 2 * (float(x @ x) - float(d @ d) - float(xt @ xt)))
    weight = b * (2 * al * t ** (-q) * ct - b - 2 * q * t ** (q - 1) + ct * bt * eps) / 2
    terms = {
        "v": v,
        "u": u,
        "operator": ct ** 2 * bt ** 2 / 2 * float(Ax @ Ax),
        "tikhonov": 2 * ct ** 2 * eps * float(x @ x),
        "anchor": weight * float(d @ d),
    }
    return EnergyBreakdown(t=float(t), v=v, u=u, E=sum(terms.values()), coupling_weight=weight,
                           terms=terms)


def energy_series(traj, x_path, params, consts):
    """``(E, u)`` arrays along a trajectory, given Tikhonov points per sample."""
    E, U = [], []
    for i in range(len(traj)):
        eb = energy(traj.sample(i), x_path[i], params, consts)
        E.append(eb.E)
        U.append(eb.u)
    return np.array(E), np.array(U)


# -- rates -------------------------------------------------------------------------

@dataclass
class RateFit:
    quantity: str
    window: tuple
    slope: float
    intercept: float
    r2: float
    sup_ratio: float
    claimed_exponent: float
    n: int
    dropped_zeros: int


def fit_rate(t, values, window, claimed_exponent=None, quantity: str = "") -> RateFit:
    """Least-squares line through ``(log t, log value)`` on ``window``.

    ``sup_ratio`` is ``max value / t^claimed_exponent`` over the window.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(values, dtype=float)
    lo, hi = window
    if not lo < hi:
        raise EmptyWindow(f"window [{lo}, {hi}] is empty")
    m = (t >= lo) & (t <= hi)
    if m.sum() < 10:
        raise EmptyWindow(f"only {int(m.sum())} samples in [{lo:g}, {hi:g}], need 10")
    tw, yw = t[m], np.abs(y[m])
    pos = yw > 0
    if not pos.any():
        raise AllZero(f"{quantity or 'quantity'} is identically zero on the window")
    dropped = int((~pos).sum())
    lt, ly = np.log(tw[pos]), np.log(yw[pos])
    if lt.size < 2:
        raise EmptyWindow("fewer than 2 nonzero samples")
    slope, intercept = np.polyfit(lt, ly, 1)
    ss_res = float(np.sum((ly - (slope * lt + intercept)) ** 2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 if ss_tot <= 1e-300 else max(0.0, 1.0 - ss_res / ss_tot)
    e = math.nan if claimed_exponent is None else float(claimed_exponent)
    sup = math.nan if claimed_exponent is None else float(np.max(yw / tw ** e))
    return RateFit(quantity=quantity, window=(float(lo), float(hi)), slope=float(slope),
                   intercept=float(intercept), r2=r2, sup_ratio=sup, claimed_exponent=e,
                   n=int(pos.sum()), dropped_zeros=dropped)


def ratio_growth(t, values, exponents, lo, hi):
    """Sup of ``value / sum_k t^e_k`` on ``[lo, hi]`` against ``[lo, hi/10]``.

    Returns ``(sup_full, sup_head, growth)`` with ``growth = sup_full/sup_head - 1``.
    """
    t = np.asarray(t, dtype=float)
    y = np.abs(np.asarray(values, dtype=float))
    denom = sum(t ** e for e in np.atleast_1d(exponents))
    ratio = y / denom
    full = (t >= lo) & (t <= hi)
    head = (t >= lo) & (t <= hi / 10)
    if head.sum() < 1:
        raise EmptyWindow(f"no samples in [{lo:g}, {hi / 10:g}]")
    sup_full, sup_head = float(ratio[full].max()), float(ratio[head].max())
    growth = sup_full / sup_head - 1 if sup_head > 0 else (0.0 if sup_full == 0 else math.inf)
    return sup_full, sup_head, growth


def claimed_exponents(params: FlowParams) -> dict:
    """Pairs of power-law exponents in the convergence-rate bounds, per quantity."""
    q, s = params.q, params.s
    return {
        "dist_to_xt": (q + s - 1, -s / 2),
        "norm_Ax": (s - 1 - q, -(4 * q + s) / 2),
        "norm_xdot": (s - 1, -(2 * q + s) / 2),
    }


def write_rates_csv(path, fits):
    rows = ((f.quantity, f.window[0], f.window[1], f.slope, f.r2, f.claimed_exponent,
             f.sup_ratio) for f in fits)
    return write_csv(path, RATES_HEADER, rows)


def coupling_positive_threshold(params, consts, t_grid):
    """First grid time after which the anchoring weight in the energy is >= 0."""
    t = np.asarray(t_grid, dtype=float)
    al, q, s, be, ga, c = params.as_array()
    b = consts.b
    w = b * (2 * al - b - 2 * q * t ** (q - 1) + be * c * t ** (-s)) / 2
    return _tail_start(w >= 0, t)

