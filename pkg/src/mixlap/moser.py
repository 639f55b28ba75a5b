"""Moser iteration bookkeeping and the L^∞ certificate for grid functions.

Every integral over Ω is the nodal sum hⁿ Σ_i. Powers of |u| are handled in
the log domain so that high exponents neither overflow nor underflow.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import List, Optional, Sequence

import numpy as np
from scipy.special import logsumexp

from mixlap.domain import GridFunction, random_smooth_functions
from mixlap.errors import Overflow, SubcriticalDimension
from mixlap.operators import OperatorAssembly, gagliardo_seminorm_sq
from mixlap.report import AuditReport

_EPS = np.finfo(float).eps


def critical_exponent(n: int, s: float) -> float:
    """2n / (n - 2s)."""
    if not n > 2 * s:
        raise SubcriticalDimension(f"need n > 2s, got n={n}, s={s}")
    return 2.0 * n / (n - 2.0 * s)


@dataclass(frozen=True)
class MoserSchedule:
    n: int
    s: float
    two_star: float
    beta: np.ndarray  # β_1..β_M
    qbar: float
    C: float = 1.0

    @property
    def M(self) -> int:
        return len(self.beta)

    @property
    def C_m(self) -> np.ndarray:
        return self.C * self.beta

    @property
    def product_bound(self) -> float:
        return product_bound(self.C, self.qbar, float(self.beta[0]))

    def with_constant(self, C: float) -> "MoserSchedule":
        return MoserSchedule(self.n, self.s, self.two_star, self.beta, self.qbar, float(C))

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "s": self.s,
            "two_star": self.two_star,
            "qbar": self.qbar,
            "beta": self.beta,
            "C": self.C,
            "C_m": self.C_m,
            "product_bound": self.product_bound,
        }


def beta_sequence(n: int, s: float, M: int, C: float = 1.0) -> MoserSchedule:
    """β₁ = (2* + 1)/2 and 2β_{m+1} + 2* - 2 = 2*β_m."""
    if M < 1:
        raise ValueError("M must be at least 1")
    ts = critical_exponent(n, s)
    # exact rational arithmetic, one rounding per entry: the recursion and
    # β_m - 1 = (2*/2)^{m-1}(β₁ - 1) then both hold to a few ulps
    T = Fraction(ts)
    b1 = (T + 1) / 2
    try:
        beta = np.array([float(1 + (T / 2) ** m * (b1 - 1)) for m in range(M)])
    except OverflowError:
        raise Overflow(f"β_M is not representable for n={n}, s={s}, M={M}; reduce M") from None
    beta.setflags(write=False)
    return MoserSchedule(n=int(n), s=float(s), two_star=ts, beta=beta, qbar=2.0 / ts, C=float(C))


def product_bound(C: float, qbar: float, beta1: float) -> float:
    """C₀ bounding Π_{k≥2} (Cβ_k)^{1/(2(β_k-1))} uniformly in the number of factors.

    Uses Cβ_k ≤ 2C q̄^{-k}, Σ_{k≥1} q̄^k ≤ q̄/(1-q̄) and
    Σ_{k≥1} (k+1) q̄^k ≤ q̄/(1-q̄)² + q̄/(1-q̄). The factor 2C is floored at 1
    so the first geometric bound stays valid when 2C < 1.
    """
    r = qbar / (1.0 - qbar)
    log_c0 = r * np.log(max(2.0 * C, 1.0)) + (qbar / (1.0 - qbar) ** 2 + r) * np.log(1.0 / qbar)
    return float(np.exp(log_c0 / (2.0 * (beta1 - 1.0))))


# -- the truncation -----------------------------------------------------------


@dataclass(frozen=True)
class TruncationPhi:
    """|t|^β on (-T, T), continued linearly (C¹) outside."""

    beta: float
    T: float

    def __post_init__(self):
        if not self.beta > 1:
            raise ValueError("β must exceed 1")
        if not self.T > 0:
            raise ValueError("T must be positive")

    @property
    def lipschitz(self) -> float:
        return self.beta * self.T ** (self.beta - 1)


def truncation_phi(t, phi: TruncationPhi):
    """(φ(t), φ'(t), φ''(t)); φ'' is 0 at t = 0 and outside (-T, T)."""
    t = np.asarray(t, dtype=float)
    b, T = phi.beta, phi.T
    a = np.abs(t)
    inside = a < T
    L = phi.lipschitz
    with np.errstate(divide="ignore", invalid="ignore"):
        val = np.where(inside, a**b, L * (a - T) + T**b)
        d1 = np.sign(t) * np.where(inside, b * a ** (b - 1), L)
        d2 = np.where(inside & (a > 0), b * (b - 1) * a ** (b - 2), 0.0)
    return val, d1, d2


PHI_SLACK = 8 * _EPS


def phi_battery(count: int, rng: np.random.Generator, beta_range=(1.0, 8.0), T_range=(0.1, 10.0)) -> AuditReport:
    """Random (t, β, T) samples against the pointwise and two-point properties of φ.

    Pointwise: φ ≤ |t|^β, |φ'| ≤ β|t|^{β-1}, |tφ'| ≤ βφ. Two-point, on pairs
    (a, b) drawn like t: |φ(a) - φ(b)| ≤ L|a - b| and midpoint convexity.
    Every comparison allows a round-off of ``PHI_SLACK`` relative to the
    magnitudes of the operands: the first and third hold with equality inside
    (-T, T), the Lipschitz bound with equality on either linear branch.
    """
    beta = rng.uniform(*beta_range, count)
    beta = np.where(beta > 1.0, beta, np.nextafter(1.0, 2.0))
    T = np.exp(rng.uniform(np.log(T_range[0]), np.log(T_range[1]), count))
    t, a, b = (rng.uniform(-3.0, 3.0, (3, count)) * T)
    viol = {k: 0 for k in ("value", "derivative", "euler", "lipschitz", "convexity")}

    def bad(lhs, rhs, scale=0.0):
        return int(lhs > rhs + PHI_SLACK * (abs(lhs) + abs(rhs) + scale))

    for i in range(count):
        phi = TruncationPhi(float(beta[i]), float(T[i]))
        bi = phi.beta
        (v, v_a, v_b, v_m), (d, *_), _ = truncation_phi(np.array([t[i], a[i], b[i], 0.5 * (a[i] + b[i])]), phi)
        at = abs(t[i])
        viol["value"] += bad(v, at**bi)
        viol["derivative"] += bad(abs(d), bi * at ** (bi - 1))
        viol["euler"] += bad(abs(t[i] * d), bi * v)
        viol["lipschitz"] += bad(abs(v_a - v_b), phi.lipschitz * abs(a[i] - b[i]),
                                 v_a + v_b + phi.lipschitz * (abs(a[i]) + abs(b[i])))
        viol["convexity"] += bad(v_m, 0.5 * (v_a + v_b))
    total = sum(viol.values())
    return AuditReport(
        name="phi_battery",
        passed=total == 0,
        lhs=float(total),
        rhs=0.0,
        tolerances={"roundoff_rel": PHI_SLACK},
        details={"samples": count, "violations": viol},
    )


# -- discrete integrals -------------------------------------------------------


def _log_int_pow(logabs: np.ndarray, p: float, log_hn: float) -> float:
    """log(hⁿ Σ |u|^p) given log|u|."""
    with np.errstate(invalid="ignore"):
        return float(logsumexp(p * logabs) + log_hn) if np.any(np.isfinite(logabs)) else -np.inf


def _logabs(values: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(np.abs(values))


def a_sequence(u: GridFunction, schedule: MoserSchedule) -> np.ndarray:
    """A_m = (1 + hⁿΣ|u|^{2*β_m})^{1/(2*(β_m - 1))}."""
    la_u = _logabs(u.values)
    log_hn = u.grid.dim * np.log(u.grid.h)
    out = np.empty(schedule.M)
    for m, b in enumerate(schedule.beta):
        li = _log_int_pow(la_u, schedule.two_star * b, log_hn)
        log1p_i = np.logaddexp(0.0, li)
        out[m] = np.exp(log1p_i / (schedule.two_star * (b - 1.0)))
    if not np.all(np.isfinite(out)):
        raise Overflow("A_m left the float range; reduce M")
    return out


def audit_main_estimate(
    u: GridFunction,
    schedule: MoserSchedule,
    betas: Sequence[float],
    T: Optional[float] = None,
    g_values: Optional[np.ndarray] = None,
) -> AuditReport:
    """Fit the smallest C with (∫φ(u)^{2*})^{2/2*} ≤ Cβ(∫|u|^{2β-1} + ∫φ(u)²|u|^{2*-2}).

    The fitted C is reported per β and maximized over the sweep. When the
    pointwise values g(x, u(x)) are supplied, the ratio of the left side to
    ∫φ(u)|φ'(u)||g| is reported as well (the constant in front of the
    nonlinearity before the envelope is applied).
    """
    ts = schedule.two_star
    grid = u.grid
    log_hn = grid.dim * np.log(grid.h)
    umax = u.max_abs()
    if T is None:
        T = 2.0 * max(umax, 1.0)
    la_u = _logabs(u.values)
    per_beta, lhs_list, rhs_list, cg = [], [], [], []
    for b in betas:
        phi = TruncationPhi(float(b), float(T))
        val, d1, _ = truncation_phi(u.values, phi)
        lphi = _logabs(val)
        log_lhs = (2.0 / ts) * _log_int_pow(lphi, ts, log_hn)
        t1 = _log_int_pow(la_u, 2 * b - 1, log_hn)
        with np.errstate(invalid="ignore"):
            t2 = float(logsumexp(2 * lphi + (ts - 2) * la_u) + log_hn) if np.any(np.isfinite(lphi)) else -np.inf
        log_rhs = np.log(b) + np.logaddexp(t1, t2)
        lhs_list.append(float(np.exp(log_lhs)))
        rhs_list.append(float(np.exp(log_rhs)))
        if np.isfinite(log_rhs):
            per_beta.append(float(np.exp(log_lhs - log_rhs)))
        else:
            per_beta.append(0.0)  # u ≡ 0: both sides vanish
        if g_values is not None:
            w = grid.cell_volume * float(np.sum(val * np.abs(d1) * np.abs(g_values)))
            cg.append(float(np.exp(log_lhs)) / w if w > 0 else 0.0)
    fitted = max(per_beta)
    positive = [c for c in per_beta if c > 0]
    spread = max(positive) / min(positive) if positive else 1.0
    details = {
        "betas": [float(b) for b in betas],
        "T": float(T),
        "C_per_beta": per_beta,
        "lhs": lhs_list,
        "rhs": rhs_list,
        "spread": spread,
    }
    if g_values is not None:
        details["C_g_per_beta"] = cg
    return AuditReport(
        name="moser_main_estimate",
        passed=bool(np.isfinite(fitted) and spread < 10.0),
        lhs=lhs_list[int(np.argmax(per_beta))],
        rhs=rhs_list[int(np.argmax(per_beta))],
        fitted=fitted,
        tolerances={"max_spread": 10.0},
        details=details,
    )


def reabsorption_radius(u: GridFunction, schedule: MoserSchedule, C: float) -> dict:
    """Smallest level R with (hⁿΣ_{|u|>R}|u|^{2*})^{(2*-2)/2*} ≤ 1/(2Cβ₁).

    Candidate levels are 0 and the nodal values of |u|, so the result is the
    smallest R the grid can realize.
    """
    ts = schedule.two_star
    target = 1.0 / (2.0 * C * schedule.beta[0]) if C > 0 else np.inf
    a = np.sort(np.abs(u.values))
    w = u.grid.cell_volume * a**ts
    # tail[k] = hⁿ Σ_{|u| > a[k-1]} with tail[0] the full sum
    tail = np.concatenate([[w.sum()], w.sum() - np.cumsum(w)])
    tail = np.maximum(tail, 0.0)
    levels = np.concatenate([[0.0], a])
    # ties: a level equal to several nodal values excludes all of them
    vals = tail ** ((ts - 2.0) / ts)
    ok = np.nonzero(vals <= target)[0]
    k = int(ok[0])
    return {"R": float(levels[k]), "tail_value": float(vals[k]), "target": float(target)}


@dataclass
class MoserCertificate:
    A: List[float]
    fitted_C_main: float
    fitted_C_iter: float
    C0: float
    bound_value: float
    slack: float
    u_max: float
    passed: bool
    schedule: MoserSchedule = field(repr=False)
    step_ratios_ok: bool = True
    reabsorption: dict = field(default_factory=dict)

    @property
    def fitted_C(self) -> float:
        return max(self.fitted_C_main, self.fitted_C_iter)

    def to_dict(self) -> dict:
        return {
            "A": list(self.A),
            "fitted_C_main": self.fitted_C_main,
            "fitted_C_iter": self.fitted_C_iter,
            "fitted_C": self.fitted_C,
            "C0": self.C0,
            "bound_value": self.bound_value,
            "slack": self.slack,
            "u_max": self.u_max,
            "pass": self.passed,
            "step_ratios_ok": self.step_ratios_ok,
            "reabsorption": self.reabsorption,
            "schedule": self.schedule.to_dict(),
        }


def compute_certificate(
    u: GridFunction,
    n: int,
    s: float,
    M: int = 6,
    g_values: Optional[np.ndarray] = None,
) -> MoserCertificate:
    """L^∞ certificate ‖u‖_∞ ≤ C₀A₁(1 + ε_h).

    C is the larger of the fitted main-estimate constant (β-sweep over
    β₁..β₃) and the smallest constant validating the per-step inequality
    A_{m+1} ≤ (Cβ_{m+1})^{1/(2(β_{m+1}-1))} A_m along the schedule. The slack
    ε_h = (hⁿ)^{-1/(2*β_M)} - 1 accounts for the finite M: it is what
    separates A_M from ‖u‖_∞ when the maximum is carried by a single node.
    """
    if M < 3:
        raise ValueError("M must be at least 3")
    if u.grid.dim != n:
        raise ValueError("dimension mismatch between u and n")
    schedule = beta_sequence(n, s, M)
    A = a_sequence(u, schedule)
    main = audit_main_estimate(u, schedule, schedule.beta[:3], g_values=g_values)
    b = schedule.beta
    # per-step constant, exponent form to avoid overflow
    log_ratio = np.log(A[1:]) - np.log(A[:-1])
    log_c = 2.0 * (b[1:] - 1.0) * log_ratio - np.log(b[1:])
    c_iter = float(np.exp(log_c.max()))
    C = max(main.fitted, c_iter)
    schedule = schedule.with_constant(C)
    C0 = schedule.product_bound
    log_hn = n * np.log(u.grid.h)
    slack = float(np.expm1(-log_hn / (schedule.two_star * b[-1])))
    bound = C0 * A[0] * (1.0 + slack)
    # per-step form of the product inequality, with round-off room
    step_bound = (C * b[1:]) ** (1.0 / (2.0 * (b[1:] - 1.0)))
    steps_ok = bool(np.all(A[1:] / A[:-1] <= step_bound * (1 + 8 * _EPS)))
    umax = u.max_abs()
    return MoserCertificate(
        A=[float(a) for a in A],
        fitted_C_main=float(main.fitted),
        fitted_C_iter=c_iter,
        C0=C0,
        bound_value=float(bound),
        slack=slack,
        u_max=umax,
        passed=bool(bound >= umax),
        schedule=schedule,
        step_ratios_ok=steps_ok,
        reabsorption=reabsorption_radius(u, schedule, main.fitted) if main.fitted > 0 else {},
    )


def convexity_inequality_check(assembly: OperatorAssembly, u: GridFunction, phi: TruncationPhi) -> AuditReport:
    """Row-wise (A_frac φ(u))_i ≤ φ'(u_i)(A_frac u)_i.

    Off the diagonal A_frac is -W_ij ≤ 0 and the row sum is the exterior mass,
    so each row is a nonnegative combination of φ(u_i) - φ(u_j) ≤
    φ'(u_i)(u_i - u_j) (j interior) and φ(u_i) ≤ φ'(u_i)u_i (exterior u = 0).
    """
    val, d1, _ = truncation_phi(u.values, phi)
    left = assembly.A_frac @ val
    right = d1 * (assembly.A_frac @ u.values)
    scale = (np.abs(assembly.A_frac) @ np.abs(val)) + np.abs(d1) * (np.abs(assembly.A_frac) @ np.abs(u.values))
    tol = 64 * _EPS * scale
    margin = right - left + tol
    return AuditReport(
        name="convexity_inequality",
        passed=bool(np.all(margin >= 0)),
        lhs=float(left[np.argmin(margin)]) if left.size else 0.0,
        rhs=float(right[np.argmin(margin)]) if right.size else 0.0,
        tolerances={"roundoff_rel": 64 * _EPS},
        details={"violations": int(np.sum(margin < 0))},
    )


def embedding_constant_audit(assembly: OperatorAssembly, trials: int, rng: np.random.Generator) -> AuditReport:
    """Fitted S = max over random smooth u of ‖u‖²_{2*} / [u]²."""
    if trials < 10:
        raise ValueError("at least 10 trials are required")
    assembly.params.require_subcritical()
    ts = critical_exponent(assembly.params.n, assembly.params.s)
    grid = assembly.grid
    ratios = []
    for u in random_smooth_functions(grid, trials, rng):
        semi = gagliardo_seminorm_sq(assembly, u)
        if semi <= 0:
            continue
        norm_sq = (grid.cell_volume * np.sum(np.abs(u.values) ** ts)) ** (2.0 / ts)
        ratios.append(norm_sq / semi)
    S = float(max(ratios))
    return AuditReport(
        name="embedding_constant",
        passed=bool(np.isfinite(S) and S > 0),
        fitted=S,
        details={"trials": len(ratios), "min_ratio": float(min(ratios))},
    )


def embedding_ratio(assembly: OperatorAssembly, u: GridFunction) -> float:
    ts = critical_exponent(assembly.params.n, assembly.params.s)
    norm_sq = (assembly.grid.cell_volume * np.sum(np.abs(u.values) ** ts)) ** (2.0 / ts)
    return float(norm_sq / gagliardo_seminorm_sq(assembly, u))
