"""Shifted linear solves: direct factorization and the frozen-nonlocal contraction."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, List

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from mixlap.domain import GridFunction
from mixlap.errors import MaxIterExceeded, NoContractionFound, NotContracting, SingularSystem
from mixlap.norms import discrete_wkp_norm, lp_norm
from mixlap.operators import OperatorAssembly, _values

log = logging.getLogger(__name__)

RESIDUAL_RTOL = 1e-10
# step norms below this multiple of eps·‖w‖ are roundoff; ratios are not taken there
_NOISE_FACTOR = 1e3


class DirectSolver:
    """Cholesky factorization of A_loc + A_frac + λI, reused across right-hand sides."""

    def __init__(self, assembly: OperatorAssembly, lam: float):
        if lam < 0:
            raise ValueError("shift λ must be nonnegative")
        self.assembly = assembly
        self.lam = float(lam)
        self.matrix = assembly.dense(self.lam)
        try:
            self._factor = la.cho_factor(self.matrix, lower=True, check_finite=False)
        except la.LinAlgError as exc:
            raise SingularSystem(f"shifted operator is not positive definite (λ={lam})") from exc

    def solve(self, f) -> GridFunction:
        b = _values(self.assembly, f)
        u = la.cho_solve(self._factor, b, check_finite=False)
        r = b - self.matrix @ u
        # floored at the smallest normal float so subnormal data is not rejected
        bound = RESIDUAL_RTOL * np.max(np.abs(b), initial=0.0) + np.finfo(float).tiny
        if np.max(np.abs(r), initial=0.0) > bound:
            u = u + la.cho_solve(self._factor, r, check_finite=False)
            r = b - self.matrix @ u
            if np.max(np.abs(r), initial=0.0) > bound:
                raise SingularSystem("direct solve missed its residual bound after refinement")
        return GridFunction(self.assembly.grid, u)


def solve_direct(assembly: OperatorAssembly, lam: float, f) -> GridFunction:
    """u with (A_loc + A_frac + λI)u = f and ‖residual‖_∞ ≤ 1e-10‖f‖_∞."""
    return DirectSolver(assembly, lam).solve(f)


@dataclass
class ContractionTrace:
    lam: float
    tol: float
    p: float
    iterates: List[GridFunction] = field(default_factory=list, repr=False)
    step_norms: Dict[str, List[float]] = field(default_factory=lambda: {"inf": [], "lp": [], "w2p": []})
    ratios: List[float] = field(default_factory=list)
    converged: bool = False

    @property
    def max_ratio(self) -> float:
        return max(self.ratios) if self.ratios else 0.0

    @property
    def final_ratio(self) -> float:
        return self.ratios[-1] if self.ratios else 0.0

    def to_dict(self) -> dict:
        return {
            "lambda": self.lam,
            "tol": self.tol,
            "p": self.p,
            "ratios": list(self.ratios),
            "step_norms": {k: list(v) for k, v in self.step_norms.items()},
            "converged": self.converged,
            "iterations": len(self.step_norms["inf"]),
        }


class _LocalSolver:
    """Sparse LU of A_loc + λI, the inner problem of one contraction step."""

    def __init__(self, assembly: OperatorAssembly, lam: float):
        N = assembly.n_interior
        M = (assembly.A_loc + lam * sp.identity(N, format="csr")).tocsc()
        self._lu = splu(M)

    def __call__(self, rhs: np.ndarray) -> np.ndarray:
        return self._lu.solve(rhs)


def _iterate(assembly, lam, f, steps, tol, p, keep_iterates, record_all=False):
    f = _values(assembly, f)
    local = _LocalSolver(assembly, lam)
    trace = ContractionTrace(lam=float(lam), tol=float(tol), p=float(p))
    grid = assembly.grid
    w = np.zeros(assembly.n_interior)
    if keep_iterates:
        trace.iterates.append(GridFunction(grid, w))
    streak = 0
    for k in range(steps):
        w_new = local(f - assembly.A_frac @ w)
        d = w_new - w
        step_inf = float(np.max(np.abs(d), initial=0.0))
        trace.step_norms["inf"].append(step_inf)
        trace.step_norms["lp"].append(lp_norm(d, grid.h, grid.dim, p))
        try:
            trace.step_norms["w2p"].append(discrete_wkp_norm(GridFunction(grid, d), 2, p))
        except Exception:  # too few nodes for second differences
            trace.step_norms["w2p"].append(float("nan"))
        prev = trace.step_norms["inf"][-2] if k >= 1 else None
        noise = _NOISE_FACTOR * np.finfo(float).eps * max(np.max(np.abs(w_new), initial=0.0), 1e-300)
        if prev is not None and prev > noise and step_inf > noise:
            r = step_inf / prev
            trace.ratios.append(r)
            streak = streak + 1 if r > 1 else 0
        w = w_new
        if keep_iterates:
            trace.iterates.append(GridFunction(grid, w))
        if not record_all and step_inf < tol:
            trace.converged = True
            break
        if streak >= 5:
            return w, trace, True
    return w, trace, False


def contraction_solve(
    assembly: OperatorAssembly,
    lam: float,
    f,
    tol: float = 1e-8,
    max_iter: int = 500,
    p: float = 2.0,
    keep_iterates: bool = False,
):
    """Fixed point of T_λ: w ↦ u with (A_loc + λI)u = f - A_frac w, from w₀ = 0.

    Stops when ‖w_{k+1} - w_k‖_∞ < tol. Step norms are logged in ‖·‖_∞, the
    discrete L^p norm and the discrete W^{2,p} norm.
    """
    if not lam > 0:
        raise ValueError("contraction needs λ > 0")
    if not tol > 0:
        raise ValueError("tol must be positive")
    w, trace, diverging = _iterate(assembly, lam, f, max_iter, tol, p, keep_iterates)
    if diverging:
        raise NotContracting(f"step ratios above 1 for 5 consecutive steps at λ={lam}")
    if not trace.converged:
        raise MaxIterExceeded(f"no convergence in {max_iter} contraction steps at λ={lam}")
    return GridFunction(assembly.grid, w), trace


def _contracts(assembly, lam, f, steps=20) -> bool:
    _, trace, diverging = _iterate(assembly, lam, f, steps, 0.0, 2.0, False, record_all=True)
    return not diverging and all(r < 1 for r in trace.ratios)


def estimate_lambda_threshold(
    assembly: OperatorAssembly,
    probe_f,
    lam_min: float = 1e-2,
    lam_max: float = 1e6,
    bisections: int = 30,
) -> float:
    """Smallest tested λ whose measured step ratios stay below 1 for 20 steps.

    Bisection runs on log λ over [lam_min, lam_max]; if lam_min already
    contracts it is returned as is.
    """
    if not np.any(_values(assembly, probe_f)):
        raise ValueError("probe right-hand side must be nonzero")
    if not _contracts(assembly, lam_max, probe_f):
        raise NoContractionFound(f"no contraction even at λ={lam_max}")
    if _contracts(assembly, lam_min, probe_f):
        return float(lam_min)
    lo, hi = np.log(lam_min), np.log(lam_max)
    for _ in range(bisections):
        mid = 0.5 * (lo + hi)
        if _contracts(assembly, float(np.exp(mid)), probe_f):
            hi = mid
        else:
            lo = mid
    log.debug("lambda threshold bracket [%g, %g]", np.exp(lo), np.exp(hi))
    return float(np.exp(hi))


def banach_rate_check(trace: ContractionTrace, u_star: GridFunction) -> dict:
    """A posteriori ‖w_k - u*‖_∞ ≤ q^k ‖w₁ - w₀‖_∞ / (1 - q), q = max ratio."""
    q = trace.max_ratio
    if not trace.iterates:
        raise ValueError("trace has no stored iterates")
    if q >= 1:
        return {"passed": False, "q": q, "worst_margin": float("-inf")}
    first = trace.step_norms["inf"][0]
    worst = np.inf
    # roundoff floor of the comparison itself
    floor = 10 * np.finfo(float).eps * max(u_star.max_abs(), 1.0)
    for k, w in enumerate(trace.iterates):
        err = float(np.max(np.abs(w.values - u_star.values)))
        bound = q**k * first / (1 - q) + floor
        worst = min(worst, bound - err)
    return {"passed": bool(worst >= 0), "q": q, "worst_margin": float(worst)}
