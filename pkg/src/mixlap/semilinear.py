"""λ-shifted Picard iteration for ℒu = g(x, u) and the growth audit."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, List

import numpy as np

from mixlap.domain import Grid, GridFunction, check_same_grid
from mixlap.errors import ConfigError, Diverged, MaxIterExceeded
from mixlap.linear import DirectSolver
from mixlap.operators import OperatorAssembly
from mixlap.report import AuditReport


@dataclass(frozen=True)
class Nonlinearity:
    """Pointwise g(x, t) with a claimed envelope |g| ≤ c(1 + |t|^{q-1})."""

    name: str
    evaluator: Callable[[np.ndarray, np.ndarray], np.ndarray] = field(repr=False, compare=False)
    growth_c: float
    growth_q: float
    params: Dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if not self.growth_c > 0:
            raise ValueError("growth constant c must be positive")
        if not self.growth_q >= 2:
            raise ValueError("growth exponent q must be at least 2")

    def __call__(self, x, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return np.broadcast_to(np.asarray(self.evaluator(x, t), dtype=float), t.shape)

    @property
    def monotone_nonincreasing(self) -> bool:
        return bool(self.params.get("_nonincreasing", False))

    def to_dict(self) -> dict:
        return {"name": self.name, "params": {k: v for k, v in self.params.items() if not k.startswith("_")},
                "growth_c": self.growth_c, "growth_q": self.growth_q}


def _catalog():
    def zero(**_):
        return Nonlinearity("zero", lambda x, t: np.zeros_like(t), 1.0, 2.0, {"_nonincreasing": True})

    def const(a=1.0):
        return Nonlinearity("const", lambda x, t: np.full_like(t, a), max(abs(a), 1e-300), 2.0,
                            {"a": a, "_nonincreasing": True})

    def linear(a=1.0, b=-1.0):
        # g = a + b t
        return Nonlinearity("linear", lambda x, t: a + b * t, max(abs(a), abs(b), 1e-300), 2.0,
                            {"a": a, "b": b, "_nonincreasing": b <= 0})

    def sin(a=1.0):
        return Nonlinearity("sin", lambda x, t: a * np.sin(t), max(abs(a), 1e-300), 2.0, {"a": a})

    def cubic(a=-1.0, b=1.0):
        # g = a t³ + b
        return Nonlinearity("cubic", lambda x, t: a * t**3 + b, max(abs(a), abs(b), 1e-300), 4.0,
                            {"a": a, "b": b, "_nonincreasing": a <= 0})

    def logistic(a=1.0):
        # g = a t (1 - t); |t - t²| ≤ (|t| + |t|²) ≤ 1.5 (1 + |t|²)
        return Nonlinearity("logistic", lambda x, t: a * t * (1 - t), max(1.5 * abs(a), 1e-300), 3.0, {"a": a})

    return {"zero": zero, "const": const, "linear": linear, "sin": sin, "cubic": cubic, "logistic": logistic}


CATALOG = _catalog()


def make_nonlinearity(name: str, **params) -> Nonlinearity:
    try:
        factory = CATALOG[name]
    except KeyError:
        raise ConfigError(f"unknown nonlinearity {name!r}; choose from {sorted(CATALOG)}") from None
    try:
        return factory(**{k: float(v) for k, v in params.items()})
    except TypeError as exc:
        raise ConfigError(f"bad parameters for nonlinearity {name!r}: {exc}") from None


def check_growth(nl: Nonlinearity, grid: Grid, t_samples) -> AuditReport:
    """max over (node, t) of |g(x,t)| / (1 + |t|^{q-1}) against the claimed c."""
    t = np.asarray(t_samples, dtype=float).ravel()
    if t.size == 0:
        raise ValueError("t_samples must be nonempty")
    X = np.repeat(grid.coords, t.size, axis=0)
    T = np.tile(t, grid.n_interior)
    with np.errstate(over="ignore", invalid="ignore"):
        g = np.abs(nl(X, T))
        ratio = g / (1.0 + np.abs(T) ** (nl.growth_q - 1))
    ratio = np.where(np.isnan(ratio), np.inf, ratio)
    worst = float(ratio.max())
    return AuditReport(
        name="growth",
        passed=bool(worst <= nl.growth_c),
        lhs=worst,
        rhs=nl.growth_c,
        fitted=worst,
        details={"q": nl.growth_q, "t_max": float(np.abs(t).max())},
    )


@dataclass
class PicardTrace:
    lam: float
    tol: float
    step_norms: List[float] = field(default_factory=list)
    sup_norms: List[float] = field(default_factory=list)
    min_values: List[float] = field(default_factory=list)
    converged: bool = False

    def to_dict(self) -> dict:
        return {
            "lambda": self.lam,
            "tol": self.tol,
            "step_norms": list(self.step_norms),
            "converged": self.converged,
            "iterations": len(self.step_norms),
        }


def solve_semilinear(
    assembly: OperatorAssembly,
    nl: Nonlinearity,
    lam: float,
    tol: float = 1e-10,
    max_iter: int = 500,
):
    """u_{k+1} solves (ℒ_h + λ)u_{k+1} = g(·, u_k) + λu_k from u₀ = 0."""
    if not tol > 0:
        raise ValueError("tol must be positive")
    grid = assembly.grid
    solver = DirectSolver(assembly, lam)
    x = grid.coords
    u = np.zeros(grid.n_interior)
    g0 = float(np.max(np.abs(nl(x, u)), initial=0.0))
    limit = 1e6 * (1 + g0)
    trace = PicardTrace(lam=float(lam), tol=float(tol))
    for _ in range(max_iter):
        with np.errstate(over="ignore", invalid="ignore"):
            rhs = nl(x, u) + lam * u
        if not np.all(np.isfinite(rhs)):
            raise Diverged("nonlinearity overflowed along the Picard iterates")
        u_new = solver.solve(rhs).values
        step = float(np.max(np.abs(u_new - u), initial=0.0))
        u = u_new
        trace.step_norms.append(step)
        trace.sup_norms.append(float(np.max(np.abs(u), initial=0.0)))
        trace.min_values.append(float(u.min(initial=0.0)))
        if trace.sup_norms[-1] > limit:
            raise Diverged(f"‖u_k‖_∞ = {trace.sup_norms[-1]:.3g} exceeds {limit:.3g}")
        if step < tol:
            trace.converged = True
            return GridFunction(grid, u), trace
    raise MaxIterExceeded(f"Picard iteration did not reach tol={tol} in {max_iter} steps")


def weak_residual(assembly: OperatorAssembly, u: GridFunction, nl: Nonlinearity) -> float:
    """max_i |a(u, φ_i) - hⁿ g(x_i, u_i)| / hⁿ over the nodal basis."""
    check_same_grid(assembly.grid, u.grid)
    # a(u, e_i) = hⁿ [(A_loc + A_frac) u]_i, so the hⁿ cancels
    r = assembly.A_loc @ u.values + assembly.A_frac @ u.values - nl(assembly.grid.coords, u.values)
    return float(np.max(np.abs(r), initial=0.0))
