"""Discrete -Δ, (-Δ)^s and their sum on exterior-zero grid functions."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.signal import fftconvolve

from mixlap.domain import Grid, GridFunction, check_same_grid, random_smooth_functions
from mixlap.errors import GridMismatch, SubcriticalDimension, UnsupportedOrder
from mixlap.kernels import StencilTable, default_near_model, normalization_constant, stencil_table


@dataclass(frozen=True)
class FractionalParams:
    s: float
    n: int
    c_ns: float = field(default=None)  # filled from (n, s) when omitted

    def __post_init__(self):
        if not 0.0 < self.s < 1.0:
            raise UnsupportedOrder(f"fractional order s={self.s} is outside (0, 1)")
        if self.n not in (1, 2):
            raise ValueError("only n = 1, 2 are supported")
        if self.c_ns is None:
            object.__setattr__(self, "c_ns", normalization_constant(self.n, self.s))
        if not self.c_ns > 0:
            raise ValueError("normalization constant must be positive")

    @property
    def subcritical(self) -> bool:
        """n > 2s, needed wherever the critical exponent 2n/(n-2s) enters."""
        return self.n > 2 * self.s

    def require_subcritical(self) -> None:
        if not self.subcritical:
            raise SubcriticalDimension(f"need n > 2s, got n={self.n}, s={self.s}")

    @classmethod
    def of(cls, s: float, n: int) -> "FractionalParams":
        return cls(s=float(s), n=int(n))


@dataclass(frozen=True, eq=False)
class OperatorAssembly:
    grid: Grid
    params: FractionalParams
    A_loc: sp.csr_matrix
    A_frac: np.ndarray
    table: StencilTable

    @property
    def n_interior(self) -> int:
        return self.grid.n_interior

    @property
    def frac_scale(self) -> float:
        """Factor turning unit-lattice table weights into matrix entries."""
        return self.params.c_ns * self.grid.h ** (-2 * self.params.s)

    def dense(self, lam: float = 0.0) -> np.ndarray:
        A = self.A_loc.toarray() + self.A_frac
        if lam:
            A[np.diag_indices_from(A)] += lam
        return A


def assemble_laplacian(grid: Grid) -> sp.csr_matrix:
    """Second-order stencil; neighbours outside Ω are dropped (u = 0 there)."""
    N = grid.n_interior
    h2 = grid.h**2
    lookup = grid._lookup()
    rows = [np.arange(N)]
    cols = [np.arange(N)]
    vals = [np.full(N, 2.0 * grid.dim / h2)]
    for d in range(grid.dim):
        for step in (-1, 1):
            nb = grid.index.copy()
            nb[:, d] += step
            ok = (nb[:, d] >= 0) & (nb[:, d] < grid.shape[d])
            pos = np.full(N, -1)
            pos[ok] = lookup[tuple(nb[ok].T)]
            keep = pos >= 0
            rows.append(np.arange(N)[keep])
            cols.append(pos[keep])
            vals.append(np.full(keep.sum(), -1.0 / h2))
    A = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(N, N)
    ).tocsr()
    A.sort_indices()
    return A


def _table_for(grid: Grid, params: FractionalParams, near_model: Optional[str]) -> StencilTable:
    if params.n != grid.dim:
        raise GridMismatch(f"fractional parameters for n={params.n} on a {grid.dim}D grid")
    span = int((grid.index.max(axis=0) - grid.index.min(axis=0)).max())
    return stencil_table(grid.dim, params.s, span, near_model or default_near_model(params.s))


def assemble_fractional(
    grid: Grid, params: FractionalParams, near_model: Optional[str] = None
) -> np.ndarray:
    """Dense matrix of (-Δ)^s acting on the interior values (exterior fixed at zero).

    The contribution of the exterior lattice (and of everything beyond it) is
    carried by the diagonal, so each row sums to the exterior mass seen from
    that node.
    """
    if not 0.0 < params.s < 1.0:
        raise UnsupportedOrder(f"fractional order s={params.s} is outside (0, 1)")
    table = _table_for(grid, params, near_model)
    return _frac_from_table(grid, params, table)


def _frac_from_table(grid: Grid, params: FractionalParams, table: StencilTable) -> np.ndarray:
    idx = grid.index
    R = table.radius
    off = idx[None, :, :] - idx[:, None, :] + R
    A = table.weights[tuple(off[..., d] for d in range(grid.dim))]
    A = A * (params.c_ns * grid.h ** (-2 * params.s))
    A = 0.5 * (A + A.T)
    A.setflags(write=False)
    return A


def assemble(grid: Grid, s: float, near_model: Optional[str] = None) -> OperatorAssembly:
    params = FractionalParams.of(s, grid.dim)
    table = _table_for(grid, params, near_model)
    return OperatorAssembly(
        grid=grid,
        params=params,
        A_loc=assemble_laplacian(grid),
        A_frac=_frac_from_table(grid, params, table),
        table=table,
    )


def _values(assembly: OperatorAssembly, u) -> np.ndarray:
    if isinstance(u, GridFunction):
        check_same_grid(assembly.grid, u.grid)
        return u.values
    u = np.asarray(u, dtype=float)
    if u.shape != (assembly.n_interior,):
        raise GridMismatch(f"vector of shape {u.shape} for {assembly.n_interior} interior nodes")
    return u


def apply_mixed(assembly: OperatorAssembly, u, lam: float = 0.0) -> GridFunction:
    """(A_loc + A_frac + λI) u."""
    if lam < 0:
        raise ValueError("shift λ must be nonnegative")
    v = _values(assembly, u)
    return GridFunction(assembly.grid, assembly.A_loc @ v + assembly.A_frac @ v + lam * v)


def bilinear_form(assembly: OperatorAssembly, u, v) -> float:
    """hⁿ vᵀ(A_loc + A_frac)u, the left side of the weak formulation."""
    a = _values(assembly, u)
    b = _values(assembly, v)
    return float(assembly.grid.cell_volume * (b @ (assembly.A_loc @ a) + b @ (assembly.A_frac @ a)))


def dirichlet_energy(assembly: OperatorAssembly, u) -> float:
    """Discrete ‖∇u‖²₂ = hⁿ uᵀ A_loc u."""
    a = _values(assembly, u)
    return float(assembly.grid.cell_volume * (a @ (assembly.A_loc @ a)))


def gagliardo_seminorm_sq(assembly: OperatorAssembly, u) -> float:
    """Discrete double integral of |u(x)-u(y)|²/|x-y|^{n+2s} over ℝ²ⁿ.

    Uses ∫ u (-Δ)^s u = (c_{n,s}/2) [u]², so the value is (2/c) hⁿ uᵀ A_frac u.
    """
    a = _values(assembly, u)
    return float(2.0 / assembly.params.c_ns * assembly.grid.cell_volume * (a @ (assembly.A_frac @ a)))


def apply_fractional_on_box(table: StencilTable, values: np.ndarray, c_ns: float, h: float) -> np.ndarray:
    """(-Δ)^s_h at every node of a lattice box holding explicit values.

    Values outside the box are zero. The table radius must be at least the box
    extent minus one along every axis.
    """
    if any(n - 1 > table.radius for n in values.shape):
        raise ValueError("stencil table too small for the lattice box")
    out = fftconvolve(values, table.weights, mode="same") if values.ndim > 1 else np.convolve(
        values, table.weights, mode="same"
    )
    return c_ns * h ** (-2 * table.s) * out


def laplacian_on_box(values: np.ndarray, h: float) -> np.ndarray:
    """-Δ_h on a lattice box, zero outside the box."""
    padded = np.pad(values, 1)
    out = 2 * values.ndim * values
    for d in range(values.ndim):
        fwd = [slice(1, -1)] * values.ndim
        bwd = [slice(1, -1)] * values.ndim
        fwd[d] = slice(2, None)
        bwd[d] = slice(0, -2)
        out = out - padded[tuple(fwd)] - padded[tuple(bwd)]
    return out / h**2


def norm_equivalence_audit(assembly: OperatorAssembly, trials: int, rng: np.random.Generator) -> dict:
    """Ratio of the discrete X¹₀ norm to the discrete H¹₀ norm over random smooth samples."""
    ratios = []
    for u in random_smooth_functions(assembly.grid, trials, rng):
        grad = dirichlet_energy(assembly, u)
        if grad <= 0:
            continue
        ratios.append(np.sqrt((grad + gagliardo_seminorm_sq(assembly, u)) / grad))
    ratios = np.array(ratios)
    return {
        "name": "norm_equivalence",
        "fitted_C": float(ratios.max()),
        "min_ratio": float(ratios.min()),
        "passed": bool(ratios.min() >= 1.0 and np.isfinite(ratios.max())),
    }
