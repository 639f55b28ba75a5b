"""Grid-refinement probes: W^{2,p} stability, L^p interpolation bounds, Hölder fits."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Union

import numpy as np

from mixlap.domain import Domain, GridFunction, build_grid, random_smooth_functions
from mixlap.errors import TooFewScales
from mixlap.linear import solve_direct
from mixlap.norms import discrete_wkp_norm, lp_norm
from mixlap.operators import OperatorAssembly, assemble
from mixlap.report import AuditReport

Rhs = Union[float, Callable[[np.ndarray], np.ndarray]]


@dataclass
class Level:
    h: float
    u: GridFunction
    f: GridFunction
    norms: Dict[str, float] = field(default_factory=dict)


@dataclass
class RefinementStudy:
    domain: Domain
    s: float
    h_list: List[float]
    rhs: Rhs = 1.0
    lam: float = 0.0
    levels: List[Level] = field(default_factory=list)

    def __post_init__(self):
        h = np.asarray(self.h_list, dtype=float)
        if h.size < 3:
            raise ValueError("a refinement study needs at least 3 levels")
        if np.any(np.diff(h) >= 0):
            raise ValueError("h_list must be strictly decreasing")

    @property
    def advisory(self) -> bool:
        return self.s > 0.5 or self.domain.advisory

    def _rhs_on(self, grid) -> GridFunction:
        if callable(self.rhs):
            return GridFunction.from_callable(grid, self.rhs)
        return GridFunction(grid, np.full(grid.n_interior, float(self.rhs)))

    def solve(self, p_list: Sequence[float] = (2.0,)) -> "RefinementStudy":
        self.levels = []
        for h in self.h_list:
            grid = build_grid(self.domain, h)
            asm = assemble(grid, self.s)
            f = self._rhs_on(grid)
            u = solve_direct(asm, self.lam, f)
            lvl = Level(h=float(h), u=u, f=f)
            for p in p_list:
                for k in (0, 1, 2):
                    lvl.norms[f"W{k},{p:g}"] = discrete_wkp_norm(u, k, p)
                lvl.norms[f"f_L{p:g}"] = lp_norm(f.values, grid.h, grid.dim, p)
            self.levels.append(lvl)
        return self

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["h", "metric_name", "value"])
        for lvl in self.levels:
            for name, value in lvl.norms.items():
                w.writerow(["%.17g" % lvl.h, name, "%.17g" % value])
        return buf.getvalue()


def stability_audit(study: RefinementStudy, p: float) -> AuditReport:
    """Ratio ‖u‖_{W^{2,p}} / (‖u‖_p + ‖f‖_p) per level; pass iff max/min < 10."""
    if not study.levels:
        study.solve((p,))
    ratios, hs, flagged = [], [], []
    for lvl in study.levels:
        g = lvl.u.grid
        up = lp_norm(lvl.u.values, g.h, g.dim, p)
        fp = lp_norm(lvl.f.values, g.h, g.dim, p)
        if up + fp == 0:
            continue
        w2, info = discrete_wkp_norm(lvl.u, 2, p, with_details=True)
        ratios.append(w2 / (up + fp))
        hs.append(lvl.h)
        flagged.append(info["flagged_nodes"])
    if not ratios:
        return AuditReport(name="stability", passed=True, details={"skipped": "all levels vanish"})
    spread = max(ratios) / min(ratios)
    return AuditReport(
        name="stability",
        passed=bool(spread < 10.0),
        lhs=max(ratios),
        rhs=min(ratios),
        fitted=spread,
        advisory=study.advisory,
        tolerances={"max_spread": 10.0},
        details={"p": p, "h": hs, "ratios": ratios, "boundary_flagged_nodes": flagged},
    )


def interpolation_audit(
    assembly: OperatorAssembly,
    p: float,
    epsilon_list: Sequence[float],
    trials: int,
    rng: np.random.Generator,
) -> AuditReport:
    """Smallest τ(ε) with ‖(-Δ)^s_h u‖_p ≤ ε‖u‖_{W^{2,p}} + τ(ε)‖u‖_p over random smooth u.

    Passes iff every τ(ε) is finite and τ does not decrease as ε decreases.
    """
    grid = assembly.grid
    samples = []
    for u in random_smooth_functions(grid, trials, rng):
        c = lp_norm(u.values, grid.h, grid.dim, p)
        if c == 0:
            continue
        a = lp_norm(assembly.A_frac @ u.values, grid.h, grid.dim, p)
        b = discrete_wkp_norm(u, 2, p)
        samples.append((a, b, c))
    eps = sorted((float(e) for e in epsilon_list), reverse=True)
    taus = []
    for e in eps:
        taus.append(max((max(a - e * b, 0.0) / c for a, b, c in samples), default=0.0))
    finite = all(np.isfinite(t) for t in taus)
    monotone = all(t2 >= t1 for t1, t2 in zip(taus, taus[1:]))
    return AuditReport(
        name="interpolation",
        passed=bool(finite and monotone),
        fitted=taus[-1] if taus else 0.0,
        advisory=assembly.params.s > 0.5 or grid.domain.advisory,
        details={"p": p, "epsilon": eps, "tau": taus, "trials": len(samples), "s": assembly.params.s},
    )


def holder_fit(u: GridFunction, derivative_order: int, min_scales: int = 4):
    """Log-log slope of the discrete modulus of continuity of u or of its difference quotient.

    The modulus at separation r = m·h (m = 1, 2, 4, ...) is the largest
    |Du(x) - Du(y)| over lattice pairs at offset m along one axis with both
    points' stencils on interior nodes. Returns (α̂, fit_quality, details),
    where fit_quality is the RMS residual of the least-squares line in
    natural-log units.
    """
    if derivative_order not in (0, 1):
        raise ValueError("derivative_order must be 0 or 1")
    grid = u.grid
    full = u.on_lattice()
    inner = grid.mask
    h = grid.h
    if derivative_order == 0:
        fields = [full]
        valid = inner
    else:
        fields, masks = [], []
        # forward differences sit at the points x + h e_d / 2; all of them
        # are kept on the node grid of the lower endpoint
        for d in range(grid.dim):
            hi = [slice(None)] * grid.dim
            lo = [slice(None)] * grid.dim
            hi[d] = slice(1, None)
            lo[d] = slice(0, -1)
            q = np.zeros(grid.shape)
            m = np.zeros(grid.shape, dtype=bool)
            q[tuple(lo)] = (full[tuple(hi)] - full[tuple(lo)]) / h
            m[tuple(lo)] = inner[tuple(hi)] & inner[tuple(lo)]
            fields.append(q)
            masks.append(m)
        valid = np.logical_and.reduce(masks)
    vec = np.stack(fields, axis=-1)
    extent = min(int(np.sum(valid, axis=d).max()) for d in range(grid.dim))
    scales, omegas = [], []
    m = 1
    while m <= extent // 4:
        best = 0.0
        for d in range(grid.dim):
            a = [slice(None)] * grid.dim
            b = [slice(None)] * grid.dim
            a[d] = slice(0, -m)
            b[d] = slice(m, None)
            ok = valid[tuple(a)] & valid[tuple(b)]
            if ok.any():
                diff = np.linalg.norm(vec[tuple(a)] - vec[tuple(b)], axis=-1)
                best = max(best, float(diff[ok].max()))
        if best > 0:
            scales.append(m * h)
            omegas.append(best)
        m *= 2
    if len(scales) < min_scales:
        raise TooFewScales(f"only {len(scales)} dyadic scales with a nonzero modulus")
    x = np.log(scales)
    y = np.log(omegas)
    A = np.stack([x, np.ones_like(x)], axis=1)
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    quality = float(np.sqrt(np.mean(resid**2)))
    return float(coef[0]), quality, {"r": scales, "omega": omegas}
