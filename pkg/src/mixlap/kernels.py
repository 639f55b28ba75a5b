"""Translation-invariant stencil tables for the restricted fractional Laplacian.

The discrete operator at a lattice node x_i is the fractional Laplacian of the
piecewise-linear (1D) or bilinear (2D) interpolant of the nodal values,

    (-Δ)^s_h u(x_i) = c_{n,s} h^{-2s} [ D0 u_i + Σ_{k≠0} W_k u_{i+k} ],

where W_k = -∫ φ_k(y) |y|^{-n-2s} dy on the unit lattice and φ_k is the hat
function of node k. Because the hats form a partition of unity,
D0 = -Σ_{k≠0} W_k; the part of that sum beyond the table is a closed-form tail.

For s < 1/2 the interpolant is integrated exactly against the kernel on every
cell, including the cells touching the singularity. For s ≥ 1/2 that integral
diverges at the node (the interpolant has a kink there), so on the cells
adjacent to the node the second difference is replaced by its quadratic model
z·D²u·z, i.e. a scaled discrete Laplacian.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate
from scipy.special import gamma

NEAR_MODELS = ("interp", "quadratic")


def normalization_constant(n: int, s: float) -> float:
    """c_{n,s} = 4^s Γ(n/2 + s) / (π^{n/2} |Γ(-s)|)."""
    return float(4.0**s * gamma(n / 2 + s) / (np.pi ** (n / 2) * abs(gamma(-s))))


def default_near_model(s: float) -> str:
    return "interp" if s < 0.5 else "quadratic"


@dataclass(frozen=True, eq=False)
class StencilTable:
    """Unit-lattice weights; ``weights[center] = D0`` and the rest are W_k ≤ 0."""

    n: int
    s: float
    near_model: str
    radius: int  # table covers offsets |k|_∞ ≤ radius
    weights: np.ndarray
    tail: float  # Σ_{|k|_∞ > radius} W_k (negative)

    @property
    def diagonal(self) -> float:
        return float(self.weights[(self.radius,) * self.n])

    def weight(self, offset) -> float:
        idx = tuple(int(o) + self.radius for o in np.atleast_1d(offset))
        return float(self.weights[idx])


def _powdiff(a, b, t):
    """(b^t - a^t) / t for a, b > 0, continuous at t = 0."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if abs(t) < 1e-12:
        return np.log(b / a)
    return a**t * np.expm1(t * np.log(b / a)) / t


def _m0(a, b, s):
    # ∫_a^b y^{-1-2s} dy, a > 0
    return _powdiff(a, b, -2 * s)


def _m1(a, b, s):
    # ∫_a^b y^{-2s} dy, a > 0
    return _powdiff(a, b, 1 - 2 * s)


def _table_1d(s: float, radius: int, near_model: str):
    k = np.arange(1, radius + 1, dtype=float)
    W = np.zeros(radius + 1)
    # interior of the hat support away from the origin
    kk = k[1:]
    left = _m1(kk - 1, kk, s) - (kk - 1) * _m0(kk - 1, kk, s)
    right = (kk + 1) * _m0(kk, kk + 1, s) - _m1(kk, kk + 1, s)
    W[2:] = -(left + right)
    right1 = 2 * _m0(1.0, 2.0, s) - _m1(1.0, 2.0, s)
    if near_model == "interp":
        W[1] = -(1.0 / (1 - 2 * s) + right1)  # ∫_0^1 y^{-2s} dy = 1/(1-2s)
    else:
        W[1] = -(right1 + 1.0 / (2 - 2 * s))
    M = float(radius)
    tail = -(_m1(M, M + 1, s) - M * _m0(M, M + 1, s) + (M + 1) ** (-2 * s) / (2 * s))
    D0 = -2.0 * (W[1:].sum() + tail)
    full = np.concatenate([W[:0:-1], [D0], W[1:]])
    return full, 2.0 * tail


def _composite_gauss(order: int, pieces: int):
    x, w = np.polynomial.legendre.leggauss(order)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    xs = (np.arange(pieces)[:, None] + x[None, :]).ravel() / pieces
    ws = np.tile(w, pieces) / pieces
    return xs, ws


def _cell_moments(P, Q, s, order, pieces):
    """∫ over cells [p,p+1]×[q,q+1] of {1, ξ, η, ξη}·|y|^{-2-2s}."""
    xs, ws = _composite_gauss(order, pieces)
    X = P[:, None, None] + xs[None, :, None]
    Y = Q[:, None, None] + xs[None, None, :]
    K = (X * X + Y * Y) ** (-1.0 - s) * (ws[:, None] * ws[None, :])[None]
    xi = xs[None, :, None]
    eta = xs[None, None, :]
    m00 = K.sum(axis=(1, 2))
    m10 = (K * xi).sum(axis=(1, 2))
    m01 = (K * eta).sum(axis=(1, 2))
    m11 = (K * xi * eta).sum(axis=(1, 2))
    return m00, m10, m01, m11


@lru_cache(maxsize=None)
def _origin_cell_constants(s: float):
    """Exact integrals over [0,1]² of y1(1-y2)|y|^{-2-2s} and y1 y2 |y|^{-2-2s} (s < 1/2).

    Each triangle of the cell is mapped to the unit square by a Duffy
    substitution, which separates the radial power from a smooth angular
    factor.
    """
    J0 = integrate.fixed_quad(lambda t: (1 + t * t) ** (-1 - s), 0, 1, n=64)[0]
    J1 = (1 - 2.0 ** (-s)) / (2 * s)
    I1 = (J0 + J1) / (1 - 2 * s)
    I12 = J1 / (1 - s)
    return I1 - I12, I12


@lru_cache(maxsize=None)
def square_exterior_factor(s: float) -> float:
    """Θ(s) with ∫_{|y|_∞ > a} |y|^{-2-2s} dy = Θ(s) a^{-2s} / (2s)."""
    v = integrate.fixed_quad(lambda t: np.cos(t) ** (2 * s), 0, np.pi / 4, n=64)[0]
    return 8.0 * v


@lru_cache(maxsize=None)
def square_second_moment(s: float) -> float:
    """∫_{[-1,1]²} |z|^{2} |z|^{-2-2s} dz."""
    v = integrate.fixed_quad(lambda t: np.cos(t) ** (2 * s - 2), 0, np.pi / 4, n=64)[0]
    return 8.0 * v / (2 - 2 * s)


def _table_2d(s: float, radius: int, near_model: str):
    M = radius
    lo, hi = -M - 1, M  # lower-left corners of every cell meeting the table supports
    p = np.arange(lo, hi + 1)
    P, Q = np.meshgrid(p, p, indexing="ij")
    dist = np.hypot(np.maximum(np.maximum(P, -(P + 1)), 0), np.maximum(np.maximum(Q, -(Q + 1)), 0))
    LL = np.zeros(P.shape)
    LR = np.zeros(P.shape)
    UL = np.zeros(P.shape)
    UR = np.zeros(P.shape)
    origin = (P >= -1) & (P <= 0) & (Q >= -1) & (Q <= 0)
    for sel, order, pieces in (
        (~origin & (dist < 3), 8, 8),
        (~origin & (dist >= 3) & (dist < 12), 8, 1),
        (~origin & (dist >= 12), 5, 1),
    ):
        if not sel.any():
            continue
        m00, m10, m01, m11 = _cell_moments(P[sel].astype(float), Q[sel].astype(float), s, order, pieces)
        LL[sel] = m00 - m10 - m01 + m11
        LR[sel] = m10 - m11
        UL[sel] = m01 - m11
        UR[sel] = m11
    if near_model == "interp":
        a, b = _origin_cell_constants(s)
        # in each origin cell the two corners adjacent to the node get `a`,
        # the opposite corner gets `b`; the node's own corner is left out.
        c0 = -lo  # array position of cell corner 0
        LR[c0, c0], UL[c0, c0], UR[c0, c0] = a, a, b  # [0,1]x[0,1]
        LL[c0 - 1, c0], UL[c0 - 1, c0], LR[c0 - 1, c0] = a, b, 0.0  # [-1,0]x[0,1]
        UR[c0 - 1, c0] = a
        LL[c0, c0 - 1], UR[c0, c0 - 1], UL[c0, c0 - 1] = a, a, 0.0  # [0,1]x[-1,0]
        LR[c0, c0 - 1] = b
        LR[c0 - 1, c0 - 1], UL[c0 - 1, c0 - 1], LL[c0 - 1, c0 - 1] = a, a, b  # [-1,0]x[-1,0]
        UR[c0 - 1, c0 - 1] = 0.0
    # weight of node k gathers the four cells having k as a corner
    size = 2 * M + 1
    W = np.zeros((size, size))
    # node k = (i - M, j - M); the cell with lower-left corner c sits at array index c - lo
    sl = slice(1, 1 + size)
    sm = slice(0, size)
    W -= LL[sl, sl] + LR[sm, sl] + UL[sl, sm] + UR[sm, sm]
    # tail beyond the table: 1 - Σ_{|k|≤M} φ_k supported on the frame |y|_∞ ∈ [M, M+1]
    frame = 0.0
    last = 2 * M + 1  # array index of cells with lower-left corner M
    for i in range(last + 1):
        for j in range(last + 1):
            if not (i in (0, last) or j in (0, last)):
                continue
            pc, qc = i + lo, j + lo
            for cx, cy, val in ((pc, qc, LL), (pc + 1, qc, LR), (pc, qc + 1, UL), (pc + 1, qc + 1, UR)):
                if max(abs(cx), abs(cy)) == M + 1:
                    frame += val[i, j]
    tail = -(square_exterior_factor(s) * (M + 1.0) ** (-2 * s) / (2 * s) + frame)
    if near_model == "quadratic":
        q = square_second_moment(s) / 4.0
        for off in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            W[M + off[0], M + off[1]] -= q
    W[M, M] = 0.0
    # average the four mirror images on one quadrant, then reflect, so the
    # table has the lattice symmetries bit for bit
    q = (W[M:, M:] + W[M::-1, M:] + W[M:, M::-1] + W[M::-1, M::-1]) / 4.0
    q = 0.5 * (q + q.T)
    W[M:, M:] = q
    W[M::-1, M:] = q
    W[M:, M::-1] = q
    W[M::-1, M::-1] = q
    W[M, M] = -(W.sum() + tail)
    return W, tail


@lru_cache(maxsize=32)
def _cached_table(n: int, s: float, radius: int, near_model: str) -> StencilTable:
    if n == 1:
        w, tail = _table_1d(s, radius, near_model)
    elif n == 2:
        w, tail = _table_2d(s, radius, near_model)
    else:
        raise ValueError("only n = 1, 2 are supported")
    w.setflags(write=False)
    return StencilTable(n=n, s=s, near_model=near_model, radius=radius, weights=w, tail=tail)


def stencil_table(n: int, s: float, radius: int, near_model: str | None = None) -> StencilTable:
    """Unit-lattice table covering offsets up to ``radius`` in every axis."""
    near_model = near_model or default_near_model(s)
    if near_model not in NEAR_MODELS:
        raise ValueError(f"near_model must be one of {NEAR_MODELS}")
    if near_model == "interp" and s >= 0.5:
        raise ValueError("the interpolant's near-field integral diverges for s >= 1/2")
    return _cached_table(int(n), float(s), int(max(radius, 2)), near_model)
