import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from mixlap.kernels import default_near_model, normalization_constant, stencil_table

# W_k = -∫ hat_k(y)|y|^{-1-2s} dy by adaptive quadrature on each half of the hat
W1D = {
    0.1: {1: -1.6181179587984449, 2: -0.4623597993987782, 5: -0.146254944541773},
    0.25: {1: -2.343145750507633, 2: -0.38550526870925117, 5: -0.09058484886560518},
    0.4: {1: -5.320635281269757, 2: -0.3229110648659543, 5: -0.056139569026749395},
}

# 2D Q1 weights by scipy dblquad over the four cells of the hat support
W2D = {
    (0.25, (1, 0)): -3.6470875155034785,
    (0.25, (1, 1)): -0.676008398685947,
    (0.25, (2, 1)): -0.15031451202918522,
    (0.25, (5, 3)): -0.012371398086949552,
    (0.75, (2, 1)): -0.0756761185819205,
    (0.75, (5, 3)): -0.0021538922028766848,
}


@pytest.mark.parametrize("n,s", [(1, 0.25), (2, 0.75), (1, 0.5), (2, 0.1)])
def test_normalization_constant_matches_gamma_identity(n, s):
    assert normalization_constant(n, s) == pytest.approx(oracles.c_ns(n, s), rel=1e-13)


def test_normalization_constant_frozen():
    assert normalization_constant(1, 0.25) == pytest.approx(0.19947114020071638, rel=1e-14)
    assert normalization_constant(2, 0.75) == pytest.approx(0.17116712969055234, rel=1e-14)


def test_near_model_switch():
    assert default_near_model(0.49) == "interp"
    assert default_near_model(0.5) == "quadratic"


@pytest.mark.parametrize("s", sorted(W1D))
def test_1d_weights_against_quadrature(s):
    t = stencil_table(1, s, 8, "interp")
    for k, ref in W1D[s].items():
        assert t.weight((k,)) == pytest.approx(ref, rel=1e-12)
        assert t.weight((-k,)) == t.weight((k,))


@pytest.mark.parametrize("s", [0.05, 0.1, 0.25, 0.4, 0.45])
def test_1d_diagonal_interp_closed_form(s):
    t = stencil_table(1, s, 16, "interp")
    assert t.diagonal == pytest.approx(2 * (1 / (1 - 2 * s) + 1 / (2 * s)), rel=1e-12)


@pytest.mark.parametrize("s", [0.5, 0.6, 0.75, 0.9])
def test_1d_diagonal_quadratic_closed_form(s):
    t = stencil_table(1, s, 16, "quadratic")
    assert t.diagonal == pytest.approx(2 * (1 / (2 * s) + 1 / (2 - 2 * s)), rel=1e-12)


@pytest.mark.parametrize("key", sorted(W2D))
def test_2d_weights_against_dblquad(key):
    s, off = key
    t = stencil_table(2, s, 8)
    assert t.weight(off) == pytest.approx(W2D[key], rel=1e-9)
    # lattice symmetries
    a, b = off
    for o in [(b, a), (-a, b), (a, -b), (-b, -a)]:
        assert t.weight(o) == pytest.approx(t.weight(off), rel=1e-13)


@pytest.mark.parametrize("n", [1, 2])
def test_diagonal_independent_of_radius(n):
    small = stencil_table(n, 0.3, 4)
    large = stencil_table(n, 0.3, 24)
    assert small.diagonal == pytest.approx(large.diagonal, rel=1e-11)
    assert small.weight((1,) * n) == large.weight((1,) * n)


@settings(max_examples=25, deadline=None)
@given(n=st.sampled_from([1, 2]), s=st.floats(0.05, 0.95), radius=st.integers(2, 10))
def test_table_sign_structure(n, s, radius):
    t = stencil_table(n, s, radius)
    w = t.weights.copy()
    center = (radius,) * n
    assert w[center] > 0
    w[center] = 0
    assert np.all(w <= 0)
    # diagonal exceeds the off-diagonal mass inside the table: the rest is exterior mass
    assert t.diagonal + w.sum() > 0
    assert np.array_equal(t.weights, np.flip(t.weights))
