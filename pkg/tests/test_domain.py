import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mixlap.domain import Domain, GridFunction, build_grid, boundary_distance
from mixlap.errors import BadSpacing, EmptyInterior, GridMismatch, MixlapError, NotInterior


def test_interval_quarter_spacing():
    g = build_grid(Domain.interval(0, 1), 0.25)
    assert g.n_interior == 3
    np.testing.assert_allclose(g.coords[:, 0], [0.25, 0.5, 0.75])


def test_interval_half_spacing():
    g = build_grid(Domain.interval(0, 1), 0.5)
    assert g.n_interior == 1
    assert g.coords[0, 0] == 0.5
    assert boundary_distance(g, 0) == 0.5


def test_ball_half_spacing_has_nine_nodes():
    g = build_grid(Domain.ball((0, 0), 1), 0.5)
    # enumerate the lattice independently
    ax = np.arange(-1, 1.0001, 0.5)
    pts = [(x, y) for x in ax for y in ax if x * x + y * y < 1 - 1e-12]
    assert g.n_interior == len(pts) == 9
    assert {tuple(p) for p in np.round(g.coords, 12)} == {tuple(p) for p in np.round(pts, 12)}


@pytest.mark.parametrize(
    "dom,h,node,expected",
    [
        (Domain.interval(0, 1), 0.25, (1,), 0.25),
        (Domain.ball((0, 0), 1), 0.5, (3, 2), 0.5),
        (Domain.rectangle((0, 0), (1, 1)), 0.25, (1, 2), 0.25),
    ],
)
def test_boundary_distance_examples(dom, h, node, expected):
    g = build_grid(dom, h)
    assert boundary_distance(g, node) == pytest.approx(expected, abs=1e-15)


def test_boundary_nodes_are_exterior():
    g = build_grid(Domain.interval(0, 1), 0.125)
    assert g.coords[:, 0].min() == 0.125 and g.coords[:, 0].max() == 0.875
    with pytest.raises(NotInterior):
        boundary_distance(g, (0,))


def test_spacing_errors():
    with pytest.raises(BadSpacing):
        build_grid(Domain.interval(0, 1), 0.0)
    with pytest.raises(BadSpacing):
        build_grid(Domain.interval(0, 1), 0.75)


def test_empty_interior():
    # a thin rectangle whose interior misses every lattice node of the box
    with pytest.raises(EmptyInterior):
        build_grid(Domain.rectangle((0, 0), (1, 0.5)), 0.5)


def test_zero_extension_and_read_only():
    g = build_grid(Domain.interval(0, 1), 0.125)
    u = GridFunction.from_callable(g, lambda x: 1 + x[:, 0])
    assert u.at((0,)) == 0.0 and u.at((8,)) == 0.0 and u.at((100,)) == 0.0
    assert u.at((4,)) == 1.5
    full = u.on_lattice()
    assert full[0] == 0 and full[-1] == 0
    with pytest.raises(ValueError):
        u.values[0] = 3.0
    with pytest.raises(MixlapError):
        GridFunction(g, np.full(g.n_interior, np.nan))


def test_grid_mismatch():
    a = GridFunction.zeros(build_grid(Domain.interval(0, 1), 0.125))
    b = GridFunction.zeros(build_grid(Domain.interval(0, 1), 0.0625))
    with pytest.raises(GridMismatch):
        a + b


@pytest.mark.parametrize("dom", [Domain.interval(-1, 2), Domain.rectangle((0, 0), (2, 1))])
def test_refinement_nesting(dom):
    coarse = build_grid(dom, 0.25)
    fine = build_grid(dom, 0.125)
    fine_pts = {tuple(p) for p in np.round(fine.coords, 12)}
    assert all(tuple(p) in fine_pts for p in np.round(coarse.coords, 12))


def test_annulus_hint_validation():
    Domain("interval", a=0.0, b=1.0, annulus=((-0.75,), 2.6457513110645907))
    with pytest.raises(MixlapError):
        Domain("interval", a=0.0, b=1.0, annulus=((0.5,), 1.0))


@settings(max_examples=40, deadline=None)
@given(
    kind=st.sampled_from(["interval", "ball", "rectangle"]),
    h=st.sampled_from([0.05, 0.1, 0.2]),
    seed=st.integers(0, 2**31 - 1),
)
def test_boundary_distance_is_a_lower_bound(kind, h, seed):
    dom = {
        "interval": Domain.interval(-0.3, 0.9),
        "ball": Domain.ball((0.2, -0.1), 0.8),
        "rectangle": Domain.rectangle((0, 0), (1.3, 0.7)),
    }[kind]
    g = build_grid(dom, h)
    rng = np.random.default_rng(seed)
    ys = dom.boundary_samples(64, rng)
    d = np.linalg.norm(g.coords[:, None, :] - ys[None, :, :], axis=-1).min(axis=1)
    assert np.all(g.boundary_dist <= d + 1e-12)
    assert np.all(g.boundary_dist > 0)
    assert np.all(g.boundary_dist <= dom.diameter)
