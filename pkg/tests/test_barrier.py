import numpy as np
import pytest

from mixlap.barrier import (
    Barrier,
    choose_annulus,
    comparison_bound,
    concave_transform_check,
    concavity_checks,
    max_principle_spot_check,
    transform_values,
    verify_annulus,
    verify_supersolution,
)
from mixlap.domain import Domain, build_grid
from mixlap.errors import AnnulusFailure, MaxPrincipleViolated
from mixlap.operators import assemble

UNIT = Domain.interval(0, 1)
DISK = Domain.ball((0, 0), 1)


def test_choose_annulus_interval():
    x0, R = choose_annulus(UNIT)
    np.testing.assert_allclose(x0, [-0.75], rtol=1e-15)
    # sup distance 1.75, inf 0.75: R = sqrt(4·1.75/3 · 4·0.75) = sqrt(7)
    assert R == pytest.approx(np.sqrt(7.0), rel=1e-14)


def test_choose_annulus_ball():
    x0, R = choose_annulus(DISK)
    np.testing.assert_allclose(x0, [-2.5, 0.0], rtol=1e-15)
    assert R == pytest.approx(np.sqrt(28.0), rel=1e-14)
    assert verify_annulus(build_grid(DISK, 0.25), x0, R)


def test_barrier_rejects_bad_annulus():
    g = build_grid(UNIT, 0.125)
    with pytest.raises(AnnulusFailure):
        Barrier((0.5,), 1.0, 1.0, g)


def test_barrier_closed_forms():
    g = build_grid(UNIT, 1 / 32)
    x0, R = choose_annulus(UNIT)
    w = Barrier(tuple(x0), R, 2.0, g)
    x = g.coords
    r2 = (x[:, 0] - x0[0]) ** 2
    np.testing.assert_allclose(w(x), 1 - np.exp(2.0 * (r2 - R * R)), rtol=1e-13)
    np.testing.assert_allclose(w.neg_laplacian(x), np.exp(2.0 * (r2 - R * R)) * (4.0 + 16.0 * r2), rtol=1e-13)
    assert w(np.array([[x0[0] + R + 0.1]]))[0] == 0.0
    # fourth derivative of e^{βr²} in 1D at the far point
    r = 1.75
    d4 = np.exp(2.0 * (r * r - R * R)) * (16 * 16 * r**4 + 48 * 8 * r**2 + 12 * 4)
    assert w.fourth_derivative_bound(r) == pytest.approx(d4, rel=1e-14)


@pytest.mark.parametrize("dom,h", [(UNIT, 2.0**-6), (DISK, 0.1)])
@pytest.mark.parametrize("s", [0.25, 0.75])
def test_supersolution(dom, h, s):
    res = verify_supersolution(build_grid(dom, h), s)
    rep = res.report
    assert rep.passed
    assert rep.lhs >= 1 - res.eps_h
    assert res.eps_h <= 10 * h**2 * res.derivative_bound * (1 + 1e-12)
    assert res.local_max_err <= res.local_err_bound * (1 + 1e-9)
    assert rep.details["w_min"] > 0
    alphas = [e["alpha0"] for e in res.sweep]
    assert rep.details["alpha0_unscaled"] == max(alphas)


def test_concave_transform_and_comparison():
    g = build_grid(UNIT, 2.0**-6)
    s = 0.25
    res = verify_supersolution(g, s)
    asm = assemble(g, s)
    for lam in (1.0, 10.0):
        assert concave_transform_check(res, s, lam).passed
        h_rhs = np.random.default_rng(0).uniform(-1, 1, g.n_interior)
        rep = comparison_bound(asm, lam, h_rhs, transform=transform_values(res, lam))
        assert rep.passed and rep.details["transform_margin"] >= 0


@pytest.mark.parametrize("lam", [5.0, 10.0, 50.0])
def test_comparison_bound(lam):
    asm = assemble(build_grid(DISK, 0.2), 0.4)
    rng = np.random.default_rng(1)
    rep = comparison_bound(asm, lam, rng.uniform(-2, 2, asm.n_interior))
    assert rep.passed
    assert 0 <= rep.details["w_lambda_min"] <= rep.details["w_lambda_max"] < 1 / lam
    assert rep.lhs <= rep.rhs * (1 + 1e-12)


def test_comparison_strict_raises_on_bad_transform():
    asm = assemble(build_grid(UNIT, 1 / 16), 0.25)
    with pytest.raises(MaxPrincipleViolated):
        comparison_bound(asm, 1.0, np.ones(asm.n_interior), transform=np.zeros(asm.n_interior), strict=True)


def test_max_principle_spot_check():
    asm = assemble(build_grid(DISK, 0.25), 0.3)
    out = max_principle_spot_check(asm, 0.0, 10, np.random.default_rng(2))
    assert out["violations"] == 0 and out["min_u"] >= 0


def test_concavity_checks():
    g = build_grid(DISK, 0.1)
    res = verify_supersolution(g, 0.25)
    out = concavity_checks(res.barrier)
    assert out["passed"] and out["hessian_max_eig"] < 0
