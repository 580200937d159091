import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from schrovar.errors import ConstraintViolation, InvalidArgument, InvalidWeight
from schrovar.grid import Ball, SpatialGrid
from schrovar.potentials import CriticalRadiusField, abs2m_potential, psi_theta
from schrovar.weights import (
    CampanatoParams,
    ap_ball_factor,
    ap_rho_theta_constant,
    ball_terms,
    ball_weight,
    blo_defect,
    bmo_norm,
    check_self_improvement,
    check_weight_growth,
    constant_weight,
    power_weight,
    table_weight,
    weight_from_spec,
)


@pytest.fixture(scope="module")
def rho3():
    return CriticalRadiusField(abs2m_potential(1, 3))


@pytest.fixture(scope="module")
def rho1():
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return CriticalRadiusField(abs2m_potential(1, 1))


def params(rho, alpha=0.0, p=1.1, theta=0.05, q=10.0, w=None):
    return CampanatoParams(alpha, p, theta, w or constant_weight(), rho, q)


def test_ball_weight_examples():
    ball = Ball([0.0], 1.0)
    g = SpatialGrid.around_ball(ball, 500)
    assert ball_weight(constant_weight(), ball, g) == pytest.approx(1001 * g.spacing)
    assert ball_weight(power_weight(0.0), ball, g) == ball_weight(constant_weight(), ball, g)
    assert ball_weight(power_weight(1.0), ball, g) == pytest.approx(3.0, abs=5e-3)


def test_weight_positivity():
    bad = table_weight(np.array([1.0, 2.0]), SpatialGrid((np.array([0.0, 1.0]),)))
    assert bad(np.array([[0.0]])) == 1.0
    with pytest.raises(InvalidWeight):
        table_weight(np.array([1.0, 0.0]), SpatialGrid((np.array([0.0, 1.0]),)))
    with pytest.raises(InvalidWeight):
        constant_weight(0.0)
    assert weight_from_spec("power:a=2")(np.array([[1.0, 0.0]]))[0] == pytest.approx(4.0)


def test_params_validation(rho3):
    with pytest.raises(InvalidArgument):
        params(rho3, alpha=1.0)
    with pytest.raises(InvalidArgument):
        params(rho3, p=1.0)
    with pytest.raises(InvalidArgument):
        params(rho3, theta=0.0)
    with pytest.warns(UserWarning, match="q = 1.2"):
        params(rho3, q=1.2)


def test_theorem_mode_flag(rho3):
    P = params(rho3, p=1.1, theta=0.05, q=10)
    assert P.delta0 == 1.0
    assert P.constraint_lhs == pytest.approx(0.71)
    assert P.theorem_mode
    P.require_theorem_mode()
    P2 = params(rho3, p=2.0, theta=0.01, q=10)
    assert not P2.theorem_mode
    with pytest.raises(ConstraintViolation):
        P2.require_theorem_mode()


def test_ap_constant_trivial_weight(rho1):
    balls = [Ball([c], r) for c in (-0.5, 0.0, 0.8) for r in np.geomspace(1e-4, 2.0, 8)]
    rep = ap_rho_theta_constant(constant_weight(), 2.0, 0.5, balls, None, rho1)
    assert rep.constant <= 1.0
    assert rep.constant >= 0.999
    expected = [psi_theta(b, rho1(b.center), 0.5) ** -2.0 for b in balls]
    assert np.allclose(rep.per_ball, expected, rtol=1e-12)


def test_ap_duality_per_ball(rho1):
    w = power_weight(0.7)
    p, theta = 2.5, 0.3
    pd = p / (p - 1)
    dual = w.power(-1 / (p - 1))
    for c, r in [(0.0, 0.1), (0.5, 1.0), (-1.0, 3.0)]:
        b = Ball([c], r)
        lhs = ap_ball_factor(dual, pd, theta, b, rho1)
        rhs = ap_ball_factor(w, p, theta, b, rho1) ** (1 / (p - 1))
        assert lhs == pytest.approx(rhs, rel=1e-10)


def test_ap_constant_grows_with_power(rho1):
    balls = [Ball([c], r) for c in (0.0, 1.0) for r in (0.5, 2.0, 4.0)]
    vals = [ap_rho_theta_constant(power_weight(a), 2.0, 0.5, balls, None, rho1).constant for a in (0.2, 0.5, 1.0)]
    assert all(np.isfinite(vals))
    assert vals[0] < vals[1] < vals[2]


def test_bmo_norm_constant(rho3):
    five = lambda p: np.full(len(p), 5.0)
    est = bmo_norm(five, params(rho3), [[0, 0, 0], [0.4, 0.2, 0.0]])
    assert est.small_ball_part == 0.0
    assert est.rho_ball_part == pytest.approx(5.0, rel=1e-12)
    assert est.value == max(est.small_ball_part, est.rho_ball_part)
    assert bmo_norm(lambda p: np.zeros(len(p)), params(rho3), [[0, 0, 0]]).value == 0.0


@settings(max_examples=10, deadline=None)
@given(c=st.floats(-10, 10).filter(lambda v: abs(v) > 1e-3), shift=st.floats(-5, 5))
def test_bmo_homogeneity_and_shift(c, shift):
    rho = CriticalRadiusField(abs2m_potential(1, 3))
    P = params(rho)
    g = lambda p: np.sin(3 * p[:, 0]) + p[:, 1] ** 2
    centers = [[0.1, 0.0, 0.0]]
    base = bmo_norm(g, P, centers, n_radii=3)
    scaled = bmo_norm(lambda p: c * g(p), P, centers, n_radii=3)
    assert scaled.value == pytest.approx(abs(c) * base.value, rel=1e-10)
    shifted = bmo_norm(lambda p: g(p) + shift, P, centers, n_radii=3)
    assert shifted.small_ball_part == pytest.approx(base.small_ball_part, rel=1e-9, abs=1e-12)


def test_bmo_family_monotone(rho3):
    g = lambda p: np.log(np.sqrt(np.sum(p * p, axis=1)) + 0.05)
    P = params(rho3)
    small = bmo_norm(g, P, [[0, 0, 0]], n_radii=3)
    big = bmo_norm(g, P, [[0, 0, 0], [0.3, 0.1, 0.0]], n_radii=6)
    assert big.value >= small.value
    assert big.family_size > small.family_size


def test_blo_examples(rho1):
    P = params(rho1)
    est = blo_defect(lambda p: np.full(len(p), 2.0), P, [[0.0]])
    assert est.small_ball_part == 0.0
    rho0 = rho1([0.0])
    radii = [np.geomspace(0.01, 0.5, 5) * rho0]
    e = blo_defect(lambda p: np.abs(p[:, 0]), P, [[0.0]], radii=radii, cells_per_radius=400)
    for rec in e.records:
        if rec.part == "small":
            assert rec.ratio == pytest.approx(rec.radius / 2, rel=1e-2)
    assert np.isfinite(e.small_ball_part)


def test_factor_two_domination(rho3, rng):
    for _ in range(10):
        a = rng.normal(size=3)
        f = lambda p, a=a: np.sin(p @ a) + np.abs(p[:, 0] - 0.1)
        for r in (0.02, 0.1, 0.5):
            t = ball_terms(f, Ball(rng.uniform(-0.5, 0.5, 3), r), constant_weight())
            assert t.oscillation <= 2 * t.defect * (1 + 1e-12) + 1e-15


def test_weight_growth_trivial_weight(rho3):
    reps = check_weight_growth(constant_weight(), 2.0, 0.1, Ball([0.1, 0, 0], 0.2), 3, rho3)
    ids = [r.inequality_id for r in reps]
    assert ids == ["weight-subset-ratio", "weight-dilation-growth"]
    assert all(r.constant <= 1.0 for r in reps)
    assert reps[1].sample_count == 3


def test_weight_growth_power_weight(rho1):
    reps = check_weight_growth(power_weight(1.0), 2.0, 0.5, Ball([0.3], 0.4), 4, rho1)
    assert all(np.isfinite(r.constant) and r.constant > 0 for r in reps)


def test_weight_growth_shrinks_kmax(rho1):
    g = SpatialGrid.centered(1, 1.0, 201)
    with pytest.warns(UserWarning, match="kmax reduced"):
        reps = check_weight_growth(constant_weight(), 2.0, 0.5, Ball([0.0], 0.2), 4, rho1, grid=g)
    assert reps[1].details["kmax"] == 2


def test_self_improvement(rho3):
    P = params(rho3, p=2.0, theta=0.01)
    const = lambda p: np.full(len(p), 3.0)
    reps = check_self_improvement(const, P, 2.0, [[0, 0, 0]])
    assert reps[0].constant == 0.0
    g = lambda p: np.cos(2 * p[:, 0]) * np.exp(-np.sum(p * p, axis=1))
    reps = check_self_improvement(g, P, 2.0, [[0, 0, 0], [0.3, 0, 0]])
    assert all(np.isfinite(r.constant) for r in reps)
    assert "gamma" in reps[1].details and reps[1].details["gamma"] >= 0
    with pytest.raises(InvalidArgument):
        check_self_improvement(g, P, 2.5, [[0, 0, 0]])
