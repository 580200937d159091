import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from schrovar.errors import InvalidArgument, OutOfDomain
from schrovar.grid import SpatialGrid
from schrovar.potentials import abs2m_potential, constant_potential
from schrovar.semigroup import (
    KernelHandle,
    apply_semigroup,
    build_spectral_engine,
    compositions,
    engine_handle,
    free_box_kernel,
    handle_from_spec,
    heat_kernel,
    mass_defect,
    mehler_kernel,
    point_curve,
    poisson_kernel_by_subordination,
    psi_profile,
)


def test_free_spectrum(free_engine):
    lam = free_engine.eigenvalues
    assert lam[0] == pytest.approx((math.pi / 20) ** 2, rel=1e-2)
    j = np.arange(1, 51)
    assert np.allclose(lam[:50], (j * math.pi / 20) ** 2, rtol=1e-10)


def test_second_difference_stencil_spectrum():
    e = build_spectral_engine(None, 10.0, 512, 16, stencil="fd2")
    assert e.eigenvalues[0] == pytest.approx((math.pi / 20) ** 2, rel=1e-2)
    o = build_spectral_engine(abs2m_potential(1, 1), 12.0, 1024, 8, stencil="fd2")
    assert o.eigenvalues[0] == pytest.approx(1.0, rel=1e-2)


def test_oscillator_levels(oscillator_engine):
    lam = oscillator_engine.eigenvalues
    assert lam[0] == pytest.approx(1.0, rel=1e-2)
    assert np.allclose(lam[:20], 2 * np.arange(1, 21) - 1, rtol=1e-2)
    assert np.all(np.diff(lam) >= 0) and lam[0] > 0


def test_eigenvectors_orthonormal(oscillator_engine):
    e = oscillator_engine
    G = e.h * e.eigenvectors.T @ e.eigenvectors
    assert np.max(np.abs(G - np.eye(e.m))) < 1e-10


def test_off_grid_interpolation_matches_nodes(oscillator_engine):
    e = oscillator_engine
    assert np.allclose(e.eigenfunctions(e.nodes[100:110]), e.eigenvectors[100:110], atol=1e-10)
    with pytest.raises(OutOfDomain):
        e.eigenfunctions([13.0])


def test_engine_validation():
    with pytest.raises(InvalidArgument):
        build_spectral_engine(None, 1.0, 32)
    with pytest.raises(InvalidArgument):
        build_spectral_engine(None, 1.0, 64, 65)
    with pytest.raises(InvalidArgument):
        build_spectral_engine(None, 1.0, 64, stencil="nope")


def test_truncation_tail():
    e_full = build_spectral_engine(abs2m_potential(1, 1), 8.0, 256)
    e_half = build_spectral_engine(abs2m_potential(1, 1), 8.0, 256, 128)
    x = np.linspace(-3, 3, 13)
    for t in (0.1, 0.5, 2.0):
        a = heat_kernel(KernelHandle(1, (e_full,)), t, x[:, None], x[None, :])
        b = heat_kernel(KernelHandle(1, (e_half,)), t, x[:, None], x[None, :])
        assert np.max(np.abs(a - b)) < 1e-8


def test_free_closed_form_at_origin():
    h = KernelHandle(3, closed_form="free")
    assert heat_kernel(h, 1 / (4 * math.pi), [0, 0, 0], [0, 0, 0]) == pytest.approx(1.0, rel=1e-14)


def test_mehler_at_origin(oscillator_handle):
    oracle = (2 * math.pi * math.sinh(1.0)) ** -0.5
    assert float(mehler_kernel(0.5, 0.0, 0.0)) == pytest.approx(oracle, rel=1e-14)
    assert heat_kernel(oscillator_handle, 0.5, 0.0, 0.0) == pytest.approx(oracle, rel=1e-7)
    assert oracle == pytest.approx(0.36801, abs=1e-5)


def test_mehler_off_diagonal(oscillator_handle):
    x = np.linspace(-3, 3, 7)
    for t in (0.1, 0.7):
        a = heat_kernel(oscillator_handle, t, x[:, None], x[None, :])
        b = mehler_kernel(t, x[:, None], x[None, :])
        assert np.max(np.abs(a - b)) <= 1e-7 * np.max(b)


def test_kernel_symmetric_and_positive(small_oscillator, rng):
    x, y = rng.uniform(-3, 3, (2, 40))
    for t in (0.05, 0.4, 3.0):
        a = heat_kernel(small_oscillator, t, x, y)
        b = heat_kernel(small_oscillator, t, y, x)
        assert np.max(np.abs(a - b)) <= 1e-9 * np.max(np.abs(a))
        assert np.all(a >= -1e-10)


def test_t_must_be_positive(small_oscillator):
    with pytest.raises(InvalidArgument):
        heat_kernel(small_oscillator, 0.0, 0.0, 0.0)


def test_derivative_matches_finite_difference(small_oscillator, rng):
    h0, h1 = small_oscillator, small_oscillator.with_order(1)
    x, y = rng.uniform(-2, 2, (2, 10))
    for t in (0.1, 0.5, 1.5):
        dt = 1e-4 * t
        fd = (heat_kernel(h0, t + dt, x, y) - heat_kernel(h0, t - dt, x, y)) / (2 * dt) * t
        exact = heat_kernel(h1, t, x, y)
        assert np.max(np.abs(fd - exact)) <= 1e-6 * np.max(np.abs(exact))


def test_tensor_kernel_is_product():
    h = engine_handle(abs2m_potential(1, 2), 6.0, 128)
    e = h.engines[0]
    H1 = KernelHandle(1, (e,))
    x, y = np.array([0.3, -0.4]), np.array([-0.2, 0.5])
    t = 0.4
    prod = heat_kernel(H1, t, x[0], y[0]) * heat_kernel(H1, t, x[1], y[1])
    assert heat_kernel(h, t, x, y) == pytest.approx(prod, rel=1e-12)
    # t d_t of a product via the product rule
    d1 = heat_kernel(H1.with_order(1), t, x[0], y[0]) * heat_kernel(H1, t, x[1], y[1]) + heat_kernel(
        H1, t, x[0], y[0]
    ) * heat_kernel(H1.with_order(1), t, x[1], y[1])
    assert heat_kernel(h.with_order(1), t, x, y) == pytest.approx(d1, rel=1e-12)


def test_tensor_path_matches_leibniz_path():
    h = engine_handle(abs2m_potential(1, 2), 5.0, 96, 24, k=2)
    x, y = np.array([0.3, -0.4]), np.array([-0.2, 0.5])
    from schrovar.semigroup import _tensor_kernel

    a = heat_kernel(h, 0.3, x, y)
    b = _tensor_kernel(h, 0.3, x[None], y[None])[0]
    assert a == pytest.approx(b, rel=1e-10)


def test_compositions():
    comps = dict(compositions(2, 3))
    assert comps[(2, 0, 0)] == 1 and comps[(1, 1, 0)] == 2
    assert sum(comps.values()) == 3**2


def test_psi_profile_examples():
    p0 = psi_profile(0, 3)
    assert p0(0.0) == pytest.approx((4 * math.pi) ** -1.5)
    p1 = psi_profile(1, 1)
    u = np.linspace(0, 4, 9)
    assert np.allclose(p1(u), (4 * math.pi) ** -0.5 * np.exp(-(u**2) / 4) * (u**2 / 4 - 0.5), rtol=1e-14)
    assert p1(0.0) == pytest.approx(-0.14105, abs=1e-5)


@pytest.mark.parametrize("k,d", [(1, 1), (2, 1), (1, 3), (2, 3), (3, 2)])
def test_psi_profile_finite_difference(k, d):
    prof, prev = psi_profile(k, d), psi_profile(k - 1, d)
    z = np.array([[0.3] * d, [1.1] * d, [0.0] * d])
    for t in (0.2, 1.0, 3.0):
        dt = 1e-4 * t
        # t^k d^k = t d (t^{k-1} d^{k-1}) - (k-1) t^{k-1} d^{k-1}
        g = lambda s: prev.kernel(z, s)
        fd = t * (g(t + dt) - g(t - dt)) / (2 * dt) - (k - 1) * g(t)
        ex = prof.kernel(z, t)
        assert np.allclose(fd, ex, rtol=1e-6, atol=1e-9 * np.max(np.abs(ex)))


def test_free_engine_matches_image_oracle(free_engine):
    h = KernelHandle(1, (free_engine,))
    x = np.linspace(-5, 5, 11)
    for k in (0, 1):
        for t in (0.05, 1.0, 5.0):
            a = heat_kernel(h.with_order(k), t, x[:, None], x[None, :])
            b = free_box_kernel(k, t, x[:, None], x[None, :], 10.0)
            scale = t**-0.5 * np.max(np.abs(psi_profile(k, 1)(np.linspace(0, 6, 200))))
            assert np.max(np.abs(a - b)) / scale < 1e-9


def test_apply_eigenfunction(oscillator_handle, oscillator_engine):
    e = oscillator_engine
    g = e.grid()
    phi = e.eigenvectors[:, 0]
    for t in (0.1, 1.0):
        out = apply_semigroup(oscillator_handle, phi, g, t)
        assert np.max(np.abs(out - np.exp(-e.eigenvalues[0] * t) * phi)) < 1e-9


def test_apply_constant_contracts(small_oscillator):
    g = small_oscillator.grid()
    for t in (0.01, 0.3, 2.0):
        out = apply_semigroup(small_oscillator, np.ones(g.shape), g, t)
        assert np.all(out <= 1 + 1e-8)


def test_semigroup_law(small_oscillator, rng):
    g = small_oscillator.grid()
    f = rng.normal(size=g.shape)
    a = apply_semigroup(small_oscillator, apply_semigroup(small_oscillator, f, g, 0.2), g, 0.3)
    b = apply_semigroup(small_oscillator, f, g, 0.5)
    assert np.max(np.abs(a - b)) < 1e-7


def test_apply_grid_mismatch(small_oscillator):
    with pytest.raises(InvalidArgument):
        apply_semigroup(small_oscillator, np.ones(10), SpatialGrid.centered(1, 1.0, 10), 1.0)


def test_positivity_preserved(small_oscillator, rng):
    g = small_oscillator.grid()
    f = rng.uniform(0, 1, g.shape)
    assert np.all(apply_semigroup(small_oscillator, f, g, 0.05) >= -1e-10)


def test_point_curve_matches_apply(small_oscillator, rng):
    g = small_oscillator.grid()
    f = np.exp(-g.axes[0] ** 2)
    i = 70
    x = g.axes[0][i]
    times = [0.1, 0.5]
    curve = point_curve(small_oscillator.with_order(1), f, g, x, times)
    direct = [apply_semigroup(small_oscillator.with_order(1), f, g, t)[i] for t in times]
    assert np.allclose(curve, direct, rtol=1e-10, atol=1e-13)


def test_point_curve_3d_matches_kernel_quadrature():
    h = engine_handle(abs2m_potential(1, 3), 4.0, 64, 20)
    g = h.grid()
    P = g.points()
    f = np.exp(-np.sum(P**2, axis=-1))
    x = np.array([0.2, -0.1, 0.3])
    val = point_curve(h, f, g, x, [0.4])[0]
    assert val > 0
    K = heat_kernel(h, 0.4, x[None, :], P.reshape(-1, 3))
    assert val == pytest.approx(float(K @ f.reshape(-1)) * g.cell_volume, rel=1e-8)


def test_mass_defect(small_oscillator):
    h0 = small_oscillator
    for t in (0.01, 0.2, 1.0):
        assert 0.0 <= mass_defect(h0, 0.3, t) <= 1.0
    free = KernelHandle(1, closed_form="free", k=1)
    grid = SpatialGrid.centered(1, 12.0, 4001)
    assert abs(mass_defect(free, 0.0, 0.5, grid)) < 1e-8
    with pytest.raises(InvalidArgument):
        mass_defect(free, 0.0, 0.5)


def test_subordinated_poisson_kernel():
    h = engine_handle(abs2m_potential(1, 1), 8.0, 256, 128)
    x, y = np.array([0.0, 0.5, -1.0]), np.array([0.2, -0.3, -0.8])
    for t in (0.2, 0.8):
        spectral = heat_kernel(h.with_beta(0.5), t, x, y)
        sub = poisson_kernel_by_subordination(h, t, x, y, n_nodes=1500)
        assert np.allclose(spectral, sub, rtol=2e-4, atol=1e-6)


def test_handle_from_spec():
    h = handle_from_spec({"L": 6, "n": 96, "m": 40, "potential": "abs2m:m=1", "k": 1, "d": 2})
    assert h.d == 2 and h.k == 1 and h.engines[0] is h.engines[1]
    assert handle_from_spec({"potential": "free", "d": 3}).closed_form == "free"
    with pytest.raises(InvalidArgument):
        handle_from_spec({"potential": "abs2m:m=1"})


def test_handle_validation():
    with pytest.raises(InvalidArgument):
        KernelHandle(1, closed_form="free", k=-1)
    with pytest.raises(InvalidArgument):
        KernelHandle(1, closed_form="free", beta=1.5)
    with pytest.raises(InvalidArgument):
        KernelHandle(1)


@settings(max_examples=20, deadline=None)
@given(t=st.floats(0.02, 3.0), x=st.floats(-2.5, 2.5), y=st.floats(-2.5, 2.5))
def test_mehler_property(t, x, y):
    h = _shared_engine()
    assert heat_kernel(h, t, x, y) == pytest.approx(float(mehler_kernel(t, x, y)), abs=1e-7)


_ENGINE = {}


def _shared_engine():
    if "h" not in _ENGINE:
        _ENGINE["h"] = engine_handle(abs2m_potential(1, 1), 9.0, 512, 200)
    return _ENGINE["h"]
