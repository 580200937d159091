import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from schrovar.errors import InvalidArgument
from schrovar.grid import TimeGrid, make_dyadic_time_grid, make_geometric_time_grid
from schrovar.varops import (
    BlockStructure,
    SampledCurve,
    apply_operator,
    dyadic_block_index,
    maximal,
    oscillation,
    rho_variation,
    rho_variation_bruteforce,
    sample_curve,
    short_variation,
    total_variation,
)

values = st.lists(st.floats(-100, 100, allow_nan=False), min_size=0, max_size=10)


def curve(vals, times=None):
    vals = np.asarray(vals, dtype=float)
    t = np.arange(1, len(vals) + 1, dtype=float) if times is None else times
    return SampledCurve(TimeGrid(t), vals)


def test_variation_examples():
    assert rho_variation([2.0] * 6, 3) == 0.0
    assert rho_variation([0, 1, 0], 3) == pytest.approx(2 ** (1 / 3), abs=1e-14)
    assert 2 ** (1 / 3) == pytest.approx(1.25992, abs=1e-5)
    assert rho_variation([5.0], 3) == 0.0
    assert rho_variation([], 3) == 0.0


def test_variation_monotone_sequence_is_endpoint_gap(rng):
    for _ in range(50):
        v = np.sort(rng.normal(size=rng.integers(2, 12)))
        assert rho_variation(v, 3) == pytest.approx(v[-1] - v[0], rel=1e-12)


def test_variation_rejects_small_sigma():
    with pytest.raises(InvalidArgument):
        rho_variation([0, 1], 0.5)


def test_variation_vectorized(rng):
    V = rng.normal(size=(9, 4, 3))
    out = rho_variation(V, 2.5)
    assert out.shape == (4, 3)
    assert out[2, 1] == pytest.approx(rho_variation(V[:, 2, 1], 2.5), rel=1e-14)


@settings(max_examples=200, deadline=None)
@given(v=values, sigma=st.sampled_from([1.0, 2.0, 2.5, 3.0, 4.0]))
def test_dp_matches_bruteforce(v, sigma):
    assert rho_variation(v, sigma) == pytest.approx(rho_variation_bruteforce(v, sigma), rel=1e-12, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(v=values, s1=st.floats(1, 6), s2=st.floats(1, 6))
def test_variation_nonincreasing_in_sigma(v, s1, s2):
    lo, hi = sorted((s1, s2))
    assert rho_variation(v, hi) <= rho_variation(v, lo) * (1 + 1e-12) + 1e-12


@settings(max_examples=100, deadline=None)
@given(v=st.lists(st.floats(-100, 100), min_size=2, max_size=14), data=st.data())
def test_subgrid_variation_smaller(v, data):
    keep = data.draw(st.lists(st.booleans(), min_size=len(v), max_size=len(v)))
    sub = [x for x, k in zip(v, keep) if k]
    assert rho_variation(sub, 3) <= rho_variation(v, 3) * (1 + 1e-12) + 1e-12


def test_oscillation_examples():
    c = curve([1, 1.5, 2, 3, 4], np.array([1, 1.5, 2, 3, 4.0]))
    assert oscillation(c, BlockStructure([1, 2, 4])) == pytest.approx(math.sqrt(5), abs=1e-14)
    assert oscillation(curve([3, 1, 4], np.array([1, 1.5, 2.0])), BlockStructure([1, 2])) == 3.0
    assert oscillation(curve([7.0] * 5, np.array([1, 1.5, 2, 3, 4.0])), BlockStructure([1, 2, 4])) == 0.0


def test_oscillation_block_alignment_and_empty_blocks():
    c = curve([0, 1, 0], np.array([1, 2, 8.0]))
    with pytest.raises(InvalidArgument):
        oscillation(c, BlockStructure([1, 3]))
    with pytest.raises(InvalidArgument):
        BlockStructure([2, 1])
    c2 = SampledCurve(TimeGrid([1, 2, 8.0]), [0, 1, 0])
    # [2, 8] holds samples; add an aligned block with no interior
    assert oscillation(c2, BlockStructure([1, 2, 8])) == pytest.approx(math.sqrt(2))


def test_dyadic_blocks_default():
    t = make_dyadic_time_grid(0.25, 4, 3)
    b = BlockStructure.dyadic(t)
    assert np.allclose(b.boundaries, [0.25, 0.5, 1, 2, 4])


def test_dyadic_block_index():
    t = np.array([0.5, 0.75, 1, 1.5, 2, 3, 4])
    assert dyadic_block_index(t).tolist() == [2, 2, 1, 1, 0, 0, -1]


def test_short_variation_examples():
    assert short_variation(curve([1.0] * 4, np.array([1.1, 1.3, 1.6, 1.9]))) == 0.0
    one_block = curve([0, 1, 0], np.array([1.2, 1.5, 1.8]))
    assert short_variation(one_block) == pytest.approx(math.sqrt(2))
    # jump of 1 inside (1/2, 1] and inside (1, 2]
    two = curve([0, 1, 1, 2], np.array([0.6, 0.9, 1.2, 1.8]))
    assert short_variation(two) == pytest.approx(math.sqrt(2))


def test_maximal_and_total_variation():
    assert maximal(curve([1, -2, 3])) == 3
    assert maximal(curve([0, 0])) == 0
    assert total_variation(curve([0, 1, 0])) == 2
    assert total_variation(curve([1, 2, 5, 9])) == 8
    with pytest.raises(InvalidArgument):
        maximal(SampledCurve(TimeGrid([1.0]), np.zeros((1, 0))))


def test_apply_operator_dispatch():
    c = curve([0, 1, 0])
    assert apply_operator("var", c, 3) == pytest.approx(2 ** (1 / 3))
    assert apply_operator("tv", c) == 2
    with pytest.raises(InvalidArgument):
        apply_operator("nope", c)


def _off_dyadic_times(n, rng):
    # geometric grid shifted so that no sample sits on a power of two
    t = np.geomspace(0.011, 7.3, n)
    lg = np.log2(t)
    assert np.min(np.abs(lg - np.round(lg))) > 1e-6
    return t


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=24, max_size=24))
def test_curve_inequalities(v):
    t = _off_dyadic_times(24, None)
    c = SampledCurve(TimeGrid(t), np.array(v))
    tv = total_variation(c)
    tol = 1e-9 * (1 + tv)
    lo, hi = 2.0 ** np.floor(np.log2(t[0])), 2.0 ** np.ceil(np.log2(t[-1]))
    assert short_variation(c) <= tv + tol
    for s in (1.0, 2.0, 3.0):
        assert rho_variation(c.values, s) <= tv + tol
    assert np.ptp(c.values) <= tv + tol
    assert maximal(c) >= np.max(np.abs(c.values)) - 1e-15


def test_oscillation_below_total_variation(rng):
    t = np.unique(np.concatenate([np.geomspace(0.13, 7.9, 40), 2.0 ** np.arange(-3, 4)]))
    blocks = BlockStructure(2.0 ** np.arange(-3, 4))
    for _ in range(200):
        c = SampledCurve(TimeGrid(t), rng.normal(size=t.size))
        assert oscillation(c, blocks) <= total_variation(c) + 1e-12


def test_oscillation_below_short_variation_off_boundaries(rng):
    t = np.geomspace(0.011, 7.3, 60)
    lg2 = np.floor(np.log2(t))
    for _ in range(200):
        v = rng.normal(size=t.size)
        c = SampledCurve(TimeGrid(t), v)
        # ranges over the half-open dyadic blocks; no sample sits on a block edge
        rng_sq = 0.0
        for j in np.unique(lg2):
            seg = v[lg2 == j]
            rng_sq += np.ptp(seg) ** 2
        assert math.sqrt(rng_sq) <= short_variation(c) + 1e-12


def test_total_variation_refinement(rng):
    for _ in range(100):
        v = rng.normal(size=30)
        sub = np.sort(rng.choice(30, size=12, replace=False))
        assert total_variation(curve(v[sub])) <= total_variation(curve(v)) + 1e-12


def test_sample_curve_eigenfunction(small_oscillator):
    e = small_oscillator.engines[0]
    g = small_oscillator.grid()
    phi = e.eigenvectors[:, 0]
    i = 60
    tg = make_geometric_time_grid(0.05, 3.0, 12)
    c0 = sample_curve(small_oscillator, phi, e.nodes[i], tg, g)
    lam = e.eigenvalues[0]
    assert np.allclose(c0.values, np.exp(-lam * tg.times) * phi[i], rtol=1e-9)
    assert np.all(np.diff(c0.values) < 0)
    c1 = sample_curve(small_oscillator.with_order(1), phi, e.nodes[i], tg, g)
    assert np.allclose(c1.values, -lam * tg.times * np.exp(-lam * tg.times) * phi[i], rtol=1e-9)


def test_sample_curve_mass_at_origin(small_oscillator):
    g = small_oscillator.grid()
    tg = make_geometric_time_grid(0.01, 4.0, 20)
    c = sample_curve(small_oscillator, np.ones(g.shape), 0.0, tg, g)
    assert np.all(c.values > 0) and np.all(c.values <= 1 + 1e-8)
    assert np.all(np.diff(c.values) <= 1e-12)
