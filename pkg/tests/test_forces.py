import numpy as np
import pytest
from hypothesis import given, strategies as st

from gausstat.forces import (
    ForceFieldSpec, energies, grad_V, hessian_V, pair_potential, total_force,
    total_potential, xi_at,
)
from gausstat.geometry import PhasePoint, SystemSpec, minimum_image

from conftest import random_point

ff0 = ForceFieldSpec(1.0, 1.0)


def brute_potential(x, spec, eps=1.0, rc=1.0):
    """Plain double loop over minimum-image pairs."""
    V = 0.0
    n = x.n_particles
    for i in range(n):
        for j in range(i + 1, n):
            r = np.linalg.norm(minimum_image(x.q[i] - x.q[j], spec))
            if r < rc:
                V += eps * (1 - (r / rc) ** 2) ** 4
    return V


def fd_gradient(x, spec, ff, h=1e-6):
    g = np.zeros_like(x.q)
    for idx in np.ndindex(*x.q.shape):
        xp, xm = x.copy(), x.copy()
        xp.q[idx] += h
        xm.q[idx] -= h
        g[idx] = (total_potential(xp, spec, ff) - total_potential(xm, spec, ff)) / (2 * h)
    return g


def test_pair_potential_examples():
    assert pair_potential(1.0) == 0.0
    assert pair_potential(0.0) == 1.0
    assert pair_potential(1 / np.sqrt(2)) == pytest.approx(0.0625, abs=1e-15)
    assert pair_potential(0.0, eps=2.5, rc=0.7) == 2.5
    assert pair_potential(3.0) == 0.0


@given(st.floats(0, 5))
def test_pair_potential_bounded(r):
    assert 0.0 <= pair_potential(r, 1.7, 1.3) <= 1.7


def test_pair_potential_smooth_at_cutoff():
    eps = 1e-7
    assert pair_potential(1 - eps) < 1e-20
    slope = (pair_potential(1 - eps) - pair_potential(1 - 2 * eps)) / eps
    assert abs(slope) < 1e-15


def test_total_potential_examples():
    spec = SystemSpec(0, 2, (5.0, 5.0), 2)
    far = PhasePoint([[0.0, 0.0], [2.0, 0.0]], np.zeros((2, 2)))
    assert total_potential(far, spec, ff0) == 0.0
    same = PhasePoint([[1.0, 1.0], [1.0, 1.0]], np.zeros((2, 2)))
    assert total_potential(same, spec, ff0) == 1.0


def test_total_potential_matches_double_loop(rng):
    spec = SystemSpec(0, 2, (2.5, 2.5), 8)
    for _ in range(5):
        x = random_point(rng, spec)
        assert total_potential(x, spec, ff0) == pytest.approx(brute_potential(x, spec), rel=1e-13)


def test_total_potential_with_walls_matches_double_loop(rng):
    spec = SystemSpec(1, 2, (2.0, 2.5, 2.5), 8)
    x = random_point(rng, spec)
    assert total_potential(x, spec, ff0) == pytest.approx(brute_potential(x, spec), rel=1e-13)


@given(st.integers(0, 2 ** 31), st.floats(-10, 10), st.floats(-10, 10))
def test_potential_translation_invariant(seed, a, b):
    spec = SystemSpec(0, 2, (3.0, 2.5), 8)
    x = random_point(np.random.default_rng(seed), spec)
    y = x.copy()
    y.q = y.q + np.array([a, b])
    assert total_potential(y, spec, ff0) == pytest.approx(total_potential(x, spec, ff0), abs=1e-12)


@given(st.integers(0, 2 ** 31))
def test_potential_bounded_by_pair_count(seed):
    spec = SystemSpec(0, 2, (2.1, 2.1), 8)
    x = random_point(np.random.default_rng(seed), spec)
    assert 0.0 <= total_potential(x, spec, ff0) <= ff0.max_potential(8)


def test_grad_out_of_range_is_zero():
    spec = SystemSpec(0, 2, (5.0, 5.0), 2)
    x = PhasePoint([[0.0, 0.0], [2.0, 0.0]], np.zeros((2, 2)))
    assert np.all(grad_V(x, spec, ff0) == 0.0)


@given(st.integers(0, 2 ** 31))
def test_pair_forces_sum_to_zero(seed):
    spec = SystemSpec(0, 2, (2.5, 2.5), 10)
    x = random_point(np.random.default_rng(seed), spec)
    assert np.allclose(grad_V(x, spec, ff0).sum(axis=0), 0.0, atol=1e-13)


def test_grad_matches_finite_difference(rng):
    spec = SystemSpec(0, 2, (2.2, 2.2), 6)
    x = random_point(rng, spec)
    assert np.max(np.abs(grad_V(x, spec, ff0) - fd_gradient(x, spec, ff0))) < 1e-6


def test_grad_with_gauge_matches_finite_difference(rng):
    spec = SystemSpec(1, 1, (2.2, 2.2), 6)
    ff = ForceFieldSpec(1.0, 1.0, (0.0, 0.5), gauge_shift=(0.3, 0.0))
    x = random_point(rng, spec)
    assert np.max(np.abs(grad_V(x, spec, ff) - fd_gradient(x, spec, ff))) < 1e-6


def test_hessian_examples(rng):
    spec = SystemSpec(0, 2, (9.0, 9.0), 3)
    far = PhasePoint([[0.0, 0.0], [3.0, 0.0], [6.0, 3.0]], np.zeros((3, 2)))
    assert np.all(hessian_V(far, spec, ff0) == 0.0)
    spec = SystemSpec(0, 2, (2.0, 2.0), 4)
    x = random_point(rng, spec)
    H = hessian_V(x, spec, ff0)
    assert np.array_equal(H, H.T)
    h = 1e-6
    fd = np.zeros_like(H)
    for a in range(x.q.size):
        xp, xm = x.copy(), x.copy()
        xp.q.ravel()[a] += h
        xm.q.ravel()[a] -= h
        fd[:, a] = (grad_V(xp, spec, ff0) - grad_V(xm, spec, ff0)).ravel() / (2 * h)
    assert np.max(np.abs(fd - H)) < 1e-5


def test_xi_at_examples():
    spec = SystemSpec(0, 2, (5.0, 5.0), 3)
    x = PhasePoint(np.zeros((3, 2)), np.zeros((3, 2)))
    ff = ForceFieldSpec(1.0, 1.0, (0.5, 0.0))
    assert np.array_equal(xi_at(x, spec, ff), np.tile([0.5, 0.0], (3, 1)))
    assert np.array_equal(xi_at(x, spec, ff0), np.zeros((3, 2)))
    g = np.array([0.1, -0.2])
    shifted = ForceFieldSpec(1.0, 1.0, (0.5, 0.0), gauge_shift=g)
    assert np.allclose(xi_at(x, spec, shifted) - xi_at(x, spec, ff), np.tile(g, (3, 1)))


def test_alternating_charges():
    spec = SystemSpec(0, 2, (5.0, 5.0), 4)
    x = PhasePoint(np.zeros((4, 2)), np.zeros((4, 2)))
    ff = ForceFieldSpec(1.0, 1.0, (0.5, 0.0), "alternating")
    xi = xi_at(x, spec, ff)
    assert np.array_equal(xi[:, 0], [0.5, -0.5, 0.5, -0.5])
    assert np.all(xi.sum(axis=0) == 0)


def test_gauge_shift_leaves_total_force_unchanged(rng):
    spec = SystemSpec(0, 2, (3.0, 3.0), 6)
    x = random_point(rng, spec)
    ff = ForceFieldSpec(1.0, 1.0, (0.5, 0.0))
    shifted = ForceFieldSpec(1.0, 1.0, (0.5, 0.0), gauge_shift=(0.2, 0.1))
    assert np.array_equal(total_force(x, spec, ff), total_force(x, spec, shifted))
    assert np.allclose(-grad_V(x, spec, shifted) + xi_at(x, spec, shifted),
                       -grad_V(x, spec, ff) + xi_at(x, spec, ff), atol=1e-15)


def test_cells_match_direct(rng):
    for n, dims in [(256, (0, 2)), (200, (1, 2)), (100, (0, 3))]:
        spec = SystemSpec.at_density(n, 0.4, *dims)
        x = random_point(rng, spec)
        ga = grad_V(x, spec, ff0, "cells")
        gb = grad_V(x, spec, ff0, "direct")
        assert np.max(np.abs(ga - gb)) <= 1e-12
        assert total_potential(x, spec, ff0, "cells") == pytest.approx(
            total_potential(x, spec, ff0, "direct"), abs=1e-12)


def test_energy_report(rng):
    spec = SystemSpec(0, 2, (2.0, 2.0), 4)
    x = random_point(rng, spec)
    e = energies(x, spec, ff0)
    assert e.H == e.K + e.V
    assert e.K == pytest.approx(x.p2() / 2)


def test_spec_checks():
    with pytest.raises(ValueError):
        ForceFieldSpec(-1.0, 1.0)
    with pytest.raises(ValueError):
        ForceFieldSpec(1.0, 0.0)
    with pytest.raises(ValueError):
        ForceFieldSpec(1.0, 1.0).check(SystemSpec(0, 2, (1.9, 5.0), 2))
    ForceFieldSpec(1.0, 1.0).check(SystemSpec(1, 1, (1.5, 2.5), 2))
