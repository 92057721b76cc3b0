import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from steklov.domain import (BoundaryDensity, InfeasibleDomainError, PuncturedDisk, allocate_points,
                            density_minimum, eval_density, eval_density_tangential_derivative,
                            sample_boundary, validate, weighted_length)

from conftest import random_fourier


def test_concentric_annulus_is_feasible():
    rep = validate(PuncturedDisk([[0, 0]], [0.5]))
    assert rep.feasible
    assert rep.containment[0] == pytest.approx(0.25)


def test_hole_sticking_out_is_infeasible():
    rep = validate(PuncturedDisk([[0.6, 0]], [0.5]))
    assert not rep.feasible
    assert rep.containment[0] < 0


def test_kissing_holes_reported_infeasible():
    rep = validate(PuncturedDisk([[0.3, 0], [-0.3, 0]], [0.3, 0.3]))
    assert rep.disjointness[0] == pytest.approx(0.0, abs=1e-15)
    assert not rep.feasible


def test_radius_larger_than_one_rejected():
    # (1 - r)^2 > |c|^2 holds for r = 2.5, c = 0 but the hole swallows the disk
    assert not validate(PuncturedDisk([[0, 0]], [2.5])).feasible


def test_mismatched_shapes():
    with pytest.raises(ValueError):
        PuncturedDisk([[0, 0], [0.1, 0.1]], [0.1])


@given(st.floats(0.0, 0.3), st.floats(0.0, 0.3), st.floats(0.01, 0.2), st.floats(1e-4, 0.05))
def test_shrinking_holes_increases_margins(x, y, r, eps):
    disk = PuncturedDisk([[x, y], [-0.4, 0.0]], [r, 0.1])
    smaller = PuncturedDisk(disk.centers, disk.radii - min(eps, 0.099))
    assert np.all(validate(smaller).margins > validate(disk).margins)


def test_small_sampling_of_unit_disk():
    s = sample_boundary(PuncturedDisk(), 16)
    np.testing.assert_allclose(s.theta, 2 * np.pi * np.arange(16) / 16)
    np.testing.assert_allclose(s.weights, np.pi / 8)
    np.testing.assert_allclose(s.normals, s.points)


def test_too_few_samples_rejected():
    with pytest.raises(ValueError):
        sample_boundary(PuncturedDisk(), 4)


def test_infeasible_disk_cannot_be_sampled():
    with pytest.raises(InfeasibleDomainError):
        sample_boundary(PuncturedDisk([[0.6, 0]], [0.5]), 200)


def test_two_to_one_split():
    s = sample_boundary(PuncturedDisk([[0, 0]], [0.5]), 300)
    assert list(s.counts) == [100, 200]


def test_catenoid_radius_split():
    counts = allocate_points(np.array([0.090776, 1.0]), 10000)
    # 10000 * 0.090776 / 1.090776 = 832.21..., remainder goes to the outer circle
    assert list(counts) == [832, 9168]


def test_allocation_floor():
    counts = allocate_points(np.array([1e-4, 1.0]), 100)
    assert counts[0] == 8 and counts.sum() == 100


@given(st.lists(st.floats(1e-3, 1.0), min_size=1, max_size=6), st.integers(200, 5000))
def test_allocation_sums_and_is_nearly_proportional(radii, n):
    radii = np.array(radii + [1.0])
    counts = allocate_points(radii, n)
    assert counts.sum() == n
    assert np.all(counts >= 8)
    ideal = n * radii / radii.sum()
    big = counts > 8
    assert np.all(np.abs(counts[big] - ideal[big]) <= 1 + 8 * radii.size)


def test_normals_point_into_holes(two_hole):
    s = sample_boundary(two_hole, 400)
    for k in range(two_hole.n_holes):
        sl = s.slice(k)
        towards_center = two_hole.centers[k] - s.points[sl]
        assert np.all(np.sum(towards_center * s.normals[sl], axis=1) > 0)
        np.testing.assert_allclose(np.sum(s.normals[sl] * s.tangents[sl], axis=1), 0, atol=1e-15)
    outer = s.slice(2)
    np.testing.assert_allclose(s.normals[outer], s.points[outer], atol=1e-15)


def test_weights_sum_to_perimeter(two_hole):
    s = sample_boundary(two_hole, 777)
    assert s.weights.sum() == pytest.approx(2 * np.pi * (1 + 0.22), rel=1e-14)
    for k in range(3):
        w = s.weights[s.slice(k)]
        assert np.ptp(w) < 1e-15


def test_length_unit_density():
    disk = PuncturedDisk([[0, 0]], [0.3])
    s = sample_boundary(disk, 400)
    assert weighted_length(disk, BoundaryDensity.constant(2), s) == pytest.approx(2 * np.pi * 1.3, rel=1e-14)


def test_length_two_constants():
    disk = PuncturedDisk([[0, 0]], [0.3])
    s = sample_boundary(disk, 400)
    dens = BoundaryDensity.constant(2, 0, [4.0, 1.5])
    assert weighted_length(disk, dens, s) == pytest.approx(2 * np.pi * (1.5 + 0.3 * 4.0), rel=1e-14)


def test_oscillatory_modes_integrate_to_zero(two_hole, rng):
    dens = random_fourier(3, 6, rng, amp=0.3)
    s = sample_boundary(two_hole, 1000)
    assert weighted_length(two_hole, dens, s) == pytest.approx(2 * np.pi * 1.22, abs=1e-12)


def test_length_stable_under_refinement(two_hole, rng):
    dens = random_fourier(3, 5, rng)
    L1 = weighted_length(two_hole, dens, sample_boundary(two_hole, 600))
    L2 = weighted_length(two_hole, dens, sample_boundary(two_hole, 1200))
    assert abs(L1 - L2) < 1e-14 * L1 * 10


def test_length_is_linear_in_mean_coefficient(two_hole):
    s = sample_boundary(two_hole, 600)
    base = BoundaryDensity.constant(3)
    for k, r in enumerate(two_hole.component_radii):
        a = base.a.copy()
        a[k, 0] += 1.0
        dL = weighted_length(two_hole, BoundaryDensity(a, base.b), s) - weighted_length(two_hole, base, s)
        assert dL == pytest.approx(2 * np.pi * r, rel=1e-13)


def test_density_evaluation_and_tangent():
    disk = PuncturedDisk([[0.1, 0]], [0.5])
    a = np.zeros((2, 2))
    a[:, 1] = 1.0
    dens = BoundaryDensity(a, np.zeros((2, 2)))
    th = np.linspace(0, 2 * np.pi, 13)
    np.testing.assert_allclose(eval_density(dens, 1, th), np.cos(th), atol=1e-15)
    np.testing.assert_allclose(eval_density_tangential_derivative(dens, disk, 1, th), -np.sin(th), atol=1e-15)
    np.testing.assert_allclose(eval_density_tangential_derivative(dens, disk, 0, th), -2 * np.sin(th), atol=1e-14)
    flat = BoundaryDensity.constant(2, 3, 2.0)
    np.testing.assert_allclose(eval_density_tangential_derivative(flat, disk, 0, th), 0.0)


def test_dtheta_matches_finite_difference(rng):
    dens = random_fourier(2, 5, rng)
    th = rng.uniform(0, 2 * np.pi, 20)
    h = 1e-6
    fd = (dens.evaluate(0, th + h) - dens.evaluate(0, th - h)) / (2 * h)
    np.testing.assert_allclose(dens.dtheta(0, th), fd, atol=1e-8)


def test_vector_and_dict_roundtrip(rng):
    dens = random_fourier(3, 4, rng)
    back = BoundaryDensity.from_vector(dens.to_vector(), 3, 4)
    np.testing.assert_array_equal(back.a, dens.a)
    np.testing.assert_array_equal(back.b, dens.b)
    again = BoundaryDensity.from_dict(dens.to_dict())
    np.testing.assert_array_equal(again.a, dens.a)
    disk = PuncturedDisk([[0.1, 0.2]], [0.3])
    d2 = PuncturedDisk.from_dict(disk.to_dict())
    np.testing.assert_array_equal(d2.centers, disk.centers)


def test_dict_accepts_short_sine_list():
    d = BoundaryDensity.from_dict({"fourier_order": 2, "density": [{"a": [1, 0.1, 0], "b": [0.2, 0.0]}]})
    assert d.b[0, 1] == 0.2 and d.b[0, 0] == 0.0


def test_rotated_density_is_shift():
    a = np.array([[1.0, 0.3, 0.1]])
    b = np.array([[0.0, -0.2, 0.05]])
    dens = BoundaryDensity(a, b)
    th = np.linspace(0, 6, 9)
    np.testing.assert_allclose(dens.rotated(0.4).evaluate(0, th), dens.evaluate(0, th - 0.4), atol=1e-14)


def test_density_minimum():
    a = np.array([[1.0, 0.5]])
    assert density_minimum(BoundaryDensity(a, np.zeros_like(a))) == pytest.approx(0.5)


def test_values_are_read_only():
    disk = PuncturedDisk([[0.1, 0.2]], [0.3])
    with pytest.raises(ValueError):
        disk.radii[0] = 0.5
