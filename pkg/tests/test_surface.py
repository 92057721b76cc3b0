import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from steklov.derivatives import make_cluster
from steklov.domain import BoundaryDensity, PuncturedDisk
from steklov.mps import solve
from steklov.reference import AnnulusSpec, catenoid_map_derivatives, catenoid_params
from steklov.surface import (DegenerateMetricError, EnergyJ, ExportRefusedError, SurfaceMap,
                             boundary_centroids, catenoid_deviation, contact_angles, energy_J,
                             export_mesh, fit_mixing, fundamental_forms, initial_mixing,
                             interior_quadrature, polyhedron_spread, surface_metrics, triangulate_domain)


def disk_cluster():
    sol = solve(PuncturedDisk(), BoundaryDensity.constant(1), 200, 10, 3)
    return make_cluster(sol, [1, 2])


@pytest.fixture(scope="module")
def catenoid_cluster():
    p = catenoid_params()
    d = catenoid_map_derivatives(np.array([[p.s, 0.0], [1.0, 0.0]]))
    ratio = -(d["ux"][0] @ d["u"][0]) / (d["ux"][1] @ d["u"][1])
    spec = AnnulusSpec(p.s, ratio, 1.0)
    sol = solve(spec.disk, spec.density(), 3000, 20, 5)
    return make_cluster(sol, [1, 2, 3])


@pytest.fixture(scope="module")
def catenoid_surface(catenoid_cluster):
    return fit_mixing(catenoid_cluster, restarts=2, quad_count=3000)


def test_quadrature_weights():
    _, w = interior_quadrature(PuncturedDisk(), 500)
    assert w.sum() == pytest.approx(np.pi, rel=1e-14)
    pts, w = interior_quadrature(PuncturedDisk([[0, 0]], [0.5]), 500)
    assert w.sum() == pytest.approx(0.75 * np.pi, rel=1e-14)
    assert np.all(np.hypot(pts[:, 0], pts[:, 1]) >= 0.5)


def test_quadrature_integrates_radius_squared():
    pts, w = interior_quadrature(PuncturedDisk([[0, 0]], [0.5]), 100_000)
    val = w @ np.sum(pts**2, axis=1)
    assert val == pytest.approx(0.46875 * np.pi, rel=1e-3)


def test_quadrature_is_deterministic():
    disk = PuncturedDisk([[0.2, 0]], [0.3])
    a, _ = interior_quadrature(disk, 300, seed=4)
    b, _ = interior_quadrature(disk, 300, seed=4)
    np.testing.assert_array_equal(a, b)


def test_equatorial_disk_has_zero_energy():
    cl = disk_cluster()
    pts, w = interior_quadrature(PuncturedDisk(), 2000)
    A = initial_mixing(cl)
    val, grad = energy_J(A, cl, pts, w)
    assert val <= 1e-10
    assert np.max(np.abs(grad)) <= 1e-8
    u = SurfaceMap(cl, A, pts, w)(pts)
    # some rotation of the identity map
    np.testing.assert_allclose(np.linalg.norm(u, axis=1), np.linalg.norm(pts, axis=1), atol=1e-10)


def test_closed_form_catenoid_mixing(catenoid_cluster, catenoid_surface):
    cl = catenoid_cluster
    smp = cl.solution.system.sampling
    U = catenoid_map_derivatives(smp.points)["u"]
    A, *_ = np.linalg.lstsq(cl.boundary_values(), U, rcond=None)
    pts, w = catenoid_surface.quad_points, catenoid_surface.quad_weights
    exact = energy_J(A, cl, pts, w)[0]
    assert exact <= 1e-6
    assert abs(catenoid_surface.metrics["J"] - exact) <= 1e-6


def test_fit_from_plain_start(catenoid_cluster):
    smap = fit_mixing(catenoid_cluster, restarts=0, quad_count=2000)
    assert smap.metrics["J"] <= 1e-6


def test_negative_control():
    sol = solve(PuncturedDisk([[0.1, 0.0]], [0.4]), BoundaryDensity.constant(2), 1000, 15, 5)
    cl = make_cluster(sol, [1, 2, 3])
    pts, w = interior_quadrature(sol.basis.disk, 2000)
    A = np.random.default_rng(0).standard_normal((3, 3))
    assert energy_J(A, cl, pts, w)[0] > 1e-4


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_energy_nonnegative_and_rotation_invariant(seed):
    rng = np.random.default_rng(seed)
    sol = solve(PuncturedDisk([[0.1, 0.2]], [0.3]), BoundaryDensity.constant(2), 800, 12, 4)
    cl = make_cluster(sol, [1, 2, 3])
    pts, w = interior_quadrature(sol.basis.disk, 500)
    J = EnergyJ(cl, pts, w)
    A = rng.standard_normal((3, 3))
    Q = Rotation.random(random_state=seed).as_matrix()
    j0, j1 = J(A)[0], J(A @ Q)[0]
    assert j0 >= 0
    assert j1 == pytest.approx(j0, rel=1e-12)


def test_energy_gradient(rng):
    sol = solve(PuncturedDisk([[0.1, 0.2]], [0.3]), BoundaryDensity.constant(2), 800, 12, 4)
    cl = make_cluster(sol, [1, 2, 3])
    pts, w = interior_quadrature(sol.basis.disk, 500)
    J = EnergyJ(cl, pts, w)
    A = rng.standard_normal((3, 3))
    _, g = J(A)
    h = 1e-6
    fd = np.zeros_like(A)
    for i in range(3):
        for k in range(3):
            E = np.zeros_like(A)
            E[i, k] = h
            fd[i, k] = (J(A + E)[0] - J(A - E)[0]) / (2 * h)
    np.testing.assert_allclose(g, fd, rtol=1e-7, atol=1e-7 * np.abs(g).max())
    W, D = J.parts(A)
    assert W + D == pytest.approx(J(A)[0])


def test_exact_catenoid_is_minimal(rng):
    p = catenoid_params()
    r = rng.uniform(p.s, 1.0, 300)
    th = rng.uniform(0, 2 * np.pi, 300)
    x = np.c_[r * np.cos(th), r * np.sin(th)]
    H, K, (E, F, G) = fundamental_forms(catenoid_map_derivatives(x))
    assert np.max(np.abs(H)) <= 1e-8
    assert np.all(K <= 0)
    np.testing.assert_allclose(E, G, rtol=1e-12)
    np.testing.assert_allclose(F, 0, atol=1e-14)


def test_stereographic_sphere_curvatures(rng):
    # inverse stereographic projection: conformal onto the unit sphere, |H| = K = 1
    x = rng.uniform(-0.5, 0.5, (50, 2))

    def u(p):
        q = 1 + np.sum(p**2, 1)
        return np.c_[2 * p[:, 0], 2 * p[:, 1], 1 - np.sum(p**2, 1)] / q[:, None]

    h = 1e-4
    ex, ey = np.array([h, 0]), np.array([0, h])
    d = {"u": u(x), "ux": (u(x + ex) - u(x - ex)) / (2 * h), "uy": (u(x + ey) - u(x - ey)) / (2 * h),
         "uxx": (u(x + ex) - 2 * u(x) + u(x - ex)) / h**2, "uyy": (u(x + ey) - 2 * u(x) + u(x - ey)) / h**2,
         "uxy": (u(x + ex + ey) - u(x + ex - ey) - u(x - ex + ey) + u(x - ex - ey)) / (4 * h * h)}
    H, K, _ = fundamental_forms(d)
    np.testing.assert_allclose(np.abs(H), 1.0, atol=1e-5)
    np.testing.assert_allclose(K, 1.0, atol=1e-5)


def test_flat_disk_metrics():
    cl = disk_cluster()
    pts, w = interior_quadrature(PuncturedDisk(), 1000)
    A = np.c_[initial_mixing(cl), np.zeros(2)]  # (x, y, 0) in R^3
    smap = SurfaceMap(cl, A, pts, w)
    m = surface_metrics(smap)
    assert m["sphere_error"] <= 1e-10
    assert m["max_mean_curvature"] <= 1e-10 and m["max_gauss_curvature"] <= 1e-10
    assert m["max_contact_angle_deg"] <= 1e-5
    scaled = surface_metrics(SurfaceMap(cl, 1.1 * A, pts, w))
    assert scaled["sphere_error"] == pytest.approx(0.1, abs=1e-9)


def test_degenerate_metric_reported():
    d = {k: np.zeros((3, 3)) for k in ("u", "ux", "uy", "uxx", "uxy", "uyy")}
    with pytest.raises(DegenerateMetricError, match="source point"):
        fundamental_forms(d, points=np.zeros((3, 2)))


def test_contact_angle_of_tilted_conormal():
    # boundary point (1,0,0), conormal tilted 10 degrees out of the radial direction
    t = np.radians(10)
    d = {"u": np.array([[1.0, 0, 0]]), "ux": np.array([[np.cos(t), 0, np.sin(t)]]), "uy": np.array([[0, 1.0, 0]])}
    assert contact_angles(d, np.array([[1.0, 0.0]]))[0] == pytest.approx(10.0)


def test_catenoid_surface_quality(catenoid_surface):
    m = catenoid_surface.metrics
    assert m["sphere_error"] <= 1e-3
    assert m["max_mean_curvature"] <= 1e-2
    assert m["max_contact_angle_deg"] < 1.0
    mesh = export_mesh(catenoid_surface, 80)
    dev = catenoid_deviation(mesh.vertices, catenoid_params().alpha)
    assert np.max(np.abs(dev)) <= 1e-3
    assert np.max(np.abs(mesh.mean_curvature)) <= 1e-2
    b = mesh.boundary
    assert np.max(np.abs(np.linalg.norm(mesh.vertices[b], axis=1) - 1)) <= m["sphere_error"] + 1e-6


def test_mesh_of_flat_disk(tmp_path):
    cl = disk_cluster()
    pts, w = interior_quadrature(PuncturedDisk(), 500)
    smap = SurfaceMap(cl, np.c_[initial_mixing(cl), np.zeros(2)], pts, w)
    mesh = export_mesh(smap, 40)
    assert np.max(np.abs(mesh.mean_curvature)) <= 1e-6
    assert np.allclose(mesh.vertices[:, 2], 0)
    mesh.write_obj(tmp_path / "m.obj", header="hello")
    lines = (tmp_path / "m.obj").read_text().splitlines()
    assert lines[0] == "# hello"
    faces = np.array([[int(t) for t in l.split()[1:]] for l in lines if l.startswith("f ")])
    assert faces.min() == 1 and faces.max() == len(mesh.vertices)
    mesh.write_csv(tmp_path / "m.csv")
    head = (tmp_path / "m.csv").read_text().splitlines()[0]
    assert head == "vertex_id,src_r_or_x,src_theta_or_y,mean_curvature,gauss_curvature"


def test_export_refuses_planar_map():
    cl = disk_cluster()
    pts, w = interior_quadrature(PuncturedDisk(), 200)
    with pytest.raises(ExportRefusedError):
        export_mesh(SurfaceMap(cl, initial_mixing(cl), pts, w))


def test_triangulation_orientation_and_holes():
    disk = PuncturedDisk([[0.3, 0.1], [-0.3, -0.2]], [0.12, 0.1])
    pts, faces, bnd = triangulate_domain(disk, 60)
    p = pts[faces]
    area = ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
            - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1]))
    assert np.all(area > 0)
    assert np.all(disk.contains(pts, tol=1e-12))
    assert np.all(disk.contains(p.mean(axis=1)))
    # total area close to the domain's
    assert 0.5 * area.sum() == pytest.approx(disk.area, rel=2e-2)


def _platonic(n):
    if n == 4:
        return np.array([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]]) / np.sqrt(3)
    if n == 6:
        return np.vstack([np.eye(3), -np.eye(3)])
    g = (1 + np.sqrt(5)) / 2
    v = []
    for a in (-1, 1):
        for b in (-g, g):
            v += [[0, a, b], [a, b, 0], [b, 0, a]]
    v = np.array(v, float)
    return v / np.linalg.norm(v, axis=1, keepdims=True)


@pytest.mark.parametrize("n", [4, 6, 12])
def test_polyhedron_spread(n):
    R = Rotation.random(random_state=n).as_matrix()
    pts = _platonic(n) @ R.T
    assert polyhedron_spread(pts) <= 1e-12
    bumped = pts.copy()
    bumped[0] *= 1.05
    assert polyhedron_spread(bumped) > 1e-2


def test_polyhedron_spread_needs_platonic_count():
    with pytest.raises(ValueError):
        polyhedron_spread(np.zeros((5, 3)))


def test_catenoid_deviation_finds_axis():
    p = catenoid_params()
    th = np.linspace(0, 2 * np.pi, 40)
    r = np.linspace(p.s, 1, 30)
    R, T = np.meshgrid(r, th)
    x = np.c_[(R * np.cos(T)).ravel(), (R * np.sin(T)).ravel()]
    V = catenoid_map_derivatives(x)["u"] @ Rotation.from_euler("xyz", [0.3, -0.5, 1.1]).as_matrix().T
    assert np.max(np.abs(catenoid_deviation(V, p.alpha))) <= 1e-8


def test_boundary_centroids_of_catenoid(catenoid_surface):
    c = boundary_centroids(catenoid_surface)
    # the two boundary circles are mirror images through the waist plane
    assert np.linalg.norm(c[0] + c[1]) <= 1e-4
    assert np.linalg.norm(c[0]) > 0.1


def test_fit_requires_two_functions():
    sol = solve(PuncturedDisk(), BoundaryDensity.constant(1), 200, 10, 3)
    with pytest.raises(ValueError):
        fit_mixing(make_cluster(sol, [1]))
