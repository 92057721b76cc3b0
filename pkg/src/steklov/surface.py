"""Free boundary minimal surfaces from an eigenvalue cluster.

A cluster ``v_1..v_n`` of Steklov eigenfunctions is recombined as
``u_A = [v_1, ..., v_n] A``.  The energy

    J(A) = int_{bdry} (|u|^2 - 1)^2 / 4 ds
           + int_Omega (|u_x|^2 - |u_y|^2)^2 + 4 (u_x . u_y)^2 dx

vanishes exactly when ``u_A`` maps the boundary to the unit sphere and is
conformal, i.e. parameterizes a free boundary minimal surface.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import least_squares, minimize
from scipy.spatial import Delaunay
from scipy.stats import qmc

from .derivatives import Cluster
from .domain import PuncturedDisk, validate


class DegenerateMetricError(ArithmeticError):
    def __init__(self, point, det):
        super().__init__(f"degenerate metric (det {det:.3e}) at source point {tuple(np.round(point, 6))}")
        self.point = point


class ExportRefusedError(ValueError):
    pass


class TriangulationError(RuntimeError):
    pass


# --- quadrature -------------------------------------------------------------------

def interior_quadrature(disk: PuncturedDisk, count: int, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Scrambled Halton points in the domain, equal weights summing to the exact area."""
    if not validate(disk).feasible:
        raise ValueError("infeasible punctured disk")
    sampler = qmc.Halton(d=2, scramble=True, seed=seed)
    kept = []
    n_have = 0
    while n_have < count:
        batch = 2 * sampler.random(max(2 * (count - n_have), 64)) - 1
        ok = disk.contains(batch) & (np.hypot(batch[:, 0], batch[:, 1]) < 1)
        kept.append(batch[ok])
        n_have += int(ok.sum())
    pts = np.concatenate(kept)[:count]
    return pts, np.full(count, disk.area / count)


# --- the map ----------------------------------------------------------------------

@dataclass
class _Samples:
    """Cluster functions and derivatives at fixed points (rows) for columns v_a."""

    v: np.ndarray
    vx: np.ndarray | None = None
    vy: np.ndarray | None = None
    vxx: np.ndarray | None = None
    vxy: np.ndarray | None = None
    vyy: np.ndarray | None = None


def _cluster_samples(cluster: Cluster, points: np.ndarray, nderiv: int) -> _Samples:
    ev = cluster.solution.basis.evaluate(points, nderiv=nderiv)
    C = cluster.coefficients
    if nderiv >= 2:
        return _Samples(ev["v"] @ C, ev["dx"] @ C, ev["dy"] @ C, ev["dxx"] @ C, ev["dxy"] @ C, ev["dyy"] @ C)
    if nderiv == 1:
        return _Samples(ev["v"] @ C, ev["dx"] @ C, ev["dy"] @ C)
    return _Samples(ev["v"] @ C)


@dataclass
class SurfaceMap:
    cluster: Cluster
    A: np.ndarray
    quad_points: np.ndarray
    quad_weights: np.ndarray
    metrics: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.A.shape[1]

    @property
    def disk(self) -> PuncturedDisk:
        return self.cluster.solution.basis.disk

    def derivatives(self, points: np.ndarray) -> dict[str, np.ndarray]:
        s = _cluster_samples(self.cluster, points, 2)
        A = self.A
        return {"u": s.v @ A, "ux": s.vx @ A, "uy": s.vy @ A,
                "uxx": s.vxx @ A, "uxy": s.vxy @ A, "uyy": s.vyy @ A}

    def __call__(self, points: np.ndarray) -> np.ndarray:
        return _cluster_samples(self.cluster, points, 0).v @ self.A


class EnergyJ:
    """J(A) and its gradient for a cluster on fixed boundary and interior samples."""

    def __init__(self, cluster: Cluster, quad_points: np.ndarray, quad_weights: np.ndarray):
        smp = cluster.solution.system.sampling
        self.n = cluster.size
        self.bw = smp.weights
        self.bv = cluster.solution.system.values @ cluster.coefficients
        s = _cluster_samples(cluster, quad_points, 1)
        self.qw, self.vx, self.vy = quad_weights, s.vx, s.vy

    def parts(self, A: np.ndarray) -> tuple[float, float]:
        u = self.bv @ A
        ux, uy = self.vx @ A, self.vy @ A
        W = 0.25 * np.sum(self.bw * (np.sum(u * u, 1) - 1) ** 2)
        D = np.sum(ux * ux, 1) - np.sum(uy * uy, 1)
        E = np.sum(ux * uy, 1)
        return float(W), float(np.sum(self.qw * (D**2 + 4 * E**2)))

    def __call__(self, A: np.ndarray) -> tuple[float, np.ndarray]:
        A = np.asarray(A, dtype=float).reshape(self.n, -1)
        u = self.bv @ A
        ux, uy = self.vx @ A, self.vy @ A
        s = np.sum(u * u, 1) - 1
        D = np.sum(ux * ux, 1) - np.sum(uy * uy, 1)
        E = np.sum(ux * uy, 1)
        val = 0.25 * np.sum(self.bw * s**2) + np.sum(self.qw * (D**2 + 4 * E**2))
        grad = self.bv.T @ ((self.bw * s)[:, None] * u)
        grad += self.vx.T @ (self.qw[:, None] * (4 * D[:, None] * ux + 8 * E[:, None] * uy))
        grad += self.vy.T @ (self.qw[:, None] * (-4 * D[:, None] * uy + 8 * E[:, None] * ux))
        return float(val), grad


def energy_J(A: np.ndarray, cluster: Cluster, quad_points: np.ndarray,
             quad_weights: np.ndarray) -> tuple[float, np.ndarray]:
    return EnergyJ(cluster, quad_points, quad_weights)(A)


def initial_mixing(cluster: Cluster) -> np.ndarray:
    """For rho-orthonormal functions, sqrt(L/n) I makes the rho-mean of |u|^2 one."""
    return np.sqrt(cluster.solution.weighted_length / cluster.size) * np.eye(cluster.size)


def fit_mixing(cluster: Cluster, restarts: int = 8, quad_count: int = 4000, seed: int = 0,
               perturbation: float = 0.3) -> SurfaceMap:
    """Minimize J over A from the rho-orthonormal start and random symmetric perturbations of it."""
    if cluster.size < 2:
        raise ValueError("cluster dimension must be at least 2")
    pts, wts = interior_quadrature(cluster.solution.basis.disk, quad_count, seed)
    energy = EnergyJ(cluster, pts, wts)
    n = cluster.size
    A0 = initial_mixing(cluster)
    rng = np.random.default_rng(seed)
    best = None
    for k in range(restarts + 1):
        start = A0
        if k:
            S = rng.standard_normal((n, n))
            start = A0 @ (np.eye(n) + perturbation * 0.5 * (S + S.T))

        def fun(a):
            val, g = energy(a.reshape(n, n))
            return val, g.ravel()

        res = minimize(fun, start.ravel(), jac=True, method="BFGS", options={"gtol": 1e-12, "maxiter": 2000})
        if best is None or res.fun < best.fun:
            best = res
    smap = SurfaceMap(cluster, best.x.reshape(n, n), pts, wts)
    smap.metrics = surface_metrics(smap)
    smap.metrics["J"] = float(best.fun)
    return smap


# --- geometry ---------------------------------------------------------------------

def fundamental_forms(d: dict[str, np.ndarray], det_tol: float = 1e-12,
                      points: np.ndarray | None = None):
    """Mean curvature vector norm and Gaussian curvature in any codimension."""
    ux, uy = d["ux"], d["uy"]
    E = np.sum(ux * ux, 1)
    F = np.sum(ux * uy, 1)
    G = np.sum(uy * uy, 1)
    det = E * G - F**2
    bad = det < det_tol
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        raise DegenerateMetricError(points[i] if points is not None else np.array([np.nan, np.nan]), det[i])

    def normal_part(w):
        # Remove the tangential component using the inverse metric.
        a = np.sum(w * ux, 1)
        b = np.sum(w * uy, 1)
        cx = (G * a - F * b) / det
        cy = (E * b - F * a) / det
        return w - cx[:, None] * ux - cy[:, None] * uy

    IIxx, IIxy, IIyy = normal_part(d["uxx"]), normal_part(d["uxy"]), normal_part(d["uyy"])
    Hvec = (G[:, None] * IIxx - 2 * F[:, None] * IIxy + E[:, None] * IIyy) / (2 * det[:, None])
    K = (np.sum(IIxx * IIyy, 1) - np.sum(IIxy * IIxy, 1)) / det
    if ux.shape[1] == 3:
        N = np.cross(ux, uy)
        N /= np.linalg.norm(N, axis=1, keepdims=True)
        H = np.sum(Hvec * N, 1)
    else:
        H = np.linalg.norm(Hvec, axis=1)
    return H, K, (E, F, G)


def contact_angles(d: dict[str, np.ndarray], normals: np.ndarray) -> np.ndarray:
    """Angle (degrees) between the outward conormal and the position vector at boundary points."""
    ux, uy = d["ux"], d["uy"]
    nx, ny = normals[:, :1], normals[:, 1:]
    eta = ux * nx + uy * ny
    tau = -ux * ny + uy * nx
    eta = eta - (np.sum(eta * tau, 1) / np.sum(tau * tau, 1))[:, None] * tau
    eta /= np.linalg.norm(eta, axis=1, keepdims=True)
    pos = d["u"] / np.linalg.norm(d["u"], axis=1, keepdims=True)
    return np.degrees(np.arccos(np.clip(np.sum(eta * pos, 1), -1, 1)))


def surface_metrics(smap: SurfaceMap) -> dict:
    smp = smap.cluster.solution.system.sampling
    bd = smap.derivatives(smp.points)
    sphere = np.abs(np.linalg.norm(bd["u"], axis=1) - 1)
    qd = smap.derivatives(smap.quad_points)
    D = np.sum(qd["ux"] ** 2, 1) - np.sum(qd["uy"] ** 2, 1)
    E = np.sum(qd["ux"] * qd["uy"], 1)
    H_in, K_in, _ = fundamental_forms(qd, points=smap.quad_points)
    H_bd, K_bd, _ = fundamental_forms(bd, points=smp.points)
    angles = contact_angles(bd, smp.normals)
    return {
        "sphere_error": float(sphere.max()),
        "isothermal_max": float(max(np.abs(D).max(), np.abs(2 * E).max())),
        "isothermal_l2": float(np.sqrt(np.sum(smap.quad_weights * (D**2 + 4 * E**2)))),
        "max_mean_curvature": float(max(np.abs(H_in).max(), np.abs(H_bd).max())),
        "max_gauss_curvature": float(max(np.abs(K_in).max(), np.abs(K_bd).max())),
        "max_contact_angle_deg": float(angles.max()),
    }


def boundary_centroids(smap: SurfaceMap) -> np.ndarray:
    """Centroid of each boundary curve's image, weighted by image arclength."""
    smp = smap.cluster.solution.system.sampling
    d = smap.derivatives(smp.points)
    speed = np.linalg.norm(d["ux"] * smp.tangents[:, :1] + d["uy"] * smp.tangents[:, 1:], axis=1)
    out = []
    for k in range(smp.counts.size):
        sl = smp.slice(k)
        w = smp.weights[sl] * speed[sl]
        out.append(w @ d["u"][sl] / w.sum())
    return np.array(out)


_NEIGHBOURS = {4: 3, 6: 4, 8: 3, 12: 5, 20: 3}


def polyhedron_spread(points: np.ndarray) -> float:
    """Relative spread of nearest-neighbour edge lengths of a Platonic vertex set."""
    n = len(points)
    if n not in _NEIGHBOURS:
        raise ValueError(f"no Platonic solid with {n} vertices")
    dist = np.linalg.norm(points[:, None] - points[None], axis=2)
    np.fill_diagonal(dist, np.inf)
    edges = np.sort(dist, axis=1)[:, : _NEIGHBOURS[n]]
    return float((edges.max() - edges.min()) / edges.mean())


def catenoid_deviation(vertices: np.ndarray, alpha: float, axis: np.ndarray | None = None) -> np.ndarray:
    """Residual ``sqrt(x^2+y^2) - alpha cosh(z/alpha)`` with z along ``axis`` (fitted if omitted)."""
    v = np.asarray(vertices, dtype=float)
    if axis is None:
        axis = fit_catenoid_axis(v, alpha)
    axis = axis / np.linalg.norm(axis)
    z = v @ axis
    rad = np.linalg.norm(v - z[:, None] * axis, axis=1)
    return rad - alpha * np.cosh(z / alpha)


def fit_catenoid_axis(vertices: np.ndarray, alpha: float) -> np.ndarray:
    """Least-squares axis through the origin, started from each principal direction."""
    v = np.asarray(vertices, dtype=float)
    _, _, Vt = np.linalg.svd(v - v.mean(0), full_matrices=False)

    def unit(ang):
        return np.array([np.sin(ang[0]) * np.cos(ang[1]), np.sin(ang[0]) * np.sin(ang[1]), np.cos(ang[0])])

    best = None
    for a in Vt:
        start = np.array([np.arccos(np.clip(a[2], -1, 1)), np.arctan2(a[1], a[0])])
        res = least_squares(lambda ang: catenoid_deviation(v, alpha, unit(ang)), start)
        if best is None or res.cost < best.cost:
            best = res
    return unit(best.x)


# --- meshing ----------------------------------------------------------------------

@dataclass
class TriangulatedSurface:
    vertices: np.ndarray
    faces: np.ndarray
    source: np.ndarray
    mean_curvature: np.ndarray
    gauss_curvature: np.ndarray
    boundary: np.ndarray

    def write_obj(self, path, header: str = "") -> None:
        lines = [f"# {h}" for h in header.splitlines() if h]
        lines += [f"v {x:.12g} {y:.12g} {z:.12g}" for x, y, z in self.vertices]
        lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in self.faces]
        Path(path).write_text("\n".join(lines) + "\n")

    def write_csv(self, path, header: str = "") -> None:
        lines = [f"# {h}" for h in header.splitlines() if h]
        lines.append("vertex_id,src_r_or_x,src_theta_or_y,mean_curvature,gauss_curvature")
        for i, ((x, y), h, k) in enumerate(zip(self.source, self.mean_curvature, self.gauss_curvature)):
            lines.append(f"{i + 1},{x:.12g},{y:.12g},{h:.12g},{k:.12g}")
        Path(path).write_text("\n".join(lines) + "\n")


def _domain_points(disk: PuncturedDisk, resolution: int):
    h = 2 * np.pi / resolution
    pts, bnd = [], []
    for k in range(disk.n_components):
        r = disk.component_radius(k)
        K = max(12, int(round(resolution * r)))
        th = 2 * np.pi * np.arange(K) / K
        pts.append(disk.component_center(k) + r * np.c_[np.cos(th), np.sin(th)])
        bnd.append(np.ones(K, bool))
    g = np.arange(-1 + h / 2, 1, h)
    X, Y = np.meshgrid(g, g)
    grid = np.c_[X.ravel(), Y.ravel()]
    keep = np.hypot(grid[:, 0], grid[:, 1]) < 1 - 0.5 * h
    for c, r in zip(disk.centers, disk.radii):
        keep &= np.hypot(grid[:, 0] - c[0], grid[:, 1] - c[1]) > r + 0.5 * h
    pts.append(grid[keep])
    bnd.append(np.zeros(int(keep.sum()), bool))
    return np.concatenate(pts), np.concatenate(bnd)


def triangulate_domain(disk: PuncturedDisk, resolution: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    pts, bnd = _domain_points(disk, resolution)
    tri = Delaunay(pts)
    faces = tri.simplices
    cent = pts[faces].mean(axis=1)
    faces = faces[disk.contains(cent)]
    if faces.size == 0:
        raise TriangulationError("no triangles left inside the domain")
    # Counter-clockwise orientation in the source domain.
    p = pts[faces]
    area = (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1]) - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1])
    faces = np.where((area < 0)[:, None], faces[:, [0, 2, 1]], faces)
    used = np.zeros(len(pts), bool)
    used[faces.ravel()] = True
    if not used.all():
        remap = -np.ones(len(pts), int)
        remap[used] = np.arange(used.sum())
        pts, bnd, faces = pts[used], bnd[used], remap[faces]
    return pts, faces, bnd


def export_mesh(smap: SurfaceMap, resolution: int = 200) -> TriangulatedSurface:
    if smap.n != 3:
        raise ExportRefusedError(f"mesh export needs a map into R^3; this cluster spans R^{smap.n}")
    pts, faces, bnd = triangulate_domain(smap.disk, resolution)
    d = smap.derivatives(pts)
    H, K, _ = fundamental_forms(d, points=pts)
    return TriangulatedSurface(d["u"], faces, pts, H, K, bnd)
