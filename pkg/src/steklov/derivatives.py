"""First-order sensitivities of Steklov eigenvalues.

Every design coordinate (hole centers, hole radii, density Fourier
coefficients) induces a symmetric bilinear form on an eigenspace.  For a
simple eigenvalue its diagonal entry is the derivative; for a cluster the
eigenvalues of the form contracted with a direction are the one-sided
derivatives of the branches.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .domain import BoundaryDensity, PuncturedDisk, fourier_basis
from .mps import CLUSTER_RTOL, SteklovSolution, solve_eigs, assemble
from .domain import sample_boundary


class ClusteredEigenvalueError(ValueError):
    """A simple-eigenvalue formula was requested for a clustered eigenvalue."""


class NotOrthonormalError(ValueError):
    pass


@dataclass(frozen=True)
class DesignLayout:
    """Flat design-vector layout ``[centers (b-1, 2), radii (b-1), density (b, 2N+1)]``."""

    n_components: int
    order: int

    @property
    def n_holes(self) -> int:
        return self.n_components - 1

    @property
    def centers(self) -> slice:
        return slice(0, 2 * self.n_holes)

    @property
    def radii(self) -> slice:
        return slice(2 * self.n_holes, 3 * self.n_holes)

    @property
    def density(self) -> slice:
        return slice(3 * self.n_holes, self.size)

    def density_component(self, k: int) -> slice:
        start = 3 * self.n_holes + k * (2 * self.order + 1)
        return slice(start, start + 2 * self.order + 1)

    @property
    def size(self) -> int:
        return 3 * self.n_holes + self.n_components * (2 * self.order + 1)

    def pack(self, disk: PuncturedDisk, density: BoundaryDensity) -> np.ndarray:
        return np.concatenate([disk.centers.ravel(), disk.radii, density.to_vector()])

    def unpack(self, x: np.ndarray) -> tuple[PuncturedDisk, BoundaryDensity]:
        x = np.asarray(x, dtype=float)
        disk = PuncturedDisk(x[self.centers].reshape(-1, 2), x[self.radii])
        density = BoundaryDensity.from_vector(x[self.density], self.n_components, self.order)
        return disk, density


@dataclass(frozen=True)
class GradientVector:
    d_centers: np.ndarray
    d_radii: np.ndarray
    d_density: np.ndarray  # (b, 2N+1) flat Fourier layout per component
    value: float

    def flat(self) -> np.ndarray:
        return np.concatenate([self.d_centers.ravel(), self.d_radii, self.d_density.ravel()])

    @classmethod
    def from_flat(cls, vec: np.ndarray, layout: DesignLayout, value: float) -> "GradientVector":
        return cls(vec[layout.centers].reshape(-1, 2), vec[layout.radii],
                   vec[layout.density].reshape(layout.n_components, -1), value)


@dataclass(frozen=True)
class Cluster:
    """Eigenfunctions of one (near-)multiple eigenvalue, rho-orthonormal on the samples."""

    solution: SteklovSolution
    indices: tuple[int, ...]
    coefficients: np.ndarray
    sigma: float

    @property
    def size(self) -> int:
        return len(self.indices)

    def boundary_values(self) -> np.ndarray:
        return self.solution.system.values @ self.coefficients

    def gram(self) -> np.ndarray:
        sysm = self.solution.system
        U = self.boundary_values()
        return U.T @ ((sysm.sampling.weights * sysm.rho)[:, None] * U)


def make_cluster(solution: SteklovSolution, indices) -> Cluster:
    """Gram-Schmidt the eigenvectors in the discrete rho-weighted inner product."""
    idx = tuple(int(i) for i in np.atleast_1d(indices))
    sysm = solution.system
    coef = solution.coefficients[:, list(idx)]
    U = sysm.values @ coef
    G = U.T @ ((sysm.sampling.weights * sysm.rho)[:, None] * U)
    R = np.linalg.cholesky(G).T  # G = R^T R
    coef = np.linalg.solve(R.T, coef.T).T
    return Cluster(solution, idx, coef, float(np.mean(solution.eigenvalues[list(idx)])))


def cluster_for(solution: SteklovSolution, index: int, rtol: float = CLUSTER_RTOL) -> Cluster:
    return make_cluster(solution, solution.cluster_of(index, rtol))


def _density_tangential(density, disk: PuncturedDisk, sampling) -> np.ndarray:
    out = np.zeros(sampling.n_samples)
    if not hasattr(density, "dtheta"):
        return out
    for k in range(sampling.counts.size):
        sl = sampling.slice(k)
        out[sl] = density.dtheta(k, sampling.theta[sl]) / disk.component_radius(k)
    return out


def derivative_forms(solution: SteklovSolution, coefficients: np.ndarray, sigma,
                     density: BoundaryDensity) -> tuple[np.ndarray, np.ndarray]:
    """Bilinear derivative forms for eigenfunctions given by ``coefficients``.

    Returns ``(T, dL)`` where ``T[d, a, b]`` is the symmetric form of design
    coordinate ``d`` and ``dL[d]`` the derivative of the weighted length.
    ``sigma`` is a scalar (cluster value) or one value per column (simple
    eigenvalues, only the diagonal is then meaningful).
    """
    sysm = solution.system
    smp = sysm.sampling
    disk = sysm.basis.disk
    layout = DesignLayout(disk.n_components, density.order)
    p = coefficients.shape[1]
    sig = np.broadcast_to(np.asarray(sigma, dtype=float), (p,))
    # Symmetric use of sigma in off-diagonal entries.
    sab = 0.5 * (sig[:, None] + sig[None, :])
    w, rho = smp.weights, sysm.rho
    U = sysm.values @ coefficients
    Ux = sysm.grad_x @ coefficients
    Uy = sysm.grad_y @ coefficients
    rho_t = _density_tangential(density, disk, smp)

    T = np.zeros((layout.size, p, p))
    dL = np.zeros(layout.size)
    for k in range(disk.n_components):
        sl = smp.slice(k)
        F = fourier_basis(smp.theta[sl], density.order)
        uu = U[sl, :, None] * U[sl, None, :]
        T[layout.density_component(k)] = -sab * np.einsum("lm,l,lab->mab", F, w[sl], uu)
        dL[layout.density_component(k)] = F.T @ w[sl]

    for i in range(disk.n_holes):
        sl = smp.slice(i)
        r = disk.radii[i]
        th = smp.theta[sl]
        ww, rr, rt = w[sl], rho[sl], rho_t[sl]
        uu = U[sl, :, None] * U[sl, None, :]
        grad = Ux[sl, :, None] * Ux[sl, None, :] + Uy[sl, :, None] * Uy[sl, None, :]
        # (|grad u|^2 - 2 rho^2 sigma^2 u^2 - sigma kappa rho u^2) with kappa = -1/r.
        g = grad - 2 * (rr**2)[:, None, None] * sab**2 * uu + (sab / r) * rr[:, None, None] * uu
        tang = sab * (rt[:, None, None] * uu)
        # Radial growth: v.n = -1, v.t = 0.
        T[layout.radii.start + i] = -np.einsum("l,lab->ab", ww, g)
        # Translation of the center by e_x and e_y: n = -(cos, sin), t = (-sin, cos).
        cos, sin = np.cos(th), np.sin(th)
        T[layout.centers.start + 2 * i] = np.einsum("l,lab->ab", ww * -cos, g) + np.einsum("l,lab->ab", ww * -sin, tang)
        T[layout.centers.start + 2 * i + 1] = np.einsum("l,lab->ab", ww * -sin, g) + np.einsum("l,lab->ab", ww * cos, tang)
        # L' = int kappa rho (v.n) - rho_t (v.t) ds.
        dL[layout.radii.start + i] = np.sum(ww * rr) / r
        dL[layout.centers.start + 2 * i] = np.sum(ww * (rr * cos / r + rt * sin))
        dL[layout.centers.start + 2 * i + 1] = np.sum(ww * (rr * sin / r - rt * cos))
    return T, dL


def _check_simple(solution: SteklovSolution, index: int, rtol: float = CLUSTER_RTOL):
    if len(solution.cluster_of(index, rtol)) > 1:
        raise ClusteredEigenvalueError(
            f"eigenvalue {index} is clustered; use cluster_directional_derivatives")


def eigenvalue_gradients(solution: SteklovSolution, indices, density: BoundaryDensity,
                         normalized: bool = False) -> np.ndarray:
    """Per-eigenvector gradients (rows) over the full design layout, no cluster check.

    Uses each computed eigenvector as is; for clusters the rows are only
    meaningful in sum (trace) or after diagonalizing along a direction.
    """
    idx = list(np.atleast_1d(indices))
    coef = solution.coefficients[:, idx]
    sig = solution.eigenvalues[idx]
    T, dL = derivative_forms(solution, coef, sig, density)
    g = np.einsum("daa->ad", T)
    if normalized:
        L = solution.weighted_length
        g = L * g + sig[:, None] * dL[None, :]
    return g


def _gradient(solution, index, density, normalized, rtol) -> GradientVector:
    _check_simple(solution, index, rtol)
    disk = solution.basis.disk
    layout = DesignLayout(disk.n_components, density.order)
    g = eigenvalue_gradients(solution, index, density, normalized)[0]
    sigma = float(solution.eigenvalues[index])
    value = sigma * solution.weighted_length if normalized else sigma
    return GradientVector.from_flat(g, layout, value)


def grad_density(solution: SteklovSolution, index: int, density: BoundaryDensity,
                 normalized: bool = False, rtol: float = CLUSTER_RTOL) -> GradientVector:
    """Derivative of ``sigma`` (or ``sigma L``) with respect to the density coefficients."""
    g = _gradient(solution, index, density, normalized, rtol)
    return GradientVector(np.zeros_like(g.d_centers), np.zeros_like(g.d_radii), g.d_density, g.value)


def grad_shape(solution: SteklovSolution, index: int, density: BoundaryDensity,
               normalized: bool = False, rtol: float = CLUSTER_RTOL) -> GradientVector:
    """Derivative of ``sigma`` (or ``sigma L``) with respect to hole centers and radii."""
    g = _gradient(solution, index, density, normalized, rtol)
    return GradientVector(g.d_centers, g.d_radii, np.zeros_like(g.d_density), g.value)


def density_direction_derivative(solution: SteklovSolution, index: int, delta_rho: np.ndarray,
                                 normalized: bool = False) -> float:
    """Derivative along an arbitrary density perturbation given at the boundary samples."""
    smp = solution.system.sampling
    u = solution.boundary_values(index)[:, 0]
    sigma = float(solution.eigenvalues[index])
    if normalized:
        L = solution.weighted_length
        return float(sigma * np.sum(smp.weights * (1 - L * u**2) * delta_rho))
    return float(-sigma * np.sum(smp.weights * u**2 * delta_rho))


def cluster_form(cluster: Cluster, direction: np.ndarray, density: BoundaryDensity,
                 orth_tol: float = 1e-8) -> tuple[np.ndarray, float]:
    """The cluster's derivative form contracted with a design direction, and ``dL``."""
    if not np.allclose(cluster.gram(), np.eye(cluster.size), atol=orth_tol):
        raise NotOrthonormalError("cluster eigenfunctions are not rho-orthonormal")
    T, dL = derivative_forms(cluster.solution, cluster.coefficients, cluster.sigma, density)
    direction = np.asarray(direction, dtype=float)
    Q = np.einsum("d,dab->ab", direction, T)
    return 0.5 * (Q + Q.T), float(dL @ direction)


def cluster_directional_derivatives(cluster: Cluster, direction: np.ndarray, density: BoundaryDensity,
                                    normalized: bool = False) -> np.ndarray:
    """One-sided derivatives of the branches of a clustered eigenvalue, ascending."""
    Q, dL = cluster_form(cluster, direction, density)
    d = np.linalg.eigvalsh(Q)
    if normalized:
        L = cluster.solution.weighted_length
        d = L * d + cluster.sigma * dL
    return d


def cluster_density_derivatives(cluster: Cluster, delta_rho: np.ndarray) -> np.ndarray:
    """Branch derivatives for a density perturbation given pointwise at the samples."""
    if not np.allclose(cluster.gram(), np.eye(cluster.size), atol=1e-8):
        raise NotOrthonormalError("cluster eigenfunctions are not rho-orthonormal")
    U = cluster.boundary_values()
    w = cluster.solution.system.sampling.weights
    Q = -cluster.sigma * U.T @ ((w * delta_rho)[:, None] * U)
    return np.linalg.eigvalsh(0.5 * (Q + Q.T))


def unit_sphere_diagnostic(cluster: Cluster) -> float:
    """Max pointwise deviation of the best fit ``u(x)^T P u(x) = 1`` on the boundary.

    ``P`` ranges over positive semidefinite matrices, i.e. sums of squares of
    arbitrary combinations of the cluster functions.
    """
    U = cluster.boundary_values()
    p = U.shape[1]
    iu = np.triu_indices(p)
    feats = U[:, iu[0]] * U[:, iu[1]] * np.where(iu[0] == iu[1], 1.0, 2.0)
    sw = np.sqrt(cluster.solution.system.sampling.weights)
    coef, *_ = np.linalg.lstsq(sw[:, None] * feats, sw, rcond=None)
    P = np.zeros((p, p))
    P[iu] = coef
    P = P + np.triu(P, 1).T
    lam, V = np.linalg.eigh(P)
    P = (V * np.clip(lam, 0, None)) @ V.T
    fit = np.einsum("la,ab,lb->l", U, P, U)
    return float(np.max(np.abs(fit - 1)))


# --- finite-difference oracle ----------------------------------------------------

def solve_design(x: np.ndarray, layout: DesignLayout, n_samples: int, M: int, k_max: int) -> SteklovSolution:
    disk, density = layout.unpack(x)
    smp = sample_boundary(disk, n_samples)
    return solve_eigs(assemble(disk, density, smp, M), k_max)


def finite_difference(x: np.ndarray, layout: DesignLayout, direction: np.ndarray, indices,
                      n_samples: int, M: int, h: float = 1e-6, normalized: bool = False) -> np.ndarray:
    """Central difference of the sorted eigenvalues ``indices`` along ``direction``."""
    idx = list(np.atleast_1d(indices))
    k_max = max(idx) + 2

    def vals(xx):
        sol = solve_design(xx, layout, n_samples, M, k_max)
        v = sol.eigenvalues[idx]
        return v * sol.weighted_length if normalized else v

    return (vals(x + h * direction) - vals(x - h * direction)) / (2 * h)


def one_sided_branch_derivatives(x: np.ndarray, layout: DesignLayout, direction: np.ndarray, indices,
                                 n_samples: int, M: int, h: float = 1e-6, normalized: bool = False) -> np.ndarray:
    """Forward differences of the sorted cluster eigenvalues (branch derivatives, ascending)."""
    idx = list(np.atleast_1d(indices))
    k_max = max(idx) + 2

    def vals(xx):
        sol = solve_design(xx, layout, n_samples, M, k_max)
        v = sol.eigenvalues[idx]
        return v * sol.weighted_length if normalized else v

    v0 = vals(x)
    v1 = vals(x + h * direction)
    v2 = vals(x + 2 * h * direction)
    # Second-order one-sided difference; branches stay sorted for small h.
    return np.sort((-3 * v0 + 4 * v1 - v2) / (2 * h))
