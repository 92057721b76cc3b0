"""Method of particular solutions for the density-weighted Steklov problem.

The basis consists of harmonic polynomials ``Re z^j, Im z^j`` for the outer
circle, scaled singular terms ``r_i^j Re (z-c_i)^-j, r_i^j Im (z-c_i)^-j``
and ``log|z - c_i|`` for every hole.  Boundary collocation of
``d_n u = sigma rho u`` in the least-squares sense gives the pencil
``C^T A u = sigma C^T C u`` with ``A = sqrt(w) d_n phi`` and
``C = sqrt(w) rho phi``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la

from .domain import BoundarySampling, Density, PuncturedDisk, sample_boundary, validate

RANK_TOL = 1e-12
IMAG_TOL = 1e-8
NEG_TOL = 1e-8
CLUSTER_RTOL = 1e-6


class SteklovSolveError(RuntimeError):
    """The discrete eigenproblem did not produce enough acceptable eigenvalues."""


class OutsideDomainError(ValueError):
    pass


@dataclass(frozen=True)
class SteklovBasis:
    disk: PuncturedDisk
    order: int

    @property
    def size(self) -> int:
        return (2 * self.order + 1) * self.disk.n_components

    def labels(self) -> list[str]:
        M = self.order
        out = ["Re z^0"]
        for j in range(1, M + 1):
            out += [f"Re z^{j}", f"Im z^{j}"]
        for i in range(self.disk.n_holes):
            out.append(f"log|z-c{i}|")
            for j in range(1, M + 1):
                out += [f"Re (z-c{i})^-{j}", f"Im (z-c{i})^-{j}"]
        return out

    def _complex_columns(self, z: np.ndarray, nderiv: int):
        """Analytic ``f`` per column (already phase-rotated so that the real
        basis function is ``Re f``) and its first ``nderiv`` derivatives."""
        M = self.order
        z = np.asarray(z, dtype=complex).reshape(-1)
        j = np.arange(1, M + 1)
        # Im g = Re(-i g); interleave Re/Im columns.
        phase = np.tile(np.array([1.0, -1j]), M)
        jj = np.repeat(j, 2)

        blocks = [[] for _ in range(nderiv + 1)]
        zp = z[:, None] ** np.arange(M + 1)[None, :]
        f0 = np.concatenate([zp[:, :1], zp[:, jj]], axis=1) * np.concatenate([[1.0], phase])
        blocks[0].append(f0)
        if nderiv >= 1:
            d1 = np.zeros((z.size, 2 * M + 1), complex)
            d1[:, 1:] = jj * zp[:, jj - 1] * phase
            blocks[1].append(d1)
        if nderiv >= 2:
            d2 = np.zeros((z.size, 2 * M + 1), complex)
            zm2 = np.where(jj >= 2, zp[:, np.maximum(jj - 2, 0)], 0.0)
            d2[:, 1:] = jj * (jj - 1) * zm2 * phase
            blocks[2].append(d2)

        for c, r in zip(self.disk.complex_centers, self.disk.radii):
            w = z - c
            q = (r / w)[:, None] ** jj[None, :]  # (r/(z-c))^j
            blocks[0].append(np.concatenate([np.log(w)[:, None], q * phase], axis=1))
            if nderiv >= 1:
                blocks[1].append(np.concatenate([(1 / w)[:, None], (-jj * q / w[:, None]) * phase], axis=1))
            if nderiv >= 2:
                blocks[2].append(np.concatenate([(-1 / w**2)[:, None],
                                                 (jj * (jj + 1) * q / w[:, None] ** 2) * phase], axis=1))
        return [np.concatenate(b, axis=1) for b in blocks]

    def evaluate(self, points: np.ndarray, nderiv: int = 0) -> dict[str, np.ndarray]:
        """Basis values and Cartesian derivatives at ``points`` (n, 2).

        Keys: ``v`` and, as requested, ``dx, dy`` and ``dxx, dxy, dyy``.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        z = pts[:, 0] + 1j * pts[:, 1]
        cols = self._complex_columns(z, nderiv)
        out = {"v": cols[0].real}
        if nderiv >= 1:
            out["dx"] = cols[1].real
            out["dy"] = -cols[1].imag
        if nderiv >= 2:
            out["dxx"] = cols[2].real
            out["dxy"] = -cols[2].imag
            out["dyy"] = -cols[2].real
        return out


@dataclass(frozen=True)
class SteklovSystem:
    """Collocation matrices together with the data needed to interpret them."""

    A: np.ndarray
    C: np.ndarray
    basis: SteklovBasis
    sampling: BoundarySampling
    rho: np.ndarray
    values: np.ndarray  # phi(p_l)
    normal_derivs: np.ndarray  # d_n phi(p_l)
    grad_x: np.ndarray
    grad_y: np.ndarray

    def __iter__(self):
        return iter((self.A, self.C))


def assemble(disk: PuncturedDisk, density: Density, sampling: BoundarySampling, M: int,
             rho: np.ndarray | None = None) -> SteklovSystem:
    """Build ``A[l, phi] = sqrt(w_l) d_n phi(p_l)`` and ``C[l, phi] = sqrt(w_l) rho(p_l) phi(p_l)``."""
    if M < 1:
        raise ValueError("basis order must be positive")
    if not validate(disk).feasible:
        raise ValueError("infeasible punctured disk")
    if np.any(sampling.counts < 2 * M + 2):
        raise ValueError(f"sampling too coarse for M={M}: need >= {2 * M + 2} points per component, "
                         f"got {sampling.counts.min()}")
    basis = SteklovBasis(disk, M)
    ev = basis.evaluate(sampling.points, nderiv=1)
    dn = ev["dx"] * sampling.normals[:, :1] + ev["dy"] * sampling.normals[:, 1:]
    if rho is None:
        rho = sampling.density_values(density)
    sw = np.sqrt(sampling.weights)[:, None]
    A = sw * dn
    C = sw * rho[:, None] * ev["v"]
    return SteklovSystem(A, C, basis, sampling, np.asarray(rho, float), ev["v"], dn, ev["dx"], ev["dy"])


@dataclass(frozen=True)
class SteklovSolution:
    eigenvalues: np.ndarray
    coefficients: np.ndarray  # (basis size, k) in unscaled basis coordinates
    residuals: np.ndarray
    rank: int
    suspect: np.ndarray
    system: SteklovSystem = field(repr=False)

    @property
    def basis(self) -> SteklovBasis:
        return self.system.basis

    @property
    def weighted_length(self) -> float:
        return float(np.dot(self.system.sampling.weights, self.system.rho))

    def boundary_values(self, index=None) -> np.ndarray:
        """Eigenfunction values at the boundary samples, shape (n, k)."""
        coef = self.coefficients if index is None else self.coefficients[:, np.atleast_1d(index)]
        return self.system.values @ coef

    def clusters(self, rtol: float = CLUSTER_RTOL) -> list[list[int]]:
        return find_clusters(self.eigenvalues, rtol)

    def cluster_of(self, index: int, rtol: float = CLUSTER_RTOL) -> list[int]:
        for cl in self.clusters(rtol):
            if index in cl:
                return cl
        raise IndexError(index)


def find_clusters(values: np.ndarray, rtol: float = CLUSTER_RTOL) -> list[list[int]]:
    """Group consecutive sorted values whose relative gap is at most ``rtol``."""
    clusters: list[list[int]] = []
    for i, v in enumerate(values):
        if clusters:
            prev = values[clusters[-1][-1]]
            if abs(v - prev) <= rtol * max(abs(v), abs(prev), 1e-300):
                clusters[-1].append(i)
                continue
        clusters.append([i])
    return clusters


def _reduced_operator(A: np.ndarray, C: np.ndarray, rank_tol: float):
    scale = np.linalg.norm(C, axis=0)
    scale[scale == 0] = 1.0
    U, s, Vt = la.svd(C / scale, full_matrices=False, lapack_driver="gesdd")
    keep = s > rank_tol * s[0]
    U, s, V = U[:, keep], s[keep], Vt[keep].T
    K = (U.T @ (A / scale) @ V) / s[None, :]
    return K, V, s, scale


def solve_eigs(system: SteklovSystem, k_max: int, rank_tol: float = RANK_TOL) -> SteklovSolution:
    """Lowest ``k_max + 1`` eigenpairs of the collocation pencil (including sigma_0 ~ 0)."""
    A, C = system.A, system.C
    K, V, s, scale = _reduced_operator(A, C, rank_tol)
    lam, Z = la.eig(K)
    re, im = lam.real, lam.imag
    ok = np.isfinite(lam) & (np.abs(im) <= IMAG_TOL * (1 + np.abs(re))) & (re >= -NEG_TOL)
    # Borderline candidates fail the strict test only by a small factor.
    borderline = (~ok & np.isfinite(lam)
                  & (np.abs(im) <= 1e3 * IMAG_TOL * (1 + np.abs(re))) & (re >= -1e3 * NEG_TOL))
    idx = np.flatnonzero(ok | borderline)
    idx = idx[np.argsort(re[idx], kind="stable")]
    if np.count_nonzero(ok[idx[: k_max + 1]]) < min(k_max + 1, idx.size) or idx.size < k_max + 1:
        n_ok = int(np.count_nonzero(ok))
        if n_ok < k_max + 1:
            raise SteklovSolveError(f"only {n_ok} acceptable eigenvalues, need {k_max + 1}")
    idx = idx[: k_max + 1]
    sig = re[idx]
    coef = (V / s[None, :]) @ Z[:, idx].real
    coef = coef / scale[:, None]

    w = system.sampling.weights
    vals = system.values @ coef
    dn = system.normal_derivs @ coef
    norms = np.sqrt(np.einsum("l,l,lk->k", w, system.rho, vals**2))
    coef = coef / norms
    vals, dn = vals / norms, dn / norms
    # Fix a deterministic sign: largest-magnitude boundary value positive.
    sign = np.sign(vals[np.argmax(np.abs(vals), axis=0), np.arange(vals.shape[1])])
    sign[sign == 0] = 1
    coef, vals, dn = coef * sign, vals * sign, dn * sign
    resid = np.max(np.abs(dn - sig * system.rho[:, None] * vals), axis=0) / np.max(np.abs(vals), axis=0)
    return SteklovSolution(sig, coef, resid, int(s.size), borderline[idx], system)


def solve(disk: PuncturedDisk, density: Density, n_samples: int, M: int, k_max: int,
          rank_tol: float = RANK_TOL) -> SteklovSolution:
    """Convenience wrapper: sample, assemble and solve."""
    sampling = sample_boundary(disk, n_samples)
    return solve_eigs(assemble(disk, density, sampling, M), k_max, rank_tol)


def eval_eigenfunction(solution: SteklovSolution, index, points: np.ndarray,
                       check_domain: bool = True, tol: float = 1e-9) -> dict[str, np.ndarray]:
    """Values, gradients and Hessian entries of eigenfunction(s) at ``points``.

    Returns arrays of shape (n_points, n_index) under keys ``u``, ``ux``,
    ``uy``, ``uxx``, ``uxy``, ``uyy``.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if check_domain and not np.all(solution.basis.disk.contains(pts, tol)):
        raise OutsideDomainError("evaluation point inside a hole or outside the unit disk")
    coef = solution.coefficients[:, np.atleast_1d(index)]
    ev = solution.basis.evaluate(pts, nderiv=2)
    return {"u": ev["v"] @ coef, "ux": ev["dx"] @ coef, "uy": ev["dy"] @ coef,
            "uxx": ev["dxx"] @ coef, "uxy": ev["dxy"] @ coef, "uyy": ev["dyy"] @ coef}
