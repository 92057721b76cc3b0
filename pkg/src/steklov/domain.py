"""Punctured unit disks, boundary densities and arclength sampling.

Components are indexed from 0: holes are ``0 .. b-2`` and the outer unit
circle is component ``b-1``.  On every circle the angle ``theta`` is measured
around that circle's own center.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

DEFAULT_RHO_MIN = 1e-4
MIN_POINTS_PER_COMPONENT = 8


class InfeasibleDomainError(ValueError):
    """Raised when a punctured disk violates containment or disjointness."""


class Density(Protocol):
    """Anything that can evaluate a boundary density on component ``k``."""

    def evaluate(self, k: int, theta: np.ndarray) -> np.ndarray: ...


@dataclass(frozen=True)
class PuncturedDisk:
    """Unit disk minus ``b-1`` open disks ``|z - c_i| < r_i``."""

    centers: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    radii: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        centers = np.asarray(self.centers, dtype=float).reshape(-1, 2)
        radii = np.asarray(self.radii, dtype=float).reshape(-1)
        if centers.shape[0] != radii.shape[0]:
            raise ValueError("centers and radii must have the same length")
        centers.setflags(write=False)
        radii.setflags(write=False)
        object.__setattr__(self, "centers", centers)
        object.__setattr__(self, "radii", radii)

    @property
    def n_holes(self) -> int:
        return self.radii.shape[0]

    @property
    def n_components(self) -> int:
        return self.n_holes + 1

    @property
    def complex_centers(self) -> np.ndarray:
        return self.centers[:, 0] + 1j * self.centers[:, 1]

    def component_center(self, k: int) -> np.ndarray:
        return np.zeros(2) if k == self.n_holes else self.centers[k]

    def component_radius(self, k: int) -> float:
        return 1.0 if k == self.n_holes else float(self.radii[k])

    @property
    def component_radii(self) -> np.ndarray:
        """Radii of all components, the outer circle last."""
        return np.append(self.radii, 1.0)

    @property
    def perimeter(self) -> float:
        return 2 * np.pi * float(self.component_radii.sum())

    @property
    def area(self) -> float:
        return np.pi * (1.0 - float(np.sum(self.radii**2)))

    def contains(self, points: np.ndarray, tol: float = 0.0) -> np.ndarray:
        """Boolean mask of points lying in the closed domain (up to ``tol``)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        inside = np.hypot(pts[:, 0], pts[:, 1]) <= 1.0 + tol
        for c, r in zip(self.centers, self.radii):
            inside &= np.hypot(pts[:, 0] - c[0], pts[:, 1] - c[1]) >= r - tol
        return inside

    def to_dict(self) -> dict:
        return {"centers": self.centers.tolist(), "radii": self.radii.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "PuncturedDisk":
        return cls(np.asarray(data.get("centers", []), dtype=float).reshape(-1, 2),
                   data.get("radii", []))

    def rotated(self, angle: float) -> "PuncturedDisk":
        c, s = np.cos(angle), np.sin(angle)
        rot = np.array([[c, -s], [s, c]])
        return PuncturedDisk(self.centers @ rot.T, self.radii)


@dataclass(frozen=True)
class FeasibilityReport:
    containment: np.ndarray
    disjointness: np.ndarray
    pairs: list[tuple[int, int]]

    @property
    def margins(self) -> np.ndarray:
        return np.concatenate([self.containment, self.disjointness])

    @property
    def min_margin(self) -> float:
        m = self.margins
        return float(m.min()) if m.size else np.inf

    @property
    def feasible(self) -> bool:
        return bool(np.all(self.margins > 0) and np.all(self.containment_radii_ok))

    containment_radii_ok: np.ndarray = field(default_factory=lambda: np.ones(0, bool))


def validate(disk: PuncturedDisk) -> FeasibilityReport:
    """Containment margins ``(1-r_i)^2 - |c_i|^2`` and pairwise disjointness
    margins ``|c_i-c_j|^2 - (r_i+r_j)^2``; feasible iff all are positive."""
    c, r = disk.centers, disk.radii
    containment = (1.0 - r) ** 2 - np.sum(c**2, axis=1)
    pairs = [(i, j) for i in range(disk.n_holes) for j in range(i + 1, disk.n_holes)]
    disjoint = np.array([np.sum((c[i] - c[j]) ** 2) - (r[i] + r[j]) ** 2 for i, j in pairs])
    # (1-r)^2 > |c|^2 also admits r > 1 + |c|; reject it separately.
    radii_ok = (r > 0) & (r < 1)
    return FeasibilityReport(containment, disjoint.reshape(-1), pairs, radii_ok)


@dataclass(frozen=True)
class BoundaryDensity:
    """Truncated Fourier series of the density on every boundary component.

    ``a[k, l]`` multiplies ``cos(l theta)`` and ``b[k, l]`` multiplies
    ``sin(l theta)`` on component ``k``; ``b[:, 0]`` is unused and kept at 0.
    """

    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        a = np.array(self.a, dtype=float, ndmin=2)
        b = np.array(self.b, dtype=float, ndmin=2)
        if a.shape != b.shape:
            raise ValueError("cosine and sine coefficient arrays differ in shape")
        b[:, 0] = 0.0
        a.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @classmethod
    def constant(cls, n_components: int, order: int = 0, values=1.0) -> "BoundaryDensity":
        a = np.zeros((n_components, order + 1))
        a[:, 0] = values
        return cls(a, np.zeros_like(a))

    @property
    def order(self) -> int:
        return self.a.shape[1] - 1

    @property
    def n_components(self) -> int:
        return self.a.shape[0]

    def evaluate(self, k: int, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        ell = np.arange(self.order + 1)
        arg = np.multiply.outer(theta, ell)
        return np.cos(arg) @ self.a[k] + np.sin(arg) @ self.b[k]

    def dtheta(self, k: int, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        ell = np.arange(self.order + 1)
        arg = np.multiply.outer(theta, ell)
        return np.cos(arg) @ (ell * self.b[k]) - np.sin(arg) @ (ell * self.a[k])

    def scaled(self, alpha: float) -> "BoundaryDensity":
        return BoundaryDensity(alpha * self.a, alpha * self.b)

    def rotated(self, angle: float) -> "BoundaryDensity":
        """Density of the domain rotated by ``angle``: rho'(theta) = rho(theta - angle)."""
        ell = np.arange(self.order + 1)
        c, s = np.cos(ell * angle), np.sin(ell * angle)
        return BoundaryDensity(self.a * c - self.b * s, self.a * s + self.b * c)

    # Flat layout used by the optimizer: per component [a_0..a_N, b_1..b_N].
    def to_vector(self) -> np.ndarray:
        return np.concatenate([np.concatenate([self.a[k], self.b[k, 1:]])
                               for k in range(self.n_components)])

    @classmethod
    def from_vector(cls, vec, n_components: int, order: int) -> "BoundaryDensity":
        vec = np.asarray(vec, dtype=float).reshape(n_components, 2 * order + 1)
        a = vec[:, : order + 1]
        b = np.concatenate([np.zeros((n_components, 1)), vec[:, order + 1:]], axis=1)
        return cls(a, b)

    def to_dict(self) -> dict:
        return {"fourier_order": self.order,
                "density": [{"a": self.a[k].tolist(), "b": self.b[k].tolist()}
                            for k in range(self.n_components)]}

    @classmethod
    def from_dict(cls, data: dict) -> "BoundaryDensity":
        comps = data["density"]
        order = int(data.get("fourier_order", len(comps[0]["a"]) - 1))
        a = np.zeros((len(comps), order + 1))
        b = np.zeros_like(a)
        for k, comp in enumerate(comps):
            ak = np.asarray(comp["a"], dtype=float)
            bk = np.asarray(comp.get("b", []), dtype=float)
            a[k, : ak.size] = ak
            # ``b`` may be given with (N+1 entries, b[0] = 0) or without the leading zero.
            if bk.size == order + 1:
                b[k] = bk
            else:
                b[k, 1: bk.size + 1] = bk
        return cls(a, b)


def fourier_basis(theta: np.ndarray, order: int) -> np.ndarray:
    """Columns ``[1, cos t, .., cos Nt, sin t, .., sin Nt]`` matching the flat layout."""
    ell = np.arange(1, order + 1)
    arg = np.multiply.outer(theta, ell)
    return np.concatenate([np.ones((theta.size, 1)), np.cos(arg), np.sin(arg)], axis=1)


@dataclass(frozen=True)
class BoundarySampling:
    """Uniform-in-arclength samples on every boundary circle.

    All per-point arrays are concatenated over components in component order;
    ``component[i]`` tells which circle point ``i`` lies on.
    """

    counts: np.ndarray
    theta: np.ndarray
    points: np.ndarray
    normals: np.ndarray
    tangents: np.ndarray
    weights: np.ndarray
    component: np.ndarray

    @property
    def n_samples(self) -> int:
        return self.theta.size

    @property
    def offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.counts)])

    def slice(self, k: int) -> slice:
        off = self.offsets
        return slice(int(off[k]), int(off[k + 1]))

    @property
    def z(self) -> np.ndarray:
        return self.points[:, 0] + 1j * self.points[:, 1]

    def density_values(self, density: Density) -> np.ndarray:
        out = np.empty(self.n_samples)
        for k in range(self.counts.size):
            sl = self.slice(k)
            out[sl] = density.evaluate(k, self.theta[sl])
        return out


def allocate_points(radii: np.ndarray, n_samples: int,
                    minimum: int = MIN_POINTS_PER_COMPONENT) -> np.ndarray:
    """Largest-remainder split of ``n_samples`` proportional to ``radii`` with a floor."""
    radii = np.asarray(radii, dtype=float)
    ideal = n_samples * radii / radii.sum()
    counts = np.floor(ideal).astype(int)
    remainder = n_samples - counts.sum()
    # Stable sort keeps the allocation deterministic on ties.
    order = np.argsort(-(ideal - counts), kind="stable")
    counts[order[:remainder]] += 1
    for k in np.flatnonzero(counts < minimum):
        deficit = minimum - counts[k]
        counts[k] = minimum
        while deficit > 0:
            donor = int(np.argmax(counts))
            counts[donor] -= 1
            deficit -= 1
    return counts


def sample_boundary(disk: PuncturedDisk, n_samples: int,
                    minimum: int = MIN_POINTS_PER_COMPONENT) -> BoundarySampling:
    if not validate(disk).feasible:
        raise InfeasibleDomainError("cannot sample an infeasible punctured disk")
    b = disk.n_components
    if n_samples < max(16, 2 * minimum) * b:
        raise ValueError(f"n_samples={n_samples} is too small for {b} components")
    radii = disk.component_radii
    counts = allocate_points(radii, n_samples, minimum)
    thetas, pts, nrm, tng, wts, comp = [], [], [], [], [], []
    for k in range(b):
        n, r = counts[k], radii[k]
        center = disk.component_center(k)
        th = 2 * np.pi * np.arange(n) / n
        radial = np.column_stack([np.cos(th), np.sin(th)])
        thetas.append(th)
        pts.append(center + r * radial)
        nrm.append(radial if k == b - 1 else -radial)
        tng.append(np.column_stack([-np.sin(th), np.cos(th)]))
        wts.append(np.full(n, 2 * np.pi * r / n))
        comp.append(np.full(n, k))
    return BoundarySampling(counts, *(np.concatenate(x) for x in (thetas, pts, nrm, tng, wts, comp)))


def weighted_length(disk: PuncturedDisk, density: Density, sampling: BoundarySampling) -> float:
    """Quadrature value of the rho-weighted boundary length."""
    return float(np.dot(sampling.weights, sampling.density_values(density)))


def eval_density(density: BoundaryDensity, k: int, theta) -> np.ndarray:
    return density.evaluate(k, theta)


def eval_density_tangential_derivative(density: BoundaryDensity, disk: PuncturedDisk,
                                       k: int, theta) -> np.ndarray:
    """d rho / ds along the counterclockwise tangent of circle ``k``."""
    return density.dtheta(k, theta) / disk.component_radius(k)


def density_minimum(density: BoundaryDensity, n_check: int = 512) -> float:
    th = 2 * np.pi * np.arange(n_check) / n_check
    return float(min(density.evaluate(k, th).min() for k in range(density.n_components)))
