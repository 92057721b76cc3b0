"""Closed-form Steklov data for rotationally symmetric annuli, the critical
catenoid, and conformal-map density fixtures used for validation."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .domain import BoundaryDensity, PuncturedDisk, fourier_basis

ROOT_TOL = 1e-12
GOLDEN = (np.sqrt(5) - 1) / 2


def bisect(f: Callable[[float], float], lo: float, hi: float, tol: float = ROOT_TOL) -> float:
    """Root of a continuous ``f`` with a sign change on ``[lo, hi]``."""
    flo = f(lo)
    if flo == 0:
        return lo
    if np.sign(flo) == np.sign(f(hi)):
        raise ValueError("bracket does not contain a sign change")
    while hi - lo > tol * max(1.0, abs(lo)):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if fm == 0:
            return mid
        if np.sign(fm) == np.sign(flo):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class AnnulusSpec:
    s: float
    rho_s: float = 1.0
    rho_1: float = 1.0

    def __post_init__(self):
        if not 0 < self.s < 1:
            raise ValueError("inner radius must lie in (0, 1)")
        if self.rho_s <= 0 or self.rho_1 <= 0:
            raise ValueError("densities must be positive")

    @property
    def length(self) -> float:
        return 2 * np.pi * (self.rho_1 + self.s * self.rho_s)

    @property
    def disk(self) -> PuncturedDisk:
        return PuncturedDisk([[0.0, 0.0]], [self.s])

    def density(self, order: int = 0) -> BoundaryDensity:
        return BoundaryDensity.constant(2, order, [self.rho_s, self.rho_1])


@dataclass(frozen=True)
class AnnulusEigenvalue:
    value: float
    k: int
    kind: str  # "constant", "radial", "+" or "-"


def radial_eigenvalue(spec: AnnulusSpec) -> float:
    s, rs, r1 = spec.s, spec.rho_s, spec.rho_1
    return (r1 + s * rs) / (r1 * rs * s) / np.log(1 / s)


def angular_eigenvalues(spec: AnnulusSpec, k: int) -> tuple[float, float]:
    """``(sigma_{k,-}, sigma_{k,+})`` for angular frequency ``k``."""
    s, rs, r1 = spec.s, spec.rho_s, spec.rho_1
    x = -k * np.log(s)
    p = r1 + s * rs
    q = 4 * r1 * s * rs * np.tanh(x) ** 2
    pref = k / (2 * r1 * s * rs) / np.tanh(x)
    root = np.sqrt(max(p * p - q, 0.0))
    return pref * (p - root), pref * (p + root)


def annulus_spectrum(spec: AnnulusSpec, k_max: int) -> list[AnnulusEigenvalue]:
    """Eigenvalues with angular index up to ``k_max``, multiplicity expanded, ascending."""
    out = [AnnulusEigenvalue(0.0, 0, "constant"), AnnulusEigenvalue(radial_eigenvalue(spec), 0, "radial")]
    for k in range(1, k_max + 1):
        lo, hi = angular_eigenvalues(spec, k)
        out += [AnnulusEigenvalue(lo, k, "-")] * 2 + [AnnulusEigenvalue(hi, k, "+")] * 2
    return sorted(out, key=lambda e: e.value)


def annulus_values(spec: AnnulusSpec, count: int) -> np.ndarray:
    """The lowest ``count`` eigenvalues (sigma_0 = 0 first), guaranteed complete."""
    k_max = max(2, count)
    vals = np.array([e.value for e in annulus_spectrum(spec, k_max)])
    # sigma_{k,-} grows at least like k * min(rho)^-1 / 2; k_max = count is ample
    # but check that no higher angular index could still intrude.
    bound = min(angular_eigenvalues(spec, k_max + 1))
    vals = vals[:count]
    if vals.size < count or vals[-1] > bound:
        return annulus_values_bruteforce(spec, count)
    return vals


def annulus_values_bruteforce(spec: AnnulusSpec, count: int) -> np.ndarray:
    k = count
    while True:
        vals = np.array([e.value for e in annulus_spectrum(spec, k)])
        if vals.size >= count and vals[count - 1] <= min(angular_eigenvalues(spec, k + 1)):
            return vals[:count]
        k *= 2


def normalized_eigenvalue(j: int, s: float, ratio: float) -> float:
    """sigma_j * L on the annulus with rho_1 = 1 and rho_s = ratio."""
    spec = AnnulusSpec(s, ratio, 1.0)
    return float(annulus_values(spec, j + 1)[j] * spec.length)


# --- critical catenoid -------------------------------------------------------

@dataclass(frozen=True)
class CatenoidParams:
    beta: float
    s: float
    alpha: float


def catenoid_params() -> CatenoidParams:
    beta = bisect(lambda b: b - 1 / np.tanh(b), 1.0, 2.0)
    return CatenoidParams(beta, float(np.exp(-2 * beta)), float((beta**2 + np.cosh(beta) ** 2) ** -0.5))


def catenoid_map(r, theta, params: CatenoidParams | None = None) -> np.ndarray:
    """The conformal map of the annulus ``s* <= |x| <= 1`` onto the critical catenoid."""
    p = params or catenoid_params()
    r, theta = np.broadcast_arrays(np.asarray(r, dtype=float), np.asarray(theta, dtype=float))
    if np.any(r < p.s * (1 - 1e-12)) or np.any(r > 1 + 1e-12):
        raise ValueError("radius outside the critical annulus")
    t = np.log(r / np.sqrt(p.s))
    norm = np.sqrt(np.cosh(p.beta) ** 2 + p.beta**2)
    return np.stack([np.cosh(t) * np.cos(theta), np.cosh(t) * np.sin(theta), t], axis=-1) / norm


def catenoid_map_derivatives(x: np.ndarray, params: CatenoidParams | None = None) -> dict[str, np.ndarray]:
    """Cartesian first and second derivatives of the critical catenoid map at points ``x`` (n, 2).

    With ``q = sqrt(s*)`` the components are real parts of analytic functions:
    ``X = Re (z/q + q/z)/2``, ``Y = Re -i(z/q - q/z)/2``, ``Z = Re log(z/q)``.
    """
    p = params or catenoid_params()
    norm = np.sqrt(np.cosh(p.beta) ** 2 + p.beta**2)
    z = x[:, 0] + 1j * x[:, 1]
    q = np.sqrt(p.s)
    g = [(z / q + q / z) / 2, (1 / q - q / z**2) / 2, (q / z**3)]
    h = [-1j * (z / q - q / z) / 2, -1j * (1 / q + q / z**2) / 2, -1j * (-q / z**3)]
    l = [np.log(z) - np.log(q), 1 / z, -1 / z**2]
    out = {"u": [], "ux": [], "uy": [], "uxx": [], "uxy": [], "uyy": []}
    for f, f1, f2 in (g, h, l):
        out["u"].append(f.real)
        out["ux"].append(f1.real)
        out["uy"].append(-f1.imag)
        out["uxx"].append(f2.real)
        out["uxy"].append(-f2.imag)
        out["uyy"].append(-f2.real)
    return {k: np.stack(v, axis=1) / norm for k, v in out.items()}


def odd_cover_radius(j: int) -> float:
    """Inner radius of the ``m``-fold cover of the critical catenoid, ``m = (j+1)/2``.

    Solves ``(1 + s^m)/(1 - s^m) = -log s^{m/2}``; the left side increases and
    the right side decreases in ``s``, so the root is unique.
    """
    if j < 1 or j % 2 == 0:
        raise ValueError("j must be a positive odd integer")
    m = (j + 1) // 2

    def f(s):
        sm = s**m
        return (1 + sm) / (1 - sm) + 0.5 * m * np.log(s)

    return bisect(f, 1e-12, 1 - 1e-12)


def odd_cover_value(j: int) -> float:
    """sigma_j * L at the odd-cover maximizer: ``8 pi / log(1/s)``."""
    return 8 * np.pi / np.log(1 / odd_cover_radius(j))


# --- extremal scan over annuli -----------------------------------------------

@dataclass(frozen=True)
class ScanResult:
    j: int
    value: float
    s: float
    ratio: float
    multiplicity: int
    attained: bool


def _multiplicity(j: int, s: float, ratio: float, rtol: float) -> int:
    spec = AnnulusSpec(s, ratio, 1.0)
    vals = annulus_values(spec, j + 8)
    target = vals[j]
    return int(np.count_nonzero(np.abs(vals - target) <= rtol * target))


def _golden_max(f, lo, hi, tol):
    a, b = lo, hi
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
    x = 0.5 * (a + b)
    return x, f(x)


def _branches(s: float, ratio: float, k_max: int) -> list[tuple[str, int, int]]:
    """Smooth eigenvalue branches as (kind, k, multiplicity)."""
    out = [("radial", 0, 1)]
    for k in range(1, k_max + 1):
        out += [("-", k, 2), ("+", k, 2)]
    return out


def _branch_value(kind: str, k: int, s: float, ratio: float) -> float:
    spec = AnnulusSpec(s, ratio, 1.0)
    if kind == "radial":
        v = radial_eigenvalue(spec)
    else:
        lo, hi = angular_eigenvalues(spec, k)
        v = lo if kind == "-" else hi
    return v * spec.length


def _refine_on_ridge(j: int, a0: float, q0: float, bounds_a, bounds_q):
    """Maximize sigma_j L near (a0, q0) as an epigraph problem over the smooth
    branches that are not strictly below sigma_j at the starting point."""
    from scipy.optimize import minimize

    s0 = float(np.exp(a0))
    k_max = j + 4
    br = _branches(s0, q0, k_max)
    vals = np.array([_branch_value(kd, k, s0, q0) for kd, k, _ in br])
    target = normalized_eigenvalue(j, s0, q0)
    order = np.argsort(vals)
    below, active = 1, []  # sigma_0 is always below
    for i in order:
        kd, k, m = br[i]
        if vals[i] < target * (1 - 0.05) and below + m <= j:
            below += m
        else:
            active.append(br[i])

    def cons(x):
        s = float(np.exp(x[0]))
        return np.array([_branch_value(kd, k, s, x[1]) for kd, k, _ in active]) - x[2]

    x0 = np.array([a0, q0, target - 1e-3])
    res = minimize(lambda x: -x[2], x0, jac=lambda x: np.array([0.0, 0.0, -1.0]), method="SLSQP",
                   constraints=[{"type": "ineq", "fun": cons}],
                   bounds=[bounds_a, bounds_q, (None, None)], options={"ftol": 1e-14, "maxiter": 500})
    a, q = float(res.x[0]), float(res.x[1])
    return a, q, normalized_eigenvalue(j, float(np.exp(a)), q)


def annulus_extremal_scan(j: int, s_range=(1e-3, 0.9), ratio_range=(1.0, 15.0),
                          grid: int = 60, n_starts: int = 8, mult_rtol: float = 1e-6) -> ScanResult:
    """Maximize ``sigma_j L`` over the inner radius and density ratio.

    A coarse grid (log-spaced in ``s``) locates the basin; the maximum sits
    on a crossing of smooth eigenvalue branches, so it is refined by an
    epigraph solve over those branches, then polished by golden-section
    sweeps on each axis.
    """
    f = lambda a, q: normalized_eigenvalue(j, float(np.exp(a)), q)
    bounds_a = (float(np.log(s_range[0])), float(np.log(s_range[1])))
    ls = np.linspace(*bounds_a, grid)
    qs = np.linspace(ratio_range[0], ratio_range[1], grid)
    vals = np.array([[f(a, q) for q in qs] for a in ls])
    ia, iq = np.unravel_index(np.argmax(vals), vals.shape)
    a0, q0, best = ls[ia], qs[iq], vals[ia, iq]
    # Refine from every grid-local maximum, best first.
    padded = np.pad(vals, 1, constant_values=-np.inf)
    neigh = np.max([padded[1 + di: 1 + di + grid, 1 + dq: 1 + dq + grid]
                    for di in (-1, 0, 1) for dq in (-1, 0, 1) if di or dq], axis=0)
    peaks = np.argwhere(vals >= neigh)
    peaks = peaks[np.argsort(-vals[peaks[:, 0], peaks[:, 1]], kind="stable")][:n_starts]
    for pa, pq in peaks:
        a, q, v = _refine_on_ridge(j, ls[pa], qs[pq], bounds_a, tuple(ratio_range))
        if v > best:
            a0, q0, best = a, q, v
    for _ in range(2):
        a, v = _golden_max(lambda a: f(a, q0), max(bounds_a[0], a0 - 1e-7), min(bounds_a[1], a0 + 1e-7), 1e-15)
        if v > best:
            best, a0 = v, a
        q, v = _golden_max(lambda q: f(a0, q), max(ratio_range[0], q0 - 1e-6),
                           min(ratio_range[1], q0 + 1e-6), 1e-14)
        if v > best:
            best, q0 = v, q
    s = float(np.exp(a0))
    on_edge = (abs(a0 - bounds_a[0]) < 1e-6 or abs(a0 - bounds_a[1]) < 1e-6
               or abs(q0 - ratio_range[0]) < 1e-6 or abs(q0 - ratio_range[1]) < 1e-6)
    return ScanResult(j, float(best), s, float(q0), _multiplicity(j, s, q0, mult_rtol), not on_edge)


# --- conformal-map density fixtures -------------------------------------------

class FunctionDensity:
    """Density given pointwise by a function of (component, angle)."""

    def __init__(self, func: Callable[[int, np.ndarray], np.ndarray], n_components: int, name: str = ""):
        self._func = func
        self.n_components = n_components
        self.name = name

    def evaluate(self, k: int, theta) -> np.ndarray:
        return np.asarray(self._func(k, np.asarray(theta, dtype=float)), dtype=float)

    def project(self, order: int) -> BoundaryDensity:
        """Discrete Fourier projection with ``8 * order`` points per component."""
        n = max(8 * order, 8)
        th = 2 * np.pi * np.arange(n) / n
        F = fourier_basis(th, order)
        vecs = []
        for k in range(self.n_components):
            vals = self.evaluate(k, th)
            coef = F.T @ vals * (2.0 / n)
            coef[0] *= 0.5
            vecs.append(coef)
        return BoundaryDensity.from_vector(np.concatenate(vecs), self.n_components, order)


def eccentric_mobius(c1: float, r1: float) -> tuple[float, float]:
    """Parameters ``(a, r2)`` of the Mobius map sending the eccentric annulus
    ``|z - c1| > r1, |z| < 1`` to the concentric annulus ``r2 < |x| < 1``."""
    if not (-1 < c1 - r1 and c1 + r1 < 1 and r1 > 0):
        raise ValueError("need c1 +- r1 inside (-1, 1)")
    if c1 == 0:
        return 0.0, r1
    p = 1 + c1**2 - r1**2
    a = (p - np.sqrt(p**2 - 4 * c1**2)) / (2 * c1)
    r2 = (r1 + c1 - a) / (1 - a * (r1 + c1))
    return float(a), float(abs(r2))


def eccentric_fixture(c1: float = 0.25, r1: float = 0.25):
    """Concentric annulus with the density pulled back from the eccentric annulus with rho = 1."""
    a, r2 = eccentric_mobius(c1, r1)
    radii = [r2, 1.0]

    def rho(k, th):
        x = radii[k] * np.exp(1j * th)
        return np.abs((1 - a**2) / (1 + a * x) ** 2)

    return PuncturedDisk([[0.0, 0.0]], [r2]), FunctionDensity(rho, 2, "eccentric")


def hippopede_fixture(alpha: float):
    if not 0 < alpha <= 1:
        raise ValueError("hippopede parameter must lie in (0, 1]")

    def rho(k, th):
        x2 = np.exp(2j * th)
        return np.abs(2 * alpha * (1 + alpha - (1 - alpha) * x2) / (1 + alpha + (1 - alpha) * x2) ** 2)

    return PuncturedDisk(), FunctionDensity(rho, 1, "hippopede")


def neck_maps(alpha: float, beta: float, r1: float = 0.833):
    """The two maps of the glued-disk example and their derivatives."""
    a = 0.5 * (1 / alpha - 1 / (r1 + 1))
    b = 1 / alpha - a
    c = (alpha + 4 * a * alpha - 2) / (2 * a * alpha**2)
    w = 1j * (1 - beta)

    def h1(y):
        return (y - 1j * c) / (a * y**2 + b) + 1j * alpha * c

    def dh1(y):
        den = a * y**2 + b
        return (den - (y - 1j * c) * 2 * a * y) / den**2

    def h2(x):
        xi = x / r1
        return (xi - w) / (1 + w * xi)

    def dh2(x):
        xi = x / r1
        return (1 + w * w) / (1 + w * xi) ** 2 / r1

    return h1, dh1, h2, dh2


def neck_fixture(alpha: float = 0.2, beta: float = 0.1, r1: float = 0.833):
    """Unit-disk density for the disk-glued-to-disk map, rescaled from radius ``r1``.

    On the disk of radius ``r1`` the density is ``|h1'(h2(x)) h2'(x)|``; the
    dilation ``x = r1 xi`` multiplies it by ``r1``.
    """
    if not (0 < alpha < 1 and 0 < beta < 1):
        raise ValueError("neck parameters must lie in (0, 1)")
    h1, dh1, h2, dh2 = neck_maps(alpha, beta, r1)

    def rho(k, th):
        x = r1 * np.exp(1j * th)
        return r1 * np.abs(dh1(h2(x)) * dh2(x))

    return PuncturedDisk(), FunctionDensity(rho, 1, "neck")


def fixture_density(name: str, **params):
    if name == "eccentric":
        return eccentric_fixture(**params)
    if name == "hippopede":
        return hippopede_fixture(**params)
    if name == "neck":
        return neck_fixture(**params)
    raise ValueError(f"unknown fixture {name!r}")


# Table of maximal sigma_j L over annuli (j, value, s, rho_s/rho_1, multiplicity).
ANNULUS_TABLE = [
    (1, 10.4748, 0.0908, 11.0161, 3),
    (3, 20.9496, 0.3013, 3.3180, 3),
    (4, 21.7656, 0.2679, 3.7322, 4),
    (5, 31.4243, 0.4494, 2.2251, 3),
    (6, 31.9495, 0.4354, 2.2988, 4),
]

# First ten nontrivial eigenvalues of the hippopede densities.
HIPPOPEDE_TABLE = {
    0.1: [0.37968380, 1.99258587, 2.02351398, 2.20444005, 2.78126086,
          3.99885096, 4.09199872, 4.36831843, 4.95936215, 6.02510373],
    0.06: [0.32288183, 1.99688224, 2.00917719, 2.66795651, 2.66795651,
           3.99479457, 4.03602674, 4.24271684, 4.80367369, 6.00554908],
    0.04: [0.28797139, 1.99338590, 1.99906424, 2.09627138, 2.60980134,
           3.98132439, 4.00214005, 4.18039135, 4.69676874, 6.01439273],
}
HIPPOPEDE_LIMIT = [0, 2, 2, 2, 2, 4, 4, 4, 4, 6]
