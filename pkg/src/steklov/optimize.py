"""Maximize a length-normalized Steklov eigenvalue over punctured disks.

The nonsmooth problem  max_x sigma_j(x) L(x)  is written in epigraph form

    max t   subject to   t <= sigma_i L,   i = j, ..., j+m-1,
                         rho >= rho_min on a fixed angular grid,
                         smooth geometric margins > 0,

and solved with a primal-dual log-barrier method.  The Lagrangian Hessian is
approximated by damped BFGS; every accepted iterate is strictly feasible.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg as la

from .derivatives import DesignLayout, derivative_forms, make_cluster
from .domain import (DEFAULT_RHO_MIN, BoundaryDensity, PuncturedDisk, fourier_basis,
                     sample_boundary, validate)
from .mps import CLUSTER_RTOL, SteklovSolveError, assemble, solve_eigs

log = logging.getLogger(__name__)


class InitializationError(RuntimeError):
    pass


class EvaluationError(RuntimeError):
    """Raised when a design cannot be evaluated (infeasible or eigensolver failure)."""


@dataclass(frozen=True)
class OptimizationProblem:
    n_components: int
    j: int = 1
    window: int | None = None
    order: int = 8
    basis_order: int = 20
    n_samples: int = 1000
    rho_min: float = DEFAULT_RHO_MIN
    rho_max: float | None = None
    max_iter: int = 5000
    tol: float = 1e-6
    mu0: float = 1.0
    mu_min: float = 1e-9
    mu_factor: float = 0.2
    positivity_points: int = 64
    max_step: float = 0.1
    group_rtol: float = CLUSTER_RTOL
    stagnation: int = 30
    seed: int = 0

    def __post_init__(self):
        if self.n_components < 1 or self.j < 1:
            raise ValueError("need n_components >= 1 and j >= 1")
        if self.window is not None and self.window < 1:
            raise ValueError("cluster window must be >= 1")
        for name in ("basis_order", "n_samples", "max_iter", "positivity_points"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.mu_factor < 1 or self.mu0 <= 0 or self.tol <= 0:
            raise ValueError("invalid barrier schedule")

    @property
    def m(self) -> int:
        return self.window if self.window is not None else self.j + 3

    @property
    def layout(self) -> DesignLayout:
        return DesignLayout(self.n_components, self.order)

    def to_dict(self) -> dict:
        return asdict(self)


# --- constraints ----------------------------------------------------------------

def _geometric(x: np.ndarray, layout: DesignLayout) -> tuple[np.ndarray, np.ndarray]:
    """Smooth margins: r_i, 1 - r_i, (1-r_i)^2 - |c_i|^2, |c_i-c_k|^2 - (r_i+r_k)^2."""
    h = layout.n_holes
    c = x[layout.centers].reshape(-1, 2)
    r = x[layout.radii]
    vals, rows = [], []

    def row():
        return np.zeros(layout.size)

    for i in range(h):
        g = row(); g[layout.radii.start + i] = 1.0
        vals.append(r[i]); rows.append(g)
        g = row(); g[layout.radii.start + i] = -1.0
        vals.append(1 - r[i]); rows.append(g)
        g = row()
        g[layout.centers.start + 2 * i: layout.centers.start + 2 * i + 2] = -2 * c[i]
        g[layout.radii.start + i] = -2 * (1 - r[i])
        vals.append((1 - r[i]) ** 2 - c[i] @ c[i]); rows.append(g)
    for i in range(h):
        for k in range(i + 1, h):
            d = c[i] - c[k]
            g = row()
            g[layout.centers.start + 2 * i: layout.centers.start + 2 * i + 2] = 2 * d
            g[layout.centers.start + 2 * k: layout.centers.start + 2 * k + 2] = -2 * d
            g[layout.radii.start + i] = g[layout.radii.start + k] = -2 * (r[i] + r[k])
            vals.append(d @ d - (r[i] + r[k]) ** 2); rows.append(g)
    if not rows:
        return np.zeros(0), np.zeros((0, layout.size))
    return np.array(vals), np.array(rows)


def _positivity(x: np.ndarray, problem: OptimizationProblem) -> tuple[np.ndarray, np.ndarray]:
    layout = problem.layout
    K = max(problem.positivity_points, 8 * problem.order)
    theta = 2 * np.pi * np.arange(K) / K
    F = fourier_basis(theta, problem.order)
    vals, rows = [], []
    for k in range(problem.n_components):
        sl = layout.density_component(k)
        J = np.zeros((K, layout.size))
        J[:, sl] = F
        rho = F @ x[sl]
        vals.append(rho - problem.rho_min); rows.append(J)
        if problem.rho_max is not None:
            vals.append(problem.rho_max - rho); rows.append(-J)
    return np.concatenate(vals), np.vstack(rows)


def window_gradients(solution, density: BoundaryDensity, j: int, m: int,
                     direction: np.ndarray | None = None, rtol: float = CLUSTER_RTOL):
    """Values and gradients of sigma_i L for i in [j, j+m).

    Inside a cluster the bilinear derivative form is diagonalized along
    ``direction``; sorted branches are matched to sorted indices.  Without a
    direction the cluster's own trace gradient is used.
    """
    L = solution.weighted_length
    layout = DesignLayout(solution.basis.disk.n_components, density.order)
    values = solution.eigenvalues[j: j + m] * L
    grads = np.zeros((m, layout.size))
    for cl in solution.clusters(rtol):
        inside = [i for i in cl if j <= i < j + m]
        if not inside:
            continue
        if len(cl) == 1:
            i = cl[0]
            T, dL = derivative_forms(solution, solution.coefficients[:, [i]],
                                     solution.eigenvalues[i], density)
            grads[i - j] = L * T[:, 0, 0] + solution.eigenvalues[i] * dL
            continue
        cluster = make_cluster(solution, cl)
        T, dL = derivative_forms(solution, cluster.coefficients, cluster.sigma, density)
        Tt = L * T + cluster.sigma * dL[:, None, None] * np.eye(len(cl))[None]
        dvec = direction if direction is not None else np.einsum("daa->d", Tt) / len(cl)
        Q = np.einsum("d,dab->ab", dvec, Tt)
        _, V = np.linalg.eigh(0.5 * (Q + Q.T))
        branch = np.einsum("dab,ai,bi->id", Tt, V, V)
        for pos, i in enumerate(cl):
            if j <= i < j + m:
                grads[i - j] = branch[pos]
    return values, grads


@dataclass
class Evaluation:
    x: np.ndarray
    solution: object
    L: float
    eig_values: np.ndarray
    eig_grads: np.ndarray
    pos_values: np.ndarray
    pos_jac: np.ndarray
    geo_values: np.ndarray
    geo_jac: np.ndarray

    @property
    def sigma_tilde(self) -> float:
        return float(self.eig_values[0])


def objective_and_constraints(x: np.ndarray, problem: OptimizationProblem,
                              direction: np.ndarray | None = None) -> Evaluation:
    """Eigenvalue window, positivity and geometric margins with their Jacobians."""
    layout = problem.layout
    x = np.asarray(x, dtype=float)
    geo, geo_jac = _geometric(x, layout)
    pos, pos_jac = _positivity(x, problem)
    if np.any(geo <= 0) or np.any(pos <= 0):
        raise EvaluationError("design is not strictly feasible")
    disk, density = layout.unpack(x)
    if not validate(disk).feasible:
        raise EvaluationError("design is not strictly feasible")
    k_max = problem.j + problem.m + 1
    try:
        smp = sample_boundary(disk, problem.n_samples, minimum=3 * problem.basis_order)
        rho = smp.density_values(density)
        # The barrier only sees a fixed angular grid; collocation points in between
        # must respect the floor too.
        if rho.min() < problem.rho_min:
            raise EvaluationError("density below the floor at a collocation point")
        sol = solve_eigs(assemble(disk, density, smp, problem.basis_order, rho=rho), k_max)
        vals, grads = window_gradients(sol, density, problem.j, problem.m, direction, problem.group_rtol)
    except (SteklovSolveError, np.linalg.LinAlgError, ValueError) as exc:
        raise EvaluationError(str(exc)) from exc
    if not (np.all(np.isfinite(vals)) and np.all(np.isfinite(grads))):
        raise EvaluationError("non-finite eigenvalue data")
    return Evaluation(x, sol, sol.weighted_length, vals, grads, pos, pos_jac, geo, geo_jac)


# --- state ------------------------------------------------------------------------

@dataclass
class OptimizationState:
    x: np.ndarray
    t: float
    mu: float
    lam: np.ndarray | None = None
    B: np.ndarray | None = None
    direction: np.ndarray | None = None
    iteration: int = 0
    history: list = field(default_factory=list)
    best_x: np.ndarray | None = None
    best_value: float = -np.inf
    best_iteration: int = -1
    converged: bool = False
    message: str = ""

    def design(self, problem: OptimizationProblem, best: bool = True):
        x = self.best_x if (best and self.best_x is not None) else self.x
        return problem.layout.unpack(x)

    def to_dict(self) -> dict:
        def arr(a):
            return None if a is None else np.asarray(a).tolist()
        return {"x": arr(self.x), "t": self.t, "mu": self.mu, "lam": arr(self.lam), "B": arr(self.B),
                "direction": arr(self.direction), "iteration": self.iteration, "history": self.history,
                "best_x": arr(self.best_x), "best_value": self.best_value,
                "best_iteration": self.best_iteration, "converged": self.converged, "message": self.message}

    @classmethod
    def from_dict(cls, d: dict) -> "OptimizationState":
        def arr(a):
            return None if a is None else np.asarray(a, dtype=float)
        return cls(arr(d["x"]), float(d["t"]), float(d["mu"]), arr(d["lam"]), arr(d["B"]),
                   arr(d["direction"]), int(d["iteration"]), list(d["history"]), arr(d["best_x"]),
                   float(d["best_value"]), int(d["best_iteration"]), bool(d["converged"]), d["message"])


def annulus_design(problem: OptimizationProblem, radius: float = 0.3) -> np.ndarray:
    """Centered hole (b = 2) with rho = 1."""
    if problem.n_components != 2:
        raise ValueError("annulus initialization needs two boundary components")
    disk = PuncturedDisk(np.zeros((1, 2)), np.array([radius]))
    return problem.layout.pack(disk, BoundaryDensity.constant(2, problem.order))


def random_design(problem: OptimizationProblem, rng: np.random.Generator,
                  max_draws: int = 1000) -> np.ndarray:
    """Random holes with radii in [0.05, 0.25] and uniform centers, rho = 1."""
    h = problem.n_components - 1
    density = BoundaryDensity.constant(problem.n_components, problem.order)
    for _ in range(max_draws):
        r = rng.uniform(0.05, 0.25, h)
        rad = np.sqrt(rng.uniform(0, 1, h))
        ang = rng.uniform(0, 2 * np.pi, h)
        c = np.c_[rad * np.cos(ang), rad * np.sin(ang)]
        disk = PuncturedDisk(c, r)
        if validate(disk).feasible:
            return problem.layout.pack(disk, density)
    raise InitializationError(f"no feasible initialization after {max_draws} draws")


# --- solver -----------------------------------------------------------------------

TAU = 0.995
KAPPA = 10.0


class _Barrier:
    """Constraint bookkeeping for the epigraph variables z = (y, t).

    The design is ``x = P y + q``: every coordinate is free except the outer
    mean density, which is eliminated through the scale gauge
    ``sum_k a_{k,0} = b`` (sigma L is invariant under rho -> alpha rho).
    """

    def __init__(self, problem: OptimizationProblem):
        self.problem = problem
        layout = problem.layout
        b = problem.n_components
        dep = layout.density_component(b - 1).start
        free = np.flatnonzero(np.arange(layout.size) != dep)
        self.P = np.zeros((layout.size, free.size))
        self.P[free, np.arange(free.size)] = 1.0
        for k in range(b - 1):
            col = np.searchsorted(free, layout.density_component(k).start)
            self.P[dep, col] = -1.0
        self.q = np.zeros(layout.size)
        self.q[dep] = float(b)
        self.free = free
        K = max(problem.positivity_points, 8 * problem.order)
        self.pos_weight = 1.0 / K

    def normalize(self, x: np.ndarray) -> np.ndarray:
        layout = self.problem.layout
        x = np.array(x, dtype=float)
        total = sum(x[layout.density_component(k).start] for k in range(layout.n_components))
        x[layout.density] *= layout.n_components / total
        return x

    def embed(self, z: np.ndarray) -> np.ndarray:
        return self.P @ z[:-1] + self.q

    def reduce(self, x: np.ndarray) -> np.ndarray:
        return x[self.free]

    def weights(self, ev: Evaluation) -> np.ndarray:
        return np.concatenate([np.ones(ev.eig_values.size), np.full(ev.pos_values.size, self.pos_weight),
                               np.ones(ev.geo_values.size)])

    def constraints(self, ev: Evaluation, t: float) -> tuple[np.ndarray, np.ndarray]:
        n_eig = ev.eig_values.size
        J_eig = np.c_[ev.eig_grads @ self.P, -np.ones(n_eig)]
        J_pos = np.c_[ev.pos_jac @ self.P, np.zeros(ev.pos_values.size)]
        J_geo = np.c_[ev.geo_jac @ self.P, np.zeros(ev.geo_values.size)]
        g = np.concatenate([ev.eig_values - t, ev.pos_values, ev.geo_values])
        return g, np.vstack([J_eig, J_pos, J_geo])


def _kkt_error(grad_f, g, J, lam, mu) -> float:
    s_d = max(1.0, np.abs(lam).sum() / max(lam.size, 1)) / 1.0
    dual = np.max(np.abs(grad_f - J.T @ lam)) / s_d
    comp = np.max(np.abs(lam * g - mu))
    return float(max(dual, comp))


def _bfgs_update(B: np.ndarray, s: np.ndarray, y: np.ndarray) -> np.ndarray:
    Bs = B @ s
    sBs = s @ Bs
    if sBs <= 1e-16:
        return B
    sy = s @ y
    # Powell damping keeps B positive definite.
    if sy < 0.2 * sBs:
        th = 0.8 * sBs / (sBs - sy)
        y = th * y + (1 - th) * Bs
        sy = s @ y
    return B - np.outer(Bs, Bs) / sBs + np.outer(y, y) / sy


def _solve_pd(H: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    delta = 0.0
    scale = max(1e-8, np.max(np.abs(np.diag(H))))
    for _ in range(12):
        try:
            c = la.cho_factor(H + delta * np.eye(H.shape[0]))
            return la.cho_solve(c, rhs)
        except la.LinAlgError:
            delta = max(1e-10 * scale, 10 * delta)
    return np.linalg.lstsq(H, rhs, rcond=None)[0]


def run(problem: OptimizationProblem, x0: np.ndarray | None = None,
        state: OptimizationState | None = None, callback=None,
        checkpoint: str | Path | None = None, checkpoint_every: int = 50,
        time_limit: float | None = None, checkpoint_meta: dict | None = None) -> OptimizationState:
    """Run (or resume) the barrier method; returns the final state with the best iterate."""
    bar = _Barrier(problem)
    rng = np.random.default_rng(problem.seed)
    if state is None:
        if x0 is None:
            x0 = annulus_design(problem) if problem.n_components == 2 else random_design(problem, rng)
        x0 = bar.normalize(x0)
        ev = objective_and_constraints(x0, problem)
        t0 = ev.sigma_tilde - 0.05 * abs(ev.sigma_tilde) - 1e-3
        state = OptimizationState(np.asarray(x0, float), float(t0), problem.mu0)
    else:
        ev = objective_and_constraints(state.x, problem, state.direction)

    z = np.r_[bar.reduce(state.x), state.t]
    nz = z.size
    g, J = bar.constraints(ev, state.t)
    wb = bar.weights(ev)
    lam = state.lam if state.lam is not None and state.lam.size == g.size else state.mu * wb / g
    B = state.B if state.B is not None and state.B.shape == (nz, nz) else np.eye(nz)
    grad_f = np.zeros(nz)
    grad_f[-1] = -1.0
    mu = state.mu
    started = time.monotonic()
    if state.best_x is None or ev.sigma_tilde > state.best_value:
        state.best_x, state.best_value, state.best_iteration = ev.x.copy(), ev.sigma_tilde, state.iteration

    def merit(gv, t, mu_):
        return -t - mu_ * np.sum(wb * np.log(gv))

    stalls = 0
    flat = 0  # consecutive accepted steps without merit progress
    while state.iteration < problem.max_iter:
        if time_limit is not None and time.monotonic() - started > time_limit:
            state.message = "time limit"
            break
        # Barrier subproblem solved (or stagnating near a cluster kink): shrink mu.
        while mu > problem.mu_min and (_kkt_error(grad_f, g, J, lam, mu * wb) < KAPPA * mu
                                       or flat >= problem.stagnation):
            mu *= problem.mu_factor
            stalls = flat = 0
        opt0 = _kkt_error(grad_f, g, J, lam, 0.0)
        if mu <= problem.mu_min and (opt0 < problem.tol * max(1.0, abs(z[-1]))
                                     or flat >= problem.stagnation):
            state.converged = True
            state.message = "converged" if flat < problem.stagnation else "converged (stagnation)"
            break

        sigma = lam / g
        H = B + J.T @ (sigma[:, None] * J)
        rhs = -(grad_f - J.T @ (mu * wb / g))
        d = _solve_pd(H, rhs)
        step_norm = np.max(np.abs(d[:-1])) if nz > 1 else 0.0
        if step_norm > problem.max_step:
            d *= problem.max_step / step_norm
        dlam = mu * wb / g - lam - sigma * (J @ d)
        Jd = J @ d
        neg = Jd < 0
        a_max = min(1.0, np.min(-TAU * g[neg] / Jd[neg])) if np.any(neg) else 1.0
        dl_neg = dlam < 0
        a_lam = min(1.0, np.min(-TAU * lam[dl_neg] / dlam[dl_neg])) if np.any(dl_neg) else 1.0

        phi0 = merit(g, z[-1], mu)
        dphi = (grad_f - J.T @ (mu * wb / g)) @ d
        if dphi >= 0:  # fall back to the primal barrier Newton direction
            H = B + J.T @ ((mu * wb / g**2)[:, None] * J)
            d = _solve_pd(H, rhs)
            step_norm = np.max(np.abs(d[:-1])) if nz > 1 else 0.0
            if step_norm > problem.max_step:
                d *= problem.max_step / step_norm
            Jd = J @ d
            neg = Jd < 0
            a_max = min(1.0, np.min(-TAU * g[neg] / Jd[neg])) if np.any(neg) else 1.0
            dlam = mu * wb / g - lam - (mu * wb / g**2) * Jd
            dl_neg = dlam < 0
            a_lam = min(1.0, np.min(-TAU * lam[dl_neg] / dlam[dl_neg])) if np.any(dl_neg) else 1.0
            dphi = (grad_f - J.T @ (mu * wb / g)) @ d

        direction = bar.P @ d[:-1]
        alpha = a_max
        accepted = None
        for _ in range(30):
            z_new = z + alpha * d
            try:
                ev_new = objective_and_constraints(bar.embed(z_new), problem, direction)
                g_new, J_new = bar.constraints(ev_new, z_new[-1])
                if np.all(g_new > 0) and merit(g_new, z_new[-1], mu) <= phi0 + 1e-4 * alpha * dphi:
                    accepted = (z_new, ev_new, g_new, J_new)
                    break
            except EvaluationError:
                pass
            alpha *= 0.5

        if accepted is None:
            stalls += 1
            B = np.eye(nz)
            if stalls >= 3:
                if mu > problem.mu_min:
                    mu *= problem.mu_factor
                    stalls = flat = 0
                    continue
                state.converged = True
                state.message = "converged (line search exhausted)"
                break
            continue

        stalls = 0
        z_new, ev_new, g_new, J_new = accepted
        progress = phi0 - merit(g_new, z_new[-1], mu)
        flat = flat + 1 if progress < 1e-9 * max(1.0, abs(phi0)) else 0
        lam_new = np.maximum(lam + min(alpha, a_lam) * dlam, 1e-20)
        # Keep multipliers within a safeguard band of the primal estimate.
        lam_new = np.clip(lam_new, mu * wb / g_new / 1e10, 1e10 * mu * wb / g_new)
        y = (J.T @ lam_new) - (J_new.T @ lam_new)
        B = _bfgs_update(B, z_new - z, y)
        z, ev, g, J, lam = z_new, ev_new, g_new, J_new, lam_new
        state.direction = direction
        state.iteration += 1
        value = ev.sigma_tilde
        if value > state.best_value:
            state.best_x, state.best_value, state.best_iteration = ev.x.copy(), value, state.iteration
        n_eig = ev.eig_values.size
        rec = {"iteration": state.iteration, "mu": mu, "sigma_tilde": value, "t": float(z[-1]),
               "window": [float(v) for v in ev.eig_values],
               "min_margin": float(np.min(g[n_eig:])) if g.size > n_eig else float("inf"),
               "optimality": _kkt_error(grad_f, g, J, lam, 0.0), "step": float(alpha)}
        state.history.append(rec)
        log.debug("iter %d mu %.1e sigma~ %.8f opt %.2e", state.iteration, mu, value, rec["optimality"])
        state.x, state.t, state.mu, state.lam, state.B = ev.x.copy(), float(z[-1]), mu, lam, B
        if callback is not None:
            callback(state)
        if checkpoint is not None and state.iteration % checkpoint_every == 0:
            save_checkpoint(checkpoint, problem, state, checkpoint_meta)
    else:
        state.message = "iteration limit"

    state.x, state.t, state.mu, state.lam, state.B = ev.x.copy(), float(z[-1]), mu, lam, B
    if checkpoint is not None:
        save_checkpoint(checkpoint, problem, state, checkpoint_meta)
    return state


def save_checkpoint(path, problem: OptimizationProblem, state: OptimizationState,
                    meta: dict | None = None) -> None:
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    data = {"problem": problem.to_dict(), "state": state.to_dict()}
    if meta:
        data["meta"] = meta
    tmp.write_text(json.dumps(data))
    tmp.replace(path)


def load_checkpoint(path) -> tuple[OptimizationProblem, OptimizationState]:
    data = json.loads(Path(path).read_text())
    return OptimizationProblem(**data["problem"]), OptimizationState.from_dict(data["state"])


def multistart(problem: OptimizationProblem, seeds, **kwargs) -> list[OptimizationState]:
    out = []
    for s in seeds:
        p = OptimizationProblem(**{**problem.to_dict(), "seed": int(s)})
        out.append(run(p, **kwargs))
    return sorted(out, key=lambda st: -st.best_value)


# --- diagnostics ------------------------------------------------------------------

def final_cluster(problem: OptimizationProblem, x: np.ndarray, rtol: float = 1e-5):
    """Eigenvalues sigma_i L of the cluster containing sigma_j at ``x``."""
    ev = objective_and_constraints(x, problem)
    sol = ev.solution
    members = sol.cluster_of(problem.j, rtol)
    return sol.eigenvalues[members] * ev.L, members


def cluster_stationarity(problem: OptimizationProblem, x: np.ndarray, rtol: float = 1e-5) -> float:
    """Relative first-order optimality of sigma_j L at ``x``.

    Finds a trace-one matrix Lambda on the top-level cluster minimizing
    |<Lambda, T_d>| over free design coordinates and returns the residual
    divided by the size of the cluster trace gradient.
    """
    ev = objective_and_constraints(x, problem)
    sol = ev.solution
    _, density = problem.layout.unpack(x)
    cl = sol.cluster_of(problem.j, rtol)
    cluster = make_cluster(sol, cl)
    T, dL = derivative_forms(sol, cluster.coefficients, cluster.sigma, density)
    p = len(cl)
    Tt = ev.L * T + cluster.sigma * dL[:, None, None] * np.eye(p)[None]
    Tt = np.einsum("dab,dk->kab", Tt, _Barrier(problem).P)
    iu = np.triu_indices(p)
    feats = Tt[:, iu[0], iu[1]] * np.where(iu[0] == iu[1], 1.0, 2.0)
    trace_row = (iu[0] == iu[1]).astype(float)
    # Trace constraint enforced with a heavy weight.
    Amat = np.vstack([feats, 1e6 * trace_row])
    rhs = np.r_[np.zeros(feats.shape[0]), 1e6]
    coef, *_ = np.linalg.lstsq(Amat, rhs, rcond=None)
    resid = np.max(np.abs(feats @ coef))
    scale = np.max(np.abs(np.einsum("daa->d", Tt))) / p
    return float(resid / max(scale, 1e-300))


@dataclass(frozen=True)
class DegenerationReport:
    concentration: list
    vanishing_radii: list
    near_tangency: bool
    min_margin: float

    @property
    def flags(self) -> list[str]:
        out = []
        if self.concentration:
            out.append("density_concentration")
        if self.vanishing_radii:
            out.append("vanishing_radius")
        if self.near_tangency:
            out.append("near_tangency")
        return out

    @property
    def degenerate(self) -> bool:
        return bool(self.flags)


def detect_degeneration(disk: PuncturedDisk, density: BoundaryDensity, concentration: float = 50.0,
                        min_radius: float = 1e-3, min_margin: float = 1e-4, relative: float = 0.4,
                        n_check: int = 512) -> DegenerationReport:
    """Flag density concentration, vanishing holes and near-tangent holes.

    A nonnegative trigonometric polynomial of order N has max/mean at most
    N + 1, so the concentration threshold is capped at ``relative * (N + 1)``
    (but never below 2) to stay reachable for small orders.
    """
    theta = 2 * np.pi * np.arange(n_check) / n_check
    limit = min(concentration, max(2.0, relative * (density.order + 1)))
    conc = []
    for k in range(disk.n_components):
        rho = density.evaluate(k, theta)
        ratio = float(np.max(rho) / max(np.mean(rho), 1e-300))
        if ratio > limit:
            conc.append((k, ratio))
    small = [(i, float(r)) for i, r in enumerate(disk.radii) if r < min_radius]
    margin = validate(disk).min_margin if disk.n_holes else float("inf")
    return DegenerationReport(conc, small, bool(margin < min_margin), float(margin))


def degeneration_of_state(problem: OptimizationProblem, state: OptimizationState, **kw) -> DegenerationReport:
    disk, density = state.design(problem)
    return detect_degeneration(disk, density, **kw)
