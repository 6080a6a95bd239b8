"""Minimization of the weighted Rayleigh quotient on radial grids.

The quotient ``Q(u) = (int p|u'|^2 - lam int u^2) / ||u||_q^2`` is minimized on
the sphere ``||u||_q = 1`` by a projected gradient method preconditioned
with the stiffness matrix. Attainment is judged from how the radius holding
90% of the weighted Dirichlet energy moves when the grid is refined.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .constants import sobolev_S
from .fem import DiscreteFunction, Forms, assemble, q_lambda
from .weights import Domain, RadialGrid, Weight

log = logging.getLogger(__name__)

CONCENTRATING_RATIO = 0.6
STABLE_RATIO = 0.9
_ROUNDOFF_GRADIENT = 1e-6
# relative gap below which two quotient values are treated as equal
_QUOTIENT_TIE = 1e-9


@dataclass(frozen=True)
class EigenReport:
    lambda1_div: float
    eigenfunction: DiscreteFunction
    iterations: int
    relative_change: float


def eigen_lambda1_div(w: Weight, d: Domain, grid: RadialGrid, *, tol: float = 1e-10,
                      max_iter: int = 500, forms: Forms | None = None,
                      quiet: bool = False) -> EigenReport:
    """First eigenvalue of ``-div(p grad u) = lam u`` by inverse power iteration.

    The Rayleigh quotient of the iterates decreases monotonically, so an
    early stop still returns an upper estimate.
    """
    forms = forms or assemble(w, d, grid)
    K, M = forms.K, forms.M
    # start from the linear interpolant of the distance to the boundary
    r = grid.nodes[forms.free]
    u = (grid.R - r) * (r - grid.r_inner + 1e-3 * (grid.R - grid.r_inner))
    u /= np.sqrt(u @ (M @ u))
    lam = float(u @ (K @ u))
    change = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        x = forms.solve_stiffness(M @ u)
        x /= np.sqrt(x @ (M @ x))
        lam_new = float(x @ (K @ x))
        change = abs(lam_new - lam) / abs(lam_new)
        vec_change = np.sqrt(max((x - u) @ (M @ (x - u)), 0.0))
        u, lam = x, lam_new
        if change < tol and vec_change < np.sqrt(tol):
            break
    else:
        if not quiet:
            log.warning("inverse iteration stopped after %d steps (change %.2e)", max_iter, change)
    if u.sum() < 0:
        u = -u
    if np.any(u[:-1] <= 0):
        raise RuntimeError("eigenfunction changed sign: assembly is not positive definite")
    return EigenReport(lam, forms.lift(u), it, change)


@dataclass(frozen=True)
class MinimizeOptions:
    max_iter: int = 3000
    tol: float = 1e-9
    armijo_c1: float = 1e-4
    shrink: float = 0.5
    n_descents: int = 3
    refine: bool = True


@dataclass(frozen=True)
class MinimizeReport:
    S_lambda_estimate: float
    iterations: int
    grad_norm: float
    concentration_radius_90: float
    achieved: bool | None
    initial_quotient: float
    lam: float
    minimizer: DiscreteFunction = field(repr=False)
    converged: bool = False
    radius_ratio: float | None = None
    refined_estimate: float | None = None
    M: int = 0

    @property
    def verdict(self) -> str:
        return {True: "achieved", False: "concentrating", None: "inconclusive"}[self.achieved]

    def as_dict(self) -> dict:
        return {
            "S_lambda_estimate": self.S_lambda_estimate,
            "iterations": self.iterations,
            "grad_norm": self.grad_norm,
            "concentration_radius_90": self.concentration_radius_90,
            "achieved": self.achieved,
            "verdict": self.verdict,
            "initial_quotient": self.initial_quotient,
            "lambda": self.lam,
            "converged": self.converged,
            "radius_ratio": self.radius_ratio,
            "refined_estimate": self.refined_estimate,
            "grid_M": self.M,
        }


@dataclass
class _Descent:
    u: np.ndarray
    value: float
    iterations: int
    grad_norm: float
    converged: bool


def _descend(forms: Forms, lam: float, u0: np.ndarray, opts: MinimizeOptions) -> _Descent:
    K, M = forms.K, forms.M
    u = u0 / np.sqrt(forms.lq_norm_sq(u0))
    Ku, Mu = K @ u, M @ u
    J = float(u @ Ku - lam * (u @ Mu))
    energy_scale = float(u @ Ku)
    grad_norm = np.inf
    converged = False
    it = 0
    for it in range(1, opts.max_iter + 1):
        N = forms.nonlinear_load(u)
        z = forms.solve_stiffness(J * N + lam * Mu)
        direction = z - u
        g = 2.0 * (Ku - lam * Mu - J * N)
        slope = float(g @ direction)
        # dual-norm size of the gradient relative to the energy
        grad_norm = np.sqrt(max(direction @ (K @ direction), 0.0) / max(energy_scale, 1e-300))
        if grad_norm < opts.tol or slope >= 0:
            converged = grad_norm < opts.tol
            break
        s = 1.0
        while True:
            trial = u + s * direction
            nq = forms.lq_norm_sq(trial)
            Kt, Mt = K @ trial, M @ trial
            val = float(trial @ Kt - lam * (trial @ Mt)) / nq
            if val <= J + opts.armijo_c1 * s * slope:
                break
            s *= opts.shrink
            if s < 1e-14:
                # round-off floor of the quotient: the gradient is as small as it can be resolved
                return _Descent(u, J, it, grad_norm, grad_norm < _ROUNDOFF_GRADIENT)
        scale = 1.0 / np.sqrt(nq)
        improvement = J - val
        u, Ku, Mu, J = trial * scale, Kt * scale, Mt * scale, val
        energy_scale = float(u @ Ku)
        if improvement <= 1e-16 * abs(J) and grad_norm < 1e3 * opts.tol:
            converged = True
            break
    return _Descent(u, J, it, grad_norm, converged)


def _initial_guesses(forms: Forms, eig: np.ndarray) -> list[np.ndarray]:
    grid = forms.grid
    r = grid.nodes[forms.free]
    R, e = grid.R, grid.r_inner
    guesses = [eig]
    if forms.domain.kind == "ball":
        n = grid.n
        r_first = grid.nodes[1]
        s = R / 2.0
        while s >= r_first:
            U = (s * s + r * r) ** (-(n - 2) / 2.0) - (s * s + R * R) ** (-(n - 2) / 2.0)
            guesses.append(np.maximum(U, 0.0))
            s /= 2.0
    else:
        x = (r - e) / (R - e)
        for b in (1, 2, 4, 8, 16, 32):
            guesses.append(x * (1.0 - x) ** b)
            guesses.append(x ** b * (1.0 - x))
    return guesses


def concentration_radius(forms: Forms, u: np.ndarray, fraction: float = 0.9) -> float:
    """Radius of the ball about the centre holding ``fraction`` of ``int p|u'|^2``."""
    e = forms.energy_density(u)
    total = e.sum()
    if not total > 0:
        raise ValueError("zero function has no concentration radius")
    cum = np.concatenate([[0.0], np.cumsum(e)]) / total
    j = int(np.searchsorted(cum, fraction))
    j = min(max(j, 1), cum.size - 1)
    r = forms.grid.nodes
    frac = (fraction - cum[j - 1]) / max(cum[j] - cum[j - 1], 1e-300)
    return float(r[j - 1] + frac * (r[j] - r[j - 1]))


def _minimize_on(forms: Forms, lam: float, opts: MinimizeOptions,
                 warm_start: np.ndarray | None) -> tuple[_Descent, float]:
    eig = eigen_lambda1_div(forms.weight, forms.domain, forms.grid, forms=forms)
    eig_u = forms.restrict(eig.eigenfunction)
    guesses = _initial_guesses(forms, eig_u)
    if warm_start is not None:
        guesses.append(warm_start)
    values = [q_lambda(g, forms, lam) for g in guesses]
    order = np.argsort(values)[: opts.n_descents]
    if warm_start is not None and len(guesses) - 1 not in order:
        order = np.append(order, len(guesses) - 1)
    initial = float(values[order[0]])
    best: _Descent | None = None
    for i in order:
        res = _descend(forms, lam, guesses[i], opts)
        log.debug("start %d: %.12g -> %.12g in %d steps", i, values[i], res.value, res.iterations)
        if best is None or res.value < best.value:
            best = res
    if forms.domain.kind == "ball" or lam >= 0:
        # the quotient of |u| never exceeds that of u
        mag = np.abs(best.u)
        if q_lambda(mag, forms, lam) <= best.value:
            best = replace(best, u=mag / np.sqrt(forms.lq_norm_sq(mag)))
    return best, initial


def minimize_S_lambda(w: Weight, d: Domain, grid: RadialGrid, lam: float,
                      opts: MinimizeOptions | None = None, *,
                      warm_start: DiscreteFunction | None = None) -> MinimizeReport:
    """Estimate ``S_lambda(p)`` and decide whether the infimum is attained.

    With ``opts.refine`` the minimization is repeated on the nested grid with
    twice as many elements. The verdict is ``False`` (concentrating) if the
    90% energy radius shrinks by a factor of at least ``1/0.6``, ``True`` if
    it keeps at least 90% of its size, and ``None`` otherwise. Without
    refinement the verdict is always ``None``.
    """
    opts = opts or MinimizeOptions()
    forms = assemble(w, d, grid)
    ws = forms.restrict(warm_start) if warm_start is not None and warm_start.grid == grid else None
    best, initial = _minimize_on(forms, lam, opts, ws)
    r90 = concentration_radius(forms, best.u)
    achieved = None
    ratio = None
    refined_estimate = None
    if opts.refine:
        fine = grid.refined()
        fforms = assemble(w, d, fine)
        # the coarse minimizer is exactly representable on the nested grid
        seed = fforms.restrict(np.interp(fine.nodes, grid.nodes, forms.lift(best.u).values))
        fbest, _ = _minimize_on(fforms, lam, opts, seed)
        if d.kind == "ball":
            # Copy the coarse minimizer to the finest scale the new grid adds. If
            # the quotient cannot tell the copy from the original, nothing pins
            # the profile to a fixed scale; this breaks the tie the descent
            # leaves when the quotient is flat along dilations.
            shrink = fine.nodes[1] / grid.nodes[1]
            full = fforms.lift(seed).values
            dilated = fforms.restrict(np.interp(fine.nodes / shrink, fine.nodes, full, right=0.0))
            dbest = _descend(fforms, lam, dilated, opts)
            if dbest.value <= fbest.value + _QUOTIENT_TIE * abs(fbest.value):
                fbest = dbest
        ratio = concentration_radius(fforms, fbest.u) / r90
        refined_estimate = fbest.value
        if ratio <= CONCENTRATING_RATIO:
            achieved = False
        elif ratio >= STABLE_RATIO:
            achieved = True
    return MinimizeReport(
        S_lambda_estimate=best.value, iterations=best.iterations, grad_norm=best.grad_norm,
        concentration_radius_90=r90, achieved=achieved, initial_quotient=initial, lam=lam,
        minimizer=forms.lift(best.u), converged=best.converged, radius_ratio=ratio,
        refined_estimate=refined_estimate, M=grid.M)


@dataclass(frozen=True)
class Reconstruction:
    solution: DiscreteFunction
    residual: float
    scale: float


def pde_residual(forms: Forms, v: np.ndarray, lam: float) -> float:
    """Relative dual-norm residual of ``-div(p grad v) - v^(q-1) - lam v`` on the grid."""
    res = forms.K @ v - lam * (forms.M @ v) - forms.nonlinear_load(v)
    num = np.sqrt(max(res @ forms.solve_stiffness(res), 0.0))
    den = np.sqrt(max(v @ (forms.K @ v), 1e-300))
    return float(num / den)


def reconstruct_solution(rep: MinimizeReport, lam: float, w: Weight, d: Domain,
                         forms: Forms | None = None) -> Reconstruction:
    """Scale the normalized minimizer by ``S_lambda^(1/(q-2))`` into a solution."""
    if not rep.S_lambda_estimate > 0:
        raise ValueError("S_lambda <= 0: lambda is at or above the first eigenvalue, no solution")
    if rep.achieved is False:
        raise ValueError("minimizer is concentrating; no solution to reconstruct")
    grid = rep.minimizer.grid
    forms = forms or assemble(w, d, grid)
    q = forms.q
    gamma = rep.S_lambda_estimate ** (1.0 / (q - 2.0))
    u = forms.restrict(rep.minimizer)
    u = u / np.sqrt(forms.lq_norm_sq(u))
    v = gamma * u
    return Reconstruction(forms.lift(v), pde_residual(forms, v, lam), gamma)


def energy_of(forms: Forms, v: np.ndarray, lam: float = 0.0) -> float:
    """``E(v) = 1/2 int p|v'|^2 - lam/2 int v^2 - 1/q int |v|^q``."""
    return float(0.5 * (v @ (forms.K @ v)) - 0.5 * lam * (v @ (forms.M @ v))
                 - forms.lq_power(v) / forms.q)


@dataclass(frozen=True)
class AnnulusResult:
    solution: DiscreteFunction
    energy: float
    residual: float
    window_lo: float
    window_hi: float
    S_radial: float
    report: MinimizeReport = field(repr=False)

    @property
    def in_window(self) -> bool:
        return self.window_lo < self.energy < self.window_hi

    def as_dict(self) -> dict:
        return {"energy": self.energy, "window_lo": self.window_lo, "window_hi": self.window_hi,
                "residual": self.residual, "S_radial": self.S_radial, "in_window": self.in_window,
                "grid_M": self.report.M}


def annulus_solve(w: Weight, eps_hole: float, R: float, grid: RadialGrid,
                  opts: MinimizeOptions | None = None) -> AnnulusResult:
    """Radial positive solution of the ``lam = 0`` problem on an annulus.

    Radial functions on an annulus embed compactly into ``L^q``, so the
    minimizer exists; it is rescaled into a solution and its energy compared
    against ``((p0 S)^(n/2) / n, 2 (p0 S)^(n/2) / n)``.
    """
    if not 0 < eps_hole < R:
        raise ValueError("annulus needs 0 < eps_hole < R")
    d = Domain.annulus(grid.n, eps_hole, R)
    if not grid.matches(d):
        raise ValueError("grid must span [eps_hole, R]")
    opts = replace(opts or MinimizeOptions(), refine=False)
    rep = minimize_S_lambda(w, d, grid, 0.0, opts)
    forms = assemble(w, d, grid)
    rep = replace(rep, achieved=True)
    rec = reconstruct_solution(rep, 0.0, w, d, forms)
    v = forms.restrict(rec.solution)
    n = grid.n
    level = (w.p0 * sobolev_S(n)) ** (n / 2.0) / n
    energy = energy_of(forms, v)
    r90 = rep.concentration_radius_90
    if r90 - eps_hole < 1e-3 * (R - eps_hole):
        log.warning("annulus minimizer hugs the inner sphere; refine the grid near eps_hole")
    return AnnulusResult(rec.solution, energy, rec.residual, level, 2.0 * level,
                         rep.S_lambda_estimate, rep)


@dataclass(frozen=True)
class CurvePoint:
    lam: float
    S_lambda: float
    iterations: int


def s_lambda_curve(w: Weight, d: Domain, grid: RadialGrid, lam_list,
                   opts: MinimizeOptions | None = None) -> list[CurvePoint]:
    """``S_lambda`` along an increasing list of ``lam`` values.

    Each minimization is also started from the previous minimizer; since
    ``Q_lam(u)`` decreases in ``lam`` for fixed ``u``, the table is
    nonincreasing by construction.
    """
    lams = np.asarray(list(lam_list), dtype=float)
    if np.any(np.diff(lams) <= 0):
        raise ValueError("lambda values must be strictly increasing")
    opts = replace(opts or MinimizeOptions(), refine=False)
    out = []
    prev = None
    for lam in lams:
        rep = minimize_S_lambda(w, d, grid, float(lam), opts, warm_start=prev)
        prev = rep.minimizer
        out.append(CurvePoint(float(lam), rep.S_lambda_estimate, rep.iterations))
    return out
