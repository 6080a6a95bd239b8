"""Pohozaev residuals, the constant alpha(p) and nonexistence certificates."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .constants import ThresholdSet, alpha_lower_bound, omega
from .fem import DiscreteFunction, assemble
from .quadrature import gauss_legendre
from .variational import eigen_lambda1_div
from .weights import Domain, RadialGrid, Weight, check_growth_condition, radial_gradient_pairing


@dataclass(frozen=True)
class PohozaevReport:
    volume_term: float
    weight_term: float
    boundary_term: float
    residual: float
    boundary_derivatives: dict = field(default_factory=dict)

    @property
    def relative_residual(self) -> float:
        scale = max(abs(self.volume_term), abs(self.weight_term), abs(self.boundary_term))
        return abs(self.residual) / scale if scale > 0 else 0.0

    def as_dict(self) -> dict:
        return {"volume_term": self.volume_term, "weight_term": self.weight_term,
                "boundary_term": self.boundary_term, "residual": self.residual,
                "relative_residual": self.relative_residual,
                "boundary_derivatives": dict(self.boundary_derivatives)}


def _three_point_derivative(x, f) -> float:
    """Derivative at ``x[0]`` of the quadratic through ``(x[i], f[i])``."""
    x0, x1, x2 = x
    d0 = 1.0 / (x0 - x1) + 1.0 / (x0 - x2)
    d1 = (x0 - x2) / ((x1 - x0) * (x1 - x2))
    d2 = (x0 - x1) / ((x2 - x0) * (x2 - x1))
    return float(d0 * f[0] + d1 * f[1] + d2 * f[2])


def boundary_derivatives(u: DiscreteFunction, d: Domain) -> dict[str, float]:
    r, v = u.grid.nodes, u.values
    out = {"outer": _three_point_derivative(r[[-1, -2, -3]], v[[-1, -2, -3]])}
    if d.kind == "annulus":
        out["inner"] = _three_point_derivative(r[[0, 1, 2]], v[[0, 1, 2]])
    return out


def pohozaev_residual(u: DiscreteFunction, w: Weight, d: Domain, lam: float) -> PohozaevReport:
    """Terms of ``lam int u^2 - 1/2 int r p' |u'|^2 = 1/2 int_bdry p (x-a).nu |du/dnu|^2``."""
    grid = u.grid
    if not grid.matches(d):
        raise ValueError("function grid does not match domain")
    n = d.n
    om = omega(n)
    r = grid.nodes
    h = grid.h
    gx, gw = gauss_legendre(8)
    pts = r[:-1, None] + h[:, None] * gx[None, :]
    vol = h[:, None] * gw[None, :] * om * pts ** (n - 1)
    vals = u(pts.ravel()).reshape(pts.shape)
    volume = lam * float(np.sum(vol * vals ** 2))
    pairing = radial_gradient_pairing(w, pts.ravel()).reshape(pts.shape)
    slope = u.derivative()
    weight_term = 0.5 * float(np.sum((vol * pairing).sum(axis=1) * slope ** 2))
    derivs = boundary_derivatives(u, d)
    normals = d.boundary_normal_dot()
    radii = {"outer": d.R, "inner": d.r_inner}
    boundary = 0.0
    for side, du in derivs.items():
        rb = radii[side]
        boundary += 0.5 * w(rb) * normals[side] * du * du * om * rb ** (n - 1)
    return PohozaevReport(volume, weight_term, boundary, volume - weight_term - boundary, derivs)


@dataclass(frozen=True)
class AlphaEstimate:
    value: float
    sign_indefinite: bool
    eigenfunction: DiscreteFunction | None = None


def alpha_p_estimate(w: Weight, d: Domain, grid: RadialGrid) -> AlphaEstimate:
    """Smallest value of ``1/2 int r p'|u'|^2 / int u^2`` over the P1 space.

    Returns ``-inf`` with ``sign_indefinite=True`` when ``r p'(r) < 0`` at
    some grid node.
    """
    nodes = grid.nodes[grid.nodes > 0]
    if np.any(radial_gradient_pairing(w, nodes) < 0):
        return AlphaEstimate(-np.inf, True)
    if w.is_constant:
        return AlphaEstimate(0.0, False)

    def coefficient(r):
        return 0.5 * radial_gradient_pairing(w, r)

    forms = assemble(coefficient, d, grid)
    # the bottom of this spectrum is nearly continuous, so convergence is slow
    rep = eigen_lambda1_div(coefficient, d, grid, forms=forms, tol=1e-9, max_iter=20000, quiet=True)
    return AlphaEstimate(rep.lambda1_div, False, rep.eigenfunction)


CERTIFICATE_KINDS = ("no-solution-below-alpha", "no-solution-at-or-above-lambda1",
                     "no-solution-starshaped-lambda0", "inconclusive")


@dataclass(frozen=True)
class Certificate:
    kind: str
    witness: dict
    hypotheses: dict

    @property
    def nonexistence(self) -> bool:
        return self.kind != "inconclusive"

    def as_dict(self) -> dict:
        return {"kind": self.kind, "witness": dict(self.witness), "hypotheses": dict(self.hypotheses)}


def certify_nonexistence(w: Weight, d: Domain, lam: float, thresholds: ThresholdSet | None = None,
                         grid: RadialGrid | None = None) -> Certificate:
    """Strongest applicable nonexistence certificate for ``lam``.

    Checked in order: starshaped domain with ``lam`` at most the Hardy bound
    on ``alpha(p)``; ``lam`` at least the first eigenvalue; ``lam = 0`` on a
    starshaped domain with nondecreasing ``p``.
    """
    thresholds = thresholds or ThresholdSet()
    grid = grid or RadialGrid.for_domain(d, M=512)
    growth = check_growth_condition(w, d, grid)
    pairing_ok = bool(np.all(radial_gradient_pairing(w, grid.nodes) >= 0))
    if thresholds.alpha_lower is not None:
        alpha_bound = thresholds.alpha_lower
    elif w.is_constant or w.k > 2:
        alpha_bound = 0.0
    else:
        alpha_bound = alpha_lower_bound(d.n, w.k, w.beta_k, d.diam)
    lambda1 = thresholds.lambda1_div
    if lambda1 is None:
        lambda1 = eigen_lambda1_div(w, d, grid).lambda1_div
    hyp = {"starshaped": d.starshaped, "growth_condition": growth.holds,
           "pairing_nonnegative": pairing_ok, "approximate": growth.approximate}
    if d.starshaped and growth.holds and pairing_ok and lam <= alpha_bound:
        return Certificate("no-solution-below-alpha", {"alpha_lower": alpha_bound}, hyp)
    if lam >= lambda1:
        return Certificate("no-solution-at-or-above-lambda1", {"lambda1_div": lambda1}, hyp)
    if lam == 0 and d.starshaped and pairing_ok:
        return Certificate("no-solution-starshaped-lambda0", {"lambda": 0.0}, hyp)
    return Certificate("inconclusive", {"alpha_lower": alpha_bound, "lambda1_div": lambda1}, hyp)
