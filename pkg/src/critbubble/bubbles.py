"""Truncated bubbles ``zeta(r) (eps + r^2)^(-(n-2)/2)`` and their energy expansions.

All integrals are radial with the volume factor ``omega_n r^(n-1)`` and
use the exact derivative of the product ``zeta U``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .constants import (compute_A_k, compute_K3, gamma_tilde, omega, sobolev_constants)
from .quadrature import integrate
from .smoothstep import smoothstep, smoothstep_prime
from .weights import Domain, Weight

_REL_TOL = 1e-13


@dataclass(frozen=True)
class Cutoff:
    """Radial cutoff: 1 on ``[0, l]``, 0 on ``[L, inf)``, quintic smoothstep between."""

    l: float
    L: float

    def __post_init__(self):
        if not 0 < self.l < self.L:
            raise ValueError("cutoff needs 0 < l < L")

    def __call__(self, r):
        return 1.0 - smoothstep((np.asarray(r, dtype=float) - self.l) / (self.L - self.l))

    def derivative(self, r):
        s = (np.asarray(r, dtype=float) - self.l) / (self.L - self.l)
        return -smoothstep_prime(s) / (self.L - self.l)


@dataclass(frozen=True)
class BubbleParams:
    n: int
    eps: float
    cutoff: Cutoff

    def __post_init__(self):
        if self.n < 3:
            raise ValueError("n must be at least 3")
        if not self.eps > 0:
            raise ValueError("eps must be positive")

    @classmethod
    def for_domain(cls, d: Domain, eps: float, l_frac: float = 0.5) -> "BubbleParams":
        return cls(d.n, eps, Cutoff(l_frac * d.R, d.R))


def _profile(bp: BubbleParams, r):
    return (bp.eps + r * r) ** (-(bp.n - 2) / 2.0)


def _profile_prime(bp: BubbleParams, r):
    return -(bp.n - 2) * r * (bp.eps + r * r) ** (-bp.n / 2.0)


def bubble_value(bp: BubbleParams, r):
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ValueError("radius must be nonnegative")
    return bp.cutoff(r) * _profile(bp, r)


def bubble_derivative(bp: BubbleParams, r):
    r = np.asarray(r, dtype=float)
    return bp.cutoff.derivative(r) * _profile(bp, r) + bp.cutoff(r) * _profile_prime(bp, r)


def _check_support(bp: BubbleParams, d: Domain) -> None:
    if bp.n != d.n:
        raise ValueError("bubble and domain dimensions differ")
    if bp.cutoff.L > d.R * (1 + 1e-12):
        raise ValueError("cutoff support leaves the domain")
    if d.kind == "annulus":
        raise ValueError("the truncated bubble is centred in the hole of an annulus")


def _radial_integral(bp: BubbleParams, f) -> float:
    n = bp.n
    om = omega(n)
    s = math.sqrt(bp.eps)
    pts = [s * c for c in (0.01, 0.1, 1.0, 10.0, 100.0)] + [bp.cutoff.l]

    def g(r):
        return om * r ** (n - 1) * f(r)

    res = integrate(g, 0.0, bp.cutoff.L, points=pts, abs_tol=0.0, rel_tol=_REL_TOL,
                    max_panels=200000)
    return res.value


def weighted_dirichlet(bp: BubbleParams, w: Weight, d: Domain) -> float:
    """``int p |grad u|^2`` for the truncated bubble."""
    _check_support(bp, d)
    return _radial_integral(bp, lambda r: w(r) * bubble_derivative(bp, r) ** 2)


def lq_norm_sq(bp: BubbleParams, d: Domain) -> float:
    _check_support(bp, d)
    q = 2.0 * bp.n / (bp.n - 2.0)
    return _radial_integral(bp, lambda r: np.abs(bubble_value(bp, r)) ** q) ** (2.0 / q)


def l2_norm_sq(bp: BubbleParams, d: Domain) -> float:
    _check_support(bp, d)
    return _radial_integral(bp, lambda r: bubble_value(bp, r) ** 2)


@dataclass(frozen=True)
class BubbleEnergies:
    eps: float
    dirichlet: float
    l2: float
    lq: float

    def quotient(self, lam: float) -> float:
        return (self.dirichlet - lam * self.l2) / self.lq


def bubble_energies(bp: BubbleParams, w: Weight, d: Domain) -> BubbleEnergies:
    return BubbleEnergies(bp.eps, weighted_dirichlet(bp, w, d), l2_norm_sq(bp, d), lq_norm_sq(bp, d))


def rayleigh_bubble(w: Weight, lam: float, bp: BubbleParams, d: Domain) -> float:
    """``Q_lambda`` of the truncated bubble."""
    return bubble_energies(bp, w, d).quotient(lam)


def cutoff_D(k: float, p0: float, beta_k: float, cutoff: Cutoff) -> tuple[float, float]:
    """``D(k, zeta)`` and ``int zeta^2 dr`` for a cutoff in dimension three."""
    def num(r):
        return (p0 + beta_k * r ** k) * cutoff.derivative(r) ** 2 + k * beta_k * cutoff(r) ** 2 * r ** (k - 2)

    def den(r):
        return cutoff(r) ** 2

    pts = [cutoff.l]
    a = integrate(num, 0.0, cutoff.L, points=pts, abs_tol=1e-13, rel_tol=1e-12).value
    b = integrate(den, 0.0, cutoff.L, points=pts, abs_tol=1e-13, rel_tol=1e-12).value
    return a / b, b


# expansion fits ---------------------------------------------------------------

REGIMES = ("k>2 n>=5", "k=2 n>=5", "k<2 n>=4", "k>2 n=4", "k=2 n=4", "n=3")


def regime_tag(n: int, k: float) -> str:
    if n == 3:
        return "n=3"
    if k < 2:
        return "k<2 n>=4"
    if n == 4:
        return "k=2 n=4" if k == 2 else "k>2 n=4"
    return "k=2 n>=5" if k == 2 else "k>2 n>=5"


@dataclass(frozen=True)
class ExpansionFit:
    regime: str
    leading: float
    slope: float
    residual: float
    predicted_slope: float
    predicted_leading: float
    correction: str
    basis: tuple[str, ...]
    coefficients: tuple[float, ...]
    eps: tuple[float, ...]
    Q: tuple[float, ...]
    energies: tuple[BubbleEnergies, ...] = ()

    @property
    def slope_relative_error(self) -> float:
        return abs(self.slope - self.predicted_slope) / abs(self.predicted_slope)


def template_columns(n: int, k: float, regime: str) -> list[tuple[str, callable]]:
    """Columns of the fit; the second column carries the coefficient being compared."""
    def pw(a):
        return lambda e: e ** a

    elog = ("eps*|log eps|", lambda e: e * np.abs(np.log(e)))
    cols = [("1", lambda e: np.ones_like(e))]
    if regime == "k=2 n>=5":
        cols += [("eps", pw(1.0)), (f"eps^{(n - 2) / 2:g}", pw((n - 2) / 2.0))]
    elif regime == "k>2 n>=5":
        cols.append(("eps", pw(1.0)))
        a = min(k / 2.0, (n - 2) / 2.0)
        if math.isclose(k, n - 2):
            cols.append((f"eps^{a:g}*|log eps|", lambda e: e ** a * np.abs(np.log(e))))
        cols.append((f"eps^{a:g}", pw(a)))
    elif regime == "k<2 n>=4":
        cols.append((f"eps^{k / 2:g}", pw(k / 2.0)))
        if n == 4:
            cols += [elog, ("eps", pw(1.0))]
        else:
            cols += [("eps", pw(1.0)), (f"eps^{(n - 2) / 2:g}", pw((n - 2) / 2.0))]
    elif regime == "k=2 n=4":
        cols += [elog, ("eps", pw(1.0))]
    elif regime == "k>2 n=4":
        cols += [elog, ("eps", pw(1.0))]
        if k < 4:
            cols.append((f"eps^{k / 2:g}", pw(k / 2.0)))
    else:
        cols += [("eps^0.5", pw(0.5)), ("eps", pw(1.0))]
        if 1 < k < 2:
            cols.append((f"eps^{k / 2:g}", pw(k / 2.0)))
    return cols


def predicted_slope(w: Weight, lam: float, n: int, cutoff: Cutoff) -> float:
    """Coefficient of the leading correction to ``p0 S`` in ``Q_lambda`` of the bubble."""
    regime = regime_tag(n, w.k)
    sc = sobolev_constants(n)
    if regime == "k=2 n>=5":
        return -(lam - gamma_tilde(n, w.beta_k)) * compute_K3(n) / sc.K2
    if regime == "k>2 n>=5":
        return -lam * compute_K3(n) / sc.K2
    if regime == "k<2 n>=4":
        return compute_A_k(n, w.k, w.beta_k) / sc.K2
    if regime == "k=2 n=4":
        return -(omega(4) / (2.0 * sc.K2)) * (lam - 4.0 * w.beta_k)
    if regime == "k>2 n=4":
        return -lam * omega(4) / (2.0 * sc.K2)
    if not w.k > 1:
        raise ValueError("the three-dimensional expansion needs k > 1")
    D, z2 = cutoff_D(w.k, w.p0, w.beta_k, cutoff)
    return omega(3) * z2 / sc.K2 * (D - lam)


def fit_expansion(n: int, k: float, eps, Q) -> tuple[np.ndarray, float, list[str]]:
    regime = regime_tag(n, k)
    cols = template_columns(n, k, regime)
    e = np.asarray(eps, dtype=float)
    A = np.column_stack([f(e) for _, f in cols])
    norms = np.linalg.norm(A, axis=0)
    As = A / norms
    if np.linalg.cond(As) > 1e12:
        raise np.linalg.LinAlgError("expansion fit is ill-conditioned; widen the eps range")
    coef, *_ = np.linalg.lstsq(As, np.asarray(Q, dtype=float), rcond=None)
    coef = coef / norms
    resid = float(np.sqrt(np.mean((A @ coef - Q) ** 2)))
    return coef, resid, [name for name, _ in cols]


def expansion_sweep(w: Weight, lam: float, d: Domain, eps_list, *, cutoff: Cutoff | None = None,
                    energies=None) -> ExpansionFit:
    """Fit ``Q_lambda`` of the truncated bubble against the regime template in ``eps``.

    ``energies`` may hold precomputed :class:`BubbleEnergies` for ``eps_list``
    (``Q`` is affine in ``lambda``, so sweeps over ``lambda`` can reuse them).
    """
    eps = np.asarray(list(eps_list), dtype=float)
    if eps.size < 6:
        raise ValueError("an expansion fit needs at least 6 eps values")
    if np.any(np.diff(eps) >= 0):
        raise ValueError("eps_list must be strictly decreasing")
    n = d.n
    cutoff = cutoff or Cutoff(0.5 * d.R, d.R)
    if math.sqrt(eps[0]) > 0.1 * cutoff.l:
        raise ValueError("largest eps is not small compared with the cutoff plateau")
    if energies is None:
        energies = [bubble_energies(BubbleParams(n, float(e), cutoff), w, d) for e in eps]
    Q = np.array([en.quotient(lam) for en in energies])
    coef, resid, names = fit_expansion(n, w.k, eps, Q)
    sc = sobolev_constants(n)
    return ExpansionFit(
        regime=regime_tag(n, w.k), leading=float(coef[0]), slope=float(coef[1]), residual=resid,
        predicted_slope=predicted_slope(w, lam, n, cutoff), predicted_leading=w.p0 * sc.S,
        correction=names[1], basis=tuple(names), coefficients=tuple(float(c) for c in coef),
        eps=tuple(float(e) for e in eps), Q=tuple(float(x) for x in Q), energies=tuple(energies))
