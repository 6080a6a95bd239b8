"""Sobolev/bubble constants, thresholds and the Hardy inequality check.

Every constant is a radial integral over ``[0, inf)`` evaluated with the
adaptive quadrature in :mod:`critbubble.quadrature`; closed forms serve only
as test oracles.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.linalg
from scipy.optimize import minimize_scalar

from .quadrature import gauss_legendre, integrate_to_infinity
from .smoothstep import smoothstep, smoothstep_prime

_ABS_TOL = 1e-10
_REL_TOL = 1e-13


class RegimeError(ValueError):
    """A constant is requested outside the regime where it is finite."""

    def __init__(self, message: str, regime: str):
        super().__init__(message)
        self.regime = regime


def omega(n: int) -> float:
    """Surface area of the unit sphere ``S^(n-1)`` in ``R^n``."""
    if n < 1:
        raise ValueError("n must be at least 1")
    return 2.0 * math.pi ** (n / 2.0) / math.gamma(n / 2.0)


def _radial_moment(a: float, b: float) -> float:
    """``int_0^inf r^a (1 + r^2)^(-b) dr`` by quadrature."""
    def f(r):
        return r ** a * (1.0 + r * r) ** (-b)

    return integrate_to_infinity(f, abs_tol=_ABS_TOL, rel_tol=_REL_TOL).value


def _check_dim(n: int) -> None:
    if int(n) != n or n < 3:
        raise ValueError("dimension n must be an integer >= 3")


@lru_cache(maxsize=None)
def compute_K1(n: int) -> float:
    """``(n-2)^2 omega_n int_0^inf r^(n+1) / (1+r^2)^n dr``."""
    _check_dim(n)
    return (n - 2) ** 2 * omega(n) * _radial_moment(n + 1, n)


@lru_cache(maxsize=None)
def compute_K2(n: int) -> float:
    """``(omega_n int_0^inf r^(n-1) / (1+r^2)^n dr)^(2/q)``."""
    _check_dim(n)
    q = 2.0 * n / (n - 2.0)
    return (omega(n) * _radial_moment(n - 1, n)) ** (2.0 / q)


@lru_cache(maxsize=None)
def compute_K3(n: int) -> float:
    """``omega_n int_0^inf r^(n-1) (1+r^2)^(2-n) dr``; finite only for n >= 5."""
    _check_dim(n)
    if n <= 4:
        raise RegimeError(
            f"K3 diverges for n={n}: the L2 norm of the bubble is in the logarithmic regime",
            "logarithmic regime")
    return omega(n) * _radial_moment(n - 1, n - 2)


def compute_A_k(n: int, k: float, beta_k: float) -> float:
    """``(n-2)^2 beta_k omega_n int_0^inf r^(k+n+1) / (1+r^2)^n dr`` for ``k < n-2``."""
    _check_dim(n)
    if not k > 0:
        raise ValueError("k must be positive")
    if math.isclose(k, n - 2):
        raise RegimeError(f"A_k diverges for k = n-2 = {n - 2}", "k=n-2 log regime")
    if k > n - 2:
        raise RegimeError(f"A_k diverges for k > n-2 = {n - 2}", "k>n-2 bounded regime")
    if beta_k == 0:
        return 0.0
    return (n - 2) ** 2 * beta_k * omega(n) * _radial_moment(k + n + 1, n)


@dataclass(frozen=True)
class SobolevConstants:
    n: int
    K1: float
    K2: float
    K3: float | None
    S: float
    omega_n: float

    def as_dict(self) -> dict:
        return {"n": self.n, "K1": self.K1, "K2": self.K2, "K3": self.K3,
                "S": self.S, "omega_n": self.omega_n}


@lru_cache(maxsize=None)
def sobolev_constants(n: int) -> SobolevConstants:
    K1, K2 = compute_K1(n), compute_K2(n)
    K3 = compute_K3(n) if n >= 5 else None
    return SobolevConstants(n, K1, K2, K3, K1 / K2, omega(n))


def sobolev_S(n: int) -> float:
    return sobolev_constants(n).S


def gamma_tilde(n: int, beta_2: float) -> float:
    """Lower threshold for ``lambda`` when ``k = 2`` and ``n >= 4``."""
    if n < 4:
        raise ValueError("gamma_tilde is defined for n >= 4")
    return (n - 2) * n * (n + 2) * beta_2 / (4.0 * (n - 1))


def beta_tilde(k: float, beta_k: float, diam: float) -> float:
    if not k > 0 or not diam > 0:
        raise ValueError("need k > 0 and diam > 0")
    return beta_k * min(diam ** (k - 2.0), 1.0)


def alpha_lower_bound(n: int, k: float, beta_k: float, diam: float) -> float:
    """Hardy-type lower bound on ``alpha(p)`` valid for ``0 < k <= 2``."""
    if not 0 < k <= 2:
        raise ValueError("alpha_lower_bound needs 0 < k <= 2; for k > 2 alpha(p) = 0")
    return 0.5 * k * beta_k * ((n + k - 2) / 2.0) ** 2 * diam ** (k - 2.0)


@dataclass
class ThresholdSet:
    gamma_tilde: float | None = None
    beta_tilde: float | None = None
    alpha_lower: float | None = None
    hardy_constant: float | None = None
    gamma_k: float | None = None
    lambda1_div: float | None = None

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def threshold_set(n: int, k: float, beta_k: float, diam: float, t: float = 0.0) -> ThresholdSet:
    """Closed-form thresholds for a power weight; ``gamma_k`` and ``lambda1_div`` stay empty."""
    return ThresholdSet(
        gamma_tilde=gamma_tilde(n, beta_k) if n >= 4 and k == 2 else None,
        beta_tilde=beta_tilde(k, beta_k, diam),
        alpha_lower=alpha_lower_bound(n, k, beta_k, diam) if k <= 2 else 0.0,
        hardy_constant=(2.0 / (n + t)) ** 2,
    )


# Hardy inequality -----------------------------------------------------------

@dataclass(frozen=True)
class HardyResult:
    lhs: float
    rhs: float
    ratio: float | None

    @property
    def holds(self) -> bool:
        return self.lhs <= self.rhs * (1.0 + 1e-10) + 1e-300


def _power_moments(r0, r1, m):
    """``int r^m phi_a phi_b dr / r1^(m+1)`` for the two P1 hat pieces of each element.

    Dividing by ``r1^(m+1)`` keeps every element O(1), so grids reaching far
    below the smallest double do not underflow.
    """
    a = r0 / r1
    h = 1.0 - a
    gx, gw = gauss_legendre(16)
    near = a < h
    I_ll = np.empty_like(a)
    I_lr = np.empty_like(a)
    I_rr = np.empty_like(a)
    # closed form where the element touches (or nearly touches) the origin
    if near.any():
        aa, hh = a[near], h[near]

        def mom(j):
            return (1.0 - aa ** (m + j + 1)) / (m + j + 1)

        m0, m1, m2 = mom(0), mom(1), mom(2)
        I_ll[near] = (m0 - 2 * m1 + m2) / hh ** 2
        I_lr[near] = (-aa * m0 + (aa + 1) * m1 - m2) / hh ** 2
        I_rr[near] = (aa * aa * m0 - 2 * aa * m1 + m2) / hh ** 2
    far = ~near
    if far.any():
        aa, hh = a[far], h[far]
        x = aa[:, None] + hh[:, None] * gx[None, :]
        wx = hh[:, None] * gw[None, :] * x ** m
        I_ll[far] = wx @ ((1 - gx) ** 2)
        I_lr[far] = wx @ ((1 - gx) * gx)
        I_rr[far] = wx @ (gx ** 2)
    return I_ll, I_lr, I_rr


def hardy_check(u, t: float, grid) -> HardyResult:
    """Both sides of ``int r^t u^2 <= (2/(n+t))^2 int r^t (r u')^2`` for a P1 function.

    Element integrals are exact for the piecewise-linear ``u`` (up to
    round-off), so the verdict is not polluted by quadrature error.
    """
    n = grid.n
    if not t + n > 0:
        raise ValueError("Hardy inequality needs t + n > 0")
    vals = np.asarray(u.values if hasattr(u, "values") else u, dtype=float)
    if vals.shape != grid.nodes.shape:
        raise ValueError("function does not live on this grid")
    if vals[-1] != 0.0:
        raise ValueError("function must vanish at r = R")
    r0, r1 = grid.nodes[:-1], grid.nodes[1:]
    om = omega(n)
    m = t + n - 1
    I_ll, I_lr, I_rr = _power_moments(r0, r1, m)
    scale = r1 ** ((m + 1) / 2.0)
    ul, ur = vals[:-1] * scale, vals[1:] * scale
    lhs = om * float(np.sum(ul * ul * I_ll + 2 * ul * ur * I_lr + ur * ur * I_rr))
    # int_{r0}^{r1} r^(m+2) dr / r1^(m+3)
    p = m + 2
    a = r0 / r1
    rhs_int = (1.0 - a ** (p + 1)) / (p + 1)
    slope = (vals[1:] - vals[:-1]) / (1.0 - a) * r1 ** ((m + 1) / 2.0)
    rhs = (2.0 / (n + t)) ** 2 * om * float(np.sum(slope ** 2 * rhs_int))
    ratio = rhs / lhs if lhs > 0 else None
    return HardyResult(lhs, rhs, ratio)


def hardy_near_extremal(grid, t: float, delta: float) -> np.ndarray:
    """Nodal values of ``r^(-(n+t)/2 + delta)``, flat below the first positive node,
    cut off smoothly on ``[R/2, R]``."""
    n = grid.n
    r = grid.nodes
    r_min = r[r > 0][0]
    R = grid.R
    expo = -(n + t) / 2.0 + delta
    core = np.maximum(r, r_min) ** expo
    s = np.clip((r - R / 2) / (R / 2), 0.0, 1.0)
    vals = core * (1.0 - smoothstep(s))
    vals[-1] = 0.0
    return vals


# gamma(k) estimate (n = 3) ----------------------------------------------------

@dataclass(frozen=True)
class GammaKResult:
    gamma_k: float
    width: float
    coefficients: tuple[float, ...]
    family_dim: int
    upper_estimate: bool = True
    profile_clipped: bool = False


@dataclass
class _QuotientPieces:
    A: np.ndarray
    B: np.ndarray


_GK_POINTS = 48


def _gamma_pieces(k, p0, beta_k, R, width, dim) -> _QuotientPieces:
    """Quadratic forms of the numerator and denominator in ``v = (1, c_0, ...)``."""
    half = R / 2.0
    span = width * half
    sx, sw = gauss_legendre(_GK_POINTS)
    r = half + span * sx
    wts = span * sw
    nb = dim
    vals = np.empty((nb, sx.size))
    ders = np.empty((nb, sx.size))
    vals[0] = 1.0 - smoothstep(sx)
    ders[0] = -smoothstep_prime(sx)
    bump = sx ** 2 * (1 - sx) ** 2
    dbump = 2 * sx * (1 - sx) ** 2 - 2 * sx ** 2 * (1 - sx)
    for j in range(nb - 1):
        vals[j + 1] = bump * sx ** j
        ders[j + 1] = dbump * sx ** j + (bump * j * sx ** (j - 1) if j > 0 else 0.0)
    ders /= span
    p = p0 + beta_k * r ** k
    A = (ders * (p * wts)) @ ders.T + k * beta_k * (vals * (r ** (k - 2) * wts)) @ vals.T
    B = (vals * wts) @ vals.T
    A[0, 0] += k * beta_k * half ** (k - 1) / (k - 1)
    B[0, 0] += half
    return _QuotientPieces(A, B)


def _profile_ok(coeffs: np.ndarray) -> bool:
    s = np.linspace(0.0, 1.0, 201)
    z = 1.0 - smoothstep(s) + s ** 2 * (1 - s) ** 2 * np.polyval(coeffs[::-1], s) if coeffs.size else 1.0 - smoothstep(s)
    return bool(np.all(z >= -1e-12) and np.all(z <= 1 + 1e-12))


def _best_for_width(k, p0, beta_k, R, width, dim):
    pc = _gamma_pieces(k, p0, beta_k, R, width, dim)
    if dim == 1:
        return pc.A[0, 0] / pc.B[0, 0], np.zeros(0)
    vals, vecs = scipy.linalg.eigh(pc.A, pc.B)
    v = vecs[:, 0]
    if abs(v[0]) < 1e-12:
        # eigenvector leaves the admissible class; fall back to c = 0
        return pc.A[0, 0] / pc.B[0, 0], np.zeros(dim - 1)
    v = v / v[0]
    return float(vals[0]), v[1:]


def _quotient(k, p0, beta_k, R, width, coeffs):
    pc = _gamma_pieces(k, p0, beta_k, R, width, coeffs.size + 1)
    v = np.concatenate([[1.0], coeffs])
    return float(v @ pc.A @ v / (v @ pc.B @ v))


def _clipped_quotient(k, p0, beta_k, R, width, coeffs):
    """Quotient of the profile clipped to ``[0, 1]``, by dense quadrature."""
    half = R / 2.0
    span = width * half
    s = np.linspace(0.0, 1.0, 4001)
    z = np.clip(1.0 - smoothstep(s) + s ** 2 * (1 - s) ** 2 * np.polyval(coeffs[::-1], s), 0.0, 1.0)
    r = half + span * s
    dz = np.gradient(z, r)
    num = np.trapezoid(((p0 + beta_k * r ** k) * dz ** 2 + k * beta_k * z ** 2 * r ** (k - 2)), r)
    num += k * beta_k * half ** (k - 1) / (k - 1)
    den = np.trapezoid(z ** 2, r) + half
    return float(num / den)


def gamma_k_estimate(n: int, k: float, p0: float, beta_k: float, R: float,
                     family_dim: int = 1) -> GammaKResult:
    """Upper estimate of ``inf D(k, zeta)`` over cutoffs ``zeta`` with ``zeta = 1`` on ``[0, R/2]``.

    The transition occupies ``[R/2, R/2 + width R/2]``. The profile is
    ``1 - smoothstep(s) + s^2 (1-s)^2 sum_j c_j s^j`` with ``family_dim - 1``
    free coefficients; for each width the coefficients minimizing the
    quotient solve a generalized eigenproblem, and the width is chosen by
    a grid search followed by a bounded scalar refinement.
    """
    if n != 3:
        raise ValueError("gamma_k_estimate is defined for n = 3")
    if int(family_dim) != family_dim or family_dim < 1:
        raise ValueError("family_dim must be a positive integer")
    if not k >= 2:
        raise ValueError("gamma_k_estimate needs k >= 2")
    if not R > 0 or not p0 > 0 or beta_k < 0:
        raise ValueError("need R > 0, p0 > 0, beta_k >= 0")
    return _gamma_k_cached(float(k), float(p0), float(beta_k), float(R), int(family_dim))


@lru_cache(maxsize=256)
def _gamma_k_cached(k, p0, beta_k, R, dim) -> GammaKResult:
    def obj(wd):
        return _best_for_width(k, p0, beta_k, R, wd, dim)[0]

    widths = np.linspace(0.02, 1.0, 50)
    vals = np.array([obj(wd) for wd in widths])
    i = int(np.argmin(vals))
    lo = widths[max(i - 1, 0)]
    hi = widths[min(i + 1, widths.size - 1)]
    best_w, best_val = float(widths[i]), float(vals[i])
    if hi > lo:
        res = minimize_scalar(obj, bounds=(lo, hi), method="bounded", options={"xatol": 1e-7})
        if res.fun < best_val:
            best_w, best_val = float(res.x), float(res.fun)
    coeffs = _best_for_width(k, p0, beta_k, R, best_w, dim)[1]
    clipped = False
    if not _profile_ok(coeffs):
        best_val = _clipped_quotient(k, p0, beta_k, R, best_w, coeffs)
        clipped = True
    result = GammaKResult(best_val, best_w, tuple(float(c) for c in coeffs), dim, True, clipped)
    if dim > 1:
        # the smaller family is nested in this one
        coarse = _gamma_k_cached(k, p0, beta_k, R, dim // 2)
        if coarse.gamma_k < result.gamma_k:
            padded = coarse.coefficients + (0.0,) * (dim - 1 - len(coarse.coefficients))
            result = GammaKResult(coarse.gamma_k, coarse.width, padded, dim, True, coarse.profile_clipped)
    return result
