"""Translated, truncated bubbles ``v_{t,k}^sigma`` and the functionals E, Gamma, F.

A translated bubble is symmetric about the axis through ``a`` in direction
``sigma``, so every integral reduces to the half plane
``(rho, phi)`` with ``rho = |x - a|`` and ``cos(phi)`` the angle to ``sigma``:

    int f dx = omega_{n-1} int int f rho^(n-1) sin(phi)^(n-2) dphi drho
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.optimize import brentq

from .constants import omega, sobolev_S
from .quadrature import gauss_legendre
from .smoothstep import smoothstep, smoothstep_prime
from .weights import Domain, Weight

_PANEL_POINTS = 16


@dataclass(frozen=True)
class FamilyParams:
    """Parameters of ``v(x) = (1-t)^m k^m phi_k(|x-a|) / ((1-t)^2 + k^2 |x-a-t r0 sigma|^2)^m``
    with ``m = (n-2)/2`` and ``k = scale_index``."""

    n: int
    t: float
    sigma: tuple[float, ...]
    scale_index: int
    r0: float
    R0: float

    def __post_init__(self):
        if not 0 <= self.t < 1:
            raise ValueError("t must lie in [0, 1)")
        if int(self.scale_index) != self.scale_index or self.scale_index < 1:
            raise ValueError("scale_index must be a positive integer")
        s = np.asarray(self.sigma, dtype=float)
        if s.shape != (self.n,):
            raise ValueError("sigma must have n components")
        if not math.isclose(float(np.linalg.norm(s)), 1.0, rel_tol=1e-12):
            raise ValueError("sigma must be a unit vector")
        if not self.r0 > 0:
            raise ValueError("r0 must be positive")
        if not self.inner_zero < self.inner_one < self.R0:
            raise ValueError("need 1/(4k^2) < 1/(2k^2) < R0")

    @classmethod
    def along_axis(cls, n: int, t: float, axis: int, scale_index: int, r0: float, R0: float):
        sigma = [0.0] * n
        sigma[axis] = 1.0
        return cls(n, t, tuple(sigma), scale_index, r0, R0)

    @property
    def inner_zero(self) -> float:
        return 1.0 / (4.0 * self.scale_index ** 2)

    @property
    def inner_one(self) -> float:
        return 1.0 / (2.0 * self.scale_index ** 2)

    @property
    def offset(self) -> float:
        """Distance ``t r0`` from ``a`` to the bubble centre."""
        return self.t * self.r0

    @property
    def width(self) -> float:
        """Concentration scale ``(1-t)/k``."""
        return (1.0 - self.t) / self.scale_index

    def phi(self, rho):
        k_in = smoothstep((rho - self.inner_zero) / (self.inner_one - self.inner_zero))
        k_out = 1.0 - smoothstep((rho - self.R0) / self.R0)
        return k_in * k_out

    def phi_prime(self, rho):
        a = smoothstep((rho - self.inner_zero) / (self.inner_one - self.inner_zero))
        da = smoothstep_prime((rho - self.inner_zero) / (self.inner_one - self.inner_zero)) / (
            self.inner_one - self.inner_zero)
        b = 1.0 - smoothstep((rho - self.R0) / self.R0)
        db = -smoothstep_prime((rho - self.R0) / self.R0) / self.R0
        return da * b + a * db


def _graded_breaks(center: float, scale: float, lo: float, hi: float) -> list[float]:
    pts = [lo, hi]
    s = scale / 8.0
    while s < hi - lo:
        pts += [center - s, center + s]
        s *= 2.0
    return pts


@dataclass(frozen=True)
class AxisymmetricField:
    """An amplitude times the family profile, with its own quadrature rule."""

    params: FamilyParams
    weight: Weight
    domain: Domain
    amplitude: float = 1.0
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def scaled(self, c: float) -> "AxisymmetricField":
        return AxisymmetricField(self.params, self.weight, self.domain, self.amplitude * c, self._cache)

    def _profile(self, rho, mu):
        fp = self.params
        n = fp.n
        m = (n - 2) / 2.0
        k = fp.scale_index
        c = fp.offset
        y2 = np.maximum(rho * rho - 2.0 * rho * c * mu + c * c, 0.0)
        D = (1.0 - fp.t) ** 2 + k * k * y2
        B = ((1.0 - fp.t) * k) ** m * D ** (-m)
        phi = fp.phi(rho)
        dphi = fp.phi_prime(rho)
        # grad B = -(n-2) k^2 B y / D
        gB_scale = -(n - 2) * k * k * B / D
        xhat_dot_y = rho - c * mu
        val = phi * B
        grad_sq = (dphi * B) ** 2 + 2.0 * phi * dphi * B * gB_scale * xhat_dot_y \
            + (phi * gB_scale) ** 2 * y2
        return val, grad_sq

    def values(self, rho, mu):
        """``(u, |grad u|^2)`` at points given by ``rho`` and ``mu = cos(phi)``."""
        v, g = self._profile(rho, mu)
        return self.amplitude * v, self.amplitude ** 2 * g

    @property
    def rule(self):
        """Tensor Gauss rule ``(rho, mu, weights)`` graded around the bubble centre."""
        if "rule" not in self._cache:
            self._cache["rule"] = self._build_rule()
        return self._cache["rule"]

    def _build_rule(self):
        fp = self.params
        n = fp.n
        c, h = fp.offset, fp.width
        lo, hi = fp.inner_zero, 2.0 * fp.R0
        rb = _graded_breaks(c, h, lo, hi) + [fp.inner_one, fp.R0]
        rb = np.unique(np.clip(rb, lo, hi))
        ang = h / max(c, h)
        pb = [0.0, math.pi]
        s = ang / 8.0
        while s < math.pi:
            pb.append(s)
            s *= 2.0
        pb = np.unique(np.clip(pb, 0.0, math.pi))
        gx, gw = gauss_legendre(_PANEL_POINTS)

        def composite(b):
            a0, a1 = b[:-1], b[1:]
            x = (a0[:, None] + (a1 - a0)[:, None] * gx[None, :]).ravel()
            wt = ((a1 - a0)[:, None] * gw[None, :]).ravel()
            return x, wt

        rho, wr = composite(rb)
        phi, wp = composite(pb)
        wr = wr * rho ** (n - 1)
        wp = wp * np.sin(phi) ** (n - 2)
        R, P = np.meshgrid(rho, phi, indexing="ij")
        W = omega(n - 1) * np.outer(wr, wp)
        return R.ravel(), np.cos(P).ravel(), W.ravel()

    def integrals(self) -> dict[str, float]:
        """``int p|grad u|^2``, ``int |u|^q`` and ``int rho mu p |grad u|^2``."""
        key = ("integrals", self.amplitude)
        if key not in self._cache:
            rho, mu, W = self.rule
            v, g = self.values(rho, mu)
            q = 2.0 * self.params.n / (self.params.n - 2.0)
            pg = self.weight(rho) * g
            self._cache[key] = {
                "dirichlet": float(W @ pg),
                "lq": float(W @ np.abs(v) ** q),
                "axial_moment": float(W @ (rho * mu * pg)),
            }
        return self._cache[key]


def _check_family(fp: FamilyParams, d: Domain) -> None:
    if fp.n != d.n:
        raise ValueError("family and domain dimensions differ")
    if 2.0 * fp.R0 > d.R * (1 + 1e-12):
        raise ValueError("need 2 R0 <= domain radius")
    if d.kind == "annulus" and d.eps_hole > fp.inner_zero:
        raise ValueError("hole is larger than the dead zone 1/(4 k^2) of the family cutoff")


def family_v(fp: FamilyParams, w: Weight, d: Domain) -> AxisymmetricField:
    _check_family(fp, d)
    return AxisymmetricField(fp, w, d)


def family_w(fp: FamilyParams, w: Weight, d: Domain) -> tuple[AxisymmetricField, float]:
    """``r v`` with ``r = (int p|grad v|^2 / int |v|^q)^(1/(q-2))``, so that ``Gamma(r v) = 0``."""
    v = family_v(fp, w, d)
    ints = v.integrals()
    q = 2.0 * fp.n / (fp.n - 2.0)
    r = (ints["dirichlet"] / ints["lq"]) ** (1.0 / (q - 2.0))
    return v.scaled(r), r


def energy_E(u: AxisymmetricField | None, w: Weight, d: Domain) -> float:
    """``1/2 int p|grad u|^2 - 1/q int |u|^q``."""
    if u is None:
        return 0.0
    ints = u.integrals()
    q = 2.0 * d.n / (d.n - 2.0)
    return 0.5 * ints["dirichlet"] - ints["lq"] / q


def gamma_Gamma(u: AxisymmetricField | None, w: Weight, d: Domain) -> float:
    """``int p|grad u|^2 - int |u|^q``."""
    if u is None:
        return 0.0
    ints = u.integrals()
    return ints["dirichlet"] - ints["lq"]


def center_F(u: AxisymmetricField, w: Weight, d: Domain, S: float, p0: float) -> np.ndarray:
    """``(p0 S)^(-n/2) int x p|grad u|^2 dx``.

    Components transverse to ``sigma`` cancel by axial symmetry.
    """
    ints = u.integrals()
    norm = (p0 * S) ** (-d.n / 2.0)
    sigma = np.asarray(u.params.sigma, dtype=float)
    return norm * (d.a * ints["dirichlet"] + sigma * ints["axial_moment"])


def choose_r0(w: Weight, n: int, theta: float = 0.25, r_max: float | None = None) -> float:
    """Largest ``r0`` with ``p(r0) - p0 <= theta / (2 S^(n/2))``, found by bisection."""
    if not theta > 0:
        raise ValueError("theta must be positive")
    target = theta / (2.0 * sobolev_S(n) ** (n / 2.0))
    r_max = r_max or 1.0
    if w(r_max) - w.p0 <= target:
        return r_max
    return float(brentq(lambda r: w(r) - w.p0 - target, 0.0, r_max, xtol=1e-14))


def amplitude(fields, w: Weight, d: Domain, max_amplitude: int = 1000) -> int:
    """Smallest integer ``lam > 1`` with ``E(lam u) < 0`` for every field in ``fields``."""
    fields = list(fields)
    for lam in range(2, max_amplitude + 1):
        if all(energy_E(f.scaled(lam), w, d) < 0 for f in fields):
            return lam
    raise ValueError("no amplitude up to max_amplitude makes every energy negative")


def limit_energy(w: Weight, fp: FamilyParams) -> float:
    """``(1/n) p(a + t r0 sigma)^(n/2) S^(n/2)``."""
    n = fp.n
    return (w(fp.offset) * sobolev_S(n)) ** (n / 2.0) / n
