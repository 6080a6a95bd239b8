"""Piecewise-linear radial finite elements.

The unknowns are nodal values at the free nodes of a :class:`RadialGrid`:
every node except ``r = R``, and except ``r = eps_hole`` on an annulus.
The node ``r = 0`` of a ball is free (natural condition at the centre).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .constants import omega
from .quadrature import gauss_legendre
from .weights import Domain, RadialGrid, Weight

_GAUSS_POINTS = 8


def critical_exponent(n: int) -> float:
    return 2.0 * n / (n - 2.0)


@dataclass(frozen=True)
class DiscreteFunction:
    """Nodal values on a radial grid with zero boundary trace."""

    grid: RadialGrid
    values: np.ndarray
    annulus: bool = False

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != self.grid.nodes.shape:
            raise ValueError("one value per grid node is required")
        if not np.all(np.isfinite(v)):
            raise ValueError("values must be finite")
        v = v.copy()
        v[-1] = 0.0
        if self.annulus:
            v[0] = 0.0
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def nodes(self) -> np.ndarray:
        return self.grid.nodes

    def derivative(self) -> np.ndarray:
        """Elementwise slope ``u'`` (one value per element)."""
        return np.diff(self.values) / self.grid.h

    def __call__(self, r):
        return np.interp(r, self.grid.nodes, self.values, right=0.0)

    def scaled(self, c: float) -> "DiscreteFunction":
        return DiscreteFunction(self.grid, c * self.values, self.annulus)


@dataclass
class Forms:
    """Assembled stiffness, mass and ``L^q`` evaluators on the free nodes."""

    weight: Weight
    domain: Domain
    grid: RadialGrid
    free: np.ndarray
    K: sp.csr_matrix
    M: sp.csr_matrix
    element_stiffness: np.ndarray
    basis_at_points: sp.csr_matrix
    point_weights: np.ndarray
    q: float
    _chol: np.ndarray | None = field(default=None, repr=False)

    @property
    def size(self) -> int:
        return self.free.size

    def lift(self, u_free: np.ndarray) -> DiscreteFunction:
        full = np.zeros(self.grid.nodes.size)
        full[self.free] = u_free
        return DiscreteFunction(self.grid, full, self.domain.kind == "annulus")

    def restrict(self, u: DiscreteFunction | np.ndarray) -> np.ndarray:
        vals = u.values if isinstance(u, DiscreteFunction) else np.asarray(u, dtype=float)
        if vals.size == self.size:
            return vals.copy()
        return vals[self.free].copy()

    def lq_power(self, u: np.ndarray) -> float:
        """``int |u|^q`` over the domain."""
        uq = self.basis_at_points @ u
        return float(self.point_weights @ np.abs(uq) ** self.q)

    def lq_norm_sq(self, u: np.ndarray) -> float:
        return self.lq_power(u) ** (2.0 / self.q)

    def nonlinear_load(self, u: np.ndarray, power: float | None = None) -> np.ndarray:
        """Load vector ``int |u|^(power-1) sign(u) phi_i``; default power is q."""
        s = self.q if power is None else power
        uq = self.basis_at_points @ u
        return self.basis_at_points.T @ (self.point_weights * np.abs(uq) ** (s - 1.0) * np.sign(uq))

    def energy_density(self, u: np.ndarray) -> np.ndarray:
        """Per-element ``int p |u'|^2`` over the element."""
        full = np.zeros(self.grid.nodes.size)
        full[self.free] = u
        return self.element_stiffness * np.diff(full) ** 2

    def solve_stiffness(self, b: np.ndarray) -> np.ndarray:
        """Solve ``K x = b`` with a cached banded Cholesky factor."""
        if self._chol is None:
            d = self.K.diagonal()
            off = self.K.diagonal(1)
            ab = np.zeros((2, d.size))
            ab[0, 1:] = off
            ab[1] = d
            self._chol = scipy.linalg.cholesky_banded(ab)
        return scipy.linalg.cho_solve_banded((self._chol, False), b)


def assemble(w: Weight, d: Domain, grid: RadialGrid) -> Forms:
    """Assemble the P1 forms ``int p u'v' omega r^(n-1)`` and ``int u v omega r^(n-1)``."""
    if not grid.matches(d):
        raise ValueError("grid does not match domain")
    n = d.n
    om = omega(n)
    r = grid.nodes
    h = grid.h
    ne = h.size
    gx, gw = gauss_legendre(_GAUSS_POINTS)
    pts = r[:-1, None] + h[:, None] * gx[None, :]
    wts = h[:, None] * gw[None, :] * om * pts ** (n - 1)

    kel = (w(pts.ravel()).reshape(pts.shape) * wts).sum(axis=1) / h ** 2
    phi_l = 1.0 - gx
    phi_r = gx
    m_ll = wts @ (phi_l * phi_l)
    m_lr = wts @ (phi_l * phi_r)
    m_rr = wts @ (phi_r * phi_r)

    N = r.size
    diag_k = np.zeros(N)
    diag_k[:-1] += kel
    diag_k[1:] += kel
    diag_m = np.zeros(N)
    diag_m[:-1] += m_ll
    diag_m[1:] += m_rr
    K = sp.diags([-kel, diag_k, -kel], [-1, 0, 1], format="csr")
    Mm = sp.diags([m_lr, diag_m, m_lr], [-1, 0, 1], format="csr")

    start = 1 if d.kind == "annulus" else 0
    free = np.arange(start, N - 1)

    rows = np.repeat(np.arange(ne * _GAUSS_POINTS), 2)
    elem = np.repeat(np.arange(ne), _GAUSS_POINTS)
    cols = np.stack([elem, elem + 1], axis=1).ravel()
    vals = np.stack([np.tile(phi_l, ne), np.tile(phi_r, ne)], axis=1).ravel()
    B = sp.csr_matrix((vals, (rows, cols)), shape=(ne * _GAUSS_POINTS, N))

    return Forms(
        weight=w, domain=d, grid=grid, free=free,
        K=K[free][:, free].tocsr(), M=Mm[free][:, free].tocsr(),
        element_stiffness=kel,
        basis_at_points=B[:, free].tocsr(),
        point_weights=wts.ravel(),
        q=critical_exponent(n),
    )


def q_lambda(u: DiscreteFunction | np.ndarray, forms: Forms, lam: float) -> float:
    """Discrete Rayleigh quotient ``(u'Ku - lam u'Mu) / ||u||_q^2``."""
    x = forms.restrict(u)
    denom = forms.lq_norm_sq(x)
    if not denom > 0:
        raise ValueError("q_lambda is undefined for the zero function")
    return float((x @ (forms.K @ x) - lam * (x @ (forms.M @ x))) / denom)
