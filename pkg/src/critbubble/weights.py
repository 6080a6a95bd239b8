"""Radial weights ``p``, ball/annulus domains and radial grids.

Every radial computation is done in the distance ``r = |x - a|`` to the
centre ``a`` of the domain, where the weight attains its minimum ``p0``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

ThetaKind = Literal["zero", "power", "tabulated"]


@dataclass(frozen=True)
class Weight:
    """``p(r) = p0 + beta_k * r**k * (1 + theta(r))``.

    ``theta`` is one of ``zero``, ``power`` (``theta_c * r**theta_m``) or
    ``tabulated`` (piecewise-linear through ``theta_table``, which must start
    at ``r = 0`` with ``theta = 0``).
    """

    p0: float = 1.0
    beta_k: float = 0.0
    k: float = 2.0
    theta: ThetaKind = "zero"
    theta_c: float = 0.0
    theta_m: float = 1.0
    theta_table: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        if not self.p0 > 0:
            raise ValueError(f"p0 must be positive, got {self.p0}")
        if self.beta_k < 0:
            raise ValueError(f"beta_k must be nonnegative, got {self.beta_k}")
        if not self.k > 0:
            raise ValueError(f"k must be positive, got {self.k}")
        if self.theta not in ("zero", "power", "tabulated"):
            raise ValueError(f"unknown theta kind {self.theta!r}")
        if self.theta == "power" and not self.theta_m > 0:
            raise ValueError("power theta needs theta_m > 0")
        if self.theta == "tabulated":
            tab = np.asarray(self.theta_table, dtype=float)
            if tab.ndim != 2 or tab.shape[1] != 2 or tab.shape[0] < 2:
                raise ValueError("theta_table must hold at least two (r, theta) pairs")
            if tab[0, 0] != 0.0 or abs(tab[0, 1]) > 1e-12:
                raise ValueError("tabulated theta must start at r=0 with theta=0")
            if np.any(np.diff(tab[:, 0]) <= 0):
                raise ValueError("theta_table radii must be strictly increasing")

    @property
    def is_constant(self) -> bool:
        return self.beta_k == 0.0

    @property
    def exact_derivative(self) -> bool:
        return self.theta != "tabulated"

    def theta_at(self, r):
        r = np.asarray(r, dtype=float)
        if self.theta == "zero":
            return np.zeros_like(r)
        if self.theta == "power":
            return self.theta_c * r ** self.theta_m
        tab = np.asarray(self.theta_table, dtype=float)
        return np.interp(r, tab[:, 0], tab[:, 1])

    def __call__(self, r):
        return eval_weight(self, r)

    def derivative(self, r):
        """p'(r); one-sided differences for tabulated theta."""
        r = np.asarray(r, dtype=float)
        if self.beta_k == 0.0:
            return np.zeros_like(r)
        k, b = self.k, self.beta_k
        with np.errstate(divide="ignore", invalid="ignore"):
            base = k * b * r ** (k - 1)
            if self.theta == "zero":
                out = base
            elif self.theta == "power":
                c, m = self.theta_c, self.theta_m
                out = base + b * c * (k + m) * r ** (k + m - 1)
            else:
                h = 1e-7 * np.maximum(r, 1e-3)
                out = (eval_weight(self, r + h) - eval_weight(self, r)) / h
        return out


def eval_weight(w: Weight, r):
    """Evaluate ``p0 + beta_k r^k (1 + theta(r))``; scalar in, scalar out."""
    arr = np.asarray(r, dtype=float)
    if np.any(arr < 0):
        raise ValueError("radius must be nonnegative")
    if w.beta_k == 0.0:
        out = np.full_like(arr, w.p0)
    else:
        out = w.p0 + w.beta_k * arr ** w.k * (1.0 + w.theta_at(arr))
    return float(out) if np.ndim(r) == 0 else out


def radial_gradient_pairing(w: Weight, r):
    """``grad p(x) . (x - a) = r p'(r)`` for the radial weight."""
    arr = np.asarray(r, dtype=float)
    if np.any(arr < 0):
        raise ValueError("radius must be nonnegative")
    with np.errstate(invalid="ignore"):
        # p' may blow up at r = 0 when k < 1; the pairing there is 0
        out = arr * w.derivative(arr)
    out = np.where(arr == 0.0, 0.0, out)
    return float(out) if np.ndim(r) == 0 else out


@dataclass(frozen=True)
class Domain:
    """Ball ``B(a, R)`` or annulus ``B(a, R) minus closed B(a, eps_hole)`` in R^n."""

    n: int
    R: float = 1.0
    kind: Literal["ball", "annulus"] = "ball"
    eps_hole: float = 0.0
    center: tuple[float, ...] = ()

    def __post_init__(self):
        if self.n < 3:
            raise ValueError("dimension n must be at least 3")
        if not self.R > 0:
            raise ValueError("R must be positive")
        if self.kind not in ("ball", "annulus"):
            raise ValueError(f"unknown domain kind {self.kind!r}")
        if self.kind == "annulus" and not 0 < self.eps_hole < self.R:
            raise ValueError("annulus needs 0 < eps_hole < R")
        if self.kind == "ball" and self.eps_hole != 0.0:
            raise ValueError("a ball has no hole")
        if not self.center:
            object.__setattr__(self, "center", (0.0,) * self.n)
        elif len(self.center) != self.n:
            raise ValueError("center must have n coordinates")

    @classmethod
    def ball(cls, n: int, R: float = 1.0, center=()) -> "Domain":
        return cls(n=n, R=R, kind="ball", center=tuple(center))

    @classmethod
    def annulus(cls, n: int, eps_hole: float, R: float = 1.0, center=()) -> "Domain":
        return cls(n=n, R=R, kind="annulus", eps_hole=eps_hole, center=tuple(center))

    @property
    def r_inner(self) -> float:
        return self.eps_hole if self.kind == "annulus" else 0.0

    @property
    def diam(self) -> float:
        return 2.0 * self.R

    @property
    def starshaped(self) -> bool:
        return self.kind == "ball"

    @property
    def a(self) -> np.ndarray:
        return np.asarray(self.center, dtype=float)

    def boundary_normal_dot(self) -> dict[str, float]:
        """``(x - a) . nu`` on each boundary sphere (outward normal)."""
        out = {"outer": self.R}
        if self.kind == "annulus":
            out["inner"] = -self.eps_hole
        return out


@dataclass(frozen=True)
class RadialGrid:
    """Nodes ``r_0 < ... < r_M`` on ``[r_inner, R]``.

    ``ratio == 1`` gives a uniform grid. For ``ratio < 1`` the nodes are
    geometric toward the inner end, ``r_j = r_0 + (R - r_0) ratio**(M - j)``
    for ``j >= 1``. Doubling ``M`` at fixed ratio keeps every old node.
    """

    n: int
    R: float = 1.0
    r_inner: float = 0.0
    M: int = 1024
    ratio: float = 0.97
    nodes: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.M < 16:
            raise ValueError("grid needs M >= 16 elements")
        if not 0 < self.ratio <= 1:
            raise ValueError("grading ratio must lie in (0, 1]")
        if not 0 <= self.r_inner < self.R:
            raise ValueError("need 0 <= r_inner < R")
        L = self.R - self.r_inner
        if self.ratio == 1.0:
            nodes = self.r_inner + L * np.arange(self.M + 1) / self.M
        else:
            j = np.arange(1, self.M + 1)
            nodes = np.concatenate([[self.r_inner], self.r_inner + L * self.ratio ** (self.M - j)])
            if nodes[1] - nodes[0] > nodes[-1] - nodes[-2]:
                raise ValueError(
                    f"geometric grid with ratio={self.ratio}, M={self.M} has a first element "
                    "wider than the last; increase M or use ratio=1")
        nodes[-1] = self.R
        if np.any(np.diff(nodes) <= 0):
            raise ValueError("grid nodes are not strictly increasing (ratio too small for M)")
        object.__setattr__(self, "nodes", nodes)

    @classmethod
    def for_domain(cls, d: Domain, M: int = 1024, ratio: float = 0.97) -> "RadialGrid":
        return cls(n=d.n, R=d.R, r_inner=d.r_inner, M=M, ratio=ratio)

    @property
    def grading(self) -> str:
        return "uniform" if self.ratio == 1.0 else f"geometric({self.ratio})"

    @property
    def h(self) -> np.ndarray:
        return np.diff(self.nodes)

    def refined(self) -> "RadialGrid":
        """The nested grid with ``2M`` elements."""
        return RadialGrid(n=self.n, R=self.R, r_inner=self.r_inner, M=2 * self.M, ratio=self.ratio)

    def matches(self, d: Domain) -> bool:
        return self.n == d.n and math.isclose(self.R, d.R) and math.isclose(self.r_inner, d.r_inner)


@dataclass(frozen=True)
class GrowthReport:
    holds: bool
    worst_node: float
    margin: float
    approximate: bool


def check_growth_condition(w: Weight, d: Domain, grid: RadialGrid) -> GrowthReport:
    """Check ``k beta_k <= r^(1-k) p'(r)`` at every positive grid node.

    Returns the verdict, the node with the smallest margin and that margin.
    """
    if not grid.matches(d):
        raise ValueError("grid does not match domain")
    r = grid.nodes[grid.nodes > 0]
    lhs = w.k * w.beta_k
    with np.errstate(over="ignore"):
        rhs = r ** (1.0 - w.k) * w.derivative(r)
    margin = rhs - lhs
    # relative slack for round-off in the equality case theta = 0
    tol = 1e-10 * max(lhs, 1.0)
    i = int(np.argmin(margin))
    return GrowthReport(bool(margin[i] >= -tol), float(r[i]), float(margin[i]), not w.exact_derivative)


check_condition_eq3 = check_growth_condition


def check_theta_vanishes(w: Weight, grid: RadialGrid, tol: float = 1e-2) -> bool:
    """theta at the smallest positive node is below ``tol`` in magnitude."""
    r = grid.nodes[grid.nodes > 0][0]
    return bool(abs(float(w.theta_at(r))) <= tol)
