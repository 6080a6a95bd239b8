import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from critbubble.constants import gamma_tilde, sobolev_S
from critbubble.fem import assemble, q_lambda
from critbubble.variational import (MinimizeOptions, annulus_solve, eigen_lambda1_div, energy_of,
                                    minimize_S_lambda, reconstruct_solution, s_lambda_curve)
from critbubble.weights import Domain, RadialGrid, Weight


def shoot_eigenvalue(w, n, guess):
    """First Dirichlet eigenvalue of the radial problem by shooting from the origin."""
    r0 = 1e-6

    def end_value(lam):
        def rhs(r, y):
            u, flux = y
            return [flux / (w(r) * r ** (n - 1)), -lam * r ** (n - 1) * u]

        y0 = [1.0, -lam * r0 ** n / n]
        sol = solve_ivp(rhs, (r0, 1.0), y0, rtol=1e-12, atol=1e-14, method="DOP853")
        return sol.y[0, -1]

    return brentq(end_value, 0.8 * guess, 1.2 * guess, xtol=1e-13)


@pytest.mark.parametrize("n,w", [(3, Weight()), (3, Weight(beta_k=1.0, k=2.0)),
                                 (5, Weight(p0=0.5, beta_k=2.0, k=1.0))])
def test_eigenvalue_matches_shooting(n, w):
    d = Domain.ball(n)
    rep = eigen_lambda1_div(w, d, RadialGrid(n=n, M=2000, ratio=1.0))
    oracle = shoot_eigenvalue(w, n, rep.lambda1_div)
    assert rep.lambda1_div == pytest.approx(oracle, rel=1e-3)


def test_eigenfunction_positive_and_rayleigh_consistent():
    w = Weight(beta_k=1.0, k=2.0)
    d = Domain.ball(4)
    g = RadialGrid.for_domain(d, M=512)
    rep = eigen_lambda1_div(w, d, g)
    u = rep.eigenfunction.values
    assert np.all(u[:-1] > 0)
    f = assemble(w, d, g)
    x = f.restrict(rep.eigenfunction)
    assert (x @ (f.K @ x)) / (x @ (f.M @ x)) == pytest.approx(rep.lambda1_div, rel=1e-9)


def test_annulus_eigenvalue_exceeds_ball():
    ball = eigen_lambda1_div(Weight(), Domain.ball(3), RadialGrid(n=3, M=512, ratio=1.0))
    ann = Domain.annulus(3, 0.2)
    ring = eigen_lambda1_div(Weight(), ann, RadialGrid.for_domain(ann, M=512, ratio=1.0))
    assert ring.lambda1_div > ball.lambda1_div
    # n = 3 annulus eigenfunctions are sin(pi (r - a)/(R - a)) / r
    assert ring.lambda1_div == pytest.approx((math.pi / 0.8) ** 2, rel=1e-4)


def test_nonpositive_lambda_concentrates():
    d = Domain.ball(4)
    rep = minimize_S_lambda(Weight(beta_k=1.0, k=2.0), d, RadialGrid.for_domain(d), -2.0)
    assert rep.achieved is False and rep.verdict == "concentrating"
    assert rep.S_lambda_estimate == pytest.approx(sobolev_S(4), rel=0.02)
    assert rep.S_lambda_estimate <= rep.initial_quotient
    assert 0 < rep.concentration_radius_90 <= 1.0


def test_without_refinement_the_verdict_is_inconclusive():
    d = Domain.ball(5)
    rep = minimize_S_lambda(Weight(beta_k=1.0, k=2.0), d, RadialGrid.for_domain(d), 10.0,
                            MinimizeOptions(refine=False))
    assert rep.achieved is None and rep.radius_ratio is None


def test_estimate_nonincreasing_under_nested_refinement():
    d = Domain.ball(5)
    w = Weight(beta_k=1.0, k=2.0)
    vals = [minimize_S_lambda(w, d, RadialGrid(n=5, M=M, ratio=1.0), 15.0,
                              MinimizeOptions(refine=False)).S_lambda_estimate for M in (128, 256, 512)]
    assert vals[0] >= vals[1] - 1e-9 and vals[1] >= vals[2] - 1e-9


def test_reconstructed_solution():
    d = Domain.ball(5)
    w = Weight(beta_k=1.0, k=2.0)
    g = RadialGrid.for_domain(d, M=2048, ratio=0.99)
    lam = 0.5 * (gamma_tilde(5, 1.0) + eigen_lambda1_div(w, d, g).lambda1_div)
    rep = minimize_S_lambda(w, d, g, lam)
    assert rep.achieved is True and rep.S_lambda_estimate < sobolev_S(5)
    f = assemble(w, d, g)
    rec = reconstruct_solution(rep, lam, w, d, f)
    assert rec.residual < 1e-3
    assert np.all(rec.solution.values[:-1] > 0)
    assert q_lambda(rec.solution, f, lam) == pytest.approx(rep.S_lambda_estimate, rel=1e-12)
    # a solution has E = S^(n/2) / n
    v = f.restrict(rec.solution)
    assert energy_of(f, v, lam) == pytest.approx(rep.S_lambda_estimate ** 2.5 / 5, rel=1e-6)


def test_reconstruction_refuses_bad_reports():
    d = Domain.ball(3)
    g = RadialGrid.for_domain(d, M=256)
    rep = minimize_S_lambda(Weight(), d, g, 0.0)
    with pytest.raises(ValueError):
        reconstruct_solution(rep, 0.0, Weight(), d)
    above = minimize_S_lambda(Weight(), d, g, 12.0, MinimizeOptions(refine=False))
    assert above.S_lambda_estimate < 0
    with pytest.raises(ValueError):
        reconstruct_solution(above, 12.0, Weight(), d)


def shoot_annulus(a, n=3):
    """Positive radial solution of -(r^(n-1) u')' = r^(n-1) u^(q-1) on (a, 1), u(a) = u(1) = 0."""
    q = 2 * n / (n - 2)

    def end_value(slope):
        def rhs(r, y):
            return [y[1], -(n - 1) / r * y[1] - abs(y[0]) ** (q - 2) * y[0]]

        sol = solve_ivp(rhs, (a, 1.0), [0.0, slope], rtol=1e-12, atol=1e-13, method="DOP853",
                        dense_output=True)
        return sol.y[0, -1], sol

    slopes = np.geomspace(0.1, 1e4, 200)
    vals = [end_value(s)[0] for s in slopes]
    i = next(j for j in range(len(vals) - 1) if vals[j] > 0 >= vals[j + 1])
    s = brentq(lambda x: end_value(x)[0], slopes[i], slopes[i + 1], xtol=1e-13)
    return end_value(s)[1]


def test_annulus_solution_matches_shooting():
    g = RadialGrid(n=3, R=1.0, r_inner=0.3, M=2048, ratio=1.0)
    res = annulus_solve(Weight(), 0.3, 1.0, g)
    assert res.residual < 1e-3
    sol = shoot_annulus(0.3)
    r = g.nodes
    exact = sol.sol(r)[0]
    assert np.max(np.abs(res.solution.values - exact)) < 1e-3 * np.max(exact)


def test_annulus_energy_drops_as_the_hole_shrinks():
    w = Weight(beta_k=1.0, k=2.0)
    energies = []
    for hole in (0.1, 0.03, 0.01):
        res = annulus_solve(w, hole, 1.0, RadialGrid(n=3, R=1.0, r_inner=hole, M=1024, ratio=0.99))
        energies.append(res.energy)
        assert res.energy > res.window_lo
    assert energies[0] > energies[1] > energies[2]
    assert energies[2] < res.window_hi


def test_curve_validation():
    d = Domain.ball(3)
    with pytest.raises(ValueError):
        s_lambda_curve(Weight(), d, RadialGrid.for_domain(d, M=128), [1.0, 0.5])
