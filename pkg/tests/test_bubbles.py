import math

import numpy as np
import pytest

from critbubble.bubbles import (BubbleParams, Cutoff, bubble_derivative, bubble_value, cutoff_D,
                                expansion_sweep, l2_norm_sq, lq_norm_sq, rayleigh_bubble, regime_tag,
                                weighted_dirichlet)
from critbubble.constants import (compute_A_k, compute_K1, compute_K2, compute_K3, gamma_tilde, omega,
                                  sobolev_S)
from critbubble.weights import Domain, Weight


def bp(n, eps, l=0.5, L=1.0):
    return BubbleParams(n, eps, Cutoff(l, L))


def test_cutoff_invariants():
    z = Cutoff(0.3, 0.8)
    r = np.linspace(0, 1, 101)
    assert np.all((z(r) >= 0) & (z(r) <= 1))
    assert z(0.3) == 1.0 and z(0.8) == 0.0
    assert z.derivative(0.3) == 0.0 and z.derivative(0.8) == 0.0
    with pytest.raises(ValueError):
        Cutoff(0.8, 0.3)


def test_bubble_value_examples():
    assert bubble_value(bp(5, 0.01), 0.0) == pytest.approx(0.01 ** -1.5)
    assert bubble_value(bp(5, 0.01), 1.2) == 0.0
    assert bubble_value(BubbleParams(3, 1.0, Cutoff(2.0, 3.0)), 1.0) == pytest.approx(2 ** -0.5)


def test_bubble_derivative_matches_differences():
    b = bp(4, 0.05)
    r = np.linspace(0.01, 0.99, 50)
    fd = (bubble_value(b, r + 1e-7) - bubble_value(b, r - 1e-7)) / 2e-7
    np.testing.assert_allclose(bubble_derivative(b, r), fd, rtol=1e-6, atol=1e-6)


@pytest.mark.parametrize("n", [3, 4, 5])
def test_dirichlet_leading_term(n):
    d = Domain.ball(n)
    ratios = [weighted_dirichlet(bp(n, e), Weight(), d) * e ** ((n - 2) / 2) / compute_K1(n)
              for e in (1e-4, 1e-6)]
    assert abs(ratios[1] - 1) < abs(ratios[0] - 1) + 1e-12
    assert ratios[1] == pytest.approx(1.0, rel=1e-2)


def test_dirichlet_linear_in_constant_weight():
    d = Domain.ball(4)
    b = bp(4, 1e-3)
    assert weighted_dirichlet(b, Weight(p0=3.0), d) == pytest.approx(
        3.0 * weighted_dirichlet(b, Weight(), d), rel=1e-13)


def test_weight_correction_n5_k2():
    d = Domain.ball(5)
    eps = 1e-4
    b = bp(5, eps)
    extra = weighted_dirichlet(b, Weight(beta_k=1.0, k=2.0), d) - weighted_dirichlet(b, Weight(), d)
    assert extra * eps ** 1.5 / eps == pytest.approx(compute_A_k(5, 2.0, 1.0), rel=0.05)


def test_norm_asymptotics():
    eps = 1e-6
    assert lq_norm_sq(bp(5, eps), Domain.ball(5)) * eps ** 1.5 == pytest.approx(compute_K2(5), rel=1e-3)
    assert l2_norm_sq(bp(6, eps), Domain.ball(6)) * eps ** 1.0 == pytest.approx(compute_K3(6), rel=1e-3)
    # n = 4: the L2 norm grows like omega_4/2 |log eps|
    d4 = Domain.ball(4)
    slope = (l2_norm_sq(bp(4, 1e-8), d4) - l2_norm_sq(bp(4, 1e-6), d4)) / math.log(100)
    assert slope == pytest.approx(omega(4) / 2, rel=1e-3)


def test_quotient_above_sobolev_and_lambda_sign():
    d = Domain.ball(3)
    S = sobolev_S(3)
    q = [rayleigh_bubble(Weight(), 0.0, bp(3, e), d) for e in (1e-2, 1e-4, 1e-6)]
    assert all(v >= S for v in q)
    assert q[0] > q[1] > q[2]
    assert q[2] == pytest.approx(S, rel=1e-2)
    assert rayleigh_bubble(Weight(), -1.0, bp(3, 1e-4), d) > q[1]


def test_n4_quotient_dips_below_level_above_threshold():
    d = Domain.ball(4)
    w = Weight(beta_k=1.0, k=2.0)
    assert rayleigh_bubble(w, 6.0, bp(4, 1e-6), d) < sobolev_S(4)


def test_regime_tags():
    assert regime_tag(3, 2.0) == "n=3"
    assert regime_tag(4, 1.0) == "k<2 n>=4"
    assert regime_tag(4, 2.0) == "k=2 n=4"
    assert regime_tag(4, 3.0) == "k>2 n=4"
    assert regime_tag(6, 2.0) == "k=2 n>=5"
    assert regime_tag(6, 3.0) == "k>2 n>=5"


EPS5 = np.geomspace(1e-3, 1e-5, 10)


def test_constant_weight_leading_constant():
    fit = expansion_sweep(Weight(p0=2.0), 0.0, Domain.ball(5), EPS5)
    assert fit.leading == pytest.approx(2.0 * sobolev_S(5), rel=1e-4)
    assert fit.residual >= 0


def test_slope_vanishes_at_threshold():
    w = Weight(beta_k=1.0, k=2.0)
    C = gamma_tilde(5, 1.0)
    fit = expansion_sweep(w, C, Domain.ball(5), EPS5)
    scale = compute_K3(5) / compute_K2(5)
    assert abs(fit.slope) < 0.05 * scale
    assert abs(fit.predicted_slope) < 1e-9


def test_n3_slope_uses_cutoff_quotient():
    w = Weight(beta_k=1.0, k=2.0)
    fit = expansion_sweep(w, 0.0, Domain.ball(3), np.geomspace(1e-4, 1e-7, 10))
    assert fit.correction == "eps^0.5"
    assert fit.slope_relative_error < 0.05
    D, z2 = cutoff_D(2.0, 1.0, 1.0, Cutoff(0.5, 1.0))
    assert D > 0 and 0.5 < z2 < 1.0


def test_expansion_input_validation():
    w, d = Weight(), Domain.ball(5)
    with pytest.raises(ValueError):
        expansion_sweep(w, 0.0, d, EPS5[:5])
    with pytest.raises(ValueError):
        expansion_sweep(w, 0.0, d, EPS5[::-1])
    with pytest.raises(ValueError):
        expansion_sweep(w, 0.0, d, np.geomspace(0.1, 1e-4, 8))
    with pytest.raises(ValueError):
        weighted_dirichlet(bp(3, 1e-3), w, Domain.annulus(3, 0.1))
    with pytest.raises(ValueError):
        weighted_dirichlet(bp(3, 1e-3, 0.5, 2.0), w, Domain.ball(3))
