import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from lentparticle.errors import NonFiniteValue
from lentparticle.marks import (CircleMarkSpace, MarkFunction, circle_flat_sample,
                                circle_gamma_one, circle_sample)

angles = st.floats(0, 2 * math.pi, exclude_max=True, allow_nan=False)


def test_circle_sample_uniform():
    space = CircleMarkSpace()
    draws = np.array(space.sample_many(100_000, 0))
    assert np.all((draws >= 0) & (draws < 2 * math.pi))
    assert stats.kstest(draws, stats.uniform(0, 2 * math.pi).cdf).statistic < 0.01


def test_circle_sample_deterministic():
    assert circle_sample(3) == circle_sample(3)
    assert circle_sample(3) != circle_sample(4)


def test_polar_gamma_matches_outer_product():
    r0, th = 1.7, 0.9
    G = circle_gamma_one(lambda t: (r0 * math.cos(t), r0 * math.sin(t)), th)
    s, c = math.sin(th), math.cos(th)
    # off-diagonal sign is -sin*cos: the derivative of (cos, sin) is (-sin, cos)
    expected = r0 ** 2 * np.array([[s * s, -s * c], [-s * c, c * c]])
    np.testing.assert_allclose(G, expected, atol=1e-9)


def test_constant_has_zero_gamma():
    assert np.all(circle_gamma_one(lambda t: 3.0, 1.0) == 0)
    assert np.all(circle_gamma_one(lambda t: (1.0, -2.0), 5.0) == 0)


@given(angles, st.floats(-3, 3), st.floats(-5, 5))
def test_sine_derivative(theta, c, offset):
    # analytic oracle: d/dtheta (offset + c sin theta) = c cos theta
    G = circle_gamma_one(lambda t: offset + c * math.sin(t), theta)
    assert abs(G[0, 0] - (c * math.cos(theta)) ** 2) <= 1e-8


def test_wraparound():
    # periodic derivative across 0 = 2*pi
    G = circle_gamma_one(lambda t: math.sin(t), 0.0)
    assert G[0, 0] == pytest.approx(1.0, abs=1e-9)
    G = circle_gamma_one(lambda t: math.sin(t), 2 * math.pi - 1e-7)
    assert G[0, 0] == pytest.approx(1.0, abs=1e-8)


@given(angles)
def test_chain_rule(theta):
    g = lambda t: 0.3 + math.sin(t) + 0.5 * math.cos(2 * t)
    phi, dphi = np.tanh, lambda y: 1 - np.tanh(y) ** 2
    lhs = circle_gamma_one(lambda t: phi(g(t)), theta)[0, 0]
    rhs = dphi(g(theta)) ** 2 * circle_gamma_one(g, theta)[0, 0]
    assert lhs == pytest.approx(rhs, rel=1e-6, abs=1e-12)


@given(angles, st.floats(0.1, 3), st.floats(-2, 2))
def test_psd_rank_one(theta, r, a):
    # maps on the circle are 2 pi periodic; a non-periodic component would jump at the seam
    G = circle_gamma_one(lambda t: (r * math.cos(t), a * math.sin(2 * t), r + a * math.cos(3 * t)), theta)
    eig = np.linalg.eigvalsh(G)
    assert eig[0] >= -1e-12
    assert np.linalg.matrix_rank(G, tol=1e-10 * max(eig[-1], 1e-300)) <= 1


def test_nonfinite_raises():
    with pytest.raises(NonFiniteValue):
        circle_gamma_one(lambda t: math.inf, 1.0)
    with pytest.raises(NonFiniteValue):
        circle_flat_sample(lambda t: (1.0, math.nan), 1.0, 0)


def test_flat_constant_is_zero():
    for seed in range(20):
        assert np.all(circle_flat_sample(lambda t: 2.0, 1.3, seed) == 0)


def test_flat_isometry_and_centering():
    g = lambda t: (1.3 * math.cos(t), 1.3 * math.sin(t))
    theta = 0.7
    n = 100_000
    x = circle_flat_sample(g, theta, 42, size=n)
    G = circle_gamma_one(g, theta)
    mean_se = np.sqrt(np.diag(G) / n)
    assert np.all(np.abs(x.mean(axis=0)) <= 3 * mean_se)
    emp = x.T @ x / n
    se = np.sqrt((np.outer(np.diag(G), np.diag(G)) + G ** 2) / n)
    assert np.all(np.abs(emp - G) <= 3 * se)


def test_flat_single_draw_matches_batch_shape():
    g = lambda t: (math.cos(t), math.sin(t))
    assert circle_flat_sample(g, 0.2, 1).shape == (2,)
    assert circle_flat_sample(g, 0.2, 1, size=5).shape == (5, 2)


def test_analytic_gradient_takes_precedence():
    g = MarkFunction(lambda t: math.sin(t), gradient=lambda t: [[7.0]])
    assert circle_gamma_one(g, 0.3)[0, 0] == 49.0


def test_chain_rule_via_inner():
    inner = MarkFunction(lambda t: math.sin(t))
    g = MarkFunction(lambda t: math.exp(-math.sin(t)), inner=inner,
                     outer_jac=lambda t: [[-math.exp(-math.sin(t))]])
    direct = circle_gamma_one(lambda t: math.exp(-math.sin(t)), 1.1)
    assert circle_gamma_one(g, 1.1)[0, 0] == pytest.approx(direct[0, 0], rel=1e-8)


def test_bad_step():
    with pytest.raises(ValueError):
        CircleMarkSpace(0.0)
