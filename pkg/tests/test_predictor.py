import math

import numpy as np
import pytest

from i3sb.predictor import (
    Condition,
    GaussianPairModel,
    cheat_oracle,
    conditional_mean_x0,
    gaussian_analytic_oracle,
)
from i3sb.schedule import BetaSchedule, build_grid, build_schedule, make_schedule
from i3sb.streams import stream
from i3sb.tensor_io import ImageTensor

from oracles import regression_prediction, simulate_triples


def test_cheat_oracle_examples():
    s = make_schedule(10)
    x0 = ImageTensor(stream(0).uniform(-1, 1, (4, 5)))
    eps = cheat_oracle(x0, s)
    y = Condition(xN=x0)
    t = float(s.t[3])
    sig = s.sigma(3)
    assert np.all(eps.predict(x0, 3, t, y).data == 0)
    out = eps.predict(x0.with_data(x0.data.astype(np.float64) + sig), 3, t, y)
    np.testing.assert_allclose(out.data, 1.0, atol=1e-5)
    with pytest.raises(ZeroDivisionError):
        eps.predict(x0, 0, 0.0, y)


def test_analytic_oracle_noiseless_limit():
    beta = BetaSchedule()
    m = GaussianPairModel(0.0, 1.0, 1e-12)
    rng = stream(1)
    xt, x1 = rng.standard_normal(50), rng.standard_normal(50)
    for t in (0.05, 0.5, 0.9):
        np.testing.assert_allclose(conditional_mean_x0(m, beta, t, xt, x1), x1, atol=1e-6)
    s = make_schedule(10)
    orc = gaussian_analytic_oracle(m, s)
    img, xN = ImageTensor(xt.reshape(5, 10)), ImageTensor(x1.reshape(5, 10))
    t = float(s.t[4])
    expect = (img.data.astype(np.float64) - xN.data.astype(np.float64)) / s.sigma(4)
    np.testing.assert_allclose(orc.predict(img, 4, t, Condition(xN)).data, expect, rtol=1e-4, atol=1e-4)
    with pytest.raises(ZeroDivisionError):
        orc.predict(img, 0, 0.0, Condition(xN))


def test_analytic_oracle_flat_prior_limit():
    beta = BetaSchedule()
    xt, x1 = np.array([0.3, -1.2]), np.array([0.1, 0.4])
    a = conditional_mean_x0(GaussianPairModel(0.0, 1e6, 0.25), beta, 0.3, xt, x1)
    b = conditional_mean_x0(GaussianPairModel(5.0, 1e6, 0.25), beta, 0.3, xt, x1)
    # prior mean weight ~ s1sq / s0sq
    assert np.max(np.abs(a - b)) < 1e-5


def test_analytic_oracle_endpoints():
    beta = BetaSchedule()
    m = GaussianPairModel(0.2, 1.0, 0.25)
    x1 = np.array([0.7])
    # at t = 1, X_t = X1 carries nothing new
    np.testing.assert_allclose(conditional_mean_x0(m, beta, 1.0, x1, x1), m.posterior_given_x1(x1)[0])
    # as t -> 0, X_t -> X0
    np.testing.assert_allclose(conditional_mean_x0(m, beta, 1e-9, np.array([-0.4]), x1), -0.4, atol=1e-3)


def test_analytic_oracle_matches_regression_constant_example():
    # constant beta = 0.15, uniform N = 2, n = 1: sigma^2 = sbar^2 = 0.075
    s = build_schedule(BetaSchedule("constant", 0.0, 0.15), build_grid(2, "uniform"))
    m = GaussianPairModel(0.0, 1.0, 0.25)
    sig2, sbar2 = float(s.sigma2[1]), float(s.sbar2[1])
    x0, xt, x1 = simulate_triples(m.mu0, m.s0sq, m.s1sq, sig2, sbar2, 1_000_000, stream(11))
    for q in [(0.3, -0.2), (-1.0, -0.8), (0.0, 0.5)]:
        pred, se = regression_prediction(x0, xt, x1, q)
        analytic = float(conditional_mean_x0(m, s.beta, float(s.t[1]), q[0], q[1]))
        assert abs(pred - analytic) <= 3 * se


def test_analytic_oracle_is_stationary():
    # derivative of the population loss along m0 + lam * h is -2 E[(X0 - m0) h] / sigma^2;
    # at the minimiser it must vanish for every h in the span (1, X_t, X1)
    beta = BetaSchedule()
    m = GaussianPairModel(0.1, 0.8, 0.3)
    t = 0.37
    sig2, sbar2 = float(beta.integral(t)), float(beta.integral_to_end(t))
    x0, xt, x1 = simulate_triples(m.mu0, m.s0sq, m.s1sq, sig2, sbar2, 400_000, stream(12))
    resid = x0 - conditional_mean_x0(m, beta, t, xt, x1)
    for h in (np.ones_like(xt), xt, x1):
        g = resid * h
        z = g.mean() / (g.std(ddof=1) / math.sqrt(len(g)))
        assert abs(z) < 4
    # a perturbed predictor is not stationary
    g = (resid - 0.02) * np.ones_like(xt)
    assert abs(g.mean() / (g.std(ddof=1) / math.sqrt(len(g)))) > 4


def test_pair_model_validation_and_posterior():
    with pytest.raises(ValueError):
        GaussianPairModel(0.0, 0.0, 1.0)
    m = GaussianPairModel(1.0, 3.0, 1.0)
    mean, var = m.posterior_given_x1(np.array([2.0]))
    assert mean[0] == pytest.approx(1.0 + 0.75 * 1.0)
    assert var == pytest.approx(0.75)
