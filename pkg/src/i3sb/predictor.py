"""Noise predictors ``eps(X_t, t, y) ~ (X_t - X_0) / sigma_t``.

Two oracle predictors live here; the trainable patch network is in
:mod:`i3sb.mlp`.  All predictors are queried with the step index ``n`` and
continuous time ``t`` and read the corrupted image from ``y.xN``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from .schedule import BetaSchedule, Schedule
from .tensor_io import ImageTensor, as_array


@dataclass(frozen=True)
class Condition:
    xN: ImageTensor
    extras: dict = field(default_factory=dict)


class EpsilonPredictor(Protocol):
    def predict(self, x_t: ImageTensor, n: int, t: float, y: Condition) -> ImageTensor: ...


def _beta_of(s) -> BetaSchedule:
    return s.beta if isinstance(s, Schedule) else s


def _sigma_at(beta: BetaSchedule, t: float) -> float:
    sigma = float(beta.sigma(t))
    if sigma == 0.0:
        raise ZeroDivisionError(f"sigma_t = 0 at t={t}; the predictor is undefined there")
    return sigma


class CheatOracle:
    """Predictor that knows the clean image, so ``x0_hat`` is exact at every step."""

    def __init__(self, x0_true: ImageTensor, beta):
        self.x0_true = x0_true
        self.beta = _beta_of(beta)

    def predict(self, x_t: ImageTensor, n: int, t: float, y: Condition | None = None) -> ImageTensor:
        sigma = _sigma_at(self.beta, t)
        return x_t.with_data((as_array(x_t) - as_array(self.x0_true)) / sigma)


def cheat_oracle(x0_true: ImageTensor, beta) -> CheatOracle:
    return CheatOracle(x0_true, beta)


@dataclass(frozen=True)
class GaussianPairModel:
    """Per-pixel toy data: ``X_0 ~ N(mu0, s0sq)`` and ``X_1 = X_0 + eta``, ``eta ~ N(0, s1sq)``."""

    mu0: float = 0.0
    s0sq: float = 1.0
    s1sq: float = 0.25

    def __post_init__(self):
        if not (self.s0sq > 0 and self.s1sq > 0):
            raise ValueError("pair-model variances must be positive")

    def posterior_given_x1(self, x1):
        """Mean and variance of ``X_0 | X_1``."""
        gain = self.s0sq / (self.s0sq + self.s1sq)
        mean = self.mu0 + gain * (np.asarray(x1, dtype=np.float64) - self.mu0)
        return mean, self.s0sq * self.s1sq / (self.s0sq + self.s1sq)

    def sample(self, size, rng: np.random.Generator):
        x0 = self.mu0 + np.sqrt(self.s0sq) * rng.standard_normal(size)
        x1 = x0 + np.sqrt(self.s1sq) * rng.standard_normal(size)
        return x0, x1


def conditional_mean_x0(model: GaussianPairModel, beta: BetaSchedule, t: float, x_t, x1):
    """``E[X_0 | X_t, X_1]`` under the bridge marginal with Gaussian pair data.

    Given ``X_1``, ``X_0`` has the Gaussian posterior ``(m1, v1)``; the bridge
    then observes ``X_t - w1*X_1 = w0*X_0 + sqrt(v)*z``.  Combining the two
    Gaussian pieces gives ``(m1*v + w0*(X_t - w1*X_1)*v1) / (v + w0^2*v1)``.
    """
    sig2 = float(beta.integral(t))
    sbar2 = float(beta.integral_to_end(t))
    tot = sig2 + sbar2
    w0, w1, v = sbar2 / tot, sig2 / tot, sig2 * sbar2 / tot
    m1, v1 = model.posterior_given_x1(x1)
    x_t = np.asarray(x_t, dtype=np.float64)
    denom = v + w0 * w0 * v1
    if denom == 0.0:
        return np.broadcast_to(m1, np.broadcast_shapes(np.shape(m1), x_t.shape)).copy()
    return (m1 * v + w0 * (x_t - w1 * np.asarray(x1, dtype=np.float64)) * v1) / denom


class GaussianAnalyticOracle:
    """Minimum-mean-squared-error predictor for :class:`GaussianPairModel` data."""

    def __init__(self, model: GaussianPairModel, s):
        self.model = model
        self.beta = _beta_of(s)

    def x0_mean(self, x_t, t: float, x1):
        return conditional_mean_x0(self.model, self.beta, t, x_t, x1)

    def predict(self, x_t: ImageTensor, n: int, t: float, y: Condition) -> ImageTensor:
        sigma = _sigma_at(self.beta, t)
        xt = as_array(x_t)
        m0 = self.x0_mean(xt, t, as_array(y.xN))
        return x_t.with_data((xt - m0) / sigma)


def gaussian_analytic_oracle(m: GaussianPairModel, s) -> GaussianAnalyticOracle:
    return GaussianAnalyticOracle(m, s)
