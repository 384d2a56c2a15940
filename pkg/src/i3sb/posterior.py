"""Closed-form Gaussian distributions of the bridge.

Indexing convention: ``ddpm_posterior(s, n, ...)`` and ``pg_coeffs(s, n, ...)``
describe the distribution of ``X_n`` given the state one step later,
``X_{n+1}``.  The sampler's loop variable is one larger: at loop index ``m``
it draws ``X_{m-1}`` using the step-``m-1`` quantities.

Inputs may be scalars, numpy arrays or :class:`ImageTensor`; when any image
argument is an ImageTensor the returned mean is one too (float32, same range).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .schedule import Schedule
from .tensor_io import ImageTensor, as_array

RADICAND_TOL = 1e-12
POLICY_KINDS = ("i2sb_equivalent", "step_function", "custom_table")

ArrayOrImage = Union[float, np.ndarray, ImageTensor]


class ConstraintError(ValueError):
    """``g`` exceeds the largest standard deviation that keeps the radicand non-negative."""


class DomainError(ValueError):
    pass


@dataclass(frozen=True)
class GaussianSpec:
    """Isotropic Gaussian ``N(mean, variance * I)``."""

    mean: ArrayOrImage
    variance: float

    def __post_init__(self):
        if not self.variance >= 0:
            raise ValueError(f"variance must be >= 0, got {self.variance}")


@dataclass(frozen=True)
class PosteriorCoeffs:
    """Weights of ``(x0_hat, X_{n+1}, X_N)`` and the variance of one generative step."""

    a: float
    b: float
    c: float
    g2: float
    step_index: int


@dataclass(frozen=True)
class GnPolicy:
    """How the per-step standard deviation ``g_n`` is chosen.

    ``custom_table`` holds multipliers ``k_n`` for ``n = 1 .. N-1`` stored in
    that order (``table[n - 1]``).
    """

    kind: str = "step_function"
    r: float = 0.2
    table: tuple | None = None

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise ValueError(f"unknown g_n policy {self.kind!r}")
        if not 0.0 <= self.r <= 1.0:
            raise ValueError(f"r must lie in [0, 1], got {self.r}")
        if self.kind == "custom_table":
            if self.table is None:
                raise ValueError("custom_table policy needs a table")
            table = tuple(float(k) for k in self.table)
            if any(not 0.0 <= k <= 1.0 for k in table):
                raise ValueError("custom_table multipliers must lie in [0, 1]")
            object.__setattr__(self, "table", table)

    def multiplier(self, n: int, N: int) -> float:
        if self.kind == "i2sb_equivalent":
            return 1.0
        if self.kind == "step_function":
            return 0.0 if n / N <= self.r else 1.0
        if len(self.table) != N - 1:
            raise ValueError(f"custom_table has {len(self.table)} entries, schedule needs {N - 1}")
        return self.table[n - 1]


def _wrap(value: np.ndarray, *like):
    for ref in like:
        if isinstance(ref, ImageTensor):
            return ref.with_data(value)
    if np.ndim(value) == 0:
        return float(value)
    return value


def _check_shapes(*xs):
    shapes = {np.shape(as_array(x)) for x in xs if np.ndim(as_array(x)) > 0}
    if len(shapes) > 1:
        raise ValueError(f"shape mismatch: {sorted(shapes)}")


def _check_step(s: Schedule, n: int, lo: int, hi: int):
    if not lo <= n <= hi:
        raise IndexError(f"step {n} outside [{lo}, {hi}] for N={s.N}")


def q_weights(s: Schedule, n: int) -> tuple[float, float, float]:
    """Weights of ``(X_0, X_N)`` and variance of the bridge marginal at ``t_n``."""
    _check_step(s, n, 0, s.N)
    sig2, sbar2 = float(s.sigma2[n]), float(s.sbar2[n])
    tot = sig2 + sbar2
    return sbar2 / tot, sig2 / tot, sig2 * sbar2 / tot


def q_marginal(s: Schedule, n: int, x0: ArrayOrImage, xN: ArrayOrImage) -> GaussianSpec:
    _check_shapes(x0, xN)
    if n == 0:
        return GaussianSpec(_wrap(as_array(x0), x0, xN), 0.0)
    if n == s.N:
        return GaussianSpec(_wrap(as_array(xN), x0, xN), 0.0)
    w0, w1, var = q_weights(s, n)
    mean = w0 * as_array(x0) + w1 * as_array(xN)
    return GaussianSpec(_wrap(mean, x0, xN), var)


def ddpm_weights(s: Schedule, n: int) -> tuple[float, float, float]:
    """Weights of ``(x0_hat, X_{n+1})`` and variance of the one-step-back posterior."""
    _check_step(s, n, 0, s.N - 1)
    sig2, a2 = float(s.sigma2[n]), float(s.alpha2[n])
    tot = sig2 + a2
    return a2 / tot, sig2 / tot, sig2 * a2 / tot


def ddpm_posterior(s: Schedule, n: int, x0_hat: ArrayOrImage, x_next: ArrayOrImage) -> GaussianSpec:
    _check_shapes(x0_hat, x_next)
    _check_step(s, n, 0, s.N - 1)
    if n == 0:
        return GaussianSpec(_wrap(as_array(x0_hat), x0_hat, x_next), 0.0)
    w0, w1, var = ddpm_weights(s, n)
    mean = w0 * as_array(x0_hat) + w1 * as_array(x_next)
    return GaussianSpec(_wrap(mean, x0_hat, x_next), var)


def i2sb_g(s: Schedule, n: int) -> float:
    """Standard deviation that makes the generalized posterior coincide with the DDPM one."""
    sig2, a2 = float(s.sigma2[n]), float(s.alpha2[n])
    return math.sqrt(sig2 * a2 / (sig2 + a2))


def g_bound(s: Schedule, n: int) -> float:
    """Largest admissible ``g_n``: the standard deviation of the bridge marginal at ``t_n``."""
    sig2, sbar2 = float(s.sigma2[n]), float(s.sbar2[n])
    return math.sqrt(sig2 * sbar2 / (sig2 + sbar2))


def gn_value(s: Schedule, n: int, policy: GnPolicy) -> float:
    _check_step(s, n, 1, s.N - 1)
    g = policy.multiplier(n, s.N) * i2sb_g(s, n)
    # alpha2[n] <= sbar2[n] makes this hold for every schedule; guard anyway
    if g * g > g_bound(s, n) ** 2 * (1 + 1e-12) + RADICAND_TOL:
        raise ConstraintError(f"policy value g={g} exceeds bound {g_bound(s, n)} at step {n}")
    return g


def coeffs_from_variances(
    sig2: float, sbar2: float, sig2_next: float, sbar2_next: float, g2: float
) -> tuple[float, float, float, float]:
    """Generalized-posterior weights from the four accumulated variances and ``g**2``.

    Returns ``(a, b, c, radicand)``.  The radicand is shared by all three
    weights and is clamped to zero when rounding pushes it just below.
    """
    radicand = sig2 * sbar2 - g2 * (sig2 + sbar2)
    if radicand < 0:
        if radicand < -RADICAND_TOL:
            raise ConstraintError(
                f"g^2={g2} violates the bound {sig2 * sbar2 / (sig2 + sbar2)} (radicand {radicand})"
            )
        radicand = 0.0
    b = math.sqrt(radicand) / math.sqrt(sig2_next * sbar2_next)
    tot, tot_next = sig2 + sbar2, sig2_next + sbar2_next
    a = sbar2 / tot - sbar2_next / tot_next * b
    c = sig2 / tot - sig2_next / tot_next * b
    return a, b, c, radicand


def pg_coeffs(s: Schedule, n: int, g: float) -> PosteriorCoeffs:
    if n == s.N - 1:
        raise DomainError(
            f"step {n} conditions on X_N itself (sbar2[N] = 0); use ddpm_posterior for the first step"
        )
    _check_step(s, n, 1, s.N - 2)
    if g < 0:
        raise ConstraintError("g must be non-negative")
    a, b, c, _ = coeffs_from_variances(
        float(s.sigma2[n]), float(s.sbar2[n]), float(s.sigma2[n + 1]), float(s.sbar2[n + 1]), g * g
    )
    return PosteriorCoeffs(a=a, b=b, c=c, g2=g * g, step_index=n)


def pg_posterior(coeffs: PosteriorCoeffs, x0_hat, x_next, xN) -> GaussianSpec:
    _check_shapes(x0_hat, x_next, xN)
    mean = coeffs.a * as_array(x0_hat) + coeffs.b * as_array(x_next) + coeffs.c * as_array(xN)
    return GaussianSpec(_wrap(mean, x0_hat, x_next, xN), coeffs.g2)


def sample_gaussian(spec: GaussianSpec, rng: np.random.Generator):
    """Draw ``mean + sqrt(variance) * z``; a zero-variance spec consumes no randomness."""
    if spec.variance == 0:
        return spec.mean
    mean = as_array(spec.mean)
    draw = mean + math.sqrt(spec.variance) * rng.standard_normal(mean.shape)
    return _wrap(draw, spec.mean)
