"""Generation loop: start at the corrupted image and walk the grid back to ``t_0``.

At loop index ``m`` (``N`` down to ``1``) the predictor is queried at the
current state ``X_m`` and time ``t_m`` to form ``x0_hat = X_m - sigma_m * eps``.
Then

* ``m == N``      -- draw ``X_{N-1}`` from the DDPM posterior (``X_N`` carries
  no information the generalized step could use, and its formula is singular);
* ``1 < m < N``   -- draw ``X_{m-1}`` from the generalized posterior, which also
  conditions on ``X_N``;
* ``m == 1``      -- return ``x0_hat`` as is.

The state is carried in float64 between steps; the predictor sees float32
ImageTensors.  Exactly one standard-normal array is drawn per stochastic step
and none on deterministic ones.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .posterior import (
    GnPolicy,
    ddpm_weights,
    gn_value,
    pg_coeffs,
    q_weights,
)
from .predictor import Condition, EpsilonPredictor, cheat_oracle
from .schedule import Schedule
from .streams import stream
from .tensor_io import ImageTensor, as_array, write_tensor

BRANCH_DDPM = "ddpm"
BRANCH_PG = "pg"
BRANCH_FINAL = "deterministic-final"
MUTATIONS = (None, "scale_b", "skip_draw")


class SamplerError(RuntimeError):
    pass


@dataclass(frozen=True)
class SamplerConfig:
    """Sampler settings.

    ``mutate`` injects a known fault for the verification suites:
    ``"scale_b"`` multiplies every generalized-step weight on ``X_{n+1}`` by 1.1,
    ``"skip_draw"`` drops the noise of the first generalized stochastic step.
    """

    N: int
    policy: GnPolicy = field(default_factory=GnPolicy)
    seed: int = 0
    record_trajectory: bool = False
    clamp_x0_hat: tuple[float, float] | None = None
    mutate: str | None = None

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise ValueError(f"N must be >= 1, got {self.N}")
        if self.mutate not in MUTATIONS:
            raise ValueError(f"unknown mutation {self.mutate!r}")


@dataclass
class StepRecord:
    step: int
    target: int
    branch: str
    a: float
    b: float
    c: float
    g2: float
    x0_hat: np.ndarray
    state: np.ndarray


@dataclass
class TrajectoryRecord:
    steps: list = field(default_factory=list)

    def __len__(self):
        return len(self.steps)

    def state(self, n: int) -> np.ndarray:
        """The generated ``X_n`` (``0 <= n < N``)."""
        for rec in self.steps:
            if rec.target == n:
                return rec.state
        raise KeyError(n)

    def manifest(self) -> str:
        lines = ["step\tbranch\ta\tb\tc\tg2"]
        for rec in self.steps:
            lines.append(f"{rec.step}\t{rec.branch}\t{rec.a:.17g}\t{rec.b:.17g}\t{rec.c:.17g}\t{rec.g2:.17g}")
        return "\n".join(lines) + "\n"


def write_trajectory(record: TrajectoryRecord, directory, like: ImageTensor) -> None:
    """Write ``x0_hat`` snapshots as tensor files plus a tab-separated manifest."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for rec in record.steps:
        write_tensor(like.with_data(rec.x0_hat), directory / f"x0hat_{rec.step:04d}.bin")
    (directory / "manifest.tsv").write_text(record.manifest())


def _check_finite(arr: np.ndarray, step: int, what: str):
    if not np.all(np.isfinite(arr)):
        raise SamplerError(f"non-finite {what} at step {step}")


def generate(
    xN: ImageTensor,
    eps: EpsilonPredictor,
    s: Schedule,
    cfg: SamplerConfig,
    y: Condition | None = None,
    rng: np.random.Generator | None = None,
):
    """Run the generation loop from ``xN``; returns ``(X_0, record_or_None)``."""
    if s.N != cfg.N:
        raise ValueError(f"schedule has N={s.N} but sampler config has N={cfg.N}")
    N = s.N
    y = y if y is not None else Condition(xN=xN)
    rng = rng if rng is not None else stream(cfg.seed)
    xN_arr = as_array(xN)
    x = xN_arr.copy()
    record = TrajectoryRecord() if cfg.record_trajectory else None
    skipped = False

    for m in range(N, 0, -1):
        eps_out = eps.predict(xN.with_data(x), m, float(s.t[m]), y)
        if eps_out.shape != xN.shape:
            raise SamplerError(f"predictor returned shape {eps_out.shape} at step {m}, expected {xN.shape}")
        x0_hat = x - s.sigma(m) * as_array(eps_out)
        if cfg.clamp_x0_hat is not None:
            x0_hat = np.clip(x0_hat, *cfg.clamp_x0_hat)
        _check_finite(x0_hat, m, "x0_hat")

        if m == 1:
            branch, a, b, c, g2 = BRANCH_FINAL, 1.0, 0.0, 0.0, 0.0
            x_new = x0_hat
        elif m == N:
            branch, c = BRANCH_DDPM, 0.0
            a, b, g2 = ddpm_weights(s, m - 1)
            x_new = a * x0_hat + b * x
        else:
            n = m - 1
            branch = BRANCH_PG
            g = gn_value(s, n, cfg.policy)
            co = pg_coeffs(s, n, g)
            a, b, c, g2 = co.a, co.b, co.c, co.g2
            if cfg.mutate == "scale_b":
                b *= 1.1
            x_new = a * x0_hat + b * x + c * xN_arr

        if g2 > 0:
            z = rng.standard_normal(x.shape)
            if cfg.mutate == "skip_draw" and branch == BRANCH_PG and not skipped:
                skipped = True
            else:
                x_new = x_new + math.sqrt(g2) * z
        _check_finite(x_new, m, "state")

        if record is not None:
            record.steps.append(StepRecord(m, m - 1, branch, a, b, c, g2, x0_hat.copy(), x_new.copy()))
        x = x_new

    return xN.with_data(x), record


def generate_markovian(xN: ImageTensor, eps: EpsilonPredictor, s: Schedule, seed: int, y=None):
    """Reference loop that only ever uses the DDPM posterior (no ``X_N`` in the update).

    Returns the final image and the list of float64 states ``[X_{N-1}, ..., X_0]``.
    """
    y = y if y is not None else Condition(xN=xN)
    rng = stream(seed)
    x = as_array(xN).copy()
    states = []
    for m in range(s.N, 0, -1):
        eps_out = eps.predict(xN.with_data(x), m, float(s.t[m]), y)
        x0_hat = x - s.sigma(m) * as_array(eps_out)
        if m == 1:
            x = x0_hat
        else:
            w0, w1, var = ddpm_weights(s, m - 1)
            x = w0 * x0_hat + w1 * x + math.sqrt(var) * rng.standard_normal(x.shape)
        states.append(x.copy())
    return xN.with_data(x), states


@dataclass
class MarginalRow:
    n: int
    mean: float
    expected_mean: float
    z_mean: float
    var: float
    expected_var: float
    z_var: float


@dataclass
class MarginalReport:
    M: int
    rows: list
    z_threshold: float = 4.0

    @property
    def max_abs_z(self) -> float:
        return max((max(abs(r.z_mean), abs(r.z_var)) for r in self.rows), default=0.0)

    @property
    def passed(self) -> bool:
        return all(abs(r.z_mean) <= self.z_threshold and abs(r.z_var) <= self.z_threshold for r in self.rows)


def marginal_check(x0: float, xN: float, s: Schedule, cfg: SamplerConfig, M: int) -> MarginalReport:
    """Compare the empirical law of every interior ``X_n`` with the bridge marginal.

    ``M`` scalar trajectories run side by side as the pixels of a ``1 x M``
    image under the exact (cheat) predictor.  The variance z-score uses the
    Gaussian standard error ``v * sqrt(2 / (M - 1))`` of a sample variance.
    """
    clean = ImageTensor(np.full((1, M), x0, dtype=np.float32))
    corrupted = ImageTensor(np.full((1, M), xN, dtype=np.float32))
    run_cfg = SamplerConfig(
        N=cfg.N, policy=cfg.policy, seed=cfg.seed, record_trajectory=True, mutate=cfg.mutate
    )
    _, record = generate(corrupted, cheat_oracle(clean, s), s, run_cfg)
    x0f, xNf = float(clean.data.flat[0]), float(corrupted.data.flat[0])
    rows = []
    for n in range(1, s.N):
        w0, w1, v = q_weights(s, n)
        mu = w0 * x0f + w1 * xNf
        xs = record.state(n).ravel()
        mean, var = float(xs.mean()), float(xs.var(ddof=1))
        z_mean = (mean - mu) / math.sqrt(v / M)
        z_var = (var - v) / (v * math.sqrt(2.0 / (M - 1)))
        rows.append(MarginalRow(n, mean, mu, z_mean, var, v, z_var))
    return MarginalReport(M=M, rows=rows)
