"""Runnable verification suites: exact coefficient identities, Monte-Carlo marginal
checks of the sampler, and end-to-end restoration with the analytic oracle.

Each suite returns a report object with ``passed``, ``to_text()`` and ``to_csv()``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .posterior import (
    GnPolicy,
    coeffs_from_variances,
    ddpm_weights,
    g_bound,
    gn_value,
    i2sb_g,
    q_weights,
)
from .predictor import GaussianPairModel, gaussian_analytic_oracle
from .sampler import MarginalReport, SamplerConfig, generate, marginal_check
from .schedule import Schedule, make_schedule
from .streams import stream
from .tensor_io import ImageTensor

IDENTITY_TOL = 1e-9
MIN_TRAJECTORIES = 10_000
Z_THRESHOLD = 4.0
IDENTITIES = (
    "mean_composition",
    "variance_composition",
    "weights_sum_to_one",
    "i2sb_reduction",
    "ddpm_composition",
    "policy_feasibility",
)
COEFF_MUTATIONS = (None, "a", "b", "c", "b_additive")


def _csv(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def derive_seed(seed: int, index: int) -> int:
    """Integer seed for item ``index`` of a run (same splitting rule as :func:`i3sb.streams.stream`)."""
    return int(np.random.SeedSequence(int(seed), spawn_key=(int(index),)).generate_state(1, np.uint64)[0])


# --------------------------------------------------------------------------
# coefficient identities


@dataclass
class CoeffReport:
    trials: int
    seed: int
    max_violation: dict
    mutate: str | None = None

    @property
    def passed(self) -> bool:
        return all(v < IDENTITY_TOL for v in self.max_violation.values())

    def to_text(self) -> str:
        lines = [f"coefficient identities: {self.trials} trials, seed {self.seed}, mutation {self.mutate}"]
        for name in IDENTITIES:
            v = self.max_violation[name]
            lines.append(f"  {name:<22s} max violation {v:.3e}  {'ok' if v < IDENTITY_TOL else 'FAIL'}")
        lines.append("PASS" if self.passed else "FAIL")
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        return _csv(
            ["identity", "max_violation", "tolerance", "ok"],
            [[k, f"{v:.6e}", IDENTITY_TOL, v < IDENTITY_TOL] for k, v in self.max_violation.items()],
        )


def _random_schedule(rng: np.random.Generator) -> Schedule:
    kind = ("symmetric_triangular", "constant")[int(rng.integers(2))]
    beta_min = float(rng.uniform(0.0, 0.01))
    beta_max = float(rng.uniform(beta_min + 0.01, 1.0))
    spacing = ("quadratic", "uniform")[int(rng.integers(2))]
    N = int(rng.integers(2, 65))
    return make_schedule(N, kind, beta_min, beta_max, spacing)


def _mutated(a, b, c, mutate, size):
    if mutate == "a":
        a *= 1 + size
    elif mutate == "b":
        b *= 1 + size
    elif mutate == "c":
        c *= 1 + size
    elif mutate == "b_additive":
        b += size
    return a, b, c


def coeff_identity_suite(trials: int, seed: int, mutate: str | None = None, mutation_size: float = 1e-6) -> CoeffReport:
    """Check the closed-form step weights against the bridge marginals on random configurations.

    Per trial: random profile, grid (N in [2, 64]), interior step, admissible
    ``g`` and endpoint values.  ``mutate`` perturbs one computed weight
    (relative, or additive for ``"b_additive"``) to show the suite notices.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if mutate not in COEFF_MUTATIONS:
        raise ValueError(f"unknown mutation {mutate!r}")
    rng = stream(seed)
    worst = dict.fromkeys(IDENTITIES, 0.0)

    def bump(name, value):
        worst[name] = max(worst[name], abs(value))

    for _ in range(trials):
        s = _random_schedule(rng)
        N = s.N
        x0, xN = rng.uniform(-1, 1, 2)

        def mu(k):
            w0, w1, _ = q_weights(s, k)
            return w0 * x0 + w1 * xN

        def var(k):
            return q_weights(s, k)[2]

        # first generative step and any other step through the DDPM posterior
        for n in {N - 1, int(rng.integers(0, N))}:
            w0, w1, v = ddpm_weights(s, n)
            bump("ddpm_composition", w0 * x0 + w1 * mu(n + 1) - mu(n))
            bump("ddpm_composition", w1 * w1 * var(n + 1) + v - var(n))

        n_any = int(rng.integers(1, N))
        bound = g_bound(s, n_any)
        table = tuple(rng.uniform(0, 1, N - 1))
        for policy in (GnPolicy("i2sb_equivalent"), GnPolicy("step_function", float(rng.uniform())),
                       GnPolicy("custom_table", table=table)):
            bump("policy_feasibility", max(0.0, gn_value(s, n_any, policy) - bound))

        if N < 3:
            continue
        n = int(rng.integers(1, N - 1))
        sig2, sbar2 = float(s.sigma2[n]), float(s.sbar2[n])
        sig2n, sbar2n = float(s.sigma2[n + 1]), float(s.sbar2[n + 1])
        g = float(rng.uniform(0.0, g_bound(s, n)))
        a, b, c, _ = coeffs_from_variances(sig2, sbar2, sig2n, sbar2n, g * g)
        a, b, c = _mutated(a, b, c, mutate, mutation_size)
        bump("mean_composition", a * x0 + b * mu(n + 1) + c * xN - mu(n))
        bump("variance_composition", b * b * var(n + 1) + g * g - var(n))
        bump("weights_sum_to_one", a + b + c - 1.0)

        gi = i2sb_g(s, n)
        a, b, c, _ = coeffs_from_variances(sig2, sbar2, sig2n, sbar2n, gi * gi)
        a, b, c = _mutated(a, b, c, mutate, mutation_size)
        w0, w1, _ = ddpm_weights(s, n)
        bump("i2sb_reduction", max(abs(c), abs(a - w0), abs(b - w1)))
    return CoeffReport(trials=trials, seed=seed, max_violation=worst, mutate=mutate)


# --------------------------------------------------------------------------
# marginal preservation


@dataclass(frozen=True)
class MarginalConfig:
    N: int
    policy: GnPolicy
    beta_kind: str = "symmetric_triangular"
    beta_min: float = 1e-4
    beta_max: float = 0.15
    spacing: str = "quadratic"
    x0: float = -0.5
    xN: float = 0.75

    def label(self) -> str:
        pol = self.policy.kind if self.policy.kind != "step_function" else f"step_function(r={self.policy.r:g})"
        return f"{self.beta_kind}/N={self.N}/{pol}"

    def schedule(self) -> Schedule:
        return make_schedule(self.N, self.beta_kind, self.beta_min, self.beta_max, self.spacing)


def default_marginal_configs() -> list:
    """Both profiles x N in {4, 20} x {DDPM-equivalent, step function with r in {0, 0.2, 0.5, 1}}."""
    policies = [GnPolicy("i2sb_equivalent")] + [GnPolicy("step_function", r) for r in (0.0, 0.2, 0.5, 1.0)]
    out = []
    for kind in ("symmetric_triangular", "constant"):
        for N in (4, 20):
            for pol in policies:
                out.append(MarginalConfig(N=N, policy=pol, beta_kind=kind))
    return out


@dataclass
class MarginalSuiteReport:
    M: int
    seed: int
    results: list = field(default_factory=list)
    mutate: str | None = None

    @property
    def low_power(self) -> bool:
        return self.M < MIN_TRAJECTORIES

    @property
    def passed(self) -> bool:
        return all(rep.passed for _, rep in self.results)

    def to_text(self) -> str:
        lines = [f"marginal suite: M={self.M}, seed {self.seed}, mutation {self.mutate}"]
        if self.low_power:
            lines.append(f"WARNING: low power, M={self.M} < {MIN_TRAJECTORIES} trajectories")
        for cfg, rep in self.results:
            lines.append(f"  {cfg.label():<45s} max|z| {rep.max_abs_z:6.2f}  {'ok' if rep.passed else 'FAIL'}")
        lines.append("PASS" if self.passed else "FAIL")
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        rows = []
        for cfg, rep in self.results:
            for r in rep.rows:
                rows.append([cfg.label(), r.n, f"{r.mean:.8g}", f"{r.expected_mean:.8g}", f"{r.z_mean:.4f}",
                             f"{r.var:.8g}", f"{r.expected_var:.8g}", f"{r.z_var:.4f}"])
        return _csv(["config", "n", "mean", "expected_mean", "z_mean", "var", "expected_var", "z_var"], rows)


def marginal_suite(configs=None, M: int = 100_000, seed: int = 0, mutate: str | None = None) -> MarginalSuiteReport:
    configs = default_marginal_configs() if configs is None else configs
    report = MarginalSuiteReport(M=M, seed=seed, mutate=mutate)
    for i, mc in enumerate(configs):
        cfg = SamplerConfig(N=mc.N, policy=mc.policy, seed=derive_seed(seed, i), mutate=mutate)
        rep: MarginalReport = marginal_check(mc.x0, mc.xN, mc.schedule(), cfg, M)
        report.results.append((mc, rep))
    return report


# --------------------------------------------------------------------------
# end-to-end restoration with the analytic oracle


@dataclass
class BinRow:
    lo: float
    hi: float
    count: int
    gen_mean: float
    target_mean: float
    z_mean: float
    gen_var: float
    target_var: float


@dataclass
class EndToEndReport:
    N: int
    policy: GnPolicy
    M: int
    rows: list
    rmse_to_x1: float
    residual_mean: np.ndarray = field(repr=False, default=None)
    residual_se: np.ndarray = field(repr=False, default=None)

    @property
    def max_abs_z(self) -> float:
        return max(abs(r.z_mean) for r in self.rows)

    @property
    def passed(self) -> bool:
        return self.max_abs_z <= Z_THRESHOLD

    def to_text(self) -> str:
        lines = [f"end-to-end Gaussian: N={self.N}, policy {self.policy.kind} r={self.policy.r:g}, M={self.M}"]
        lines.append("  x1 bin                    count   gen mean  target mean   z     gen var  target var")
        for r in self.rows:
            lines.append(f"  [{r.lo:+8.3f}, {r.hi:+8.3f})  {r.count:7d}  {r.gen_mean:+9.5f}  {r.target_mean:+9.5f}"
                         f"  {r.z_mean:+6.2f}  {r.gen_var:8.5f}  {r.target_var:8.5f}")
        lines.append("PASS" if self.passed else "FAIL")
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        return _csv(
            ["N", "policy", "r", "bin_lo", "bin_hi", "count", "gen_mean", "target_mean", "z_mean", "gen_var", "target_var"],
            [[self.N, self.policy.kind, self.policy.r, f"{r.lo:.6g}", f"{r.hi:.6g}", r.count, f"{r.gen_mean:.8g}",
              f"{r.target_mean:.8g}", f"{r.z_mean:.4f}", f"{r.gen_var:.8g}", f"{r.target_var:.8g}"] for r in self.rows],
        )


def end_to_end_gaussian(m: GaussianPairModel, s: Schedule, cfg: SamplerConfig, M: int, bins: int = 10,
                        pair_seed: int | None = None) -> EndToEndReport:
    """Restore ``M`` scalar pairs with the analytic oracle and compare with ``X_0 | X_1``.

    Generated values are binned by ``x1`` quantiles; in each bin the mean of
    ``X0_gen - E[X_0 | x1]`` is tested against zero in standard-error units.
    Variances are reported, not tested.
    """
    pair_seed = cfg.seed if pair_seed is None else pair_seed
    x0, x1 = m.sample(M, stream(pair_seed, 0))
    corrupted = ImageTensor(x1.reshape(1, M))
    x1f = corrupted.data.astype(np.float64).ravel()
    out, _ = generate(corrupted, gaussian_analytic_oracle(m, s), s, cfg)
    gen = out.data.astype(np.float64).ravel()
    target, target_var = m.posterior_given_x1(x1f)
    resid = gen - target
    edges = np.quantile(x1f, np.linspace(0, 1, bins + 1))
    which = np.clip(np.searchsorted(edges, x1f, side="right") - 1, 0, bins - 1)
    rows, means, ses = [], [], []
    for k in range(bins):
        sel = which == k
        cnt = int(sel.sum())
        r = resid[sel]
        se = float(r.std(ddof=1) / math.sqrt(cnt)) if cnt > 1 else float("inf")
        z = float(r.mean() / se) if se > 0 else 0.0
        means.append(float(r.mean()))
        ses.append(se)
        rows.append(BinRow(float(edges[k]), float(edges[k + 1]), cnt, float(gen[sel].mean()),
                           float(target[sel].mean()), z, float(r.var(ddof=1)), float(target_var)))
    return EndToEndReport(N=s.N, policy=cfg.policy, M=M, rows=rows,
                          rmse_to_x1=float(np.sqrt(np.mean((gen - x1f) ** 2))),
                          residual_mean=np.array(means), residual_se=np.array(ses))


def compare_conditional_means(a: EndToEndReport, b: EndToEndReport) -> np.ndarray:
    """Per-bin z-scores of the difference between two runs over the same pairs."""
    return (a.residual_mean - b.residual_mean) / np.sqrt(a.residual_se**2 + b.residual_se**2)
