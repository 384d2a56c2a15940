import numpy as np
import pytest

from i3sb.diagnostics import (
    IDENTITIES,
    MarginalConfig,
    coeff_identity_suite,
    compare_conditional_means,
    default_marginal_configs,
    end_to_end_gaussian,
    marginal_suite,
)
from i3sb.posterior import GnPolicy
from i3sb.predictor import GaussianPairModel
from i3sb.sampler import SamplerConfig
from i3sb.schedule import make_schedule


def test_coeff_suite_passes_and_is_deterministic():
    rep = coeff_identity_suite(200, seed=7)
    assert rep.passed
    assert set(rep.max_violation) == set(IDENTITIES)
    assert max(rep.max_violation.values()) < 1e-9
    assert coeff_identity_suite(1, seed=3).to_csv() == coeff_identity_suite(1, seed=3).to_csv()
    assert "PASS" in rep.to_text()
    assert rep.to_csv().splitlines()[0] == "identity,max_violation,tolerance,ok"


@pytest.mark.parametrize("mutate", ["a", "b", "c", "b_additive"])
def test_coeff_suite_detects_mutations(mutate):
    rep = coeff_identity_suite(200, seed=7, mutate=mutate)
    assert not rep.passed
    assert 1e-9 < max(rep.max_violation.values()) < 1e-5


def test_coeff_suite_validation():
    with pytest.raises(ValueError):
        coeff_identity_suite(0, seed=1)
    with pytest.raises(ValueError):
        coeff_identity_suite(1, seed=1, mutate="zzz")


def test_default_marginal_configs_cover_required_grid():
    cfgs = default_marginal_configs()
    assert {c.N for c in cfgs} == {4, 20}
    assert {c.beta_kind for c in cfgs} == {"symmetric_triangular", "constant"}
    assert {c.policy.kind for c in cfgs} == {"i2sb_equivalent", "step_function"}
    assert {c.policy.r for c in cfgs if c.policy.kind == "step_function"} == {0.0, 0.2, 0.5, 1.0}


def test_marginal_suite_low_power_flag_and_determinism():
    cfgs = [MarginalConfig(N=4, policy=GnPolicy("i2sb_equivalent"))]
    rep = marginal_suite(cfgs, M=100, seed=1)
    assert rep.low_power and "low power" in rep.to_text()
    assert marginal_suite(cfgs, M=100, seed=1).to_csv() == rep.to_csv()
    assert not marginal_suite(cfgs, M=20_000, seed=1).low_power


def test_marginal_suite_skip_draw_fails():
    cfgs = [MarginalConfig(N=20, policy=GnPolicy("step_function", 0.2))]
    assert marginal_suite(cfgs, M=100_000, seed=3).passed
    assert not marginal_suite(cfgs, M=100_000, seed=3, mutate="skip_draw").passed


def test_end_to_end_noiseless_limit():
    m = GaussianPairModel(0.0, 1.0, 1e-10)
    M = 20_000
    rep = end_to_end_gaussian(m, make_schedule(20), SamplerConfig(20, GnPolicy("step_function", 0.2), seed=1), M)
    assert rep.rmse_to_x1 < 3 / np.sqrt(M)


def test_end_to_end_policies_agree():
    m = GaussianPairModel()
    s = make_schedule(20)
    a = end_to_end_gaussian(m, s, SamplerConfig(20, GnPolicy("i2sb_equivalent"), seed=11), 50_000, pair_seed=5)
    b = end_to_end_gaussian(m, s, SamplerConfig(20, GnPolicy("step_function", 0.2), seed=12), 50_000, pair_seed=5)
    assert a.passed and b.passed
    assert np.max(np.abs(compare_conditional_means(a, b))) <= 4
    assert sum(r.count for r in a.rows) == 50_000
    assert len(a.to_csv().splitlines()) == 11


def test_end_to_end_mutation_fails():
    rep = end_to_end_gaussian(GaussianPairModel(), make_schedule(20),
                              SamplerConfig(20, GnPolicy("step_function", 0.2), seed=1, mutate="scale_b"), 20_000)
    assert not rep.passed
