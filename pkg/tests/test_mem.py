import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import quadrature_log_marginal
from dmem import (
    InvalidArgument,
    ModelConfiguration,
    ModelSpaceTooLarge,
    PriorSpec,
    SourceSummary,
    count_evaluations,
    esss,
    fit_mem,
    log_group_marginal,
    log_model_marginal,
)
from dmem.mem import enumerate_configurations, indicator_matrix

# frozen from the quadrature oracle in conftest (n=20, variance 1 per source)
LOG_PAIR_SAME = 0.2323540132923506
LOG_PAIR_SHIFTED = -4.76764598670765
LOG_TRIPLE_SAME = 0.6085490628105911
W1_SAME = 0.557828564548283
VAR_SAME = 0.036054285886292926
W1_SHIFTED = 0.008428719397650539


def src(mean=0.0, n=20, var=1.0, id="s"):
    return SourceSummary(id, n, mean, var)


class TestSourceSummary:
    def test_precision(self):
        assert src(n=10, var=2.0).precision == 5.0

    @pytest.mark.parametrize("n,var", [(0, 1.0), (3, 0.0), (3, -1.0), (2.5, 1.0)])
    def test_rejects_invalid(self, n, var):
        with pytest.raises(InvalidArgument):
            SourceSummary("x", n, 0.0, var)

    def test_from_observations_uses_sample_variance(self):
        s = SourceSummary.from_observations("a", [0.0, 1.0])
        assert s.n == 2 and s.mean == 0.5
        assert s.sd == pytest.approx(math.sqrt(0.5))

    def test_single_observation_rejected(self):
        with pytest.raises(InvalidArgument):
            SourceSummary.from_observations("a", [1.0])

    def test_zero_variance_needs_floor(self):
        with pytest.raises(InvalidArgument, match="zero variance"):
            SourceSummary.from_observations("a", [2.0, 2.0, 2.0])
        s = SourceSummary.from_observations("a", [2.0, 2.0, 2.0], variance_floor=1e-8)
        assert s.variance == 1e-8


class TestLogGroupMarginal:
    def test_singleton_is_zero(self):
        assert log_group_marginal([src(3.7, n=4, var=0.3)]) == 0.0

    def test_pair_same_mean(self):
        assert log_group_marginal([src(), src()]) == pytest.approx(LOG_PAIR_SAME, abs=1e-12)

    def test_pair_shifted_mean(self):
        assert log_group_marginal([src(0.0), src(1.0)]) == pytest.approx(LOG_PAIR_SHIFTED, abs=1e-12)
        # exponent of the mean difference is exactly -5 here
        assert LOG_PAIR_SAME - log_group_marginal([src(0.0), src(1.0)]) == pytest.approx(5.0, abs=1e-12)

    def test_empty_group(self):
        with pytest.raises(InvalidArgument):
            log_group_marginal([])

    def test_matches_quadrature_unequal_sources(self):
        group = [src(0.3, 7, 0.8), src(-0.4, 31, 2.2), src(1.1, 12, 0.5)]
        assert log_group_marginal(group) == pytest.approx(quadrature_log_marginal(group), abs=1e-9)


class TestLogModelMarginal:
    def test_all_zero_config(self):
        supp = [src(5.0), src(-2.0, n=3)]
        assert log_model_marginal(src(), supp, (0, 0)) == 0.0

    def test_single_supplement(self):
        assert log_model_marginal(src(), [src()], (1,)) == pytest.approx(LOG_PAIR_SAME, abs=1e-12)

    def test_three_identical(self):
        value = log_model_marginal(src(), [src(), src()], ModelConfiguration((1, 1)))
        assert value == pytest.approx(LOG_TRIPLE_SAME, abs=1e-12)

    def test_length_mismatch(self):
        with pytest.raises(InvalidArgument):
            log_model_marginal(src(), [src()], (1, 0))


class TestEnumeration:
    def test_visits_each_configuration_once(self):
        configs = [c.indicators for c in enumerate_configurations(4)]
        assert len(configs) == 16 == len(set(configs))
        assert configs[0] == (0, 0, 0, 0)

    def test_matrix_agrees_with_configurations(self):
        mat = indicator_matrix(3)
        for k, cfg in enumerate(enumerate_configurations(3)):
            assert tuple(mat[k]) == cfg.indicators

    def test_model_priors_sum_to_one(self):
        fit = fit_mem(src(), [src(), src(0.4), src(-1)], PriorSpec((0.2, 0.5, 0.9)))
        assert np.exp(fit.log_priors).sum() == pytest.approx(1.0, abs=1e-14)


class TestFitMem:
    def test_no_supplements(self):
        fit = fit_mem(src(0.3), [])
        assert fit.posterior_mean == 0.3
        assert fit.posterior_variance == pytest.approx(0.05)
        assert fit.esss == 0.0

    def test_symmetric_pair(self):
        fit = fit_mem(src(), [src()])
        assert fit.weights[1] == pytest.approx(W1_SAME, abs=1e-12)
        assert fit.posterior_mean == 0.0
        assert fit.posterior_variance == pytest.approx(VAR_SAME, abs=1e-12)

    def test_shifted_pair(self):
        assert fit_mem(src(), [src(1.0)]).weights[1] == pytest.approx(W1_SHIFTED, abs=1e-12)

    def test_mixture_moments(self):
        fit = fit_mem(src(0.1), [src(0.5, 8), src(-0.2, 30, 2.0), src(0.05, 12, 0.7)])
        w, m, v = fit.weights, fit.component_means, fit.component_variances
        assert fit.posterior_mean == pytest.approx(np.sum(w * m), abs=1e-14)
        assert fit.posterior_variance == pytest.approx(np.sum(w * (v + m**2)) - fit.posterior_mean**2, abs=1e-12)
        assert m.min() <= fit.posterior_mean <= m.max()

    def test_guard(self):
        many = [src(id=str(i)) for i in range(21)]
        with pytest.raises(ModelSpaceTooLarge):
            fit_mem(src(), many)

    def test_guard_override(self):
        fit = fit_mem(src(), [src()] * 3, max_sources=2, allow_large=True)
        assert fit.n_models == 8

    def test_counts_models(self):
        with count_evaluations() as counter:
            fit_mem(src(), [src()] * 4)
        assert counter.value == 16

    def test_degenerate_prior(self):
        fit = fit_mem(src(), [src(3.0)], PriorSpec(1.0))
        assert fit.weights[1] == 1.0 and fit.weights[0] == 0.0

    def test_no_nan_under_extreme_separation(self):
        fit = fit_mem(src(n=10_000), [src(100.0, n=10_000), src(0.0, n=10_000)])
        for value in (fit.posterior_mean, fit.posterior_variance, fit.esss, *fit.weights):
            assert math.isfinite(value)

    def test_large_sample_analytic_weight(self):
        fit = fit_mem(src(n=10_000), [src(n=10_000)])
        r = math.sqrt(1e4 / (4 * math.pi))
        assert fit.weights[1] == pytest.approx(r / (1 + r), abs=1e-12)
        assert fit.weights[1] > 0.95
        far = fit_mem(src(n=10_000), [src(1.0, n=10_000)])
        assert far.weights[1] < 1e-6 and not math.isnan(far.weights[1])

    def test_bit_identical_repeat(self):
        supp = [src(0.1 * i, 10 + i, 0.5 + 0.1 * i) for i in range(10)]
        a, b = fit_mem(src(), supp), fit_mem(src(), supp)
        assert np.array_equal(a.weights, b.weights)
        assert a.posterior_mean == b.posterior_mean


class TestEsss:
    def test_degenerate(self):
        fit = fit_mem(src(), [])
        assert esss(fit, src(), []) == 0.0

    def test_symmetric_pair(self):
        fit = fit_mem(src(), [src()])
        assert esss(fit, src(), [src()]) == pytest.approx(W1_SAME, abs=1e-12)
        assert fit.esss == pytest.approx(W1_SAME, abs=1e-12)

    def test_full_weight_one_source(self):
        fit = fit_mem(src(), [src(50.0)], PriorSpec(1.0))
        assert esss(fit, src(), [src(50.0)]) == 1.0

    def test_matches_fit_and_bounded(self):
        p = src(0.2, 15, 1.3)
        supp = [src(0.1, 25, 0.9), src(0.3, 8, 1.1), src(-0.1, 40, 2.0)]
        fit = fit_mem(p, supp)
        value = esss(fit, p, supp)
        assert value == pytest.approx(fit.esss, abs=1e-12)
        assert 0 <= value <= sum(s.precision for s in supp) / p.precision


sources = st.builds(
    lambda n, m, sd: SourceSummary("h", n, m, sd * sd),
    st.integers(5, 50),
    st.floats(-3, 3),
    st.floats(0.5, 2.0),
)


@settings(max_examples=200, deadline=None)
@given(primary=sources, supp=st.lists(sources, min_size=0, max_size=6))
def test_weights_normalized(primary, supp):
    fit = fit_mem(primary, supp)
    assert abs(fit.weights.sum() - 1.0) <= 1e-12
    assert np.all((fit.weights >= 0) & (fit.weights <= 1))
    assert fit.posterior_variance > 0


@settings(max_examples=100, deadline=None)
@given(primary=sources, supp=st.lists(sources, min_size=1, max_size=5), delta=st.floats(-50, 50))
def test_translation_invariance(primary, supp, delta):
    def shift(s):
        return SourceSummary(s.id, s.n, s.mean + delta, s.variance)

    a = fit_mem(primary, supp)
    b = fit_mem(shift(primary), [shift(s) for s in supp])
    assert b.posterior_mean == pytest.approx(a.posterior_mean + delta, abs=1e-9)
    np.testing.assert_allclose(b.weights, a.weights, atol=1e-9)
    assert b.posterior_variance == pytest.approx(a.posterior_variance, rel=1e-8)
    assert b.esss == pytest.approx(a.esss, rel=1e-8, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(primary=sources, other=sources, gap=st.floats(0.0, 2.0), step=st.floats(0.05, 1.0))
def test_weight_decreases_with_separation(primary, other, gap, step):
    near = SourceSummary("h", other.n, primary.mean + gap, other.variance)
    far = SourceSummary("h", other.n, primary.mean + gap + step, other.variance)
    w_near = fit_mem(primary, [near]).weights[1]
    w_far = fit_mem(primary, [far]).weights[1]
    assert w_far < w_near or w_near == 0.0


def test_nested_counters_propagate():
    with count_evaluations() as outer:
        fit_mem(src(), [src()])
        with count_evaluations() as inner:
            fit_mem(src(), [src(), src()])
    assert (inner.value, outer.value) == (4, 6)
