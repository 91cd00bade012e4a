import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cqrnn import distributions as dist
from cqrnn.data import CensoredDataset
from cqrnn.exceptions import ConfigurationError, DataError, ParameterError
from cqrnn.synthgen import (
    LOGNORM8_BETA,
    ONE_DIM,
    TYPE1_SPECS,
    CensorOverlay,
    generate_type1,
    get_spec,
    make_type1_split,
    overlay_censoring,
    true_quantile,
)

DIMS = {"norm_linear": 1, "norm_nonlinear": 1, "exponential": 1, "weibull": 1, "lognorm": 1,
        "norm_uniform": 1, "norm_heavy": 4, "norm_med": 4, "norm_light": 4, "norm_same": 4,
        "lognorm_heavy": 8, "lognorm_med": 8, "lognorm_light": 8, "lognorm_same": 8}


def test_catalogue():
    assert set(TYPE1_SPECS) == set(DIMS)
    for name, d in DIMS.items():
        assert get_spec(name).dim == d
    assert set(ONE_DIM) == {n for n, d in DIMS.items() if d == 1}


def test_unknown_name():
    with pytest.raises(ConfigurationError):
        get_spec("bogus")


class TestTrueQuantile:
    def test_norm_linear_median(self):
        assert true_quantile("norm_linear", [[1.0]], 0.5)[0] == pytest.approx(12.0)

    def test_exponential_scale_reading(self):
        assert true_quantile("exponential", [[0.0]], 0.5)[0] == pytest.approx(4 * math.log(2), abs=1e-9)

    def test_weibull_scale_point(self):
        assert true_quantile("weibull", [[1.0]], 1 - math.exp(-1))[0] == pytest.approx(10.0)

    def test_lognorm_uses_x_squared_as_log_std(self):
        x = 1.5
        expected = math.exp((x - 1) ** 2 + x ** 2 * 1.2815515655446004)
        assert true_quantile("lognorm", [[x]], 0.9)[0] == pytest.approx(expected, rel=1e-9)

    def test_norm4_variance_uses_first_coordinate(self):
        x = np.array([[1.0, 0.3, 0.7, 1.9]])
        mean = 3 + 0.09 - 0.49 + 2 * math.sin(0.7 * 1.9) + 6
        q = true_quantile("norm_med", x, 0.8413447460685429)[0]
        assert q == pytest.approx(mean + 1.5, abs=1e-6)

    def test_lognorm8_divides_by_ten(self):
        x = np.full((1, 8), 0.5)
        assert true_quantile("lognorm_same", x, 0.5)[0] == pytest.approx(
            math.exp(0.5 * LOGNORM8_BETA.sum()) / 10.0, rel=1e-12)

    @pytest.mark.parametrize("name", sorted(TYPE1_SPECS))
    def test_empirical_coverage(self, name):
        spec = get_spec(name)
        x = np.full((1, spec.dim), 0.8)
        target = spec.target_fn(np.repeat(x, 100_000, axis=0))
        draws = dist.sample(target, np.random.default_rng(42))
        for tau in (0.1, 0.5, 0.9):
            frac = np.mean(draws < true_quantile(spec, x, tau)[0])
            assert abs(frac - tau) <= 0.01


class TestGenerate:
    def test_norm_linear_proportion(self):
        ds = generate_type1("norm_linear", 0)
        assert len(ds) == 500
        assert abs(ds.censored_fraction - 0.20) <= 0.04

    def test_norm_same_proportion(self):
        ds = generate_type1("norm_same", 0, 2000)
        assert abs(ds.censored_fraction - 0.50) <= 0.03

    @pytest.mark.parametrize("name", sorted(TYPE1_SPECS))
    def test_min_and_indicator_consistent(self, name):
        ds = generate_type1(name, 1, 300)
        assert ds.features.shape == (300, DIMS[name])
        assert np.all((ds.features > 0) & (ds.features < 2))
        obs = ds.indicators == 1
        assert np.array_equal(ds.labels[obs], ds.true_targets[obs])
        assert np.all(ds.labels[~obs] < ds.true_targets[~obs])

    def test_no_censoring_spec(self):
        spec = get_spec("norm_linear")
        from dataclasses import replace

        ds = generate_type1(replace(spec, censor_fn=None), 0, 200)
        assert ds.n_censored == 0

    def test_deterministic(self):
        a, b = generate_type1("weibull", 9), generate_type1("weibull", 9)
        assert np.array_equal(a.labels, b.labels) and np.array_equal(a.features, b.features)

    def test_split_sizes_and_independence(self):
        tr, te = make_type1_split("norm_linear", 3)
        assert (len(tr), len(te)) == (500, 1000)
        assert not np.array_equal(tr.features[:10], te.features[:10])

    def test_censoring_independent_of_target(self):
        spec = get_spec("norm_nonlinear")
        x = np.full((100_000, 1), 0.9)
        rng_t, rng_c = np.random.default_rng(1), np.random.default_rng(2)
        t = dist.sample(spec.target_fn(x), rng_t)
        c = dist.sample(spec.censoring(x), rng_c)
        r = np.corrcoef(t - t.mean(), c - c.mean())[0, 1]
        assert abs(r) < 0.02

    def test_same_as_target_censoring(self):
        spec = get_spec("lognorm_same")
        x = np.random.default_rng(0).uniform(0, 2, (4, 8))
        a, b = spec.target_fn(x), spec.censoring(x)
        assert a.family == b.family
        assert all(np.array_equal(a.params[k], b.params[k]) for k in a.params)


class TestOverlay:
    def _uncensored(self, labels):
        n = len(labels)
        return CensoredDataset(np.zeros((n, 1)), labels, np.ones(n, int))

    def test_multiple_of_max(self):
        assert CensorOverlay(multiple_of_max=1.5).resolve(np.array([2.0, 10.0])) == 15.0

    def test_exactly_one_rule(self):
        with pytest.raises(ParameterError):
            CensorOverlay()
        with pytest.raises(ParameterError):
            CensorOverlay(fixed=1.0, multiple_of_max=2.0)

    def test_non_positive_bound(self):
        with pytest.raises(ParameterError):
            CensorOverlay(fixed=0.0).resolve([1.0])

    def test_tiny_bound_censors_everything(self):
        ds = overlay_censoring(self._uncensored(np.linspace(1, 5, 50)), CensorOverlay(fixed=1e-9), 0)
        assert ds.n_censored == 50 and np.all(ds.labels <= 1e-9)

    def test_huge_bound_censors_nothing(self):
        ds = overlay_censoring(self._uncensored(np.linspace(1, 5, 50)), CensorOverlay(fixed=1e9), 0)
        assert ds.n_censored == 0

    def test_keeps_original_labels(self):
        y = np.linspace(1, 5, 40)
        ds = overlay_censoring(self._uncensored(y), CensorOverlay(multiple_of_max=1.0), 3)
        assert np.array_equal(ds.true_targets, y)
        assert np.all(ds.labels <= y)

    def test_rejects_censored_input(self):
        ds = CensoredDataset(np.zeros((2, 1)), [1.0, 2.0], [1, 0])
        with pytest.raises(DataError):
            overlay_censoring(ds, CensorOverlay(fixed=3.0), 0)

    @settings(max_examples=30, deadline=None)
    @given(c=st.floats(0.1, 50), seed=st.integers(0, 1000))
    def test_draws_bounded_by_c(self, c, seed):
        y = np.full(200, 1e6)
        ds = overlay_censoring(self._uncensored(y), CensorOverlay(fixed=c), seed)
        assert np.all((ds.labels >= 0) & (ds.labels <= c))
