import json
import math

import numpy as np
import pytest

from stein_bounds.bounds import (
    WIRE_FIELDS,
    BoundReport,
    attach_empirical,
    be_iid,
    concentration_bound,
    dk_exchangeable,
    dtv_interpolation,
    dw_exchangeable,
    dw_indep,
    dw_zero_bias,
    report_to_json,
    reports_to_csv,
)
from stein_bounds.couplings import zero_bias_indep_sampler
from stein_bounds.distances import kolmogorov_exact, wasserstein_exact
from stein_bounds.distributions import iid_model, rademacher, standardize, sum_law
from stein_bounds.exchangeable import (
    PairStats,
    enumerate_pair_indep,
    lambda_indep,
    pair_stats,
)
from stein_bounds.harness import GAUSSIAN_FUNCTIONALS


class TestDwIndep:
    def test_hundred_rademacher_value(self, rademacher_model):
        assert abs(dw_indep(rademacher_model(100)).bound_value - 0.3) <= 1e-15

    def test_single_summand_vacuous_but_valid(self, rademacher_model):
        report = dw_indep(rademacher_model(1))
        assert report.bound_value == 3.0
        assert report.vacuous
        law = sum_law(rademacher_model(1))
        assert wasserstein_exact(law) <= report.bound_value

    def test_dominates_exact_distance(self, rademacher_model):
        model = rademacher_model(16)
        report = attach_empirical(dw_indep(model), wasserstein_exact(sum_law(model)), "exact")
        assert report.dominates is True

    def test_unnormalized_rejected(self):
        with pytest.raises(ValueError):
            dw_indep(iid_model(rademacher(1.0), 4))

    def test_exact_inverse_sqrt_scaling(self, rademacher_model):
        for n in (8, 16, 100):
            small = dw_indep(rademacher_model(n)).bound_value
            large = dw_indep(rademacher_model(4 * n)).bound_value
            assert abs(small / large - 2.0) <= 1e-12


class TestDwZeroBias:
    def test_sixteen_rademacher(self, rademacher_model):
        model = rademacher_model(16)
        sampler = lambda r, k: zero_bias_indep_sampler(model, r, k)
        report = dw_zero_bias(sampler, 50_000, np.random.default_rng(1), seed=1)
        # the construction gives E|W*-W| = 1/sqrt(16) here, so the bound is 1/2
        assert abs(report.bound_value - 0.5) <= 3.0 * report.std_err
        assert report.bound_value <= 3.0 / math.sqrt(16) + 3.0 * report.std_err
        assert report.reps == 50_000 and report.seed == 1

    def test_single_summand_exact_gap(self, rademacher_model):
        # E|U - X| = 1 for U ~ Unif[-1,1] independent of X = +-1, so bound = 2
        model = rademacher_model(1)
        sampler = lambda r, k: zero_bias_indep_sampler(model, r, k)
        report = dw_zero_bias(sampler, 100_000, np.random.default_rng(2))
        assert abs(report.bound_value - 2.0) <= 3.0 * report.std_err

    def test_identical_coupling_gives_zero(self):
        sampler = lambda r, k: (r.standard_normal(k),) * 2
        report = dw_zero_bias(sampler, 2_000, np.random.default_rng(3))
        assert report.bound_value == 0.0

    def test_budget_floor(self, rademacher_model):
        model = rademacher_model(2)
        with pytest.raises(ValueError):
            dw_zero_bias(lambda r, k: zero_bias_indep_sampler(model, r, k), 10,
                         np.random.default_rng(0))

    def test_consistency_with_third_moment_bound(self, rademacher_model):
        model = rademacher_model(16)
        sampler = lambda r, k: zero_bias_indep_sampler(model, r, k)
        mc = dw_zero_bias(sampler, 50_000, np.random.default_rng(4))
        assert mc.bound_value <= dw_indep(model).bound_value + 3.0 * mc.std_err


class TestBeIid:
    def test_rademacher_n100(self):
        assert be_iid(1.0, 1.0, 100).bound_value == 0.65

    def test_dominates_exact_at_64(self, rademacher_model):
        law = sum_law(rademacher_model(64))
        report = attach_empirical(be_iid(1.0, 1.0, 64), kolmogorov_exact(law), "exact")
        assert report.bound_value == 6.5 / 8.0
        assert report.dominates is True

    def test_two_point_laws_attain_moment_equality(self):
        # |X|^3 = sigma^3 a.s. for symmetric two-point laws: gamma = sigma^3 allowed
        report = be_iid(2.0, 8.0, 25)
        assert abs(report.bound_value - 6.5 * 8.0 / (8.0 * 5.0)) <= 1e-15

    def test_invalid_moments_rejected(self):
        with pytest.raises(ValueError):
            be_iid(0.0, 1.0, 10)
        with pytest.raises(ValueError):
            be_iid(1.0, 0.5, 10)   # gamma < sigma^3 violates Lyapunov
        with pytest.raises(ValueError):
            be_iid(1.0, 1.0, 0)

    def test_exact_inverse_sqrt_scaling(self):
        for n in (10, 100):
            assert abs(be_iid(1.0, 1.0, n).bound_value / be_iid(1.0, 1.0, 4 * n).bound_value
                       - 2.0) <= 1e-12


class TestConcentration:
    def test_sixteen_rademacher_edge(self, rademacher_model):
        report, info = concentration_bound(rademacher_model(16), -0.25, 0.25)
        assert abs(report.bound_value - 1.0) <= 1e-15
        assert report.vacuous
        assert report.dominates is True

    def test_hundred_rademacher(self, rademacher_model):
        report, info = concentration_bound(rademacher_model(100), -0.25, 0.25)
        assert abs(report.bound_value - 0.7) <= 1e-15
        assert report.empirical_distance <= report.bound_value
        assert abs(info["mean_abs_t"] - 100 * 100 ** -1.5 / 2.0) <= 1e-15

    def test_degenerate_interval(self, rademacher_model):
        model = rademacher_model(16)
        atom = 1.0 / math.sqrt(16)
        report, _ = concentration_bound(model, atom, atom)
        assert abs(report.bound_value - 2 * 16 * 16 ** -1.5) <= 1e-15
        assert report.empirical_distance <= report.bound_value

    def test_sweep_never_violated(self, rademacher_model):
        model = rademacher_model(20)
        edges = np.linspace(-2, 2, 10)
        for a in edges:
            for b in edges:
                if a <= b:
                    report, _ = concentration_bound(model, float(a), float(b))
                    assert report.dominates is True

    def test_invalid_interval(self, rademacher_model):
        with pytest.raises(ValueError):
            concentration_bound(rademacher_model(4), 1.0, 0.0)

    def test_non_iid_rejected(self):
        from stein_bounds.distributions import IndepSumModel
        comps = (rademacher(math.sqrt(0.5)), rademacher(math.sqrt(0.5)), rademacher(0.0001))
        model = IndepSumModel(components=comps)
        with pytest.raises(ValueError):
            concentration_bound(model, 0.0, 1.0)


class TestExchangeableBounds:
    def test_dw_formula_plugin(self):
        stats = PairStats(lam=0.1, mean_sq_diff=0.2, cond_var=0.04, abs_cubed=0.3, mode="exact")
        report = dw_exchangeable(stats)
        assert abs(report.bound_value - (math.sqrt(0.04) + 0.3) / 0.2) <= 1e-15

    def test_dk_formula_plugin(self):
        lam, cv, ac = 0.01, 0.0, 100 * 4e-3
        stats = PairStats(lam=lam, mean_sq_diff=2 * lam, cond_var=cv, abs_cubed=ac, mode="exact")
        report = dk_exchangeable(stats)
        expected = (2 * math.pi) ** -0.25 * math.sqrt(ac / lam)
        assert abs(report.bound_value - expected) <= 1e-12

    def test_cond_var_zero_reduces_to_third_moment_term(self, rademacher_model):
        n = 12
        stats = pair_stats(enumerate_pair_indep(rademacher_model(n)), lambda_indep(n))
        report = dw_exchangeable(stats)
        # cond_var vanishes for iid two-point summands: bound = (1/2 lam) E|D|^3
        expected = stats.abs_cubed / (2.0 * stats.lam)
        assert abs(report.bound_value - expected) <= 1e-9

    def test_degenerate_pair_flagged_vacuous(self):
        stats = PairStats(lam=0.5, mean_sq_diff=0.0, cond_var=0.0, abs_cubed=0.0, mode="exact")
        report = dk_exchangeable(stats)
        assert report.bound_value == 0.0
        assert report.vacuous

    def test_lambda_range_enforced(self):
        bad = PairStats(lam=1.5, mean_sq_diff=3.0, cond_var=0.0, abs_cubed=0.1, mode="exact")
        with pytest.raises(ValueError):
            dw_exchangeable(bad)
        with pytest.raises(ValueError):
            dk_exchangeable(bad)


class TestDtvInterpolation:
    def test_linear_functional_exact(self):
        fn = GAUSSIAN_FUNCTIONALS["linear"](8)
        report, diag = dtv_interpolation(fn.grad, 8, reps_outer=1000, reps_inner=128,
                                         quad_points=32, rng=np.random.default_rng(0))
        assert report.bound_value <= 1e-9
        assert abs(diag["mean_t"] - 1.0) <= 1e-9

    def test_quadratic_functional_mean_t(self):
        fn = GAUSSIAN_FUNCTIONALS["quadratic"](16)
        report, diag = dtv_interpolation(fn.grad, 16, reps_outer=4000, reps_inner=128,
                                         quad_points=16, rng=np.random.default_rng(1))
        assert abs(diag["mean_t"] - 1.0) <= 3.0 * diag["se_mean_t"]
        # Var T = 2/n for this functional
        assert abs(report.bound_value - 2.0 * math.sqrt(2.0 / 16.0)) <= 0.05

    def test_budget_validation(self):
        fn = GAUSSIAN_FUNCTIONALS["linear"](4)
        rng = np.random.default_rng(0)
        with pytest.raises(ValueError):
            dtv_interpolation(fn.grad, 4, reps_outer=1000, reps_inner=50, quad_points=32, rng=rng)
        with pytest.raises(ValueError):
            dtv_interpolation(fn.grad, 4, reps_outer=1000, reps_inner=128, quad_points=4, rng=rng)
        with pytest.raises(ValueError):
            dtv_interpolation(fn.grad, 4, reps_outer=10, reps_inner=128, quad_points=32, rng=rng)


class TestAttachAndSerialize:
    def test_mc_band_suppression(self):
        report = BoundReport(bound_name="x", bound_value=1.0, distance_kind="kolmogorov",
                             std_err=0.05)
        near = attach_empirical(report, 0.99, "monte_carlo", std_err=0.0)
        assert near.dominates is None
        below = attach_empirical(report, 0.5, "monte_carlo", std_err=0.0)
        assert below.dominates is True
        above = attach_empirical(report, 1.5, "monte_carlo", std_err=0.0)
        assert above.dominates is False

    def test_exact_mode_zero_tolerance(self):
        report = BoundReport(bound_name="x", bound_value=1.0, distance_kind="kolmogorov")
        assert attach_empirical(report, 1.0, "exact").dominates is True
        assert attach_empirical(report, 1.0 + 1e-15, "exact").dominates is False

    def test_wire_json_fields(self):
        report = BoundReport(bound_name="x", bound_value=0.5, distance_kind="wasserstein",
                             inputs_digest="abc")
        wire = report_to_json(report)
        assert tuple(wire.keys()) == WIRE_FIELDS
        json.dumps(wire)  # serializable

    def test_csv_header_and_rows(self):
        reports = [
            BoundReport(bound_name="a", bound_value=0.5, distance_kind="wasserstein"),
            attach_empirical(
                BoundReport(bound_name="b", bound_value=1.0, distance_kind="kolmogorov"),
                0.25, "exact"),
        ]
        text = reports_to_csv(reports)
        lines = text.strip().split("\n")
        assert lines[0] == ",".join(WIRE_FIELDS)
        assert lines[2].startswith("b,1,kolmogorov,0.25,,true,false,,")

    def test_negative_bound_rejected(self):
        with pytest.raises(ValueError):
            BoundReport(bound_name="x", bound_value=-0.1, distance_kind="kolmogorov")

    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError):
            BoundReport(bound_name="x", bound_value=0.1, distance_kind="hellinger")
