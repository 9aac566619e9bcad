import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stein_bounds.distributions import (
    FiniteDist,
    IndepSumModel,
    StateCapError,
    iid_model,
    make_finite,
    moments,
    rademacher,
    standardize,
    sum_law,
)


def small_laws():
    """Hypothesis strategy for random laws with 2..5 well-separated atoms."""
    return st.integers(2, 5).flatmap(
        lambda k: st.tuples(
            st.lists(st.floats(-3, 3, allow_nan=False), min_size=k, max_size=k,
                     unique_by=lambda v: round(v, 3)),
            st.lists(st.floats(0.05, 1.0), min_size=k, max_size=k),
        )
    ).map(lambda am: make_finite(np.array(am[0]), np.array(am[1])))


def centered(law: FiniteDist) -> FiniteDist:
    return make_finite(law.atoms - moments(law).mean, law.masses)


class TestMakeFinite:
    def test_rademacher(self):
        d = make_finite([-1, 1], [0.5, 0.5])
        mom = moments(d)
        assert mom.mean == 0.0
        assert mom.variance == 1.0

    def test_point_mass(self):
        d = make_finite([0], [1])
        assert d.support_size == 1
        assert moments(d) == moments(d)
        assert moments(d).variance == 0.0

    def test_duplicates_merge(self):
        d = make_finite([1, 1, 2], [0.25, 0.25, 0.5])
        assert np.allclose(d.atoms, [1, 2])
        assert np.allclose(d.masses, [0.5, 0.5])

    def test_unsorted_input_sorted(self):
        d = make_finite([2, -1, 0.5], [0.2, 0.3, 0.5])
        assert np.all(np.diff(d.atoms) > 0)

    def test_mass_normalized(self):
        d = make_finite([0, 1], [2.0, 6.0])
        assert np.allclose(d.masses, [0.25, 0.75])

    def test_empty_support_rejected(self):
        with pytest.raises(ValueError):
            make_finite([], [])

    def test_negative_mass_rejected(self):
        with pytest.raises(ValueError):
            make_finite([0, 1], [0.5, -0.1])

    def test_zero_total_mass_rejected(self):
        with pytest.raises(ValueError):
            make_finite([0, 1], [0.0, 0.0])

    @given(small_laws())
    @settings(max_examples=50, deadline=None)
    def test_construction_invariants(self, law):
        assert np.all(np.diff(law.atoms) > 0)
        assert np.all(law.masses >= 0) and np.all(law.masses <= 1)
        assert abs(math.fsum(law.masses.tolist()) - 1.0) <= 1e-12


class TestMoments:
    def test_rademacher(self):
        assert moments(rademacher(1.0)) == moments(rademacher(1.0))
        mom = moments(rademacher(1.0))
        assert (mom.mean, mom.variance, mom.abs_third) == (0.0, 1.0, 1.0)

    def test_point_mass_zero(self):
        mom = moments(make_finite([0], [1]))
        assert (mom.mean, mom.variance, mom.abs_third) == (0.0, 0.0, 0.0)

    def test_two_point_law_direct_arithmetic(self):
        # oracle: 0.2*(-2) + 0.8*0.5 = 0; 0.2*4 + 0.8*0.25 = 1; 0.2*8 + 0.8*0.125 = 1.7
        mom = moments(make_finite([-2, 0.5], [0.2, 0.8]))
        assert abs(mom.mean) <= 1e-15
        assert abs(mom.variance - 1.0) <= 1e-15
        assert abs(mom.abs_third - 1.7) <= 1e-15

    @given(small_laws())
    @settings(max_examples=50, deadline=None)
    def test_lyapunov_ordering_for_centered_laws(self, law):
        mom = moments(centered(law))
        assert mom.abs_third >= mom.variance ** 1.5 - 1e-12


class TestSumLaw:
    def test_two_rademacher_convolution(self):
        a = 1.0 / math.sqrt(2.0)
        law = sum_law(iid_model(rademacher(a), 2))
        assert np.allclose(law.atoms, [-2 * a, 0.0, 2 * a], atol=1e-15)
        assert np.allclose(law.masses, [0.25, 0.5, 0.25], atol=1e-15)

    def test_single_component_identity(self):
        base = make_finite([-1.5, 0.5, 1.0], [0.25, 0.5, 0.25])
        law = sum_law(IndepSumModel(components=(base,)))
        assert np.array_equal(law.atoms, base.atoms)
        assert np.array_equal(law.masses, base.masses)

    def test_ten_rademacher_variance(self):
        law = sum_law(iid_model(rademacher(1.0 / math.sqrt(10)), 10))
        assert abs(moments(law).variance - 1.0) <= 1e-12

    def test_variance_additivity(self, rng):
        comps = []
        for _ in range(4):
            k = int(rng.integers(2, 5))
            atoms = np.sort(rng.uniform(-2, 2, k))
            law = make_finite(atoms, rng.dirichlet(np.ones(k)))
            comps.append(centered(law))
        model = IndepSumModel(components=tuple(comps))
        total = math.fsum(moments(c).variance for c in comps)
        assert abs(moments(sum_law(model)).variance - total) <= 1e-10

    def test_order_independence(self, rng):
        comps = tuple(
            centered(make_finite(np.sort(rng.uniform(-2, 2, 3)), rng.dirichlet(np.ones(3))))
            for _ in range(4)
        )
        law_a = sum_law(IndepSumModel(components=comps))
        law_b = sum_law(IndepSumModel(components=comps[::-1]))
        assert np.allclose(law_a.atoms, law_b.atoms, atol=1e-12)
        assert np.allclose(law_a.masses, law_b.masses, atol=1e-12)

    def test_repeat_call_deterministic(self):
        model = iid_model(rademacher(0.5), 6)
        a = sum_law(model)
        b = sum_law(model)
        assert np.array_equal(a.atoms, b.atoms) and np.array_equal(a.masses, b.masses)

    def test_state_cap_enforced(self):
        atoms = np.linspace(-1, 1, 200)
        atoms = atoms - atoms.mean()
        big = make_finite(atoms, np.full(200, 1 / 200))
        with pytest.raises(StateCapError):
            sum_law(IndepSumModel(components=(big, big)), state_cap=10_000)


class TestStandardize:
    def test_rademacher_scaling(self):
        m = standardize(iid_model(rademacher(1.0), 9))
        assert m.normalized
        for comp in m.components:
            assert np.allclose(comp.atoms, [-1 / 3, 1 / 3], atol=1e-15)

    def test_idempotent(self, rng):
        comps = tuple(
            centered(make_finite(np.sort(rng.uniform(-2, 2, 3)), rng.dirichlet(np.ones(3))))
            for _ in range(3)
        )
        once = standardize(IndepSumModel(components=comps))
        twice = standardize(once)
        for a, b in zip(once.components, twice.components):
            assert np.allclose(a.atoms, b.atoms, atol=1e-12)

    def test_mixed_variances(self):
        comps = (rademacher(math.sqrt(0.5)), rademacher(math.sqrt(0.5)), rademacher(1.0))
        m = standardize(IndepSumModel(components=comps))
        assert abs(m.total_variance() - 1.0) <= 1e-10
        assert np.allclose(m.components[0].atoms * math.sqrt(2.0),
                           comps[0].atoms, atol=1e-12)

    def test_zero_variance_rejected(self):
        with pytest.raises(ValueError):
            standardize(IndepSumModel(components=(make_finite([0], [1]),)))

    def test_nonzero_mean_component_rejected(self):
        with pytest.raises(ValueError):
            IndepSumModel(components=(make_finite([0, 1], [0.5, 0.5]),))

    def test_normalized_flag_checked(self):
        with pytest.raises(ValueError):
            IndepSumModel(components=(rademacher(2.0),), normalized=True)


class TestCsvRoundTrip:
    def test_full_precision(self, tmp_path):
        law = make_finite([-1 / 3, 1 / 7, math.pi / 3], [0.2, 0.3, 0.5])
        path = tmp_path / "law.csv"
        law.to_csv(path)
        header = path.read_text().splitlines()[0]
        assert header == "atom,mass"
        back = FiniteDist.from_csv(path)
        assert np.array_equal(back.atoms, law.atoms)
        assert np.allclose(back.masses, law.masses, atol=1e-16, rtol=0)

    def test_bad_header_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b\n0,1\n")
        with pytest.raises(ValueError):
            FiniteDist.from_csv(path)


class TestSamplingAndScaling:
    def test_sample_matches_masses(self, rng):
        law = make_finite([-1, 0, 2], [0.25, 0.5, 0.25])
        draws = law.sample(rng, 200_000)
        freq = np.array([(draws == a).mean() for a in law.atoms])
        assert np.max(np.abs(freq - law.masses)) < 0.005

    def test_scaled_negative_flips_order(self):
        law = make_finite([-1, 2], [0.25, 0.75])
        flipped = law.scaled(-1.0)
        assert np.allclose(flipped.atoms, [-2, 1])
        assert np.allclose(flipped.masses, [0.75, 0.25])

    def test_prob_interval(self):
        law = make_finite([-1, 0, 1], [0.25, 0.5, 0.25])
        assert law.prob_interval(-1, 0) == 0.75
        assert law.prob_interval(0.5, 2) == 0.25
        assert law.prob_interval(0, 0) == 0.5
