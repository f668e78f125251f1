import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from numpy.testing import assert_array_equal
from scipy.integrate import quad

from fockloc.configspace import DomainError, enumerate_configs
from fockloc.disorder_mc import (
    CertificationError,
    McEstimate,
    McPlan,
    PreconditionError,
    certify_ground_state,
    check_window,
    diagonal_n_sweep,
    estimate_correlator_decay,
    envelope_violations,
    fit_log_linear,
    fractional_moment_probe,
    lambda_sweep,
    map_realizations,
    realization_seed,
    sample_disorder,
    sum_S1_S2,
    threshold_energy,
    window_correlator_average,
    window_distance_sweep,
)
from fockloc.operators import ModelParams
from fockloc.spectral import EnergyWindow, SpectralData


def plan(**kw):
    base = dict(L=2, n=2, params=ModelParams(10.0, 3.0), window=EnergyWindow(0.0, 20.0), realizations=20, seed_root=1)
    base.update(kw)
    return McPlan(**base)


class TestSampling:
    @pytest.mark.parametrize("dist", ["uniform", "beta22"])
    def test_support_and_determinism(self, dist):
        a = sample_disorder(10, dist, 123)
        b = sample_disorder(10, dist, 123)
        assert_array_equal(a.omega, b.omega)
        assert a.omega.min() >= 0 and a.omega.max() <= 1
        assert a.lo == -10 and a.hi == 10 and a.seed == 123 and a.distribution_id == dist
        assert not np.array_equal(a.omega, sample_disorder(10, dist, 124).omega)

    def test_omega_max(self):
        w = sample_disorder(50, "uniform", 5, omega_max=3.0)
        assert w.omega.max() <= 3.0 and w.omega.max() > 1.0

    @pytest.mark.parametrize("dist", ["uniform", "beta22"])
    def test_law_of_large_numbers(self, dist):
        w = sample_disorder(50_000, dist, 2024)
        assert len(w.omega) > 100_000
        assert abs(w.omega.mean() - 0.5) < 0.005

    def test_unknown_distribution(self):
        with pytest.raises(DomainError):
            sample_disorder(3, "cauchy", 0)

    def test_realization_seeds(self):
        seeds = [realization_seed(7, i) for i in range(1000)]
        assert len(set(seeds)) == 1000
        assert seeds == [realization_seed(7, i) for i in range(1000)]
        assert realization_seed(8, 0) != seeds[0]
        assert all(0 <= s < 2**64 for s in seeds)

    def test_map_realizations_order_independent(self):
        fn = lambda i: sample_disorder(3, "uniform", realization_seed(0, i)).omega.sum()
        assert map_realizations(fn, 30, workers=1) == map_realizations(fn, 30, workers=4)


class TestPlan:
    @pytest.mark.parametrize(
        "kw",
        [dict(realizations=0), dict(s=1.0), dict(s=0.0), dict(mu=0.2, mu_T=0.1), dict(n=6), dict(distribution="x")],
    )
    def test_validation(self, kw):
        with pytest.raises(DomainError):
            plan(**kw)

    def test_mapping_roundtrip(self):
        p = plan(s=0.3, mu=0.02)
        assert McPlan.from_mapping(p.to_mapping()) == p

    def test_mapping_rejects_unknown_and_missing(self):
        with pytest.raises(DomainError):
            McPlan.from_mapping({"L": 2, "n": 2, "g": 3.0, "lamda": 1.0})
        with pytest.raises(DomainError):
            McPlan.from_mapping({"L": 2, "n": 2})

    def test_threshold(self):
        assert threshold_energy(4.0, 0.1) == pytest.approx(16 - 12 * math.exp(0.1))
        check_window(plan())
        with pytest.raises(PreconditionError, match=r"E\(g, mu_T\)"):
            check_window(plan(window=EnergyWindow(0.0, 40.0)))
        with pytest.raises(PreconditionError, match=r"E\(g, mu_T\)"):
            check_window(plan(params=ModelParams(2.0, 1.0)))


class TestEstimates:
    def test_stderr_definition(self):
        x = np.array([1.0, 2.0, 4.0, 7.0])
        e = McEstimate.from_samples(x)
        assert e.mean == pytest.approx(3.5)
        assert e.stderr == pytest.approx(x.std(ddof=1) / 2)
        assert (e.count, e.lo, e.hi) == (4, 1.0, 7.0)

    @given(st.floats(0.1, 5.0), st.floats(0.01, 3.0))
    def test_fit_recovers_exact_exponential(self, C, rate):
        r = np.arange(6.0)
        est = [McEstimate(C * math.exp(-rate * x), 1e-3 * C * math.exp(-rate * x), 10, 0, 1) for x in r]
        fit = fit_log_linear(r, est)
        assert fit.rate == pytest.approx(rate, rel=1e-9)
        assert fit.C == pytest.approx(C, rel=1e-9)
        assert fit.significant
        assert envelope_violations(r, est, fit) == 0

    def test_fit_degenerate(self):
        fit = fit_log_linear([1.0, 1.0], [McEstimate(1.0, 0.1, 5, 0, 1)] * 2)
        assert math.isnan(fit.rate) and not fit.significant

    def test_violation_detected(self):
        r = np.arange(4.0)
        est = [McEstimate(math.exp(-x), 1e-3, 10, 0, 1) for x in r]
        est[2] = McEstimate(1.0, 1e-3, 10, 0, 1)
        fit = fit_log_linear(r, [e for k, e in enumerate(est) if k != 2] + [est[3]])
        assert envelope_violations(r, est, fit) >= 1

    def test_certification(self):
        sd = SpectralData(np.array([1.0, 5.0]), np.eye(2), np.arange(2))
        with pytest.raises(CertificationError, match="seed 9"):
            certify_ground_state(sd, 2.0, 1.0, 9)
        certify_ground_state(sd, 1.5, 1.0, 9)

    def test_stderr_honesty(self):
        x = (0,)
        base = McPlan(0, 1, ModelParams(2.0, 10.0), EnergyWindow(0, 1), realizations=4000, seed_root=3)
        half = McPlan(0, 1, ModelParams(2.0, 10.0), EnergyWindow(0, 1), realizations=2000, seed_root=4)
        big = fractional_moment_probe(base, x, x)
        small = fractional_moment_probe(half, x, x)
        assert small.stderr / big.stderr == pytest.approx(math.sqrt(2), rel=0.2)


class TestFractionalMoments:
    def test_scalar_closed_form(self):
        g, lam, s, E = 2.0, 10.0, 0.5, 1.0
        p = McPlan(0, 1, ModelParams(g, lam), EnergyWindow(0, 1), realizations=4000, seed_root=11, s=s)
        est = fractional_moment_probe(p, (0,), (0,), E=E)
        exact, _ = quad(lambda w: (2 * g + lam * w - E) ** -s, 0, 1)
        closed = ((2 * g + lam - E) ** (1 - s) - (2 * g - E) ** (1 - s)) / (lam * (1 - s))
        assert exact == pytest.approx(closed, rel=1e-10)
        assert abs(est.mean - exact) < 4 * est.stderr

    def test_conditioned_matches_plain(self):
        p = plan(L=1, realizations=300, seed_root=2, params=ModelParams(2.0, 20.0))
        x, y = (-1, 0), (0, 1)
        plain = fractional_moment_probe(p, x, y, E=2.0)
        cond = fractional_moment_probe(p, x, y, E=2.0, conditioning=(-1, 1), inner=8)
        assert abs(plain.mean - cond.mean) < 4 * math.hypot(plain.stderr, cond.stderr)

    def test_conditioning_sites_validated(self):
        with pytest.raises(DomainError):
            fractional_moment_probe(plan(L=1), (-1, 0), (0, 1), conditioning=(1, 1))

    def test_small_s_near_one(self):
        p = plan(L=1, s=0.01, realizations=50)
        est = fractional_moment_probe(p, (-1, 0), (-1, 0))
        assert est.mean == pytest.approx(1.0, abs=0.05)

    def test_lambda_sweep_sorted_and_slope(self):
        p = McPlan(1, 2, ModelParams(2.0), EnergyWindow(0, 1), realizations=200, seed_root=11)
        rows, slope = lambda_sweep(p, [100.0, 10.0, 31.6], (-1, 0), (-1, 0), E=4.0)
        assert [r[0] for r in rows] == [10.0, 31.6, 100.0]
        assert -0.8 < slope < -0.2


class TestCorrelatorDecay:
    def test_diagonal_bounded_and_reproducible(self):
        p = plan(L=2, n=2, realizations=10)
        a = estimate_correlator_decay(p)
        b = estimate_correlator_decay(p, workers=3)
        for pa, pb in zip(a.pairs, b.pairs):
            assert pa.estimate == pb.estimate
            if pa.x == pa.y:
                assert pa.estimate.mean <= 1 + 1e-12
                assert pa.exponent == 0
        assert len(a.pairs) == len(p.space.clustered) ** 2

    def test_precondition(self):
        with pytest.raises(PreconditionError):
            estimate_correlator_decay(plan(params=ModelParams(4.0, 1.0), window=EnergyWindow(0, 3.0)))

    def test_diagonal_decreases_in_n(self):
        p = plan(L=3, params=ModelParams(2.0, 20.0), window=EnergyWindow(0.0, 24.0), realizations=30, seed_root=7)
        rows, fit = diagonal_n_sweep(p, [2, 3])
        assert rows[1][1].mean < rows[0][1].mean

    def test_window_below_spectrum_is_zero(self):
        p = plan(window=EnergyWindow(0.0, 1.0), realizations=5)
        est = window_correlator_average(p, (-2, -1), (1, 2))
        assert est.mean == 0.0 and est.hi == 0.0
        with pytest.raises(DomainError):
            window_correlator_average(p, (-2, 0), (0, 2))

    def test_window_sweep_shapes(self):
        p = plan(L=3, n=2, realizations=10)
        rows, fit = window_distance_sweep(p, (-3, -3), [(-1, -1), (1, 1), (3, 3)])
        assert [d for d, _ in rows] == [2, 4, 6]
        assert all(e.count == 10 for _, e in rows)


class TestSupSums:
    def test_lower_bounds_and_ordering(self):
        p = plan(L=1, n=2, realizations=20, params=ModelParams(4.0, 5.0), s=0.5, mu=0.05)
        res = sum_S1_S2(p, E=0.0)
        single = fractional_moment_probe(p, (-1, 0), (-1, 0), E=0.0)
        assert res.S1.mean >= single.mean - 1e-12
        assert res.S2.mean >= res.S1.mean - 1e-12
        assert res.argmax1[1] in [(-1, 0), (0, 1)]

    def test_S1_decreases_in_lambda(self):
        base = plan(L=1, n=2, realizations=30, params=ModelParams(2.0, 10.0))
        lo = sum_S1_S2(base, E=0.0).S1.mean
        hi = sum_S1_S2(base.with_lambda(100.0), E=0.0).S1.mean
        assert hi < lo
