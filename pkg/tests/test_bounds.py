import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fockloc.bounds import (
    CtParams,
    combined_envelope_check,
    ct_block_norms,
    ct_constant,
    ct_verify,
    delta_k,
    dynamical_check,
    heat_kernel_check,
    perturbative_correlator_check,
    resolvent_expansion_check,
)
from fockloc.configspace import DomainError, enumerate_configs, envelope_matrix
from fockloc.disorder_mc import McEstimate, PreconditionError, realization_seed, sample_disorder
from fockloc.operators import ModelParams, build_hamiltonian, diagonal_operator, sector_indices
from fockloc.spectral import EnergyWindow, diagonalize, green_restricted

# Pinned regression reference (10 significant digits) for (g, mu_T, E) = (4, 0.1, 0).
C_T_REFERENCE = 0.7304738008


def field(L, i, root=31):
    return sample_disorder(L, "uniform", realization_seed(root, i))


class TestConstant:
    def test_pinned_value(self):
        assert ct_constant(CtParams(4.0, 0.1, 0.0)) == pytest.approx(C_T_REFERENCE, abs=5e-11)

    def test_independent_evaluation(self):
        mpmath = pytest.importorskip("mpmath")
        mpmath.mp.dps = 30
        e = mpmath.e ** mpmath.mpf("0.1")
        d2 = 4 * (4 - e)
        ref = (2 / d2) / (1 - 8 * e / d2)
        assert delta_k(CtParams(4.0, 0.1, 0.0), 2) == pytest.approx(float(d2), rel=1e-14)
        assert ct_constant(CtParams(4.0, 0.1, 0.0)) == pytest.approx(float(ref), rel=1e-14)
        assert f"{float(ref):.10f}" == f"{C_T_REFERENCE:.10f}"

    def test_condition_message(self):
        with pytest.raises(PreconditionError, match=r"4g - E > 12 e\^mu_T"):
            CtParams(2.0, 0.1, 0.0)
        with pytest.raises(PreconditionError):
            CtParams(4.0, 0.1, 3.0)

    def test_large_g_limit(self):
        assert ct_constant(CtParams(1e8, 0.1, 0.0)) < 1e-7

    @given(st.floats(3.5, 100.0), st.floats(0.01, 0.2), st.floats(0.0, 1.0))
    def test_exceeds_two_over_delta(self, g, mu_T, frac):
        E_max = 4 * g - 12 * math.exp(mu_T)
        if E_max <= 0:
            return
        p = CtParams(g, mu_T, frac * 0.99 * E_max)
        assert ct_constant(p) > 2 / delta_k(p, 2)
        for k in range(2, 6):
            assert delta_k(p, k) > 4 * k * math.exp(mu_T) - 1e-9

    def test_monotone_grid(self):
        mu_T = 0.1
        gs = np.linspace(3.5, 20, 30)
        for E in (0.0, 0.5, 1.0):
            vals = [ct_constant(CtParams(g, mu_T, E)) for g in gs if 4 * g - E > 12 * math.exp(mu_T)]
            assert all(b < a for a, b in zip(vals, vals[1:]))
        for g in (4.0, 6.0):
            Es = np.linspace(0, 4 * g - 12 * math.exp(mu_T) - 0.1, 20)
            vals = [ct_constant(CtParams(g, mu_T, E)) for E in Es]
            assert all(b > a for a, b in zip(vals, vals[1:]))


class TestCombesThomas:
    P = CtParams(4.0, 0.1, 0.0)

    def test_example_no_disorder(self):
        space = enumerate_configs(4, 3)
        rep = ct_verify(space, ModelParams(4.0, 0.0), field(4, 0), self.P)
        assert rep.ok and rep.ratio <= rep.C_T
        assert rep.C_T == pytest.approx(C_T_REFERENCE, abs=5e-11)

    def test_with_disorder(self):
        space = enumerate_configs(4, 3)
        for i in range(20):
            assert ct_verify(space, ModelParams(4.0, 5.0), field(4, i), self.P).ok

    def test_ratio_matches_pointwise_route(self):
        space = enumerate_configs(3, 3)
        w = field(3, 2)
        params = ModelParams(4.0, 1.0)
        rep = ct_verify(space, params, w, self.P)
        x, y = rep.pair
        d = sum(abs(a - b) for a, b in zip(x, y))
        G = green_restricted(space, params, w, 2, x, y, 0.0)
        assert rep.ratio == pytest.approx(abs(G) * math.exp(0.1 * d), rel=1e-10)
        # diagonal entries are the d = 0 case of the same bound
        for i in sector_indices(space, 2, "at_least")[:10]:
            x = space.config(int(i))
            assert abs(green_restricted(space, params, w, 2, x, x, 0.0)) <= rep.C_T

    def test_requirements(self):
        with pytest.raises(DomainError):
            ct_verify(enumerate_configs(3, 1), ModelParams(4.0), field(3, 0), self.P)
        with pytest.raises(DomainError):
            ct_verify(enumerate_configs(3, 2), ModelParams(5.0), field(3, 0), self.P)

    @pytest.mark.parametrize("lam", [0.0, 5.0])
    def test_block_norms(self, lam):
        space = enumerate_configs(4, 4)
        kmax = space.max_clusters
        for y in [space.config(0), space.config(space.size // 2), (-4, -2, 0, 2)]:
            blocks = ct_block_norms(space, ModelParams(4.0, lam), field(4, 1), self.P, y)
            assert blocks and all(b.ok for b in blocks)
            base = [b for b in blocks if b.k == b.j == b.l == kmax and b.bound != ct_constant(self.P)]
            assert base and all(b.bound == pytest.approx(1 / delta_k(self.P, kmax)) for b in base)
            assert any(b.l == 2 and b.bound == ct_constant(self.P) for b in blocks)


class TestResolventExpansion:
    def test_block_diagonal_both_zero(self):
        op = diagonal_operator(np.array([1.0, 2.0, 3.0, 4.0]), np.arange(4))
        rep = resolvent_expansion_check(op, np.array([0, 1]), np.array([2, 3]), 0, 3, 0.0)
        assert rep.lhs == 0.0 and rep.rhs == 0.0 and rep.ok

    @pytest.mark.parametrize("seed", range(10))
    def test_random_split(self, seed):
        rng = np.random.default_rng(seed)
        space = enumerate_configs(3, 3)
        H = build_hamiltonian(space, ModelParams(2.0, 3.0), field(3, seed))
        perm = rng.permutation(space.size)
        Q, P = np.sort(perm[:15]), np.sort(perm[15:])
        rep = resolvent_expansion_check(H, Q, P, int(Q[0]), int(P[-1]), 0.0)
        assert rep.ok

    @pytest.mark.parametrize("seed", range(10))
    def test_cluster_split(self, seed):
        space = enumerate_configs(3, 3)
        H = build_hamiltonian(space, ModelParams(4.0, 2.0), field(3, seed))
        P1 = space.clustered
        Q2 = np.flatnonzero(space.clusters >= 2)
        for x in P1:
            for y in Q2[::5]:
                assert resolvent_expansion_check(H, P1, Q2, int(x), int(y), 0.0).ok

    def test_validation(self):
        op = diagonal_operator(np.ones(3), np.arange(3))
        with pytest.raises(DomainError):
            resolvent_expansion_check(op, np.array([0]), np.array([1]), 0, 1, 0.0)
        with pytest.raises(DomainError):
            resolvent_expansion_check(op, np.array([0]), np.array([1, 2]), 1, 2, 0.0)


class TestCorrelatorChecks:
    G, MU_T = 10.0, 0.1
    WINDOW = EnergyWindow(0.0, 26.0)

    def test_zero_overlap_window(self):
        space = enumerate_configs(4, 3)
        sd = diagonalize(build_hamiltonian(space, ModelParams(self.G, 1.0), field(4, 0)))
        empty = EnergyWindow(0.0, 1.0)
        rep = perturbative_correlator_check(sd, space, self.G, self.MU_T, empty, int(space.size // 2), 3)
        assert rep.lhs == 0.0 and rep.rhs == 0.0 and rep.ok

    def test_random_instances(self):
        space = enumerate_configs(4, 3)
        xs = np.flatnonzero(space.clusters > 1)
        for i in range(20):
            sd = diagonalize(build_hamiltonian(space, ModelParams(self.G, 3.0), field(4, i)))
            for x in xs[:: max(1, len(xs) // 8)]:
                for y in (0, int(space.clustered[2]), space.size - 1):
                    assert perturbative_correlator_check(sd, space, self.G, self.MU_T, self.WINDOW, int(x), y).ok

    def test_rejects_clustered_x(self):
        space = enumerate_configs(3, 2)
        sd = diagonalize(build_hamiltonian(space, ModelParams(self.G), field(3, 0)))
        with pytest.raises(DomainError):
            perturbative_correlator_check(sd, space, self.G, self.MU_T, self.WINDOW, int(space.clustered[0]), 0)

    @pytest.mark.parametrize("seed", range(5))
    def test_heat_kernel_and_dynamics(self, seed):
        space = enumerate_configs(3, 3)
        sd = diagonalize(build_hamiltonian(space, ModelParams(2.0, 4.0), field(3, seed)))
        rng = np.random.default_rng(seed)
        for _ in range(10):
            a, b = np.sort(rng.uniform(0, 25, 2))
            win = EnergyWindow(float(a), float(b))
            i, j = (int(v) for v in rng.integers(space.size, size=2))
            for t in (0.5, 1.0, 2.0):
                assert heat_kernel_check(sd, i, win, t).ok
            assert dynamical_check(sd, i, j, win).ok
        # at t = 0 the dynamical amplitude equals |<d_x, P_I d_y>| <= Q
        rep = dynamical_check(sd, 0, 0, EnergyWindow(0, 100), times=[0.0])
        assert rep.lhs == pytest.approx(1.0) and rep.rhs == pytest.approx(1.0)


class TestCombinedEnvelope:
    @staticmethod
    def records(spaces, value):
        out = []
        for sp in spaces:
            for x in range(0, sp.size, 3):
                for y in range(0, sp.size, 4):
                    m = value(sp, x, y)
                    out.append((sp, x, y, McEstimate(m, 1e-3 * m, 50, 0.0, 1.0)))
        return out

    def test_weights_validated(self):
        with pytest.raises(DomainError):
            combined_envelope_check([], 0.5, 0.5, 0.5)
        with pytest.raises(DomainError):
            combined_envelope_check([], -0.5, 1.0, 0.5)

    def test_n_decay_form(self):
        spaces = [enumerate_configs(3, n) for n in (2, 3, 4)]
        recs = self.records(spaces, lambda sp, x, y: 0.8 * math.exp(-0.7 * sp.n))
        fit = combined_envelope_check(recs, 1.0, 0.0, 0.0)
        assert fit.c == pytest.approx(0.7, rel=1e-6) and fit.violations == 0

    def test_dbar_form(self):
        sp = enumerate_configs(3, 2)
        D = sp.dbar_matrix()
        recs = self.records([sp], lambda s, x, y: 2.0 * math.exp(-0.4 * D[x, y]))
        fit = combined_envelope_check(recs, 0.0, 1.0, 0.0)
        assert fit.mu == pytest.approx(0.4, rel=1e-6) and fit.violations == 0

    def test_F_form(self):
        sp = enumerate_configs(3, 2)
        F = envelope_matrix(sp, 0.9)
        recs = self.records([sp], lambda s, x, y: 0.5 * F[x, y])
        fit = combined_envelope_check(recs, 0.0, 0.0, 1.0)
        assert fit.mu == pytest.approx(0.9, rel=1e-5) and fit.violations == 0
        assert fit.C == pytest.approx(0.5, rel=1e-5)

    def test_violation_counted(self):
        sp = enumerate_configs(3, 2)
        D = sp.dbar_matrix()
        recs = self.records([sp], lambda s, x, y: math.exp(-0.4 * D[x, y]))
        s_, x, y, e = recs[-1]
        recs[-1] = (s_, x, y, McEstimate(50.0, 1e-3, 50, 0.0, 100.0))
        assert combined_envelope_check(recs, 0.0, 1.0, 0.0).violations >= 1
