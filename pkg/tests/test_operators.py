import numpy as np
import pytest
from hypothesis import given, settings

from bvft.data import DataDistribution, Dataset, check_assumption1, sample_dataset
from bvft.errors import ParameterError, ShapeError
from bvft.functions import Partition, best_piecewise_approx, build_partition, discretize
from bvft.mdp import TabularMdp, bellman_optimality_update, solve_q_star
from bvft.operators import (TransitionSource, build_m_phi, bvft_loss, empirical_projected_update,
                            exact_projected_update, projected_update)
from bvft.scenarios import FIG2_Q_BAD, FIG2_Q_STAR, _fig2_table, make_fig2, make_fig3, \
    make_on_policy_chain, fig3_index

from conftest import random_mdp, random_mu, random_partition, random_q, seeds


def supported(phi, mu):
    mass = phi.group_sums(mu.weights)
    return mass[phi.group_of] > 0


def random_instance(seed, S=5, A=2, full=False):
    rng = np.random.default_rng(seed)
    m = random_mdp(rng, S, A, sparse=True)
    mu = random_mu(rng, S, A, full=full)
    phi = random_partition(rng, S, A, max_groups=4)
    return rng, m, mu, phi


class TestEmpiricalUpdate:
    def test_single_sample(self):
        d = Dataset([0], [0], [1.0], [1], 2, 1)
        res = empirical_projected_update(Partition(np.zeros((2, 1), int)), np.zeros((2, 1)), d, 0.9)
        np.testing.assert_allclose(res.values, 1.0)
        assert res.empty_groups == []

    def test_groupby_oracle(self, rng):
        m = random_mdp(rng, 4, 3)
        d = sample_dataset(m, random_mu(rng, 4, 3), 2000, seed=3)
        phi = random_partition(rng, 4, 3, max_groups=4)
        f = random_q(rng, 4, 3, m.v_max)
        res = empirical_projected_update(phi, f, d, 0.9)
        target = d.r + 0.9 * f.max(axis=1)[d.s_next]
        g = phi.group_of[d.s, d.a]
        for k in range(phi.num_groups):
            sel = g == k
            cells = phi.group_of == k
            if sel.any():
                np.testing.assert_allclose(res.values[cells], target[sel].mean(), atol=1e-12)
                assert res.per_group_count[k] == sel.sum()
            else:
                np.testing.assert_array_equal(res.values[cells], f[cells])
                assert k in res.empty_groups

    def test_fig2_aggregated_group(self):
        b = make_fig2()
        d = sample_dataset(b.mdp, b.mu, 1_000_000, seed=0)
        res = empirical_projected_update(b.phi, _fig2_table(FIG2_Q_BAD), d, 0.9)
        assert res.values[0, 0] == pytest.approx(7.0, abs=0.05)

    def test_requires_dataset(self, rng):
        m = random_mdp(rng, 2, 2)
        with pytest.raises(ParameterError):
            empirical_projected_update(Partition.singletons(2, 2), np.zeros((2, 2)),
                                       (DataDistribution.uniform(2, 2), m), 0.9)

    def test_empty_dataset(self):
        d = Dataset(np.zeros(0, int), np.zeros(0, int), np.zeros(0), np.zeros(0, int), 2, 2)
        with pytest.raises(ParameterError):
            projected_update(Partition.singletons(2, 2), np.zeros((2, 2)), d, 0.9)

    def test_shape_check(self, rng):
        d = Dataset([0], [0], [1.0], [1], 2, 1)
        with pytest.raises(ShapeError):
            empirical_projected_update(Partition.singletons(2, 1), np.zeros((3, 1)), d, 0.9)


class TestExactUpdate:
    def test_singletons_full_support(self, rng):
        m = random_mdp(rng, 4, 2)
        f = random_q(rng, 4, 2, m.v_max)
        res = exact_projected_update(Partition.singletons(4, 2), f, random_mu(rng, 4, 2), m)
        np.testing.assert_allclose(res.values, bellman_optimality_update(m, f), atol=1e-12)

    def test_fig2_fixed_points(self):
        b = make_fig2()
        sup = supported(b.phi, b.mu)
        for roles in (FIG2_Q_STAR, FIG2_Q_BAD):
            f = _fig2_table(roles)
            res = exact_projected_update(b.phi, f, b.mu, b.mdp)
            np.testing.assert_allclose(res.values[sup], f[sup], atol=1e-12)

    def test_zero_mass_identity(self, rng):
        m = random_mdp(rng, 3, 2)
        w = np.zeros((3, 2))
        w[0] = 0.5
        f = random_q(rng, 3, 2, m.v_max)
        res = exact_projected_update(Partition.singletons(3, 2), f, DataDistribution(w), m)
        np.testing.assert_array_equal(res.values[1:], f[1:])
        assert len(res.empty_groups) == 4

    @given(seeds)
    @settings(max_examples=50, deadline=None)
    def test_matches_aggregated_update(self, seed):
        rng, m, mu, phi = random_instance(seed)
        f = random_q(rng, 5, 2, m.v_max)
        res = exact_projected_update(phi, f, mu, m)
        via_m_phi = bellman_optimality_update(build_m_phi(m, mu, phi), f)
        sup = supported(phi, mu)
        np.testing.assert_allclose(res.values[sup], via_m_phi[sup], atol=1e-10)

    @given(seeds)
    @settings(max_examples=50, deadline=None)
    def test_contraction(self, seed):
        rng, m, mu, phi = random_instance(seed)
        f, g = random_q(rng, 5, 2, m.v_max), random_q(rng, 5, 2, m.v_max)
        sup = supported(phi, mu)
        tf = exact_projected_update(phi, f, mu, m).values
        tg = exact_projected_update(phi, g, mu, m).values
        assert np.max(np.abs(tf - tg)[sup]) <= 0.9 * np.max(np.abs(f - g)) + 1e-9

    @given(seeds)
    @settings(max_examples=30, deadline=None)
    def test_unique_fixed_point(self, seed):
        rng = np.random.default_rng(seed)
        m = random_mdp(rng, 5, 2)
        mu = random_mu(rng, 5, 2)
        q = solve_q_star(m, tol=1e-12)
        # coarsest partition on which q is constant
        phi = build_partition(np.round(q, 9), np.round(q, 9))
        assert best_piecewise_approx(phi, q)[1] <= 1e-9
        f = random_q(rng, 5, 2, m.v_max)
        tol = 1e-10
        for _ in range(2000):
            nxt = exact_projected_update(phi, f, mu, m).values
            step = np.max(np.abs(nxt - f))
            f = nxt
            if step <= tol:
                break
        assert np.max(np.abs(f - q)) <= tol / (1 - 0.9) + 1e-8

    @given(seeds)
    @settings(max_examples=50, deadline=None)
    def test_q_star_residual(self, seed):
        rng, m, mu, phi = random_instance(seed, full=True)
        q = solve_q_star(m, tol=1e-12)
        _, eps_phi = best_piecewise_approx(phi, q)
        tq = exact_projected_update(phi, q, mu, m).values
        assert np.max(np.abs(q - tq)) <= 2 * eps_phi + 1e-8


class TestMPhi:
    def test_singletons(self, rng):
        m = random_mdp(rng, 4, 2)
        mp = build_m_phi(m, random_mu(rng, 4, 2), Partition.singletons(4, 2))
        np.testing.assert_allclose(mp.transition, m.transition, atol=1e-15)
        np.testing.assert_allclose(mp.reward, m.reward, atol=1e-15)

    def test_weighted_average_oracle(self, rng):
        m = random_mdp(rng, 4, 3)
        mu = random_mu(rng, 4, 3, full=False)
        phi = random_partition(rng, 4, 3, max_groups=3)
        mp = build_m_phi(m, mu, phi)
        for s in range(4):
            for a in range(3):
                cells = phi.group_of == phi.group_of[s, a]
                w = mu.weights[cells]
                if w.sum() == 0:
                    np.testing.assert_allclose(mp.transition[s, a], m.transition[s, a])
                    continue
                np.testing.assert_allclose(mp.transition[s, a],
                                           w @ m.transition[cells] / w.sum(), atol=1e-12)
                assert mp.reward[s, a] == pytest.approx(w @ m.reward[cells] / w.sum(), abs=1e-12)

    def test_fig3_redraw(self):
        p = 0.1
        b = make_fig3(p, 6)
        ix = fig3_index(6)
        w = b.mu.weights
        for t in range(2, 7):
            s, sp = ix["s"][t], ix["prime"][t]
            assert b.phi.group_of[s, 1] == b.phi.group_of[sp, 1]
            # landing on s_t' in the aggregated chain is re-drawn within the group by mu
            share = w[s, 1] / (w[s, 1] + w[sp, 1])
            assert share == pytest.approx(2 * p / (1 + 2 * p), abs=1e-12)

    @given(seeds)
    @settings(max_examples=50, deadline=None)
    def test_aggregation_keeps_concentrability(self, seed):
        rng, m, mu, phi = random_instance(seed, full=True)
        base = check_assumption1(m, mu).c_s
        assert check_assumption1(build_m_phi(m, mu, phi), mu).c_s <= base + 1e-9

    @given(seeds)
    @settings(max_examples=30, deadline=None)
    def test_on_policy_invariance(self, seed):
        rng = np.random.default_rng(seed)
        b = make_on_policy_chain(7, seed=int(rng.integers(1 << 31)))
        phi = random_partition(rng, 7, 1, max_groups=3)
        mp = build_m_phi(b.mdp, b.mu, phi)
        marg = b.mu.state_marginal
        np.testing.assert_allclose(marg @ mp.transition[:, 0, :], marg, atol=1e-10)


class TestLoss:
    def test_fig2_zero(self):
        b = make_fig2()
        q, qb = _fig2_table(FIG2_Q_STAR), _fig2_table(FIG2_Q_BAD)
        assert bvft_loss(q, qb, (b.mu, b.mdp), 0.05, None, 10.0) == pytest.approx(0.0, abs=1e-12)
        assert bvft_loss(qb, q, (b.mu, b.mdp), 0.05, None, 10.0) == pytest.approx(0.0, abs=1e-12)

    def test_q_star_self(self, rng):
        m = random_mdp(rng, 4, 2)
        q = solve_q_star(m, tol=1e-13)
        mu = random_mu(rng, 4, 2)
        assert bvft_loss(q, q, (mu, m), 1e-4, None, m.v_max) == pytest.approx(0.0, abs=1e-9)

    def test_empirical_close_to_exact(self, rng):
        m = random_mdp(rng, 4, 2)
        mu = random_mu(rng, 4, 2)
        f, g = random_q(rng, 4, 2, m.v_max), random_q(rng, 4, 2, m.v_max)
        d = sample_dataset(m, mu, 100_000, seed=11)
        exact = bvft_loss(f, g, (mu, m), 0.5, None, m.v_max)
        emp = bvft_loss(f, g, d, 0.5, 0.9, m.v_max)
        assert abs(emp - exact) <= 0.05

    def test_source_accepts_either_order(self, rng):
        m = random_mdp(rng, 3, 2)
        mu = random_mu(rng, 3, 2)
        assert TransitionSource.from_data((m, mu)).mode == "exact"
        with pytest.raises(ParameterError):
            TransitionSource.from_data((mu, m), gamma=0.5)
        with pytest.raises(ParameterError):
            TransitionSource.from_data("data")

    def test_only_phi_depends_on_f_prime(self, rng):
        m = random_mdp(rng, 4, 2)
        mu = random_mu(rng, 4, 2)
        f = random_q(rng, 4, 2, m.v_max)
        g = random_q(rng, 4, 2, m.v_max)
        # shifting g within its grid cells leaves the loss unchanged
        g2 = discretize(g, 0.5, m.v_max)
        assert bvft_loss(f, g, (mu, m), 0.5, None, m.v_max) == \
            bvft_loss(f, g2, (mu, m), 0.5, None, m.v_max)


def test_m_phi_is_tabular(rng):
    m = random_mdp(rng, 3, 2)
    assert isinstance(build_m_phi(m, random_mu(rng, 3, 2), Partition.singletons(3, 2)), TabularMdp)
