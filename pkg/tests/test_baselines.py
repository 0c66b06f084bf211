import numpy as np
import pytest
from hypothesis import given, settings

from bvft.baselines import run_fqi
from bvft.data import sample_dataset
from bvft.errors import ParameterError
from bvft.functions import Partition, build_partition
from bvft.mdp import solve_q_star
from bvft.scenarios import FIG2_Q_BAD, _fig2_table, make_fig2

from conftest import random_mdp, random_mu, random_partition, random_q, seeds


class TestFqi:
    def test_zero_iterations(self, rng):
        m = random_mdp(rng, 3, 2)
        f = random_q(rng, 3, 2, m.v_max)
        res = run_fqi(Partition.singletons(3, 2), (random_mu(rng, 3, 2), m), f, 0)
        np.testing.assert_array_equal(res.values, f)
        assert res.last_step == 0.0 and res.iterations == 0

    def test_value_iteration(self, rng):
        m = random_mdp(rng, 4, 2)
        res = run_fqi(Partition.singletons(4, 2), (random_mu(rng, 4, 2), m), np.zeros((4, 2)), 400)
        np.testing.assert_allclose(res.values, solve_q_star(m, tol=1e-12), atol=1e-9)

    def test_fig2_stays_at_bad_fixed_point(self):
        b = make_fig2()
        q_bad = _fig2_table(FIG2_Q_BAD)
        res = run_fqi(b.phi, (b.mu, b.mdp), q_bad, 50)
        np.testing.assert_allclose(res.values, q_bad, atol=1e-12)
        assert res.last_step <= 1e-12

    def test_negative_iterations(self, rng):
        m = random_mdp(rng, 2, 2)
        with pytest.raises(ParameterError):
            run_fqi(Partition.singletons(2, 2), (random_mu(rng, 2, 2), m), np.zeros((2, 2)), -1)

    def test_empirical_mode(self, rng):
        m = random_mdp(rng, 3, 2)
        d = sample_dataset(m, random_mu(rng, 3, 2), 200_000, seed=0)
        res = run_fqi(Partition.singletons(3, 2), d, np.zeros((3, 2)), 300, gamma=0.9)
        np.testing.assert_allclose(res.values, solve_q_star(m), atol=0.1)

    @given(seeds)
    @settings(max_examples=40, deadline=None)
    def test_step_contraction(self, seed):
        rng = np.random.default_rng(seed)
        m = random_mdp(rng, 5, 2)
        mu = random_mu(rng, 5, 2, full=False)
        phi = random_partition(rng, 5, 2, max_groups=4)
        res = run_fqi(phi, (mu, m), random_q(rng, 5, 2, m.v_max), 30)
        assert np.all(res.steps[1:] <= 0.9 * res.steps[:-1] + 1e-9)

    @given(seeds)
    @settings(max_examples=30, deadline=None)
    def test_consistent_when_realizable(self, seed):
        rng = np.random.default_rng(seed)
        m = random_mdp(rng, 4, 2)
        q = solve_q_star(m, tol=1e-13)
        phi = build_partition(np.round(q, 9), np.round(q, 9))
        tol = 1e-9
        res = run_fqi(phi, (random_mu(rng, 4, 2), m), random_q(rng, 4, 2, m.v_max), 400)
        assert res.last_step <= tol
        assert np.max(np.abs(res.values - q)) <= tol / (1 - 0.9) + 1e-9
