"""Acceptance criteria, one test per criterion, each printing a PASS/FAIL line."""

import math
import time

import numpy as np

from bvft import cli
from bvft.data import DataDistribution, check_assumption1, sample_dataset, weighted_norm
from bvft.functions import best_piecewise_approx, build_partition, discretize
from bvft.mdp import TabularMdp, bellman_optimality_update, greedy_policy, policy_return, \
    solve_q_star
from bvft.operators import build_m_phi, bvft_loss, empirical_projected_update, \
    exact_projected_update
from bvft.scenarios import fig3_index, fig3_visit_probability, make_fig2, make_fig3, \
    make_function_class, make_low_rank, make_on_policy_chain, make_random_exploratory
from bvft.tournament import BvftConfig, diagnose_fixed_points, run_bvft, sample_size_bound

from conftest import random_mdp, random_mu, random_partition


def supported_cells(phi, mu):
    return phi.group_sums(mu.weights)[phi.group_of] > 0


def unit_value_mdp(rng, S, A, gamma=0.9, sparse=False):
    """Random MDP with rewards in [0, 1 - gamma], so that v_max = 1."""
    m = random_mdp(rng, S, A, gamma=gamma, sparse=sparse, r_max=1 - gamma)
    return TabularMdp(m.transition, m.reward, gamma, m.initial_dist, 1 - gamma)


def mdp_with_duplicate_rows(rng, S, A, gamma=0.9):
    """Random MDP where some pairs copy another pair's reward and transition row."""
    P = rng.dirichlet(np.ones(S), size=(S, A)).reshape(S * A, S)
    R = rng.uniform(0, 1, size=S * A)
    for _ in range(rng.integers(1, S * A // 2 + 1)):
        i, j = rng.choice(S * A, size=2, replace=False)
        P[j], R[j] = P[i], R[i]
    return TabularMdp(P.reshape(S, A, S), R.reshape(S, A), gamma, rng.dirichlet(np.ones(S)), 1.0)


# ---------------------------------------------------------------------------

def test_c01_fig2_failure(criterion):
    t0 = time.perf_counter()
    b = make_fig2()
    q, qb = b.f_class[0], b.f_class[1]
    l1 = bvft_loss(q, qb, (b.mu, b.mdp), 0.05, None, b.mdp.v_max)
    l2 = bvft_loss(qb, q, (b.mu, b.mdp), 0.05, None, b.mdp.v_max)
    j_star = policy_return(b.mdp, greedy_policy(q))
    j_bad = policy_return(b.mdp, greedy_policy(qb))
    elapsed = time.perf_counter() - t0
    ok = (abs(l1) <= 1e-9 and abs(l2) <= 1e-9 and abs(j_star - 1.9) <= 1e-9
          and abs(j_bad - 1.0) <= 1e-9 and elapsed < 1.0)
    criterion(1, ok, f"losses ({l1:.2e}, {l2:.2e}), returns {j_star:.6f} vs {j_bad:.6f}, "
                     f"{elapsed:.2f}s")


def test_c02_fig2_diagnostic(criterion):
    t0 = time.perf_counter()
    b = make_fig2()
    d_full = sample_dataset(b.mdp, b.mu, 100_000, seed=0)
    full = diagnose_fixed_points(b.phi, d_full, eps_prime=0.1, grid_res=0.5, group_cap=5,
                                 gamma=0.9, v_max=b.mdp.v_max)
    d_cut = sample_dataset(b.mdp, b.variants["no_s3"], 100_000, seed=0)
    cut = diagnose_fixed_points(b.phi, d_cut, eps_prime=0.005, grid_res=0.1, group_cap=4,
                                gamma=0.9, v_max=b.mdp.v_max)
    elapsed = time.perf_counter() - t0
    ok = full.spread >= 3.0 and cut.spread <= 0.1 and elapsed < 30
    criterion(2, ok, f"full mu spread {full.spread:.4f} ({full.method}), without s3 "
                     f"{cut.spread:.4f} ({cut.method}), {elapsed:.1f}s")


def _fig3_tables(p):
    b = make_fig3(p, 8)
    t = np.arange(1, 9)
    q = 2 * p / (1 + 2 * p)
    visit = fig3_visit_probability(b)
    mu_s = np.array([b.mu.state_marginal[fig3_index(8)["s"][k]] for k in t])
    return t, q, visit, visit / mu_s


def test_c03a_fig3_visit_probability(criterion):
    worst = 0.0
    for p in (0.05, 0.1, 0.2):
        t, q, visit, _ = _fig3_tables(p)
        worst = max(worst, float(np.max(np.abs(visit - (1 - p) * q ** (t - 1)))))
    criterion("3a", worst <= 1e-10, f"max |P(s_t) - (1-p)(2p/(1+2p))^(t-1)| = {worst:.2e}")


def test_c03b_fig3_ratio_literal(criterion):
    # The literal closed form is (1/2)(2/(1+2p))^(t-1).  It contradicts the two
    # quantities it is built from: P(s_t) / mu(s_t) with P(s_t) = (1-p) q^(t-1)
    # and mu(s_t) = (1-p) p^(t-1) / 2 equals 2 (2/(1+2p))^(t-1), a factor 4 larger.
    worst = 0.0
    for p in (0.05, 0.1, 0.2):
        t, _, _, ratio = _fig3_tables(p)
        worst = max(worst, float(np.max(np.abs(ratio - 0.5 * (2 / (1 + 2 * p)) ** (t - 1)))))
    criterion("3b", worst <= 1e-10, f"max |ratio - (1/2)(2/(1+2p))^(t-1)| = {worst:.3g} "
                                    "(literal form; see the derived check 3c)")


def test_c03c_fig3_ratio_derived(criterion):
    worst = 0.0
    for p in (0.05, 0.1, 0.2):
        t, _, _, ratio = _fig3_tables(p)
        worst = max(worst, float(np.max(np.abs(ratio - 2 * (2 / (1 + 2 * p)) ** (t - 1)))))
    criterion("3c", worst <= 1e-10, f"max |ratio - 2(2/(1+2p))^(t-1)| = {worst:.2e} "
                                    "(ratio implied by P(s_t) and mu(s_t))")


def test_c04_low_rank(criterion):
    worst_s, all_a = 0.0, True
    for seed in range(100):
        b = make_low_rank(20, 2, 3, seed)
        rep = check_assumption1(b.mdp, b.mu)
        worst_s = max(worst_s, rep.c_s)
        all_a &= rep.c_a == 2.0
    criterion(4, worst_s <= 3 + 1e-9 and all_a,
              f"max C_S over 100 seeds {worst_s:.6f}, C_A == 2 in all: {all_a}")


def test_c05_aggregated_update(criterion):
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(500):
        S, A = int(rng.integers(2, 7)), int(rng.integers(1, 4))
        m = random_mdp(rng, S, A, gamma=float(rng.uniform(0.5, 0.99)), sparse=bool(rng.random() < 0.5))
        mu = random_mu(rng, S, A, full=bool(rng.random() < 0.5))
        phi = random_partition(rng, S, A, max_groups=int(rng.integers(1, S * A + 1)))
        f = rng.uniform(0, m.v_max, size=(S, A))
        lhs = exact_projected_update(phi, f, mu, m).values
        rhs = bellman_optimality_update(build_m_phi(m, mu, phi), f)
        sup = supported_cells(phi, mu)
        worst = max(worst, float(np.max(np.abs(lhs - rhs)[sup])))
    criterion(5, worst <= 1e-10, f"max deviation over 500 instances {worst:.2e}")


def test_c06_projected_operator_suite(criterion):
    t0 = time.perf_counter()
    rng = np.random.default_rng(77)
    contraction = residual = agg_conc = fixed_pt = 0.0
    fp_cases = 0
    for _ in range(500):
        S, A = int(rng.integers(2, 6)), int(rng.integers(1, 4))
        gamma = float(rng.uniform(0.5, 0.95))
        m = mdp_with_duplicate_rows(rng, S, A, gamma)
        mu = random_mu(rng, S, A)
        phi = random_partition(rng, S, A, max_groups=int(rng.integers(1, S * A + 1)))
        q = solve_q_star(m, tol=1e-12)
        f, g = rng.uniform(0, m.v_max, size=(2, S, A))
        tf = exact_projected_update(phi, f, mu, m).values
        tg = exact_projected_update(phi, g, mu, m).values
        contraction = max(contraction, np.max(np.abs(tf - tg)) - gamma * np.max(np.abs(f - g)))
        _, eps_phi = best_piecewise_approx(phi, q)
        tq = exact_projected_update(phi, q, mu, m).values
        residual = max(residual, np.max(np.abs(q - tq)) - 2 * eps_phi)
        agg_conc = max(agg_conc, check_assumption1(build_m_phi(m, mu, phi), mu).c_s
                     - check_assumption1(m, mu).c_s)
        # realizable aggregation: level sets of Q* (duplicated rows share a group)
        phi0 = build_partition(np.round(q, 10), np.round(q, 10))
        if best_piecewise_approx(phi0, q)[1] <= 1e-12:
            fp_cases += 1
            tol = 1e-10
            x = rng.uniform(0, m.v_max, size=(S, A))
            for _ in range(10_000):
                nx = exact_projected_update(phi0, x, mu, m).values
                step = np.max(np.abs(nx - x))
                x = nx
                if step <= tol:
                    break
            fixed_pt = max(fixed_pt, np.max(np.abs(x - q)) - tol / (1 - gamma))
    elapsed = time.perf_counter() - t0
    ok = (contraction <= 1e-9 and residual <= 1e-9 and agg_conc <= 1e-9 and fixed_pt <= 1e-9
          and fp_cases >= 400 and elapsed < 120)
    criterion(6, ok, f"max excess: contraction {contraction:.1e}, Q* residual {residual:.1e}, "
                     f"C_S(M_phi) {agg_conc:.1e}, fixed point {fixed_pt:.1e} ({fp_cases} cases); "
                     f"{elapsed:.1f}s")


def test_c07_concentration(criterion):
    eps, delta = 0.2, 0.1
    n6 = sample_size_bound("lemma6", v_max=1.0, phi_size=9, eps_tilde=eps, delta=delta)
    n7 = sample_size_bound("lemma7", v_max=1.0, phi_size=9, eps_1=eps, delta=delta)
    hits6 = hits7 = 0
    worst6 = worst7 = 0.0
    for seed in range(200):
        rng = np.random.default_rng(seed)
        S, A = int(rng.integers(3, 6)), int(rng.integers(2, 4))
        m = unit_value_mdp(rng, S, A)
        mu = random_mu(rng, S, A)
        phi = random_partition(rng, S, A, max_groups=9)
        f = rng.uniform(0, 1, size=(S, A))

        d = sample_dataset(m, mu, n6, seed)
        gap = weighted_norm(empirical_projected_update(phi, f, d, m.discount).values,
                            exact_projected_update(phi, f, mu, m).values, mu)
        worst6 = max(worst6, gap)
        hits6 += gap <= eps

        d = sample_dataset(m, mu, n7, seed + 10_000)
        gs = [phi.broadcast(v) for v in rng.uniform(0, 1, size=(200, phi.num_groups))]
        gs += [phi.broadcast(v) for v in rng.integers(0, 2, size=(50, phi.num_groups)).astype(float)]
        gs.append(empirical_projected_update(phi, f, d, m.discount).values)
        dev = max(abs(weighted_norm(f, g, d) - weighted_norm(f, g, mu)) for g in gs)
        worst7 = max(worst7, dev)
        hits7 += dev <= eps
    ok = hits6 >= 190 and hits7 >= 190
    criterion(7, ok, f"projected-update deviation <= {eps} in {hits6}/200 (n={n6}, worst "
                     f"{worst6:.4f}); norm deviation <= {eps} in {hits7}/200 (n={n7}, worst "
                     f"{worst7:.4f})")


def test_c08_error_and_loss_bounds(criterion):
    eps_t = eps_1 = 0.2
    delta, eps_dct = 0.1, 0.25
    hold7 = hold8 = 0
    for seed in range(50):
        rng = np.random.default_rng(seed)
        S, A, gamma = int(rng.integers(3, 7)), 2, 0.9
        m = unit_value_mdp(rng, S, A, gamma)
        mu = random_mu(rng, S, A)
        c = check_assumption1(m, mu).c
        q = solve_q_star(m, tol=1e-12)
        f0 = np.clip(q + rng.uniform(-1, 1, size=q.shape) * rng.uniform(0, 0.3), 0, 1)
        phi = build_partition(discretize(f0, eps_dct, 1.0), discretize(q, eps_dct, 1.0))
        n = sample_size_bound("prop4", v_max=1.0, phi_size=phi.num_groups, eps_tilde=eps_t,
                              eps_1=eps_1, delta=delta)
        d = sample_dataset(m, mu, n, seed)
        _, eps_phi = best_piecewise_approx(phi, q)
        loss = weighted_norm(f0, empirical_projected_update(phi, f0, d, gamma).values, d)
        rhs7 = (2 * eps_phi + math.sqrt(c) * (loss + eps_1 + eps_t)) / (1 - gamma)
        pi = greedy_policy(f0).at(0)
        nu = DataDistribution(m.initial_dist[:, None] * pi)
        ok7 = weighted_norm(f0, q, mu) <= rhs7 and weighted_norm(f0, q, nu) <= rhs7
        ok8 = loss <= (1 + gamma) * np.max(np.abs(f0 - q)) + 2 * eps_phi + eps_t + eps_1
        hold7 += ok7
        hold8 += ok8
    criterion(8, hold7 >= 45 and hold8 >= 45,
              f"error bound held in {hold7}/50, loss bound held in {hold8}/50")


def test_c09_end_to_end(criterion):
    t0 = time.perf_counter()
    picked, worst_regret, min_dist = 0, 0.0, math.inf
    v_max = None
    for seed in range(20):
        b = make_random_exploratory(20, 2, 0.9, 0.3, seed)
        v_max = b.mdp.v_max
        q = b.extra["q_star"]
        fc = make_function_class(q, 11, [0.5 * v_max] * 10, seed=seed + 1, v_max=v_max)
        min_dist = min(min_dist, min(np.max(np.abs(f - q)) for f in fc.members[1:]))
        d = sample_dataset(b.mdp, b.mu, 100_000, seed)
        rep = run_bvft(fc, d, BvftConfig(0.05 * v_max, seed=seed), gamma=0.9, oracle=b.mdp)
        picked += rep.selected_label == "q_star"
        worst_regret = max(worst_regret, rep.regret)
    elapsed = time.perf_counter() - t0
    ok = (picked >= 19 and worst_regret <= 0.05 * v_max and min_dist >= 0.5 * v_max - 1e-9
          and elapsed < 300)
    criterion(9, ok, f"selected Q* in {picked}/20, worst regret {worst_regret:.4f} "
                     f"(limit {0.05 * v_max:.2f}), min distractor distance {min_dist:.3f}, "
                     f"{elapsed:.1f}s")


def test_c10_on_policy(criterion):
    rng = np.random.default_rng(10)
    worst = 0.0
    for k in range(100):
        S = int(rng.integers(3, 10))
        b = make_on_policy_chain(S, seed=k)
        phi = random_partition(rng, S, 1, max_groups=int(rng.integers(1, S + 1)))
        P = build_m_phi(b.mdp, b.mu, phi).transition[:, 0, :]
        marg = b.mu.state_marginal
        worst = max(worst, float(np.max(np.abs(marg @ P - marg))))
    criterion(10, worst <= 1e-10, f"max |mu P_phi - mu| over 100 pairs {worst:.2e}")


def test_c11_determinism(criterion, tmp_path):
    # identical config includes identical paths, so both runs write to the same place
    def go():
        base = tmp_path
        assert cli.main(["scenario", "random", "--states", "8", "--candidates", "5",
                         "--seed", "4", "--out", str(base / "bundle")]) == 0
        assert cli.main(["run", str(base / "bundle"), "--n", "20000", "--seeds", "0", "1", "2",
                         "--eps-dct", "0.5", "--out", str(base / "run")]) == 0
        assert cli.main(["sweep", str(base / "bundle"), "--ns", "1000", "5000", "--seeds", "0", "1",
                         "--eps-dct", "0.5", "--out", str(base / "sweep")]) == 0
        assert cli.main(["diagnose", str(base / "bundle"), "--n", "5000", "--eps-dct", "2.0",
                         "--out", str(base / "diag")]) == 0
        files = ["run/summary.csv", "run/manifest.json", "run/seed2/report.json",
                 "sweep/sweep.csv", "diag/diagnostic.json"]
        return {f: (base / f).read_bytes() for f in files}

    a = go()
    b = go()
    same = [f for f in a if a[f] == b[f]]
    criterion(11, len(same) == len(a), f"{len(same)}/{len(a)} output files byte-identical")
