"""Concrete environments: two counterexamples, a low-rank family, invariant chains
and randomized exploratory instances, plus candidate-class generators.

Every constructor returns a :class:`ScenarioBundle` whose ``expected`` table
lists reference quantities with tolerances; :func:`self_check` recomputes them.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .data import DataDistribution, check_assumption1, check_assumption2, load_distribution, \
    save_distribution, weighted_norm
from .errors import ParameterError
from .functions import FunctionClass, Partition, build_partition, discretize, \
    load_function_class, load_partition, save_function_class, save_partition
from .mdp import Policy, TabularMdp, greedy_policy, load_mdp, occupancy_at_time, policy_return, \
    save_mdp, solve_q_star
from .operators import build_m_phi, bvft_loss

SCENARIO_HEADER = "bvft-scenario v1"


@dataclass
class Expected:
    """Reference quantity: ``relation`` is ``eq``, ``le`` or ``ge`` (actual vs value)."""

    name: str
    value: object
    tol: float
    provenance: str
    relation: str = "eq"

    def holds(self, actual) -> bool:
        a = np.asarray(actual, dtype=np.float64)
        v = np.asarray(self.value, dtype=np.float64)
        if self.relation == "le":
            return bool(np.all(a <= v + self.tol))
        if self.relation == "ge":
            return bool(np.all(a >= v - self.tol))
        inf_a, inf_v = np.isinf(a), np.isinf(v)
        if np.any(inf_a | inf_v):
            if not np.array_equal(inf_a, inf_v) or np.any(a[inf_a] != v[inf_v]):
                return False
            return bool(np.all(np.abs(a[~inf_a] - v[~inf_v]) <= self.tol))
        return bool(np.all(np.abs(a - v) <= self.tol))


@dataclass
class ScenarioBundle:
    name: str
    params: dict
    mdp: TabularMdp
    mu: DataDistribution
    f_class: Optional[FunctionClass] = None
    phi: Optional[Partition] = None
    expected: list = field(default_factory=list)
    variants: dict = field(default_factory=dict)   # alternative data distributions
    extra: dict = field(default_factory=dict)      # named tables (e.g. q_star)

    def expected_value(self, name: str):
        for e in self.expected:
            if e.name == name:
                return e.value
        raise KeyError(name)


# quantity name -> recompute(bundle), per scenario
_CHECKS: dict[str, dict[str, Callable]] = {}


def _check(scenario: str, name: str):
    def deco(fn):
        _CHECKS.setdefault(scenario, {})[name] = fn
        return fn
    return deco


def self_check(bundle: ScenarioBundle) -> list[tuple]:
    """Recompute every expected quantity: ``(name, expected, actual, ok)`` rows."""
    checks = _CHECKS.get(bundle.name, {})
    rows = []
    for e in bundle.expected:
        fn = checks.get(e.name)
        if fn is None:
            raise KeyError(f"no recomputation registered for {bundle.name}:{e.name}")
        actual = fn(bundle)
        rows.append((e.name, e.value, actual, e.holds(actual)))
    return rows


# ---------------------------------------------------------------------------
# two-branch counterexample with an unreachable but sampled state
# ---------------------------------------------------------------------------

FIG2_Q_STAR = (1.0, 1.9, 0.0, 1.0, 1.0, 0.0)
FIG2_Q_BAD = (7.0, 1.9, 0.0, 1.0, 7.0, 10.0)
FIG2_EPS_DCT = 0.05


def _fig2_table(roles: Sequence[float]) -> np.ndarray:
    """Expand role values (s0a1, s0a2, s1, s2, s3, s4) into a (5, 2) table."""
    r = roles
    return np.array([[r[0], r[1]], [r[2], r[2]], [r[3], r[3]], [r[4], r[4]], [r[5], r[5]]])


def make_fig2(s4_mass: float = 0.0) -> ScenarioBundle:
    """Five states, two actions, deterministic dynamics, start state s0.

    ``s0 --a1--> s1`` and ``s0 --a2--> s2`` (reward 1 each); s1 is a zero-reward
    sink, s2 a sink paying 0.1 per step; ``s3 --any--> s4`` with reward 1 and s4
    a zero-reward sink.  No policy reaches s3 or s4, yet ``mu`` samples s3.
    ``s4_mass`` optionally puts that much total probability on ``(s4, .)``.
    """
    if not 0.0 <= s4_mass < 1.0:
        raise ParameterError("s4_mass must lie in [0, 1)")
    S, A = 5, 2
    P = np.zeros((S, A, S))
    R = np.zeros((S, A))
    P[0, 0, 1] = P[0, 1, 2] = 1.0
    R[0, :] = 1.0
    P[1, :, 1] = 1.0
    P[2, :, 2] = 1.0
    R[2, :] = 0.1
    P[3, :, 4] = 1.0
    R[3, :] = 1.0
    P[4, :, 4] = 1.0
    d0 = np.array([1.0, 0, 0, 0, 0])
    mdp = TabularMdp(P, R, 0.9, d0, 1.0)

    w = np.ones((S, A))
    w[4] = 0.0
    w *= (1.0 - s4_mass) / w.sum()
    w[4] = s4_mass / A
    mu = DataDistribution(w)
    mu_no_s3 = DataDistribution.uniform(S, A, exclude=[(3, 0), (3, 1), (4, 0), (4, 1)])

    q_star = _fig2_table(FIG2_Q_STAR)
    q_bad = _fig2_table(FIG2_Q_BAD)
    f_class = FunctionClass((q_star, q_bad), ("q_star", "q_bad"), mdp.v_max)
    phi = build_partition(discretize(q_star, FIG2_EPS_DCT, mdp.v_max),
                          discretize(q_bad, FIG2_EPS_DCT, mdp.v_max))
    expected = [
        Expected("q_star", q_star, 1e-8, "reference"),
        Expected("return_greedy_q_star", 1.9, 1e-9, "reference"),
        Expected("return_greedy_q_bad", 1.0, 1e-9, "reference"),
        Expected("greedy_action_q_bad_s0", 0, 0.0, "reference"),
        Expected("num_groups", 5, 0.0, "derived"),
        # with mass m on s4 the s3 -> s4 transition gives ratio 1/m
        Expected("c_s", math.inf if s4_mass == 0 else max(1 / s4_mass, 4 / (1 - s4_mass)),
                 1e-9 if s4_mass else 0.0, "reference" if s4_mass == 0 else "derived"),
        Expected("assumption2_t10", 8.0 / (1.0 - s4_mass), 1e-9, "derived"),
        Expected("unreachable_mass_t10", 0.0, 0.0, "reference"),
        Expected("variant_exact_loss_q_bad_vs_q_star", math.sqrt(6.0), 1e-9, "derived"),
        Expected("variant_exact_loss_q_star_vs_q_bad", 0.0, 1e-9, "derived"),
    ]
    if s4_mass == 0.0:
        expected += [
            Expected("exact_loss_q_star_vs_q_bad", 0.0, 1e-9, "reference"),
            Expected("exact_loss_q_bad_vs_q_star", 0.0, 1e-9, "reference"),
            Expected("weighted_norm_q_star_q_bad", math.sqrt(13.5), 1e-12, "derived"),
        ]
    return ScenarioBundle("fig2", {"s4_mass": s4_mass}, mdp, mu, f_class, phi, expected,
                          variants={"no_s3": mu_no_s3}, extra={"q_star": q_star})


def _fig2_loss(b, i, j, mu):
    f = b.f_class.members
    return bvft_loss(f[i], f[j], (mu, b.mdp), FIG2_EPS_DCT, None, b.mdp.v_max)


_check("fig2", "q_star")(lambda b: solve_q_star(b.mdp, tol=1e-12))
_check("fig2", "return_greedy_q_star")(
    lambda b: policy_return(b.mdp, greedy_policy(b.f_class[0])))
_check("fig2", "return_greedy_q_bad")(
    lambda b: policy_return(b.mdp, greedy_policy(b.f_class[1])))
_check("fig2", "greedy_action_q_bad_s0")(lambda b: greedy_policy(b.f_class[1]).actions()[0])
_check("fig2", "num_groups")(lambda b: b.phi.num_groups)
_check("fig2", "exact_loss_q_star_vs_q_bad")(lambda b: _fig2_loss(b, 0, 1, b.mu))
_check("fig2", "exact_loss_q_bad_vs_q_star")(lambda b: _fig2_loss(b, 1, 0, b.mu))
_check("fig2", "c_s")(lambda b: check_assumption1(b.mdp, b.mu).c_s)
_check("fig2", "assumption2_t10")(lambda b: check_assumption2(b.mdp, b.mu, 10))
_check("fig2", "variant_exact_loss_q_bad_vs_q_star")(
    lambda b: _fig2_loss(b, 1, 0, b.variants["no_s3"]))
_check("fig2", "variant_exact_loss_q_star_vs_q_bad")(
    lambda b: _fig2_loss(b, 0, 1, b.variants["no_s3"]))
_check("fig2", "weighted_norm_q_star_q_bad")(
    lambda b: weighted_norm(b.f_class[0], b.f_class[1], b.mu))


@_check("fig2", "unreachable_mass_t10")
def _fig2_unreachable(b):
    from .mdp import max_time_t_weight
    w = np.zeros((5, 2))
    w[3:] = 1.0
    return max(max_time_t_weight(b.mdp, w, t) for t in range(11))


# ---------------------------------------------------------------------------
# aggregation leakage chain
# ---------------------------------------------------------------------------

def fig3_index(n_chain: int) -> dict:
    """State indices: ``s[t]`` for t = 1..N, ``prime[t]`` for t = 2..N, ``tail``, ``leaf``."""
    N = n_chain
    return {
        "s": {t: t - 1 for t in range(1, N + 1)},
        "prime": {t: N + t - 2 for t in range(2, N + 1)},
        "tail": 2 * N - 1,
        "leaf": 2 * N,
    }


def redrawn_occupancy(mdp_phi: TabularMdp, mu: DataDistribution, phi: Partition,
                      pi: Policy, t: int) -> np.ndarray:
    """Time-``t`` occupancy in the aggregated MDP, re-drawn within groups by ``mu``.

    Each group's mass is spread over its members in proportion to ``mu``;
    groups without ``mu`` mass keep their occupancy unchanged.
    """
    d = occupancy_at_time(mdp_phi, pi, t)
    mass = phi.group_sums(mu.weights)
    occ = phi.group_sums(d)
    share = np.divide(mu.weights, mass[phi.group_of], out=np.zeros_like(d),
                      where=mass[phi.group_of] > 0)
    return np.where(mass[phi.group_of] > 0, occ[phi.group_of] * share, d)


def make_fig3(p: float = 0.1, n_chain: int = 8) -> ScenarioBundle:
    """Two-armed contextual bandit whose aggregation leaks probability up a chain.

    Contexts ``s_1..s_N`` start with ``d0(s_t) = (1-p) p^(t-1)`` (the rest goes to
    ``s_{N+1}``).  ``R`` moves ``s_t`` to its sibling ``s_{t+1}'``, ``L`` to a
    shared absorbing leaf; siblings move to the leaf under either action, so no
    mass lingers on them.  ``mu`` mixes the time-0 and time-1 occupancies of
    the uniform policy; ``phi`` groups ``(s_t', a)`` with ``(s_t, a)``.
    """
    if not 0.0 < p < 0.5:
        raise ParameterError("p must lie in (0, 1/2)")
    if n_chain < 2:
        raise ParameterError("n_chain must be at least 2")
    N = n_chain
    ix = fig3_index(N)
    S, A = 2 * N + 1, 2
    L, Rt = 0, 1
    P = np.zeros((S, A, S))
    for t in range(1, N + 1):
        s = ix["s"][t]
        P[s, L, ix["leaf"]] = 1.0
        P[s, Rt, ix["prime"][t + 1] if t < N else ix["leaf"]] = 1.0
    for t in range(2, N + 1):
        P[ix["prime"][t], :, ix["leaf"]] = 1.0
    P[ix["tail"], :, ix["tail"]] = 1.0
    P[ix["leaf"], :, ix["leaf"]] = 1.0
    d0 = np.zeros(S)
    for t in range(1, N + 1):
        d0[ix["s"][t]] = (1 - p) * p ** (t - 1)
    d0[ix["tail"]] = 1.0 - d0.sum()
    mdp = TabularMdp(P, np.zeros((S, A)), 0.9, d0, 1.0)

    uniform = Policy.stochastic(np.full((S, A), 0.5))
    mu = DataDistribution(0.5 * occupancy_at_time(mdp, uniform, 0)
                          + 0.5 * occupancy_at_time(mdp, uniform, 1))
    groups = np.arange(S * A).reshape(S, A)
    for t in range(2, N + 1):
        groups[ix["prime"][t]] = groups[ix["s"][t]]
    phi = Partition(groups)

    q = 2 * p / (1 + 2 * p)
    ts = np.arange(1, N + 1)
    expected = [
        Expected("mu_state", (1 - p) * p ** (ts - 1) / 2, 1e-12, "reference"),
        Expected("redraw_probability", np.full(N - 1, q), 1e-12, "reference"),
        Expected("visit_probability", (1 - p) * q ** (ts - 1), 1e-10, "reference"),
        # the ratio follows from the two lines above; at t = 1 it is (1-p) / ((1-p)/2) = 2
        Expected("visit_ratio", 2.0 * (2 / (1 + 2 * p)) ** (ts - 1), 1e-10, "derived"),
    ]
    return ScenarioBundle("fig3", {"p": p, "n_chain": N}, mdp, mu, None, phi, expected)


def fig3_visit_probability(b: ScenarioBundle) -> np.ndarray:
    """Probability of occupying ``s_t`` at step ``t-1`` in the aggregated MDP under always-R."""
    N = b.params["n_chain"]
    ix = fig3_index(N)
    m_phi = build_m_phi(b.mdp, b.mu, b.phi)
    always_r = Policy.deterministic(np.ones(b.mdp.num_states, dtype=int), 2)
    out = np.empty(N)
    for t in range(1, N + 1):
        e = redrawn_occupancy(m_phi, b.mu, b.phi, always_r, t - 1)
        out[t - 1] = e[ix["s"][t]].sum()
    return out


def _fig3_mu_state(b):
    ix = fig3_index(b.params["n_chain"])
    return np.array([b.mu.state_marginal[ix["s"][t]] for t in sorted(ix["s"])])


def _redraw_share(b, t):
    """Share of ``mu`` mass that ``s_t`` holds within its group (action R)."""
    ix = fig3_index(b.params["n_chain"])
    w = b.mu.weights
    return w[ix["s"][t], 1] / (w[ix["s"][t], 1] + w[ix["prime"][t], 1])


_check("fig3", "mu_state")(_fig3_mu_state)
_check("fig3", "redraw_probability")(
    lambda b: np.array([_redraw_share(b, t) for t in range(2, b.params["n_chain"] + 1)]))
_check("fig3", "visit_probability")(fig3_visit_probability)
_check("fig3", "visit_ratio")(lambda b: fig3_visit_probability(b) / _fig3_mu_state(b))


# ---------------------------------------------------------------------------
# low-rank transitions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LowRankSpec:
    """``P = p1 @ p2`` with row-stochastic factors; ``d0 = d0_mix @ p2``."""

    p1: np.ndarray
    p2: np.ndarray
    d0_mix: np.ndarray

    def __post_init__(self):
        for name in ("p1", "p2"):
            m = np.asarray(getattr(self, name), dtype=np.float64)
            if m.ndim != 2 or np.any(m < 0) or np.any(np.abs(m.sum(axis=1) - 1) > 1e-9):
                raise ParameterError(f"{name} must be row-stochastic")
        if self.p1.shape[1] != self.p2.shape[0]:
            raise ParameterError("factor shapes do not chain")

    @property
    def d(self) -> int:
        return self.p2.shape[0]

    def transition(self, num_states: int, num_actions: int) -> np.ndarray:
        return (self.p1 @ self.p2).reshape(num_states, num_actions, num_states)


def make_low_rank(num_states: int, num_actions: int, d: int, seed: int,
                  gamma: float = 0.9, identity_p2: bool = False) -> ScenarioBundle:
    """Random rank-``d`` transitions; ``mu(s)`` averages ``p2``'s rows, ``mu(a|s)`` uniform."""
    if not 1 <= d <= num_states:
        raise ParameterError("d must lie in [1, num_states]")
    rng = np.random.default_rng(seed)
    S, A = num_states, num_actions
    p1 = rng.dirichlet(np.ones(d), size=S * A)
    if identity_p2:
        if d != S:
            raise ParameterError("identity_p2 needs d == num_states")
        p2 = np.eye(S)
    else:
        p2 = rng.dirichlet(np.ones(S), size=d)
    mix = rng.dirichlet(np.ones(d))
    spec = LowRankSpec(p1, p2, mix)
    d0 = mix @ p2
    mdp = TabularMdp(spec.transition(S, A), rng.uniform(0, 1, size=(S, A)), gamma,
                     d0 / d0.sum(), 1.0)
    mu_s = p2.mean(axis=0)
    mu = DataDistribution(np.repeat((mu_s / mu_s.sum())[:, None], A, axis=1) / A)
    expected = [
        Expected("c_s", float(d), 1e-9, "reference", "le"),
        Expected("c_a", float(A), 1e-12, "reference"),
        Expected("row_sums", np.ones(S * A), 1e-9, "trivial"),
    ]
    return ScenarioBundle("low-rank", {"num_states": S, "num_actions": A, "d": d, "seed": seed,
                                       "gamma": gamma, "identity_p2": identity_p2},
                          mdp, mu, expected=expected, extra={"p1": p1, "p2": p2})


_check("low-rank", "c_s")(lambda b: check_assumption1(b.mdp, b.mu).c_s)
_check("low-rank", "c_a")(lambda b: check_assumption1(b.mdp, b.mu).c_a)
_check("low-rank", "row_sums")(lambda b: (b.extra["p1"] @ b.extra["p2"]).sum(axis=1))


# ---------------------------------------------------------------------------
# single-action chains with an invariant data distribution
# ---------------------------------------------------------------------------

def stationary_distribution(P: np.ndarray) -> np.ndarray:
    """Left eigenvector of a row-stochastic matrix for eigenvalue 1, by a linear solve."""
    S = P.shape[0]
    lhs = np.vstack([P.T - np.eye(S), np.ones((1, S))])
    rhs = np.zeros(S + 1)
    rhs[-1] = 1.0
    pi, *_ = np.linalg.lstsq(lhs, rhs, rcond=None)
    return pi


def make_on_policy_chain(num_states: int, seed: int, identity: bool = False,
                         max_retries: int = 20) -> ScenarioBundle:
    """Random irreducible single-action chain with ``mu`` its stationary distribution.

    With ``identity=True`` the chain never moves and ``mu`` is uniform.
    """
    rng = np.random.default_rng(seed)
    S = num_states
    for _ in range(max_retries):
        if identity:
            P = np.eye(S)
            mu_s = np.full(S, 1.0 / S)
            break
        P = rng.dirichlet(np.full(S, 0.5), size=S)
        mu_s = stationary_distribution(P)
        # irreducible chains have a strictly positive stationary distribution
        if np.all(mu_s > 1e-12) and np.max(np.abs(mu_s @ P - mu_s)) <= 1e-12:
            mu_s = np.clip(mu_s, 0, None)
            mu_s /= mu_s.sum()
            break
    else:
        raise ParameterError("could not build an irreducible chain")
    mdp = TabularMdp(P[:, None, :], rng.uniform(0, 1, size=(S, 1)), 0.9, mu_s, 1.0)
    mu = DataDistribution(mu_s[:, None])
    expected = [Expected("invariance_residual", 0.0, 1e-10, "trivial")]
    if identity:
        expected.append(Expected("c_s", float(S), 1e-9, "reference"))
    return ScenarioBundle("on-policy", {"num_states": S, "seed": seed, "identity": identity},
                          mdp, mu, expected=expected)


_check("on-policy", "invariance_residual")(
    lambda b: float(np.max(np.abs(b.mu.state_marginal @ b.mdp.transition[:, 0, :]
                                  - b.mu.state_marginal))))
_check("on-policy", "c_s")(lambda b: check_assumption1(b.mdp, b.mu).c_s)


# ---------------------------------------------------------------------------
# randomized exploratory instances and candidate classes
# ---------------------------------------------------------------------------

def make_random_exploratory(num_states: int, num_actions: int, gamma: float, mix: float,
                            seed: int) -> ScenarioBundle:
    """Random MDP and ``mu``, each mixed with the uniform distribution at weight ``mix``."""
    if not 0.0 < mix <= 1.0:
        raise ParameterError("mix must lie in (0, 1]")
    rng = np.random.default_rng(seed)
    S, A = num_states, num_actions
    P = (1 - mix) * rng.dirichlet(np.ones(S), size=(S, A)) + mix / S
    R = rng.uniform(0, 1, size=(S, A))
    d0 = (1 - mix) * rng.dirichlet(np.ones(S)) + mix / S
    mdp = TabularMdp(P, R, gamma, d0, 1.0)
    w = (1 - mix) * rng.dirichlet(np.ones(S * A)) + mix / (S * A)
    mu = DataDistribution(w.reshape(S, A))
    q_star = solve_q_star(mdp, tol=1e-10)
    expected = [
        Expected("c_finite", 1.0, 0.0, "derived"),
        Expected("q_star_min", 0.0, 1e-9, "trivial", "ge"),
        Expected("q_star_max", mdp.v_max, 1e-9, "trivial", "le"),
    ]
    return ScenarioBundle("random", {"num_states": S, "num_actions": A, "gamma": gamma,
                                     "mix": mix, "seed": seed},
                          mdp, mu, expected=expected, extra={"q_star": q_star})


_check("random", "c_finite")(lambda b: float(check_assumption1(b.mdp, b.mu).finite))
_check("random", "q_star_min")(lambda b: float(b.extra["q_star"].min()))
_check("random", "q_star_max")(lambda b: float(b.extra["q_star"].max()))


def make_function_class(q_star, count: int, perturbations: Sequence[float], seed: int,
                        v_max: float, eps_f: float = 0.0) -> FunctionClass:
    """``q_star`` (or an ``eps_f`` perturbation of it) followed by distractors.

    Distractor ``i`` adds uniform noise of magnitude ``m_i`` to every entry and
    pushes one random entry by the full ``m_i`` towards the side with more
    headroom, then clips to ``[0, v_max]``; for ``m_i <= v_max`` its sup-distance
    to ``q_star`` is therefore at least ``m_i / 2``.
    """
    if count < 1:
        raise ParameterError("count must be at least 1")
    q_star = np.asarray(q_star, dtype=np.float64)
    rng = np.random.default_rng(seed)
    mags = list(perturbations)
    if len(mags) < count - 1:
        raise ParameterError("need one perturbation magnitude per distractor")

    def perturb(m):
        f = q_star + m * rng.uniform(-1, 1, size=q_star.shape)
        idx = np.unravel_index(rng.integers(q_star.size), q_star.shape)
        up = v_max - q_star[idx] >= q_star[idx]
        f[idx] = q_star[idx] + (m if up else -m)
        return np.clip(f, 0.0, v_max)

    members = [q_star.copy() if eps_f == 0 else perturb(eps_f)]
    labels = ["q_star" if eps_f == 0 else f"q_star~{eps_f:g}"]
    for i in range(count - 1):
        members.append(perturb(mags[i]))
        labels.append(f"d{i + 1}:m={mags[i]:g}")
    return FunctionClass(tuple(members), tuple(labels), v_max)


# ---------------------------------------------------------------------------
# directory layout
# ---------------------------------------------------------------------------

def _jsonable(x):
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if isinstance(x, np.integer):
        return int(x)
    return x


def _unjson(x):
    if x == "inf":
        return math.inf
    if x == "-inf":
        return -math.inf
    if isinstance(x, list):
        return np.array([_unjson(v) for v in x], dtype=np.float64)
    return x


def save_bundle(b: ScenarioBundle, directory) -> Path:
    """Write ``mdp.txt``, ``mu.txt``, ``mu_<variant>.txt``, ``candidates.csv``,
    ``partition.csv`` and ``manifest.json`` into ``directory``."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    save_mdp(b.mdp, out / "mdp.txt")
    save_distribution(b.mu, out / "mu.txt")
    for k, v in b.variants.items():
        save_distribution(v, out / f"mu_{k}.txt")
    if b.f_class is not None:
        save_function_class(b.f_class, out / "candidates.csv")
    if b.phi is not None:
        save_partition(b.phi, out / "partition.csv")
    manifest = {
        "format": SCENARIO_HEADER,
        "name": b.name,
        "params": _jsonable(b.params),
        "variants": sorted(b.variants),
        "expected": [{"name": e.name, "value": _jsonable(e.value), "tol": e.tol,
                      "provenance": e.provenance, "relation": e.relation} for e in b.expected],
        "extra": {k: _jsonable(v) for k, v in b.extra.items()},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    return out


def load_bundle(directory) -> ScenarioBundle:
    d = Path(directory)
    manifest = json.loads((d / "manifest.json").read_text())
    if manifest.get("format") != SCENARIO_HEADER:
        raise ValueError("not a bvft-scenario v1 manifest")
    f_class = load_function_class(d / "candidates.csv") if (d / "candidates.csv").exists() else None
    phi = load_partition(d / "partition.csv") if (d / "partition.csv").exists() else None
    expected = [Expected(e["name"], _unjson(e["value"]), e["tol"], e["provenance"], e["relation"])
                for e in manifest["expected"]]
    variants = {k: load_distribution(d / f"mu_{k}.txt") for k in manifest["variants"]}
    extra = {k: _unjson(v) for k, v in manifest["extra"].items()}
    return ScenarioBundle(manifest["name"], manifest["params"], load_mdp(d / "mdp.txt"),
                          load_distribution(d / "mu.txt"), f_class, phi, expected,
                          variants, extra)


SCENARIOS = {
    "fig2": make_fig2,
    "fig3": make_fig3,
    "low-rank": make_low_rank,
    "on-policy": make_on_policy_chain,
    "random": make_random_exploratory,
}
