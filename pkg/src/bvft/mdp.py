"""Finite tabular MDPs: planning, policy evaluation and occupancy computations.

Q-tables are plain ``(num_states, num_actions)`` float arrays throughout the
package.  Transition tables are indexed ``P[s, a, s']``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import _kernels
from .errors import NumericalError, ParameterError, ShapeError

PROB_TOL = 1e-9
_RENORM_SLACK = 1e-12


def _as_probability(x: np.ndarray, axis: int, what: str) -> np.ndarray:
    """Validate that slices along ``axis`` are distributions; renormalize tiny drift."""
    x = np.array(x, dtype=np.float64)
    if np.any(x < 0):
        raise ParameterError(f"{what} has negative entries")
    sums = x.sum(axis=axis, keepdims=True)
    if np.any(np.abs(sums - 1.0) > PROB_TOL):
        raise ParameterError(f"{what} does not sum to 1 within {PROB_TOL}")
    # only touch slices that drifted, so already-normalized data round-trips bitwise
    drift = np.abs(sums - 1.0) > _RENORM_SLACK
    if np.any(drift):
        x = np.where(drift, x / sums, x)
    return x


@dataclass(frozen=True)
class TabularMdp:
    """Discounted MDP with tabular transition and reward functions.

    ``r_max`` is the reward ceiling; ``v_max = r_max / (1 - discount)``.
    """

    transition: np.ndarray
    reward: np.ndarray
    discount: float
    initial_dist: np.ndarray
    r_max: float

    def __post_init__(self):
        P = np.asarray(self.transition, dtype=np.float64)
        if P.ndim != 3 or P.shape[0] != P.shape[2]:
            raise ShapeError(f"transition must be (S, A, S), got {P.shape}")
        S, A, _ = P.shape
        if S < 1 or A < 1:
            raise ShapeError("need at least one state and one action")
        P = _as_probability(P, axis=2, what="transition")
        R = np.array(self.reward, dtype=np.float64)
        if R.shape != (S, A):
            raise ShapeError(f"reward must be {(S, A)}, got {R.shape}")
        if not 0.0 <= self.discount < 1.0:
            raise ParameterError("discount must lie in [0, 1)")
        if not (np.isfinite(self.r_max) and self.r_max >= 0):
            raise ParameterError("r_max must be finite and non-negative")
        if np.any(R < 0) or np.any(R > self.r_max):
            raise ParameterError("rewards must lie in [0, r_max]")
        d0 = np.asarray(self.initial_dist, dtype=np.float64)
        if d0.shape != (S,):
            raise ShapeError(f"initial_dist must be ({S},), got {d0.shape}")
        d0 = _as_probability(d0, axis=0, what="initial_dist")
        for arr in (P, R, d0):
            arr.setflags(write=False)
        object.__setattr__(self, "transition", P)
        object.__setattr__(self, "reward", R)
        object.__setattr__(self, "initial_dist", d0)
        object.__setattr__(self, "discount", float(self.discount))
        object.__setattr__(self, "r_max", float(self.r_max))

    @property
    def num_states(self) -> int:
        return self.transition.shape[0]

    @property
    def num_actions(self) -> int:
        return self.transition.shape[1]

    @property
    def v_max(self) -> float:
        return self.r_max / (1.0 - self.discount)

    def check_qtable(self, f, *, bounded: bool = False) -> np.ndarray:
        f = np.asarray(f, dtype=np.float64)
        if f.shape != (self.num_states, self.num_actions):
            raise ShapeError(f"Q-table shape {f.shape} does not match MDP "
                             f"{(self.num_states, self.num_actions)}")
        if bounded and (np.any(f < -1e-12) or np.any(f > self.v_max + 1e-9)):
            raise ParameterError("Q-table entries must lie in [0, v_max]")
        return f


@dataclass(frozen=True)
class Policy:
    """Sequence of stochastic action tables ``(S, A)`` applied by time step.

    A stationary policy has a single table.  Beyond the end of the sequence
    the last table repeats.
    """

    tables: tuple
    kind: str = field(default="stationary-stochastic")

    def __post_init__(self):
        tabs = tuple(_as_probability(t, axis=1, what="policy row") for t in self.tables)
        if not tabs:
            raise ParameterError("policy needs at least one table")
        shape = tabs[0].shape
        if any(t.shape != shape or t.ndim != 2 for t in tabs):
            raise ShapeError("all policy tables must share one (S, A) shape")
        object.__setattr__(self, "tables", tabs)

    @classmethod
    def deterministic(cls, actions: Sequence[int], num_actions: int) -> "Policy":
        actions = np.asarray(actions, dtype=np.int64)
        table = np.zeros((actions.shape[0], num_actions))
        table[np.arange(actions.shape[0]), actions] = 1.0
        return cls((table,), kind="stationary-deterministic")

    @classmethod
    def stochastic(cls, probs) -> "Policy":
        return cls((np.asarray(probs, dtype=np.float64),), kind="stationary-stochastic")

    @classmethod
    def nonstationary(cls, steps: Sequence["Policy | np.ndarray"]) -> "Policy":
        tabs = []
        for step in steps:
            if isinstance(step, Policy):
                if len(step.tables) != 1:
                    raise ParameterError("nonstationary steps must be stationary policies")
                tabs.append(step.tables[0])
            else:
                tabs.append(np.asarray(step, dtype=np.float64))
        return cls(tuple(tabs), kind="nonstationary")

    @property
    def is_stationary(self) -> bool:
        return len(self.tables) == 1

    def at(self, t: int) -> np.ndarray:
        return self.tables[min(t, len(self.tables) - 1)]

    def actions(self, t: int = 0) -> np.ndarray:
        """Most likely action per state at step ``t`` (the action for deterministic policies)."""
        return np.argmax(self.at(t), axis=1)

    def _check(self, mdp: TabularMdp):
        if self.tables[0].shape != (mdp.num_states, mdp.num_actions):
            raise ShapeError("policy does not match MDP dimensions")


def state_values(f: np.ndarray) -> np.ndarray:
    """``V_f(s) = max_a f(s, a)``."""
    return np.max(f, axis=1)


def bellman_optimality_update(mdp: TabularMdp, f) -> np.ndarray:
    """Apply the Bellman optimality operator once."""
    f = mdp.check_qtable(f)
    return mdp.reward + mdp.discount * (mdp.transition @ state_values(f))


def solve_q_star(mdp: TabularMdp, tol: float = 1e-10, max_iter: int = 1_000_000) -> np.ndarray:
    """Value iteration until ``||Q - TQ||_inf <= tol``.

    Stops once successive iterates differ by at most ``tol (1-gamma) / (2 gamma)``;
    the returned table is then within ``tol / (1 - gamma)`` of the true optimum.
    """
    if tol <= 0:
        raise ParameterError("tol must be positive")
    gamma = mdp.discount
    q = np.zeros((mdp.num_states, mdp.num_actions))
    if gamma == 0.0:
        return mdp.reward.copy()
    stop = tol * (1.0 - gamma) / (2.0 * gamma)
    for _ in range(max_iter):
        nxt = bellman_optimality_update(mdp, q)
        if np.max(np.abs(nxt - q)) <= stop:
            return nxt
        q = nxt
    raise NumericalError("value iteration did not converge")


def greedy_policy(f) -> Policy:
    """Deterministic greedy policy; ties go to the lowest action index."""
    f = np.asarray(f, dtype=np.float64)
    return Policy.deterministic(np.argmax(f, axis=1), f.shape[1])


def _evaluate_stationary(mdp: TabularMdp, table: np.ndarray) -> np.ndarray:
    S = mdp.num_states
    P_pi = np.einsum("sa,sat->st", table, mdp.transition)
    r_pi = np.einsum("sa,sa->s", table, mdp.reward)
    lhs = np.eye(S) - mdp.discount * P_pi
    v = np.linalg.solve(lhs, r_pi)
    if np.max(np.abs(lhs @ v - r_pi)) > 1e-8:
        raise NumericalError("policy evaluation residual above 1e-8")
    return v


def policy_values(mdp: TabularMdp, pi: Policy) -> np.ndarray:
    """State values of a stationary policy by an exact linear solve."""
    pi._check(mdp)
    if not pi.is_stationary:
        raise ParameterError("policy_values needs a stationary policy")
    return _evaluate_stationary(mdp, pi.tables[0])


def policy_return(mdp: TabularMdp, pi: Policy) -> float:
    """Expected discounted return ``J(pi)`` from the initial distribution.

    Nonstationary policies are unrolled over their explicit steps; the
    repeating final table is then evaluated exactly, so the result carries
    no truncation error.
    """
    pi._check(mdp)
    k = len(pi.tables) - 1
    rho = mdp.initial_dist.copy()
    total = 0.0
    disc = 1.0
    for t in range(k):
        table = pi.tables[t]
        total += disc * float(rho @ np.einsum("sa,sa->s", table, mdp.reward))
        rho = np.einsum("s,sa,sat->t", rho, table, mdp.transition)
        disc *= mdp.discount
    v_tail = _evaluate_stationary(mdp, pi.tables[k])
    return total + disc * float(rho @ v_tail)


def occupancy_at_time(mdp: TabularMdp, pi: Policy, t: int) -> np.ndarray:
    """Distribution of ``(s_t, a_t)`` under ``pi`` started from ``d0``."""
    if t < 0:
        raise ParameterError("t must be non-negative")
    pi._check(mdp)
    rho = mdp.initial_dist
    for step in range(t):
        d = rho[:, None] * pi.at(step)
        rho = np.einsum("sa,sat->t", d, mdp.transition)
    return rho[:, None] * pi.at(t)


def max_time_t_weight(mdp: TabularMdp, w, t: int, initial_dist=None) -> float:
    """``sup_pi sum_{s,a} d_t^pi(s,a) w(s,a)`` over nonstationary policies.

    Backward induction: ``v_0(s) = max_a w(s,a)``, then
    ``v_k(s) = max_a sum_{s'} P(s'|s,a) v_{k-1}(s')``; the answer is ``d0 . v_t``.
    A deterministic nonstationary policy attains the supremum.
    """
    if t < 0:
        raise ParameterError("t must be non-negative")
    w = mdp.check_qtable(w)
    d0 = mdp.initial_dist if initial_dist is None else np.asarray(initial_dist, dtype=np.float64)
    v = w.max(axis=1)
    for _ in range(t):
        v = (mdp.transition @ v).max(axis=1)
    return float(d0 @ v)


def max_state_visit(mdp: TabularMdp, t_max: int, initial_dist=None) -> np.ndarray:
    """``out[t, s] = sup_pi P(s_t = s)`` for every target state at once, ``t <= t_max``."""
    d0 = mdp.initial_dist if initial_dist is None else np.asarray(initial_dist, dtype=np.float64)
    S = mdp.num_states
    v = np.eye(S)  # row i: value function for target state i
    out = np.empty((t_max + 1, S))
    out[0] = v @ d0
    for t in range(1, t_max + 1):
        # P @ v.T -> (S, A, targets)
        v = np.einsum("sat,it->isa", mdp.transition, v).max(axis=2)
        out[t] = v @ d0
    return out


def monte_carlo_return(mdp: TabularMdp, pi: Policy, n: int, seed: int,
                       horizon: int | None = None, chunk: int = 50_000) -> tuple[float, float]:
    """Monte-Carlo estimate of ``J(pi)`` for a stationary deterministic policy.

    Returns ``(mean, standard_error)``.  Trajectories are truncated where the
    discounted tail is below ``1e-6 * v_max``.
    """
    pi._check(mdp)
    if not pi.is_stationary:
        raise ParameterError("monte_carlo_return needs a stationary policy")
    actions = pi.actions(0)
    S = mdp.num_states
    if horizon is None:
        horizon = 1 if mdp.discount == 0 else int(math.ceil(math.log(1e-6) / math.log(mdp.discount)))
    rows = mdp.transition[np.arange(S), actions]
    cdf = np.cumsum(rows, axis=1)
    cdf[:, -1] = 1.0
    r_pi = mdp.reward[np.arange(S), actions]
    d0_cdf = np.cumsum(mdp.initial_dist)
    d0_cdf[-1] = 1.0
    rng = np.random.default_rng(seed)
    sums = 0.0
    sq = 0.0
    done = 0
    while done < n:
        m = min(chunk, n - done)
        starts = np.minimum(np.searchsorted(d0_cdf, rng.random(m), side="right"), S - 1)
        u = rng.random((m, horizon))
        ret = _kernels.rollout_returns(cdf, r_pi, starts, u, mdp.discount)
        sums += ret.sum()
        sq += (ret * ret).sum()
        done += m
    mean = sums / n
    var = max(sq / n - mean * mean, 0.0)
    return mean, math.sqrt(var / n)


# ---------------------------------------------------------------------------
# text serialization
# ---------------------------------------------------------------------------

MDP_HEADER = "# bvft-mdp v1"


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def dumps_mdp(mdp: TabularMdp) -> str:
    """Plain-text form: header, dims line, reward rows, transition rows, d0 row."""
    S, A = mdp.num_states, mdp.num_actions
    lines = [MDP_HEADER,
             f"{S} {A} {_fmt(mdp.discount)} {_fmt(mdp.r_max)}"]
    lines += [" ".join(_fmt(x) for x in mdp.reward[s]) for s in range(S)]
    lines += [" ".join(_fmt(x) for x in mdp.transition[s, a])
              for s in range(S) for a in range(A)]
    lines.append(" ".join(_fmt(x) for x in mdp.initial_dist))
    return "\n".join(lines) + "\n"


def loads_mdp(text: str) -> TabularMdp:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0].strip() != MDP_HEADER:
        raise ValueError("not a bvft-mdp v1 document")
    head = lines[1].split()
    S, A = int(head[0]), int(head[1])
    gamma, r_max = float(head[2]), float(head[3])
    body = lines[2:]
    if len(body) != S + S * A + 1:
        raise ValueError("unexpected number of rows in MDP file")
    R = np.array([[float(x) for x in ln.split()] for ln in body[:S]])
    P = np.array([[float(x) for x in ln.split()] for ln in body[S:S + S * A]]).reshape(S, A, S)
    d0 = np.array([float(x) for x in body[-1].split()])
    return TabularMdp(P, R, gamma, d0, r_max)


def save_mdp(mdp: TabularMdp, path) -> None:
    Path(path).write_text(dumps_mdp(mdp))


def load_mdp(path) -> TabularMdp:
    return loads_mdp(Path(path).read_text())
