"""Data distributions, batch datasets, weighted norms and concentrability checks."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from itertools import combinations
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import ParameterError, ShapeError
from .mdp import TabularMdp, _as_probability, _fmt, max_state_visit, \
    max_time_t_weight, occupancy_at_time


@dataclass(frozen=True)
class DataDistribution:
    """Sampling distribution over state-action pairs, stored as an ``(S, A)`` table."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 2:
            raise ShapeError("distribution weights must be an (S, A) table")
        w = _as_probability(w.ravel(), axis=0, what="data distribution").reshape(w.shape)
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @classmethod
    def uniform(cls, num_states: int, num_actions: int, exclude=()) -> "DataDistribution":
        """Uniform over all pairs except those listed in ``exclude``."""
        w = np.ones((num_states, num_actions))
        for s, a in exclude:
            w[s, a] = 0.0
        return cls(w / w.sum())

    @property
    def shape(self) -> tuple:
        return self.weights.shape

    @property
    def state_marginal(self) -> np.ndarray:
        return self.weights.sum(axis=1)

    def action_conditional(self) -> np.ndarray:
        """``mu(a|s)``; rows for states with zero mass are NaN."""
        ms = self.state_marginal
        out = np.full(self.shape, np.nan)
        pos = ms > 0
        out[pos] = self.weights[pos] / ms[pos, None]
        return out

    def check(self, mdp: TabularMdp) -> None:
        if self.shape != (mdp.num_states, mdp.num_actions):
            raise ShapeError(f"distribution shape {self.shape} does not match MDP")


@dataclass(frozen=True)
class Dataset:
    """Batch of transitions ``(s, a, r, s')`` stored column-wise."""

    s: np.ndarray
    a: np.ndarray
    r: np.ndarray
    s_next: np.ndarray
    num_states: int
    num_actions: int
    seed: Optional[int] = None
    source: str = ""

    def __post_init__(self):
        cols = [np.asarray(self.s, dtype=np.int64), np.asarray(self.a, dtype=np.int64),
                np.asarray(self.r, dtype=np.float64), np.asarray(self.s_next, dtype=np.int64)]
        n = cols[0].shape[0]
        if any(c.ndim != 1 or c.shape[0] != n for c in cols):
            raise ShapeError("dataset columns must be 1-d and equally long")
        s, a, r, sn = cols
        if n and (s.min() < 0 or s.max() >= self.num_states or sn.min() < 0
                  or sn.max() >= self.num_states or a.min() < 0 or a.max() >= self.num_actions):
            raise ParameterError("dataset indices out of range")
        if n and (not np.all(np.isfinite(r)) or r.min() < 0):
            raise ParameterError("dataset rewards must be finite and non-negative")
        for c in cols:
            c.setflags(write=False)
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "s_next", sn)

    def __len__(self) -> int:
        return self.s.shape[0]

    @property
    def shape(self) -> tuple:
        return (self.num_states, self.num_actions)

    @cached_property
    def sa_index(self) -> np.ndarray:
        return self.s * self.num_actions + self.a

    @cached_property
    def counts(self) -> np.ndarray:
        """Per-pair sample counts as an ``(S, A)`` table."""
        c = np.bincount(self.sa_index, minlength=self.num_states * self.num_actions)
        return c.reshape(self.shape)

    @cached_property
    def reward_sums(self) -> np.ndarray:
        c = np.bincount(self.sa_index, weights=self.r, minlength=self.num_states * self.num_actions)
        return c.reshape(self.shape)

    def empirical_weights(self) -> np.ndarray:
        if len(self) == 0:
            raise ParameterError("empty dataset")
        return self.counts / len(self)

    def check_rewards(self, r_max: float) -> None:
        if len(self) and self.r.max() > r_max + 1e-12:
            raise ParameterError("dataset rewards exceed r_max")


def sample_dataset(mdp: TabularMdp, mu: DataDistribution, n: int, seed: int) -> Dataset:
    """Draw ``n`` i.i.d. transitions: ``(s, a) ~ mu``, ``r = R(s, a)``, ``s' ~ P(s, a)``."""
    if n < 1:
        raise ParameterError("n must be positive")
    mu.check(mdp)
    S, A = mdp.num_states, mdp.num_actions
    rng = np.random.default_rng(seed)
    sa = rng.choice(S * A, size=n, p=mu.weights.ravel())
    s, a = np.divmod(sa, A)
    # inverse-cdf draw for all rows at once: offset each row's cdf by its row index
    cdf = np.cumsum(mdp.transition.reshape(S * A, S), axis=1)
    cdf[:, -1] = 1.0
    flat = (cdf + np.arange(S * A)[:, None]).ravel()
    pos = np.searchsorted(flat, sa + rng.random(n), side="right")
    s_next = np.minimum(pos - sa * S, S - 1)
    return Dataset(s, a, mdp.reward[s, a], s_next, S, A, seed=seed, source="mu")


def weighted_norm(f, g, weighting) -> float:
    """``||f - g||_{2,mu}`` or its empirical counterpart ``||f - g||_{2,D}``."""
    f = np.asarray(f, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    if f.shape != g.shape or f.shape != weighting.shape:
        raise ShapeError("shapes of f, g and weighting must agree")
    w = weighting.empirical_weights() if isinstance(weighting, Dataset) else weighting.weights
    return math.sqrt(float(np.sum(w * (f - g) ** 2)))


def admissible_mixture(mdp: TabularMdp, components: Sequence[tuple]) -> DataDistribution:
    """Build an admissible ``mu`` as a mixture of occupancies.

    ``components`` holds ``(weight, policy, t)`` triples; weights are normalized.
    """
    if not components:
        raise ParameterError("need at least one mixture component")
    total = sum(c[0] for c in components)
    if total <= 0:
        raise ParameterError("mixture weights must have positive sum")
    w = sum(c[0] / total * occupancy_at_time(mdp, c[1], c[2]) for c in components)
    return DataDistribution(w)


def default_t_max(gamma: float, precision: float = 1e-3) -> int:
    return int(math.ceil(math.log(1.0 / precision) / (1.0 - gamma)))


# ---------------------------------------------------------------------------
# concentrability
# ---------------------------------------------------------------------------

@dataclass
class ConcentrabilityReport:
    """Assumption-1 coefficients with the transitions that attain them.

    Each witness is ``(kind, s, a, s_next, ratio)`` where ``kind`` is
    ``"transition"``, ``"initial"`` or ``"action"``; unused slots are ``None``.
    """

    c_s: float
    c_a: float
    witnesses: list = field(default_factory=list)
    horizon_admissible: Optional[np.ndarray] = None

    @property
    def c(self) -> float:
        return self.c_s * self.c_a

    @property
    def finite(self) -> bool:
        return math.isfinite(self.c)


def _ratio(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    """Elementwise num/den with 0/0 = 0 and x/0 = inf for x > 0."""
    out = np.zeros(np.broadcast(num, den).shape)
    num, den = np.broadcast_arrays(num, den)
    pos = den > 0
    out[pos] = num[pos] / den[pos]
    out[~pos & (num > 0)] = np.inf
    return out


def check_assumption1(mdp: TabularMdp, mu: DataDistribution) -> ConcentrabilityReport:
    """Compute ``C_S`` and ``C_A`` of the per-transition concentrability assumption."""
    mu.check(mdp)
    ms = mu.state_marginal
    witnesses = []

    trans = _ratio(mdp.transition, ms[None, None, :])
    init = _ratio(mdp.initial_dist, ms)
    i_t = np.unravel_index(np.argmax(trans), trans.shape)
    i_d = int(np.argmax(init))
    c_s = max(float(trans[i_t]), float(init[i_d]))
    if trans[i_t] >= init[i_d]:
        witnesses.append(("transition", int(i_t[0]), int(i_t[1]), int(i_t[2]), float(trans[i_t])))
    else:
        witnesses.append(("initial", None, None, i_d, float(init[i_d])))

    cond = mu.action_conditional()
    supported = ms > 0
    if not np.any(supported):  # pragma: no cover - weights sum to 1
        raise ParameterError("distribution has no support")
    rows = cond[supported]
    min_cond = rows.min()
    c_a = math.inf if min_cond == 0 else 1.0 / float(min_cond)
    s_w = int(np.flatnonzero(supported)[np.argmin(rows.min(axis=1))])
    a_w = int(np.argmin(cond[s_w]))
    witnesses.append(("action", s_w, a_w, None, c_a))
    return ConcentrabilityReport(c_s=c_s, c_a=c_a, witnesses=witnesses)


def assumption2_table(mdp: TabularMdp, mu: DataDistribution, t_max: int,
                      initial_dist=None) -> np.ndarray:
    """``out[t, s, a] = sup_pi d_t^pi(s, a) / mu(s, a)`` for ``t <= t_max``.

    Pinning the action at the final step costs nothing, so the numerator is
    the largest probability of reaching ``s`` at time ``t``.
    """
    if t_max < 0:
        raise ParameterError("t_max must be non-negative")
    mu.check(mdp)
    visits = max_state_visit(mdp, t_max, initial_dist)
    return _ratio(visits[:, :, None], mu.weights[None, :, :])


def check_assumption2(mdp: TabularMdp, mu: DataDistribution, t_max: Optional[int] = None,
                      initial_dist=None) -> float:
    """``max_{t <= t_max, s, a} sup_pi d_t^pi(s, a) / mu(s, a)``."""
    if t_max is None:
        t_max = default_t_max(mdp.discount)
    return float(assumption2_table(mdp, mu, t_max, initial_dist).max())


def check_assumption3(mdp: TabularMdp, mu: DataDistribution, f_class, t_max: Optional[int] = None
                      ) -> Optional[float]:
    """Largest ratio ``sup_pi ||f - f'||^2_{d_t^pi} / ||f - f'||^2_mu`` over pairs.

    Returns ``None`` when every pair coincides under ``mu`` (not applicable).
    """
    members = [np.asarray(f, dtype=np.float64) for f in getattr(f_class, "members", f_class)]
    if len(members) < 2:
        raise ParameterError("need at least two functions")
    if t_max is None:
        t_max = default_t_max(mdp.discount)
    mu.check(mdp)
    best = None
    for f, g in combinations(members, 2):
        w = (f - g) ** 2
        den = float(np.sum(mu.weights * w))
        if den <= 0:
            continue
        num = max(max_time_t_weight(mdp, w, t) for t in range(t_max + 1))
        val = num / den
        best = val if best is None else max(best, val)
    return best


def check_assumption5(mdp: TabularMdp, mu: DataDistribution, phi, t_max: Optional[int] = None,
                      initial_dist=None) -> float:
    """Occupancy concentrability measured in the aggregated MDP built from ``phi``.

    ``initial_dist`` optionally replaces ``d0`` as the starting distribution.
    """
    from .operators import build_m_phi
    return check_assumption2(build_m_phi(mdp, mu, phi), mu, t_max, initial_dist)


# ---------------------------------------------------------------------------
# text serialization
# ---------------------------------------------------------------------------

DATASET_HEADER = "# bvft-dataset v1"
DIST_HEADER = "# bvft-distribution v1"


def dumps_dataset(d: Dataset) -> str:
    seed = "none" if d.seed is None else str(d.seed)
    lines = [DATASET_HEADER,
             f"# num_states={d.num_states} num_actions={d.num_actions} n={len(d)} "
             f"seed={seed} source={d.source or '-'}",
             "s,a,r,s_next"]
    lines += [f"{s},{a},{_fmt(r)},{sn}" for s, a, r, sn in
              zip(d.s.tolist(), d.a.tolist(), d.r.tolist(), d.s_next.tolist())]
    return "\n".join(lines) + "\n"


def loads_dataset(text: str) -> Dataset:
    lines = text.splitlines()
    if not lines or lines[0].strip() != DATASET_HEADER:
        raise ValueError("not a bvft-dataset v1 document")
    meta = dict(kv.split("=", 1) for kv in lines[1].lstrip("# ").split())
    body = [ln for ln in lines[3:] if ln.strip()]
    if len(body) != int(meta["n"]):
        raise ValueError("row count does not match header")
    if body:
        arr = np.array([ln.split(",") for ln in body])
        s, a, r, sn = arr[:, 0].astype(np.int64), arr[:, 1].astype(np.int64), \
            arr[:, 2].astype(np.float64), arr[:, 3].astype(np.int64)
    else:
        s = a = sn = np.zeros(0, dtype=np.int64)
        r = np.zeros(0)
    seed = None if meta["seed"] == "none" else int(meta["seed"])
    source = "" if meta["source"] == "-" else meta["source"]
    return Dataset(s, a, r, sn, int(meta["num_states"]), int(meta["num_actions"]),
                   seed=seed, source=source)


def dumps_distribution(mu: DataDistribution) -> str:
    S, A = mu.shape
    lines = [DIST_HEADER, f"{S} {A}"]
    lines += [" ".join(_fmt(x) for x in row) for row in mu.weights]
    return "\n".join(lines) + "\n"


def loads_distribution(text: str) -> DataDistribution:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0].strip() != DIST_HEADER:
        raise ValueError("not a bvft-distribution v1 document")
    S, A = (int(x) for x in lines[1].split())
    w = np.array([[float(x) for x in ln.split()] for ln in lines[2:]])
    if w.shape != (S, A):
        raise ValueError("distribution table does not match header")
    return DataDistribution(w)


def save_dataset(d: Dataset, path) -> None:
    Path(path).write_text(dumps_dataset(d))


def load_dataset(path) -> Dataset:
    return loads_dataset(Path(path).read_text())


def save_distribution(mu: DataDistribution, path) -> None:
    Path(path).write_text(dumps_distribution(mu))


def load_distribution(path) -> DataDistribution:
    return loads_distribution(Path(path).read_text())
