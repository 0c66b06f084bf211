"""Projected Bellman operators, the aggregated MDP and the pairwise tournament loss.

Both the empirical and the exact operator reduce to the same per-pair
statistics: a weight ``w(s,a)`` (sample fraction or ``mu`` mass), a
weighted reward ``w R`` and a weighted next-state distribution ``w P``.
``TransitionSource`` holds those, so every routine below works for either mode.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Union

import numpy as np

from . import _kernels
from .data import DataDistribution, Dataset
from .errors import ParameterError, ShapeError
from .functions import Partition, build_partition, discretize
from .mdp import TabularMdp, state_values


@dataclass(frozen=True)
class TransitionSource:
    """Per-pair statistics behind a projected update.

    ``mode`` is ``"empirical"`` (a dataset) or ``"exact"`` (``mu`` plus the true MDP).
    """

    mode: str
    gamma: float
    dataset: Dataset | None = None
    mu: DataDistribution | None = None
    mdp: TabularMdp | None = None

    @classmethod
    def from_data(cls, data, gamma: float | None = None) -> "TransitionSource":
        if isinstance(data, TransitionSource):
            return data
        if isinstance(data, Dataset):
            if len(data) == 0:
                raise ParameterError("empty dataset")
            if gamma is None:
                raise ParameterError("empirical mode needs a discount")
            return cls("empirical", float(gamma), dataset=data)
        if isinstance(data, tuple) and len(data) == 2:
            mu, mdp = data
            if isinstance(mu, TabularMdp):
                mu, mdp = mdp, mu
            mu.check(mdp)
            if gamma is not None and abs(gamma - mdp.discount) > 1e-12:
                raise ParameterError("gamma disagrees with the MDP discount")
            return cls("exact", mdp.discount, mu=mu, mdp=mdp)
        raise ParameterError("data must be a Dataset or a (DataDistribution, TabularMdp) pair")

    @property
    def shape(self) -> tuple:
        return self.dataset.shape if self.mode == "empirical" else self.mu.shape

    @cached_property
    def weights(self) -> np.ndarray:
        if self.mode == "empirical":
            return self.dataset.empirical_weights()
        return np.asarray(self.mu.weights)

    @cached_property
    def weighted_reward(self) -> np.ndarray:
        if self.mode == "empirical":
            return self.dataset.reward_sums / len(self.dataset)
        return self.weights * self.mdp.reward

    @cached_property
    def weighted_next(self) -> np.ndarray:
        """``(S*A, S)`` table of weighted next-state mass per pair."""
        S, A = self.shape
        if self.mode == "empirical":
            d = self.dataset
            flat = d.sa_index * S + d.s_next
            cnt = np.bincount(flat, minlength=S * A * S).reshape(S * A, S)
            return cnt / len(d)
        return self.weights.reshape(-1, 1) * self.mdp.transition.reshape(S * A, S)

    def weighted_targets(self, f: np.ndarray) -> np.ndarray:
        """``w(s,a)`` times the mean of ``r + gamma V_f(s')`` at each pair."""
        v = state_values(f)
        if self.mode == "empirical":
            d = self.dataset
            sums = _kernels.sa_target_sums(d.sa_index, d.r, d.s_next, v, self.gamma,
                                           d.num_states * d.num_actions)
            return sums.reshape(self.shape) / len(d)
        return self.weights * (self.mdp.reward + self.gamma * (self.mdp.transition @ v))

    def check(self, f) -> np.ndarray:
        f = np.asarray(f, dtype=np.float64)
        if f.shape != self.shape:
            raise ShapeError(f"table shape {f.shape} does not match data {self.shape}")
        return f


@dataclass
class ProjectedUpdateResult:
    """Output of one projected update.

    ``per_group_count`` holds sample counts (empirical) or ``mu`` mass (exact).
    """

    values: np.ndarray
    per_group_count: np.ndarray
    empty_groups: list = field(default_factory=list)


def _project(phi: Partition, f: np.ndarray, src: TransitionSource,
             targets: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    if phi.shape != src.shape:
        raise ShapeError("partition does not match data dimensions")
    if targets is None:
        targets = src.weighted_targets(f)
    mass = phi.group_sums(src.weights)
    num = phi.group_sums(targets)
    means = np.divide(num, mass, out=np.zeros_like(num), where=mass > 0)
    values = np.where(mass[phi.group_of] > 0, means[phi.group_of], f)
    return values, mass


def projected_update(phi: Partition, f, data, gamma: float | None = None) -> ProjectedUpdateResult:
    """Projected Bellman update in either mode; groups without weight keep ``f``."""
    src = TransitionSource.from_data(data, gamma)
    f = src.check(f)
    values, mass = _project(phi, f, src)
    if src.mode == "empirical":
        count = np.rint(mass * len(src.dataset)).astype(np.int64)
    else:
        count = mass
    empty = [int(g) for g in np.flatnonzero(mass <= 0)]
    return ProjectedUpdateResult(values, count, empty)


def empirical_projected_update(phi: Partition, f, d: Dataset, gamma: float) -> ProjectedUpdateResult:
    """Group means of ``r + gamma max_a' f(s', a')`` over the samples in each group."""
    if not isinstance(d, Dataset):
        raise ParameterError("empirical update needs a Dataset")
    return projected_update(phi, f, d, gamma)


def exact_projected_update(phi: Partition, f, mu: DataDistribution, mdp: TabularMdp
                           ) -> ProjectedUpdateResult:
    """``mu``-weighted group averages of the true Bellman update of ``f``."""
    return projected_update(phi, f, (mu, mdp))


def build_m_phi(mdp: TabularMdp, mu: DataDistribution, phi: Partition) -> TabularMdp:
    """Aggregated MDP: rewards and transitions averaged within groups under ``mu``.

    Groups with zero ``mu`` mass keep their original rows.
    """
    mu.check(mdp)
    if phi.shape != mu.shape:
        raise ShapeError("partition does not match MDP dimensions")
    S, A = mu.shape
    w = mu.weights.ravel()
    g = phi.flat
    G = phi.num_groups
    mass = np.bincount(g, weights=w, minlength=G)
    P = mdp.transition.reshape(S * A, S)
    R = mdp.reward.ravel()
    P_num = np.zeros((G, S))
    np.add.at(P_num, g, w[:, None] * P)
    R_num = np.bincount(g, weights=w * R, minlength=G)
    has = mass[g] > 0
    safe = np.where(mass > 0, mass, 1.0)
    P_phi = np.where(has[:, None], (P_num / safe[:, None])[g], P)
    R_phi = np.where(has, (R_num / safe)[g], R)
    # averaging can leave rows a few ulps off; clamp before validation
    R_phi = np.clip(R_phi, 0.0, mdp.r_max)
    return TabularMdp(P_phi.reshape(S, A, S), R_phi.reshape(S, A), mdp.discount,
                      mdp.initial_dist, mdp.r_max)


def loss_from_targets(phi: Partition, f: np.ndarray, src: TransitionSource,
                      targets: np.ndarray) -> float:
    """``||f - T f||_2`` under the source weights, given precomputed pair targets."""
    values, _ = _project(phi, f, src, targets)
    return float(np.sqrt(np.sum(src.weights * (f - values) ** 2)))


def bvft_loss(f, f_prime, data, eps_dct: float, gamma: float | None, v_max: float) -> float:
    """Tournament loss ``E(f; f')``.

    The partition comes from the discretized pair; the operator is applied to
    the undiscretized ``f``.
    """
    src = TransitionSource.from_data(data, gamma)
    f = src.check(f)
    f_prime = src.check(f_prime)
    phi = build_partition(discretize(f, eps_dct, v_max), discretize(f_prime, eps_dct, v_max))
    return loss_from_targets(phi, f, src, src.weighted_targets(f))


DataLike = Union[Dataset, tuple, TransitionSource]
