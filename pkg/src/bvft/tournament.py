"""Tournament selection, parameter schedule, sample-size bounds and fixed-point diagnostics."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from . import _kernels
from .errors import CapacityError, ParameterError
from .functions import FunctionClass, Partition, build_partition, discretize
from .mdp import TabularMdp, _fmt, greedy_policy, policy_return, solve_q_star
from .operators import TransitionSource, loss_from_targets

TIE_TOL = 1e-12


@dataclass(frozen=True)
class BvftConfig:
    """Tournament settings.

    ``eps_prime``, ``grid_res`` and ``group_cap`` configure the optional
    fixed-point diagnostic; ``None`` selects the documented defaults.
    """

    eps_dct: float
    mode: str = "empirical"
    seed: int = 0
    diagnose: bool = False
    eps_prime: Optional[float] = None
    grid_res: Optional[float] = None
    group_cap: Optional[int] = None
    tie_break: str = "lowest-index"

    def __post_init__(self):
        if self.mode not in ("empirical", "exact"):
            raise ParameterError("mode must be 'empirical' or 'exact'")
        if not self.eps_dct > 0:
            raise ParameterError("eps_dct must be positive")
        if self.tie_break != "lowest-index":
            raise ParameterError("only lowest-index tie-breaking is supported")


@dataclass
class FixedPointDiagnostic:
    """Spread of approximate fixed points: ``max ||g - g'||`` over the accepted set."""

    spread: float
    method: str
    num_points: int
    num_groups_searched: int
    truncated: bool = False

    @property
    def heuristic(self) -> bool:
        return self.method == "heuristic"


@dataclass
class BvftReport:
    labels: list
    loss_matrix: np.ndarray
    max_loss: np.ndarray
    selected: int
    tie: bool
    tied_indices: list
    policy: list
    config: dict
    mu_min_phi: Optional[np.ndarray] = None
    diagnostic: Optional[FixedPointDiagnostic] = None
    dist_to_q_star: Optional[np.ndarray] = None
    returns: Optional[np.ndarray] = None
    optimal_return: Optional[float] = None

    @property
    def selected_label(self) -> str:
        return self.labels[self.selected]

    @property
    def regret(self) -> Optional[float]:
        if self.returns is None:
            return None
        return float(self.optimal_return - self.returns[self.selected])

    def to_dict(self) -> dict:
        def arr(x):
            return None if x is None else np.asarray(x).tolist()
        return {
            "format": "bvft-report v1",
            "labels": list(self.labels),
            "config": self.config,
            "loss_matrix": arr(self.loss_matrix),
            "max_loss": arr(self.max_loss),
            "selected": int(self.selected),
            "selected_label": self.selected_label,
            "tie": bool(self.tie),
            "tied_indices": [int(i) for i in self.tied_indices],
            "policy": [int(a) for a in self.policy],
            "mu_min_phi": arr(self.mu_min_phi),
            "diagnostic": None if self.diagnostic is None else asdict(self.diagnostic),
            "dist_to_q_star": arr(self.dist_to_q_star),
            "returns": arr(self.returns),
            "optimal_return": self.optimal_return,
            "regret": self.regret,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False) + "\n"

    def loss_matrix_csv(self) -> str:
        lines = ["# bvft-loss-matrix v1", "row," + ",".join(self.labels)]
        for lab, row in zip(self.labels, self.loss_matrix):
            lines.append(lab + "," + ",".join(_fmt(x) for x in row))
        return "\n".join(lines) + "\n"


def read_loss_matrix_csv(text: str) -> tuple[list, np.ndarray]:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0].strip() != "# bvft-loss-matrix v1":
        raise ValueError("not a bvft-loss-matrix v1 document")
    labels = lines[1].split(",")[1:]
    mat = np.array([[float(x) for x in ln.split(",")[1:]] for ln in lines[2:]])
    return labels, mat


def _source(data, f_class: FunctionClass, mode: str, gamma) -> TransitionSource:
    src = TransitionSource.from_data(data, gamma)
    if src.mode != mode:
        raise ParameterError(f"config mode '{mode}' does not match the supplied data ({src.mode})")
    if src.shape != f_class.shape:
        raise ParameterError("function class does not match data dimensions")
    return src


def run_bvft(f_class: FunctionClass, data, config: BvftConfig, gamma: float | None = None,
             oracle: TabularMdp | None = None) -> BvftReport:
    """Run the tournament: all pairwise losses, then min-max selection.

    ``gamma`` is required in empirical mode.  When ``oracle`` is given (or the
    data already carries the true MDP) the report adds ground-truth columns.
    """
    src = _source(data, f_class, config.mode, gamma)
    v_max = f_class.v_max
    if not config.eps_dct < v_max:
        raise ParameterError("eps_dct must be below v_max")
    k = len(f_class)
    bars = [discretize(f, config.eps_dct, v_max) for f in f_class.members]
    loss = np.zeros((k, k))
    mu_min = np.zeros((k, k))
    for i, f in enumerate(f_class.members):
        targets = src.weighted_targets(f)
        for j in range(k):
            phi = build_partition(bars[i], bars[j])
            loss[i, j] = loss_from_targets(phi, f, src, targets)
            mu_min[i, j] = phi.group_sums(src.weights).min()
    max_loss = loss.max(axis=1)
    selected = int(np.argmin(max_loss))
    tied = [int(i) for i in np.flatnonzero(max_loss <= max_loss[selected] + TIE_TOL)]
    best = f_class.members[selected]
    report = BvftReport(
        labels=list(f_class.labels), loss_matrix=loss, max_loss=max_loss, selected=selected,
        tie=len(tied) > 1, tied_indices=tied, policy=greedy_policy(best).actions().tolist(),
        config=asdict(config), mu_min_phi=mu_min)

    if config.diagnose:
        phi = build_partition(bars[selected], bars[selected])
        report.diagnostic = diagnose_fixed_points(
            phi, src, config.eps_prime, config.grid_res, config.group_cap,
            eps_dct=config.eps_dct, v_max=v_max, seed=config.seed)

    mdp = oracle if oracle is not None else src.mdp
    if mdp is not None:
        q_star = solve_q_star(mdp)
        report.dist_to_q_star = np.array([np.max(np.abs(f - q_star)) for f in f_class.members])
        report.returns = np.array([policy_return(mdp, greedy_policy(f)) for f in f_class.members])
        report.optimal_return = policy_return(mdp, greedy_policy(q_star))
    return report


# ---------------------------------------------------------------------------
# schedule and sample sizes
# ---------------------------------------------------------------------------

def theorem1_schedule(epsilon: float, gamma: float, c: float, v_max: float, f_count: int,
                      delta: float) -> tuple[float, float, int]:
    """Discretization, statistical tolerance and sample size for a target ``epsilon``.

    Returns ``(eps_dct, eps_tilde, required_n)`` with
    ``eps_dct = eps_tilde = (1 - gamma)^2 epsilon v_max / (16 sqrt(c))``.
    """
    if not (epsilon > 0 and c > 0 and v_max > 0 and f_count >= 1):
        raise ParameterError("epsilon, c, v_max and f_count must be positive")
    if not 0 <= gamma < 1:
        raise ParameterError("gamma must lie in [0, 1)")
    if not 0 < delta < 1:
        raise ParameterError("delta must lie in (0, 1)")
    eps_dct = (1.0 - gamma) ** 2 * epsilon * v_max / (16.0 * math.sqrt(c))
    eps_tilde = eps_dct
    n = 82.0 * v_max ** 4 * math.log(160.0 * v_max * f_count / (eps_tilde * delta)) \
        / (eps_tilde ** 2 * eps_dct ** 2)
    return eps_dct, eps_tilde, int(math.ceil(n))


def _need(params: dict, *names):
    missing = [k for k in names if params.get(k) is None]
    if missing:
        raise ParameterError(f"missing parameter(s): {', '.join(missing)}")
    for k in names:
        if not params[k] > 0:
            raise ParameterError(f"{k} must be positive")
    if "delta" in names and not params["delta"] < 1:
        raise ParameterError("delta must lie in (0, 1)")
    return [float(params[k]) for k in names]


def _norm_deviation_term(v, phi, e1, delta):
    return 50.0 * v ** 2 * phi * math.log(80.0 * v / (e1 * delta)) / e1 ** 2


def sample_size_bound(kind: str, **params) -> int:
    """Closed-form dataset sizes.

    ``lemma6``: projected-update concentration at tolerance ``eps_tilde``.
    ``lemma7``: uniform norm deviation over the piecewise class at ``eps_1``.
    ``prop4``: the combined requirement.
    """
    if kind == "lemma6":
        v, phi, et, delta = _need(params, "v_max", "phi_size", "eps_tilde", "delta")
        n = 16.0 * v ** 2 * (2.0 * phi * math.log(4.0 * v / et) + math.log(2.0 / delta)) / et ** 2
    elif kind == "lemma7":
        v, phi, e1, delta = _need(params, "v_max", "phi_size", "eps_1", "delta")
        n = _norm_deviation_term(v, phi, e1, delta)
    elif kind == "prop4":
        v, phi, et, e1, delta = _need(params, "v_max", "phi_size", "eps_tilde", "eps_1", "delta")
        n = 32.0 * v ** 2 * phi * math.log(8.0 * v / (et * delta)) / et ** 2 \
            + _norm_deviation_term(v, phi, e1, delta)
    else:
        raise ParameterError(f"unknown bound kind '{kind}'")
    return int(math.ceil(n))


def prop4_error_bound(eps_phi: float, c: float, loss: float, eps_1: float, eps_tilde: float,
                      gamma: float) -> float:
    """Right-hand side of the error-propagation inequality for ``||f0 - Q*||``."""
    return (2.0 * eps_phi + math.sqrt(c) * (loss + eps_1 + eps_tilde)) / (1.0 - gamma)


def prop4_loss_bound(sup_err: float, eps_phi: float, eps_1: float, eps_tilde: float,
                     gamma: float) -> float:
    """Right-hand side of the loss inequality for a near-optimal ``f0``."""
    return (1.0 + gamma) * sup_err + 2.0 * eps_phi + eps_tilde + eps_1


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------

def mu_min_phi(phi: Partition, weighting) -> float:
    """Smallest group weight: ``mu`` mass, or sample fraction for a dataset."""
    from .data import Dataset
    w = weighting.empirical_weights() if isinstance(weighting, Dataset) else weighting.weights
    if phi.shape != w.shape:
        raise ParameterError("partition does not match weighting dimensions")
    return float(phi.group_sums(w).min())


@dataclass
class _GroupModel:
    """Piecewise-constant view of a projected operator over a subset of groups."""

    groups: np.ndarray          # original ids of the searched groups
    weights: np.ndarray         # group mass
    rbar: np.ndarray            # mean reward per group
    supported: np.ndarray
    next_states: np.ndarray     # states that can follow a supported group
    next_probs: np.ndarray      # (groups, next_states)
    state_groups: np.ndarray    # (next_states, A) local group index


def _group_model(phi: Partition, src: TransitionSource) -> _GroupModel:
    S, A = src.shape
    G = phi.num_groups
    mass = phi.group_sums(src.weights)
    supported = mass > 0
    rew = phi.group_sums(src.weighted_reward)
    nxt = np.zeros((G, S))
    np.add.at(nxt, phi.flat, src.weighted_next)
    safe = np.where(supported, mass, 1.0)
    rbar = np.where(supported, rew / safe, 0.0)
    probs = nxt / safe[:, None]
    probs[~supported] = 0.0
    next_states = np.flatnonzero(probs[supported].sum(axis=0) > 0)
    relevant = supported.copy()
    relevant[np.unique(phi.group_of[next_states])] = True
    groups = np.flatnonzero(relevant)
    local = np.full(G, -1, dtype=np.int64)
    local[groups] = np.arange(groups.shape[0])
    return _GroupModel(
        groups=groups, weights=mass[groups], rbar=rbar[groups], supported=supported[groups],
        next_states=next_states, next_probs=probs[groups][:, next_states],
        state_groups=local[phi.group_of[next_states]])


def _residual(model: _GroupModel, x: np.ndarray, gamma: float) -> np.ndarray:
    """Projected update of group values ``x`` (unsupported groups map to themselves)."""
    v = x[..., model.state_groups].max(axis=-1)
    tx = model.rbar + gamma * v @ model.next_probs.T
    return np.where(model.supported, tx, x)


def default_diagnostic_settings(src: TransitionSource, eps_dct: float, v_max: float,
                                n_groups: int) -> tuple[float, float, int]:
    """``eps' = 2 (eps_dct + statistical error)``, ``grid_res = eps_dct``, cap so grid^groups <= 1e7."""
    stat = v_max / math.sqrt(len(src.dataset)) if src.mode == "empirical" else 0.0
    eps_prime = 2.0 * (eps_dct + stat)
    grid_res = eps_dct
    m = int(math.floor(v_max / grid_res)) + 1
    cap = max(1, int(math.floor(math.log(1e7) / math.log(m)))) if m > 1 else n_groups
    return eps_prime, grid_res, cap


def diagnose_fixed_points(phi: Partition, data, eps_prime: float | None = None,
                          grid_res: float | None = None, group_cap: int | None = None, *,
                          gamma: float | None = None, v_max: float | None = None,
                          eps_dct: float | None = None, allow_heuristic: bool = True,
                          restarts: int = 64, seed: int = 0,
                          max_points: int = 200_000) -> FixedPointDiagnostic:
    """Spread of the approximate fixed points of the projected update.

    Exhaustive mode enumerates every assignment of grid values to the groups
    that carry weight or can be reached as a next state, keeps those with
    ``||g - T g|| <= eps_prime``, and returns the largest weighted distance
    between two kept assignments.  Groups that are neither weighted nor
    reachable cannot change the residual or the distance and are skipped.

    With more searched groups than ``group_cap`` the routine falls back to
    fixed-point iteration from random starts, which only gives a lower bound
    (``method == "heuristic"``).

    Parameters
    ----------
    phi : Partition
        Aggregation whose piecewise-constant class is searched.
    data : Dataset, (DataDistribution, TabularMdp) or TransitionSource
        Defines the operator and the weighting of the norm.
    eps_prime, grid_res, group_cap : optional
        Threshold, value-grid resolution and exhaustive-search cap. Missing
        values use :func:`default_diagnostic_settings`, which needs ``eps_dct``.
    v_max : float, optional
        Upper end of the value grid; defaults to ``r_max / (1 - gamma)`` when
        the source carries an MDP.
    """
    src = TransitionSource.from_data(data, gamma)
    if phi.shape != src.shape:
        raise ParameterError("partition does not match data dimensions")
    if v_max is None:
        if src.mdp is None:
            raise ParameterError("v_max is required in empirical mode")
        v_max = src.mdp.v_max
    model = _group_model(phi, src)
    n_groups = model.groups.shape[0]
    if eps_prime is None or grid_res is None or group_cap is None:
        if eps_dct is None:
            raise ParameterError("eps_dct is needed to derive default diagnostic settings")
        d_eps, d_res, d_cap = default_diagnostic_settings(src, eps_dct, v_max, n_groups)
        eps_prime = d_eps if eps_prime is None else eps_prime
        grid_res = d_res if grid_res is None else grid_res
        group_cap = d_cap if group_cap is None else group_cap
    if not grid_res > 0:
        raise ParameterError("grid_res must be positive")
    if not eps_prime >= 0:
        raise ParameterError("eps_prime must be non-negative")
    w_sup = np.where(model.supported, model.weights, 0.0)

    if n_groups <= group_cap:
        grid = np.arange(0.0, v_max + 0.5 * grid_res, grid_res)
        grid = grid[grid <= v_max + 1e-12]
        digits, count = _kernels.grid_search(
            grid, model.weights, model.rbar, model.supported, model.next_probs,
            model.state_groups, src.gamma, eps_prime ** 2, max_points)
        pts = np.unique(grid[digits][:, model.supported], axis=0)
        spread = math.sqrt(_kernels.max_pairwise_sq_distance(pts, model.weights[model.supported]))
        return FixedPointDiagnostic(spread, "exhaustive", int(count), n_groups,
                                    truncated=count > max_points)

    if not allow_heuristic:
        raise CapacityError(f"{n_groups} groups exceed the exhaustive cap of {group_cap}")
    rng = np.random.default_rng(seed)
    starts = [np.zeros(n_groups), np.full(n_groups, v_max)]
    starts += list(rng.uniform(0.0, v_max, size=(restarts, n_groups)))
    tol = max(1e-12, 1e-3 * eps_prime)
    fixed = []
    for x in starts:
        for _ in range(100_000):
            nx = _residual(model, x, src.gamma)
            step = np.max(np.abs(nx - x))
            x = nx
            if step <= tol * (1 - src.gamma):
                break
        res = math.sqrt(float(np.sum(w_sup * (x - _residual(model, x, src.gamma)) ** 2)))
        if res <= eps_prime:
            fixed.append(x[model.supported])
    pts = np.array(fixed) if fixed else np.zeros((0, int(model.supported.sum())))
    spread = math.sqrt(_kernels.max_pairwise_sq_distance(pts, model.weights[model.supported]))
    return FixedPointDiagnostic(spread, "heuristic", len(fixed), n_groups)
