"""Candidate classes, output discretization, partitions and piecewise-constant fits."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ParameterError, ShapeError
from .mdp import _fmt

VALUE_SLACK = 1e-9


@dataclass(frozen=True)
class FunctionClass:
    """Ordered, labelled list of Q-tables sharing a value ceiling."""

    members: tuple
    labels: tuple
    v_max: float

    def __post_init__(self):
        mem = tuple(np.array(m, dtype=np.float64) for m in self.members)
        labels = tuple(str(x) for x in self.labels)
        if not mem:
            raise ParameterError("function class must be nonempty")
        if len(labels) != len(mem):
            raise ParameterError("one label per member required")
        if len(set(labels)) != len(labels):
            raise ParameterError("labels must be unique")
        if any("," in x or "\n" in x for x in labels):
            raise ParameterError("labels may not contain commas or newlines")
        shape = mem[0].shape
        for m in mem:
            if m.shape != shape or m.ndim != 2:
                raise ShapeError("members must share one (S, A) shape")
            if np.any(m < -VALUE_SLACK) or np.any(m > self.v_max + VALUE_SLACK):
                raise ParameterError("member entries must lie in [0, v_max]")
            m.setflags(write=False)
        object.__setattr__(self, "members", mem)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "v_max", float(self.v_max))

    @classmethod
    def from_list(cls, members: Sequence, v_max: float, labels=None) -> "FunctionClass":
        if labels is None:
            labels = [f"f{i}" for i in range(len(members))]
        return cls(tuple(members), tuple(labels), v_max)

    def __len__(self) -> int:
        return len(self.members)

    def __getitem__(self, i) -> np.ndarray:
        return self.members[i]

    @property
    def shape(self) -> tuple:
        return self.members[0].shape


@dataclass(frozen=True)
class Partition:
    """Aggregation of state-action pairs: ``group_of[s, a]`` is a group id.

    Ids are contiguous ``0..num_groups-1``, numbered in first-occurrence
    order when scanning pairs lexicographically.
    """

    group_of: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.group_of)
        if g.ndim != 2:
            raise ShapeError("group_of must be an (S, A) table")
        if not np.issubdtype(g.dtype, np.integer):
            raise ParameterError("group ids must be integers")
        g = _first_occurrence_labels(g.ravel()).reshape(g.shape)
        g.setflags(write=False)
        object.__setattr__(self, "group_of", g)

    @classmethod
    def singletons(cls, num_states: int, num_actions: int) -> "Partition":
        return cls(np.arange(num_states * num_actions).reshape(num_states, num_actions))

    @property
    def num_groups(self) -> int:
        return int(self.group_of.max()) + 1

    @property
    def shape(self) -> tuple:
        return self.group_of.shape

    @property
    def flat(self) -> np.ndarray:
        return self.group_of.ravel()

    def group_sums(self, table) -> np.ndarray:
        """Sum of an ``(S, A)`` table within each group."""
        return np.bincount(self.flat, weights=np.asarray(table, dtype=np.float64).ravel(),
                           minlength=self.num_groups)

    def broadcast(self, per_group) -> np.ndarray:
        """Expand a per-group vector back to an ``(S, A)`` table."""
        return np.asarray(per_group)[self.group_of]

    def same_relation(self, other: "Partition") -> bool:
        """True when both partitions induce the same equivalence relation."""
        return self.shape == other.shape and np.array_equal(self.group_of, other.group_of)


def _first_occurrence_labels(keys: np.ndarray) -> np.ndarray:
    _, first, inv = np.unique(keys, return_index=True, return_inverse=True)
    order = np.argsort(first, kind="stable")
    rank = np.empty_like(order)
    rank[order] = np.arange(order.shape[0])
    return rank[inv.ravel()].astype(np.int64)


def grid_points(eps_dct: float, v_max: float) -> np.ndarray:
    """Odd multiples ``(2k - 1) eps_dct`` for ``k = 1..ceil(v_max / (2 eps_dct))``."""
    k = int(math.ceil(v_max / (2.0 * eps_dct)))
    return (2.0 * np.arange(1, k + 1) - 1.0) * eps_dct


def discretize(f, eps_dct: float, v_max: float) -> np.ndarray:
    """Snap every value to the nearest grid point, ties going to the lower point."""
    if not (0.0 < eps_dct < v_max):
        raise ParameterError("eps_dct must lie in (0, v_max)")
    f = np.asarray(f, dtype=np.float64)
    num = int(math.ceil(v_max / (2.0 * eps_dct)))
    # values in ((2k-2)eps, 2k eps] go to point k; the shift keeps exact boundaries on the lower side
    k = np.ceil(f / (2.0 * eps_dct) - 1e-12)
    k = np.clip(k, 1, num)
    return (2.0 * k - 1.0) * eps_dct


def build_partition(f_bar, f_bar_prime) -> Partition:
    """Joint level sets of two (discretized) tables."""
    f_bar = np.asarray(f_bar, dtype=np.float64)
    f_bar_prime = np.asarray(f_bar_prime, dtype=np.float64)
    if f_bar.shape != f_bar_prime.shape or f_bar.ndim != 2:
        raise ShapeError("inputs must be (S, A) tables of the same shape")
    pairs = np.stack([f_bar.ravel(), f_bar_prime.ravel()], axis=1)
    _, inv = np.unique(pairs, axis=0, return_inverse=True)
    return Partition(inv.reshape(f_bar.shape))


def best_piecewise_approx(phi: Partition, q) -> tuple[np.ndarray, float]:
    """Best sup-norm fit of ``q`` by one constant per group, and its error."""
    q = np.asarray(q, dtype=np.float64)
    if q.shape != phi.shape:
        raise ShapeError("q does not match partition shape")
    G = phi.num_groups
    lo = np.full(G, np.inf)
    hi = np.full(G, -np.inf)
    np.minimum.at(lo, phi.flat, q.ravel())
    np.maximum.at(hi, phi.flat, q.ravel())
    mid = (lo + hi) / 2.0
    return phi.broadcast(mid), float(np.max(hi - lo) / 2.0)


def best_member_error(f_class: FunctionClass, q_star) -> tuple[int, float]:
    """Index of the member closest to ``q_star`` in sup norm, and that distance."""
    q_star = np.asarray(q_star, dtype=np.float64)
    dists = [float(np.max(np.abs(m - q_star))) for m in f_class.members]
    i = int(np.argmin(dists))
    return i, dists[i]


# ---------------------------------------------------------------------------
# text serialization
# ---------------------------------------------------------------------------

QTABLE_HEADER = "# bvft-qtable v1"
PARTITION_HEADER = "# bvft-partition v1"
CLASS_HEADER = "# bvft-function-class v1"


def _sa_rows(shape):
    S, A = shape
    return [(s, a) for s in range(S) for a in range(A)]


def dumps_qtable(q, label: str = "q") -> str:
    q = np.asarray(q, dtype=np.float64)
    lines = [QTABLE_HEADER, f"# num_states={q.shape[0]} num_actions={q.shape[1]} label={label}",
             "s,a,value"]
    lines += [f"{s},{a},{_fmt(q[s, a])}" for s, a in _sa_rows(q.shape)]
    return "\n".join(lines) + "\n"


def _read_meta(line: str) -> dict:
    return dict(kv.split("=", 1) for kv in line.lstrip("# ").split())


def loads_qtable(text: str) -> tuple[np.ndarray, str]:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0].strip() != QTABLE_HEADER:
        raise ValueError("not a bvft-qtable v1 document")
    meta = _read_meta(lines[1])
    q = np.zeros((int(meta["num_states"]), int(meta["num_actions"])))
    for ln in lines[3:]:
        s, a, v = ln.split(",")
        q[int(s), int(a)] = float(v)
    return q, meta["label"]


def dumps_partition(phi: Partition) -> str:
    S, A = phi.shape
    lines = [PARTITION_HEADER, f"# num_states={S} num_actions={A} num_groups={phi.num_groups}",
             "s,a,group"]
    lines += [f"{s},{a},{int(phi.group_of[s, a])}" for s, a in _sa_rows(phi.shape)]
    return "\n".join(lines) + "\n"


def loads_partition(text: str) -> Partition:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0].strip() != PARTITION_HEADER:
        raise ValueError("not a bvft-partition v1 document")
    meta = _read_meta(lines[1])
    g = np.zeros((int(meta["num_states"]), int(meta["num_actions"])), dtype=np.int64)
    for ln in lines[3:]:
        s, a, k = ln.split(",")
        g[int(s), int(a)] = int(k)
    return Partition(g)


def dumps_function_class(fc: FunctionClass) -> str:
    S, A = fc.shape
    lines = [CLASS_HEADER, f"# num_states={S} num_actions={A} count={len(fc)} v_max={_fmt(fc.v_max)}",
             "s,a," + ",".join(fc.labels)]
    for s, a in _sa_rows(fc.shape):
        lines.append(f"{s},{a}," + ",".join(_fmt(m[s, a]) for m in fc.members))
    return "\n".join(lines) + "\n"


def loads_function_class(text: str) -> FunctionClass:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0].strip() != CLASS_HEADER:
        raise ValueError("not a bvft-function-class v1 document")
    meta = _read_meta(lines[1])
    S, A, k = int(meta["num_states"]), int(meta["num_actions"]), int(meta["count"])
    labels = lines[2].split(",")[2:]
    vals = np.zeros((k, S, A))
    for ln in lines[3:]:
        parts = ln.split(",")
        s, a = int(parts[0]), int(parts[1])
        vals[:, s, a] = [float(x) for x in parts[2:]]
    return FunctionClass(tuple(vals), tuple(labels), float(meta["v_max"]))


def save_function_class(fc: FunctionClass, path) -> None:
    Path(path).write_text(dumps_function_class(fc))


def load_function_class(path) -> FunctionClass:
    return loads_function_class(Path(path).read_text())


def save_partition(phi: Partition, path) -> None:
    Path(path).write_text(dumps_partition(phi))


def load_partition(path) -> Partition:
    return loads_partition(Path(path).read_text())
