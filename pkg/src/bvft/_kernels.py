"""Hot inner loops, compiled with numba when available.

Every kernel has a pure-numpy twin with the identical signature.  The active
implementation is chosen once at import time: set ``BVFT_DISABLE_NUMBA=1``
(or run without numba installed) to force the numpy path.  Both paths are
exercised by the test suite and compared in ``benchmarks/bench_kernels.py``.
"""

import os

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

_DISABLED = os.environ.get("BVFT_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes"}
NUMBA_AVAILABLE = numba is not None
BACKEND = "numba" if (NUMBA_AVAILABLE and not _DISABLED) else "numpy"


# ---------------------------------------------------------------------------
# pure numpy
# ---------------------------------------------------------------------------

def _sa_target_sums_np(sa_idx, rewards, s_next, v_next, gamma, n_sa):
    targets = rewards + gamma * v_next[s_next]
    return np.bincount(sa_idx, weights=targets, minlength=n_sa).astype(np.float64)


def _grid_search_np(grid, weights, rbar, supported, next_probs, state_groups,
                    gamma, eps_sq, max_accept):
    m = grid.shape[0]
    n_groups = weights.shape[0]
    total = m ** n_groups
    chunk = 1 << 18
    powers = m ** np.arange(n_groups - 1, -1, -1, dtype=np.int64)
    sup = np.flatnonzero(supported)
    eps_sq = eps_sq * (1.0 + 1e-9)
    out = np.empty((max_accept, n_groups), dtype=np.int32)
    count = 0
    for start in range(0, total, chunk):
        flat = np.arange(start, min(start + chunk, total), dtype=np.int64)
        digits = (flat[:, None] // powers[None, :]) % m
        x = grid[digits]
        v = x[:, state_groups].max(axis=2)
        b = rbar[sup][None, :] + gamma * v @ next_probs[sup].T
        res = ((x[:, sup] - b) ** 2 * weights[sup][None, :]).sum(axis=1)
        hit = digits[res <= eps_sq]
        take = min(hit.shape[0], max_accept - count)
        out[count:count + take] = hit[:take]
        count += hit.shape[0]
    return out[:min(count, max_accept)], count


def _max_pairwise_sq_distance_np(points, weights):
    k = points.shape[0]
    best = 0.0
    block = 512
    for i in range(0, k, block):
        diff = points[i:i + block, None, :] - points[None, :, :]
        d = (diff * diff * weights).sum(axis=2)
        if d.size:
            best = max(best, float(d.max()))
    return best


def _rollout_returns_np(cdf, rewards, start_states, uniforms, gamma):
    n, horizon = uniforms.shape
    n_states = cdf.shape[0]
    s = start_states.copy()
    ret = np.zeros(n)
    disc = 1.0
    for t in range(horizon):
        ret += disc * rewards[s]
        s = np.minimum((cdf[s] <= uniforms[:, t, None]).sum(axis=1), n_states - 1)
        disc *= gamma
    return ret


# ---------------------------------------------------------------------------
# numba
# ---------------------------------------------------------------------------

if NUMBA_AVAILABLE:

    @numba.njit(cache=True)
    def _sa_target_sums_nb(sa_idx, rewards, s_next, v_next, gamma, n_sa):
        out = np.zeros(n_sa)
        for i in range(sa_idx.shape[0]):
            out[sa_idx[i]] += rewards[i] + gamma * v_next[s_next[i]]
        return out

    @numba.njit(cache=True)
    def _grid_search_nb(grid, weights, rbar, supported, next_probs, state_groups,
                        gamma, eps_sq, max_accept):
        m = grid.shape[0]
        n_groups = weights.shape[0]
        n_next = state_groups.shape[0]
        n_act = state_groups.shape[1]
        eps_sq = eps_sq * (1.0 + 1e-9)
        out = np.empty((max_accept, n_groups), dtype=np.int32)
        digits = np.zeros(n_groups, dtype=np.int64)
        x = np.empty(n_groups)
        v = np.empty(n_next)
        for j in range(n_groups):
            x[j] = grid[0]
        total = 1
        for _ in range(n_groups):
            total *= m
        count = 0
        for _ in range(total):
            for s in range(n_next):
                best = x[state_groups[s, 0]]
                for a in range(1, n_act):
                    val = x[state_groups[s, a]]
                    if val > best:
                        best = val
                v[s] = best
            res = 0.0
            for j in range(n_groups):
                if not supported[j]:
                    continue
                b = rbar[j]
                for s in range(n_next):
                    b += gamma * next_probs[j, s] * v[s]
                d = x[j] - b
                res += weights[j] * d * d
                if res > eps_sq:
                    break
            if res <= eps_sq:
                if count < max_accept:
                    for j in range(n_groups):
                        out[count, j] = digits[j]
                count += 1
            # odometer step, last digit fastest
            j = n_groups - 1
            while j >= 0:
                digits[j] += 1
                if digits[j] < m:
                    x[j] = grid[digits[j]]
                    break
                digits[j] = 0
                x[j] = grid[0]
                j -= 1
        kept = count if count < max_accept else max_accept
        return out[:kept], count

    @numba.njit(cache=True)
    def _max_pairwise_sq_distance_nb(points, weights):
        k = points.shape[0]
        g = points.shape[1]
        best = 0.0
        for i in range(k):
            for j in range(i + 1, k):
                d = 0.0
                for c in range(g):
                    diff = points[i, c] - points[j, c]
                    d += weights[c] * diff * diff
                if d > best:
                    best = d
        return best

    @numba.njit(cache=True)
    def _rollout_returns_nb(cdf, rewards, start_states, uniforms, gamma):
        n = uniforms.shape[0]
        horizon = uniforms.shape[1]
        n_states = cdf.shape[0]
        ret = np.zeros(n)
        for i in range(n):
            s = start_states[i]
            disc = 1.0
            acc = 0.0
            for t in range(horizon):
                acc += disc * rewards[s]
                nxt = np.searchsorted(cdf[s], uniforms[i, t], side="right")
                s = nxt if nxt < n_states else n_states - 1
                disc *= gamma
            ret[i] = acc
        return ret


NUMPY_KERNELS = {
    "sa_target_sums": _sa_target_sums_np,
    "grid_search": _grid_search_np,
    "max_pairwise_sq_distance": _max_pairwise_sq_distance_np,
    "rollout_returns": _rollout_returns_np,
}

if NUMBA_AVAILABLE:
    NUMBA_KERNELS = {
        "sa_target_sums": _sa_target_sums_nb,
        "grid_search": _grid_search_nb,
        "max_pairwise_sq_distance": _max_pairwise_sq_distance_nb,
        "rollout_returns": _rollout_returns_nb,
    }
else:  # pragma: no cover
    NUMBA_KERNELS = {}

_ACTIVE = NUMBA_KERNELS if BACKEND == "numba" else NUMPY_KERNELS


def sa_target_sums(sa_idx, rewards, s_next, v_next, gamma, n_sa):
    """Per state-action sums of ``r + gamma * v_next[s']`` over a batch of transitions."""
    return _ACTIVE["sa_target_sums"](
        np.ascontiguousarray(sa_idx, dtype=np.int64),
        np.ascontiguousarray(rewards, dtype=np.float64),
        np.ascontiguousarray(s_next, dtype=np.int64),
        np.ascontiguousarray(v_next, dtype=np.float64),
        float(gamma), int(n_sa),
    )


def grid_search(grid, weights, rbar, supported, next_probs, state_groups,
                gamma, eps_sq, max_accept):
    """Enumerate every grid assignment of group values and keep the near-fixed points.

    Returns ``(digits, count)``: grid indices of up to ``max_accept`` accepted
    assignments, and the total number accepted (may exceed ``max_accept``).
    The threshold gets a relative slack of 1e-9 so that assignments sitting
    exactly on it are accepted by both backends despite different summation order.
    """
    return _ACTIVE["grid_search"](
        np.ascontiguousarray(grid, dtype=np.float64),
        np.ascontiguousarray(weights, dtype=np.float64),
        np.ascontiguousarray(rbar, dtype=np.float64),
        np.ascontiguousarray(supported, dtype=np.bool_),
        np.ascontiguousarray(next_probs, dtype=np.float64),
        np.ascontiguousarray(state_groups, dtype=np.int64),
        float(gamma), float(eps_sq), int(max_accept),
    )


def max_pairwise_sq_distance(points, weights):
    """Largest weighted squared distance between any two rows of ``points``."""
    points = np.ascontiguousarray(points, dtype=np.float64)
    if points.shape[0] < 2:
        return 0.0
    return float(_ACTIVE["max_pairwise_sq_distance"](
        points, np.ascontiguousarray(weights, dtype=np.float64)))


def rollout_returns(cdf, rewards, start_states, uniforms, gamma):
    """Truncated discounted returns of trajectories driven by pre-drawn uniforms."""
    return _ACTIVE["rollout_returns"](
        np.ascontiguousarray(cdf, dtype=np.float64),
        np.ascontiguousarray(rewards, dtype=np.float64),
        np.ascontiguousarray(start_states, dtype=np.int64),
        np.ascontiguousarray(uniforms, dtype=np.float64),
        float(gamma),
    )
