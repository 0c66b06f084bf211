"""Compare the numba kernels against their numpy twins on representative inputs.

    python3 benchmarks/bench_kernels.py --repeat 5

Each kernel is run once to trigger compilation, then timed; outputs of the
two backends are checked for agreement before timing is reported.
"""

import argparse
import time

import numpy as np

from bvft import _kernels
from bvft.data import sample_dataset
from bvft.operators import TransitionSource
from bvft.scenarios import make_fig2, make_random_exploratory
from bvft.tournament import _group_model


def _cases(n_samples, seed):
    rng = np.random.default_rng(seed)
    b = make_random_exploratory(50, 4, 0.9, 0.3, seed)
    d = sample_dataset(b.mdp, b.mu, n_samples, seed)
    v = rng.uniform(0, 10, size=50)
    yield "sa_target_sums", (d.sa_index, d.r, d.s_next, v, 0.9, 200)

    fig2 = make_fig2()
    src = TransitionSource.from_data((fig2.mu, fig2.mdp))
    m = _group_model(fig2.phi, src)
    grid = np.arange(0.0, 10.0 + 1e-9, 0.5)
    yield "grid_search", (grid, m.weights, m.rbar, m.supported, m.next_probs,
                          m.state_groups.astype(np.int64), 0.9, 0.01, 100_000)

    pts = rng.uniform(0, 10, size=(3000, 6))
    yield "max_pairwise_sq_distance", (pts, rng.uniform(0, 1, size=6))

    S = 50
    rows = rng.dirichlet(np.ones(S), size=S)
    cdf = np.cumsum(rows, axis=1)
    cdf[:, -1] = 1.0
    yield "rollout_returns", (cdf, rng.uniform(0, 1, size=S), rng.integers(0, S, size=20_000),
                              rng.random((20_000, 132)), 0.9)


def _time(fn, args, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def _same(a, b):
    if isinstance(a, tuple):
        return all(_same(x, y) for x, y in zip(a, b))
    return np.allclose(np.asarray(a, dtype=float), np.asarray(b, dtype=float), rtol=1e-9, atol=1e-9)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--samples", type=int, default=1_000_000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    if not _kernels.NUMBA_AVAILABLE:
        print("numba is not installed; nothing to compare")
        return 1
    print(f"{'kernel':<26}{'numpy [s]':>12}{'numba [s]':>12}{'speedup':>10}  agree")
    for name, kargs in _cases(args.samples, args.seed):
        nb = _kernels.NUMBA_KERNELS[name]
        npk = _kernels.NUMPY_KERNELS[name]
        nb(*kargs)  # compile
        t_np, out_np = _time(npk, kargs, args.repeat)
        t_nb, out_nb = _time(nb, kargs, args.repeat)
        print(f"{name:<26}{t_np:>12.4f}{t_nb:>12.4f}{t_np / t_nb:>10.1f}  {_same(out_np, out_nb)}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
