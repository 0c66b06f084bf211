"""Fitted Q-iteration over a piecewise-constant class."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .functions import Partition
from .operators import TransitionSource, _project


@dataclass
class FqiResult:
    values: np.ndarray
    last_step: float
    iterations: int
    steps: np.ndarray  # sup-norm change at every iteration


def run_fqi(phi: Partition, data, init, iterations: int, gamma: float | None = None) -> FqiResult:
    """Iterate the projected update from ``init``.

    The same data is reused at every iteration.  ``last_step`` is the sup-norm
    change of the final iteration (0 when ``iterations == 0``).
    """
    if iterations < 0:
        raise ParameterError("iterations must be non-negative")
    src = TransitionSource.from_data(data, gamma)
    f = src.check(init).copy()
    steps = np.zeros(iterations)
    for k in range(iterations):
        nxt, _ = _project(phi, f, src)
        steps[k] = np.max(np.abs(nxt - f))
        f = nxt
    last = float(steps[-1]) if iterations else 0.0
    return FqiResult(f, last, iterations, steps)
