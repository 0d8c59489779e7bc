"""Central finite-difference checks of directional derivatives."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .grid_fields import BoxGrid, CoeffField, pairing

STEPS = (1e-3, 1e-4, 1e-5, 1e-6)


@dataclass
class DirCheck:
    analytic: float
    fd: dict
    best_step: float
    rel_error: float


def directional_check(f: Callable[[CoeffField], float], x: CoeffField, v: CoeffField,
                      G: CoeffField, steps: Sequence[float] = STEPS) -> DirCheck:
    """Compare pairing(G, v) against (f(x+hv) - f(x-hv)) / 2h over a sweep of h; keep the best h."""
    an = pairing(G, v)
    fd = {h: (f(x + h * v) - f(x - h * v)) / (2 * h) for h in steps}
    errs = {h: abs(d - an) / (abs(an) + 1e-12) for h, d in fd.items()}
    best = min(errs, key=errs.get)
    return DirCheck(an, fd, best, errs[best])


def random_direction(grid: BoxGrid, rng: np.random.Generator, interior_only: bool = False) -> CoeffField:
    v = rng.standard_normal(grid.n + (3, 3))
    if interior_only:
        v[~grid.interior_mask()] = 0.0
    return CoeffField(grid, v / np.max(np.abs(v)))


def smooth_field(grid: BoxGrid, rng: np.random.Generator, scale: float = 1.0, modes: int = 2) -> CoeffField:
    """Random trigonometric field; entries are sums of a few low-frequency modes."""
    x = grid.coords()
    data = np.zeros(grid.n + (3, 3))
    for _ in range(modes):
        k = rng.uniform(0.5, 2.0, size=(3, 3, 3))
        ph = rng.uniform(0, 2 * np.pi, size=(3, 3))
        amp = rng.standard_normal((3, 3))
        data += amp * np.sin(np.einsum("...q,Zpq->...Zp", x, k) + ph)
    return CoeffField(grid, scale * data / modes)
