"""One-dimensional Bak-Sneppen model and its random-extinction control.

In the extremal model the least fit species on a ring is replaced together
with its two neighbours.  The control replaces a uniformly chosen site
instead, removing the selection feedback.  Avalanches are maximal runs of
steps whose replaced (pre-replacement) fitness lies below a threshold f0;
in the extremal model that value is the global minimum.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _kernels
from .exceptions import ConfigError
from .rng import RandomStream

__all__ = [
    "AvalancheRecord",
    "BSRun",
    "as_lattice",
    "bs_step",
    "bs_step_random_extinction",
    "detect_avalanches",
    "run_bak_sneppen",
]


def as_lattice(fitness) -> np.ndarray:
    arr = np.asarray(fitness, dtype=np.float64)
    if arr.ndim != 1 or arr.size < 3:
        raise ValueError("lattice needs at least 3 sites")
    if (arr < 0).any() or (arr >= 1).any():
        raise ValueError("fitness values must lie in [0, 1)")
    return arr


def _replace(f: np.ndarray, i: int, rng: RandomStream) -> None:
    l = f.size
    f[i] = rng.uniform()
    f[(i - 1) % l] = rng.uniform()
    f[(i + 1) % l] = rng.uniform()


def bs_step(lattice, rng: RandomStream):
    """Replace the minimum site and its neighbours (draws: site, left, right).

    Returns ``(new_lattice, min_index, min_value)`` with the location and
    value from before the replacement; ties go to the lowest index.
    """
    f = as_lattice(lattice).copy()
    i = int(np.argmin(f))
    v = float(f[i])
    _replace(f, i, rng)
    return f, i, v


def bs_step_random_extinction(lattice, rng: RandomStream) -> np.ndarray:
    """As :func:`bs_step` but the replaced site is drawn uniformly first."""
    f = as_lattice(lattice).copy()
    _replace(f, rng.index(f.size), rng)
    return f


@dataclass
class AvalancheRecord:
    sizes: np.ndarray
    threshold: float


def detect_avalanches(values, threshold: float = 0.6) -> AvalancheRecord:
    """Lengths of maximal runs with ``value < threshold``."""
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must lie in (0, 1), got {threshold}")
    below = np.asarray(values, dtype=np.float64) < threshold
    if below.size == 0:
        return AvalancheRecord(np.zeros(0, dtype=np.int64), threshold)
    edges = np.diff(np.concatenate(([False], below, [False])).astype(np.int8))
    starts = np.flatnonzero(edges == 1)
    ends = np.flatnonzero(edges == -1)
    return AvalancheRecord((ends - starts).astype(np.int64), threshold)


@dataclass
class BSRun:
    """Replaced-site fitness and index for every step, plus the final lattice."""

    values: np.ndarray
    sites: np.ndarray
    lattice: np.ndarray = field(repr=False)
    random_extinction: bool = False

    def avalanches(self, threshold: float = 0.6) -> AvalancheRecord:
        return detect_avalanches(self.values, threshold)


def run_bak_sneppen(l: int = 200, steps: int = 1_000_000, seed: int = 1,
                    random_extinction: bool = False,
                    rng: Optional[RandomStream] = None) -> BSRun:
    """Compiled run; identical draws to repeated :func:`bs_step` calls.

    The initial lattice takes the first ``l`` draws of the stream.
    """
    if l < 3:
        raise ConfigError(f"lattice size must be at least 3, got {l}")
    if steps < 1:
        raise ConfigError(f"steps must be positive, got {steps}")
    rng = rng or RandomStream(seed)
    f = rng.uniforms(l)
    values = np.empty(steps, dtype=np.float64)
    sites = np.empty(steps, dtype=np.int32)
    done = 0
    while done < steps:
        buf, pos = rng.reserve(4)
        k, pos = _kernels.bak_sneppen_steps(
            f, random_extinction, steps - done, buf, pos, values, sites, done
        )
        rng.commit(pos)
        done += k
    return BSRun(values, sites, f, random_extinction)
