"""Thurner model of Schumpeterian product dynamics.

Products ``0..n-1`` either exist (1) or not (0).  Ordered pairs of existing
products create or destroy a third product through two sparse 0/1 tensors.
Each time step applies the net tensor update synchronously, then one of two
innovation rules: the original random flip, or abolition of the least fit
existing product followed by a rare random creation.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import _kernels
from .exceptions import ConfigError, ResourceError
from .rng import RandomStream

__all__ = [
    "Rule2",
    "InteractionTensor",
    "ModelConfig",
    "ModelState",
    "StepOutcome",
    "RunResult",
    "as_state",
    "as_fitness",
    "admissible_triples",
    "build_random_tensor",
    "compute_delta",
    "apply_rule1",
    "apply_innovation_flip",
    "apply_fitness_extinction",
    "init_model",
    "step",
    "advance",
    "run",
]


class Rule2(str, enum.Enum):
    RANDOM_FLIP = "random-flip"
    FITNESS = "fitness"


def as_state(states, n: Optional[int] = None) -> np.ndarray:
    """Validate a product state vector and return it as an int8 array."""
    arr = np.asarray(states)
    if arr.ndim != 1:
        raise ValueError("state vector must be one-dimensional")
    if n is not None and arr.size != n:
        raise ValueError(f"state vector has length {arr.size}, expected {n}")
    if arr.size and not np.isin(arr, (0, 1)).all():
        raise ValueError("state entries must be 0 or 1")
    return arr.astype(np.int8)


def as_fitness(values, n: Optional[int] = None) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError("fitness table must be one-dimensional")
    if n is not None and arr.size != n:
        raise ValueError(f"fitness table has length {arr.size}, expected {n}")
    if arr.size and ((arr < 0).any() or (arr >= 1).any()):
        raise ValueError("fitness values must lie in [0, 1)")
    return arr


@dataclass(frozen=True, eq=False)
class InteractionTensor:
    """Set of ordered triples ``(i, j, k)`` whose tensor entry equals 1.

    Triples are stored sorted, as an ``(m, 3)`` int64 array.
    """

    n: int
    triples: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.triples, dtype=np.int64).reshape(-1, 3)
        if self.n < 1:
            raise ValueError("n must be positive")
        if t.size:
            if t.min() < 0 or t.max() >= self.n:
                raise ValueError(f"triple index outside [0, {self.n})")
            i, j, k = t.T
            if ((i == j) | (k == i) | (k == j)).any():
                raise ValueError("triples need i != j and k not in {i, j}")
            t = t[np.lexsort((t[:, 2], t[:, 1], t[:, 0]))]
            if (np.diff(t, axis=0) == 0).all(axis=1).any():
                raise ValueError("duplicate triple")
        t.setflags(write=False)
        object.__setattr__(self, "triples", t)

    @classmethod
    def from_triples(cls, n: int, triples=()) -> "InteractionTensor":
        return cls(n, np.array(list(triples), dtype=np.int64).reshape(-1, 3))

    def __len__(self) -> int:
        return self.triples.shape[0]

    def __contains__(self, triple) -> bool:
        return bool((self.triples == np.asarray(triple)).all(axis=1).any())

    def __eq__(self, other) -> bool:
        if not isinstance(other, InteractionTensor):
            return NotImplemented
        return self.n == other.n and np.array_equal(self.triples, other.triples)

    def as_set(self) -> set:
        return {tuple(map(int, t)) for t in self.triples}

    def dense(self) -> np.ndarray:
        out = np.zeros((self.n,) * 3, dtype=np.int8)
        if len(self):
            out[tuple(self.triples.T)] = 1
        return out


def admissible_triples(n: int) -> np.ndarray:
    """All ``(i, j, k)`` with ``i != j`` and ``k`` not in ``{i, j}``, lexicographic."""
    i, j, k = np.meshgrid(np.arange(n), np.arange(n), np.arange(n), indexing="ij")
    keep = (i != j) & (k != i) & (k != j)
    return np.stack([i[keep], j[keep], k[keep]], axis=1).astype(np.int64)


def build_random_tensor(n: int, density: float, rng: RandomStream) -> InteractionTensor:
    """Include each admissible triple independently with probability ``density``.

    Consumes one draw per admissible triple, in lexicographic order.
    """
    if n < 3:
        raise ConfigError(f"n must be at least 3 to admit any triple, got {n}")
    if not 0.0 <= density <= 1.0:
        raise ConfigError(f"density must lie in [0, 1], got {density}")
    cand = admissible_triples(n)
    u = rng.uniforms(cand.shape[0])
    return InteractionTensor(n, cand[u < density])


def _check_shared(state, alpha_plus, alpha_minus):
    n = state.size
    if alpha_plus.n != n or alpha_minus.n != n:
        raise ValueError(
            f"dimension mismatch: state {n}, tensors {alpha_plus.n}/{alpha_minus.n}"
        )


def compute_delta(k: int, state, alpha_plus: InteractionTensor,
                  alpha_minus: InteractionTensor) -> int:
    """Net creation count for product ``k`` over ordered existing pairs."""
    state = as_state(state)
    _check_shared(state, alpha_plus, alpha_minus)
    if not 0 <= k < state.size:
        raise IndexError(f"product index {k} outside [0, {state.size})")
    total = 0
    for tensor, sign in ((alpha_plus, 1), (alpha_minus, -1)):
        t = tensor.triples[tensor.triples[:, 2] == k]
        total += sign * int((state[t[:, 0]] * state[t[:, 1]]).sum())
    return total


def _deltas(state: np.ndarray, alpha_plus, alpha_minus) -> np.ndarray:
    n = state.size
    out = np.zeros(n, dtype=np.int64)
    for tensor, sign in ((alpha_plus, 1), (alpha_minus, -1)):
        t = tensor.triples
        if len(t):
            active = (state[t[:, 0]] * state[t[:, 1]]).astype(np.int64)
            out += sign * np.bincount(t[:, 2], weights=active, minlength=n).astype(np.int64)
    return out


def apply_rule1(state, alpha_plus: InteractionTensor,
                alpha_minus: InteractionTensor) -> np.ndarray:
    """Synchronous net update; every delta is computed from the input state."""
    state = as_state(state)
    _check_shared(state, alpha_plus, alpha_minus)
    delta = _deltas(state, alpha_plus, alpha_minus)
    out = state.copy()
    out[delta > 0] = 1
    out[delta < 0] = 0
    return out


def apply_innovation_flip(state, p: float, rng: RandomStream) -> np.ndarray:
    """With probability ``p`` flip one uniformly chosen product."""
    out = as_state(state).copy()
    if rng.bernoulli(p):
        j = rng.index(out.size)
        out[j] = 1 - out[j]
    return out


def apply_fitness_extinction(state, fitness, p: float, rng: RandomStream):
    """Abolish the least fit existing product, then maybe create a new one.

    Ties on fitness go to the lowest index.  The random creation sets the
    chosen product to 1 with a fresh fitness even if it already exists.
    Draw order: Bernoulli trial, index, fitness.
    """
    out = as_state(state).copy()
    fit = as_fitness(fitness, out.size).copy()
    alive = np.flatnonzero(out)
    if alive.size:
        out[alive[np.argmin(fit[alive])]] = 0
    if rng.bernoulli(p):
        j = rng.index(out.size)
        fit[j] = rng.uniform()
        out[j] = 1
    return out, fit


@dataclass
class ModelConfig:
    n: int = 100
    p: float = 0.0002
    density_plus: float = 0.1
    density_minus: float = 0.1
    rule2_variant: Rule2 = Rule2.RANDOM_FLIP
    seed: int = 1
    initial_diversity: Optional[int] = None
    track_product: int = 0

    def __post_init__(self):
        self.rule2_variant = Rule2(self.rule2_variant)
        if self.initial_diversity is None:
            self.initial_diversity = max(1, self.n // 2)
        self.validate()

    def validate(self) -> None:
        if int(self.n) != self.n or self.n < 3:
            raise ConfigError(f"n must be an integer >= 3, got {self.n}")
        if not 0.0 <= self.p <= 1.0:
            raise ConfigError(f"p must lie in [0, 1], got {self.p}")
        for name in ("density_plus", "density_minus"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1], got {v}")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError(f"seed must be an unsigned 64-bit integer, got {self.seed}")
        if not 0 < self.initial_diversity <= self.n:
            raise ConfigError(
                f"initial_diversity must lie in (0, n], got {self.initial_diversity}"
            )
        if not 0 <= self.track_product < self.n:
            raise ConfigError(f"track_product must lie in [0, n), got {self.track_product}")


@dataclass
class ModelState:
    """Mutable simulation state: products, fitness, frozen tensors."""

    config: ModelConfig
    state: np.ndarray
    fitness: np.ndarray
    alpha_plus: InteractionTensor
    alpha_minus: InteractionTensor
    t: int = 0

    @property
    def diversity(self) -> int:
        return int(self.state.sum())


@dataclass
class StepOutcome:
    diversity: int
    flipped_by_rule1: int
    extinct_product: Optional[int] = None
    innovated_product: Optional[int] = None


@dataclass
class RunResult:
    diversity: np.ndarray
    tracked: np.ndarray
    model: ModelState = field(repr=False)


def init_model(config: ModelConfig) -> tuple[ModelState, RandomStream]:
    """Build tensors, initial products and fitness from the config seed.

    Draw order: alpha+ triples, alpha- triples, one draw per product for
    the initial selection (the ``initial_diversity`` smallest draws exist),
    one fitness draw per product.
    """
    rng = RandomStream(config.seed)
    n = config.n
    plus = build_random_tensor(n, config.density_plus, rng)
    minus = build_random_tensor(n, config.density_minus, rng)
    keys = rng.uniforms(n)
    state = np.zeros(n, dtype=np.int8)
    state[np.argsort(keys, kind="stable")[:config.initial_diversity]] = 1
    fitness = rng.uniforms(n)
    return ModelState(config, state, fitness, plus, minus), rng


def step(model: ModelState, rng: RandomStream) -> StepOutcome:
    """One time step, updating ``model`` in place (reference implementation)."""
    cfg = model.config
    before = model.state
    after = apply_rule1(before, model.alpha_plus, model.alpha_minus)
    flipped = int((after != before).sum())
    extinct = innovated = None
    if cfg.rule2_variant is Rule2.RANDOM_FLIP:
        if rng.bernoulli(cfg.p):
            innovated = rng.index(cfg.n)
            after[innovated] = 1 - after[innovated]
    else:
        fitness = model.fitness
        for k in np.flatnonzero((after == 1) & (before == 0)):
            fitness[k] = rng.uniform()
        alive = np.flatnonzero(after)
        if alive.size:
            extinct = int(alive[np.argmin(fitness[alive])])
            after[extinct] = 0
        if rng.bernoulli(cfg.p):
            innovated = rng.index(cfg.n)
            fitness[innovated] = rng.uniform()
            after[innovated] = 1
    model.state = after
    model.t += 1
    return StepOutcome(int(after.sum()), flipped, extinct, innovated)


def _kernel_args(model: ModelState):
    return (
        model.alpha_plus.triples,
        model.alpha_minus.triples,
        _kernels.FITNESS_EXTINCTION
        if model.config.rule2_variant is Rule2.FITNESS
        else _kernels.RANDOM_FLIP,
        float(model.config.p),
        int(model.config.track_product),
    )


def advance(model: ModelState, rng: RandomStream, steps: int,
            out_div: Optional[np.ndarray] = None,
            out_track: Optional[np.ndarray] = None):
    """Compiled equivalent of ``steps`` calls to :func:`step`.

    Returns ``(diversity, tracked_state)`` arrays with one entry per step.
    """
    plus, minus, variant, p, track = _kernel_args(model)
    if out_div is None:
        out_div = np.empty(steps, dtype=np.int32)
    if out_track is None:
        out_track = np.empty(steps, dtype=np.int8)
    need = model.config.n + 3
    done = 0
    while done < steps:
        buf, pos = rng.reserve(need)
        k, pos = _kernels.thurner_steps(
            model.state, model.fitness, plus, minus, variant, p, track,
            steps - done, buf, pos, out_div, out_track, done,
        )
        rng.commit(pos)
        done += k
    model.t += steps
    return out_div[:steps], out_track[:steps]


RECORD_BYTES = 5  # int32 diversity + int8 tracked state
DEFAULT_MEMORY_BUDGET = 1 << 30
DEFAULT_CHUNK = 1 << 18

Sink = Callable[[int, np.ndarray, np.ndarray], None]


def run(config: ModelConfig, steps: int, sink: Optional[Sink] = None,
        chunk: int = DEFAULT_CHUNK,
        memory_budget: int = DEFAULT_MEMORY_BUDGET) -> Optional[RunResult]:
    """Simulate ``steps`` steps from a fresh model.

    Without a sink the whole series is returned in a :class:`RunResult`.
    With a sink, ``sink(t0, diversity, tracked)`` receives consecutive chunks
    (``t0`` is the 1-based step index of the first record) and nothing is
    buffered beyond one chunk.
    """
    if int(steps) != steps or steps < 1:
        raise ConfigError(f"steps must be a positive integer, got {steps}")
    steps = int(steps)
    if sink is None and steps * RECORD_BYTES > memory_budget:
        raise ResourceError(
            f"{steps} steps need {steps * RECORD_BYTES} bytes, budget is "
            f"{memory_budget}; pass a sink to stream records"
        )
    model, rng = init_model(config)
    if sink is None:
        div, tracked = advance(model, rng, steps)
        return RunResult(div, tracked, model)
    div_buf = np.empty(chunk, dtype=np.int32)
    tr_buf = np.empty(chunk, dtype=np.int8)
    done = 0
    while done < steps:
        k = min(chunk, steps - done)
        div, tracked = advance(model, rng, k, div_buf, tr_buf)
        sink(done + 1, div, tracked)
        done += k
    return None
