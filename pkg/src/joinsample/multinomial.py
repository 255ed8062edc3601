"""Randomness kernels: weighted reservoir, online multinomial sampler, inversion.

The online multinomial sampler draws ``n`` independent weighted picks (with
replacement) from a stream seen exactly once, in memory proportional to
``n``. A weighted reservoir keeps the ``n`` items with the largest
Efraimidis-Spirakis keys ``u ** (1 / w)``; sorted by key, its entries are
successive one-item weighted draws from the population minus the entries
before them. The sampler then walks the draws: with probability
``W_M / W_P`` (weight already chosen over total weight) a draw repeats a
previously chosen item, otherwise it takes the next reservoir entry.
"""
from __future__ import annotations

import bisect
import heapq
import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Optional, Sequence

import numpy as np

from .errors import EmptyDistinctSet, EmptyPopulation, ReservoirExhausted, TotalMismatch


def make_rng(seed) -> np.random.Generator:
    """Counter-based (Philox) generator; ``seed`` may be an int or a SeedSequence."""
    if isinstance(seed, np.random.SeedSequence):
        return np.random.Generator(np.random.Philox(seed))
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed) & (2**64 - 1))))


def spawn(seed, k: int) -> list[np.random.SeedSequence]:
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(int(seed) & (2**64 - 1))
    return ss.spawn(k)


class Uniforms:
    """Buffered U[0, 1) draws from a generator, consumed one at a time."""

    def __init__(self, rng: np.random.Generator, block: int = 4096):
        self.rng = rng
        self.block = block
        self._buf: list[float] = []
        self._pos = 0

    def __call__(self) -> float:
        if self._pos == len(self._buf):
            self._buf = self.rng.random(self.block).tolist()
            self._pos = 0
        u = self._buf[self._pos]
        self._pos += 1
        return u

    def open(self) -> float:
        """U(0, 1]"""
        return 1.0 - self()


@dataclass
class ReservoirState:
    """Items with the ``capacity`` largest keys.

    Keys are kept as logarithms, ``log(u) / w``, which orders items exactly
    like ``u ** (1 / w)`` without underflow. Equal keys favour the earlier
    stream item.
    """

    capacity: int
    uniforms: Uniforms
    jumps: bool = True
    heap: list = field(default_factory=list)   # (log_key, -ordinal, item, weight)
    total_weight: float = 0.0                  # W_P
    skip_weight: float = 0.0
    offered: int = 0

    @property
    def threshold(self) -> float:
        """Log of the smallest key held (or -inf while not full)."""
        return self.heap[0][0] if len(self.heap) >= self.capacity else -math.inf

    def entries(self) -> list[tuple[Any, float, float]]:
        """``(item, weight, log_key)`` by descending key."""
        ordered = sorted(self.heap, reverse=True)
        return [(item, w, k) for k, _, item, w in ordered]

    def _draw_jump(self) -> float:
        return math.log(self.uniforms.open()) / self.heap[0][0] if self.heap[0][0] < 0 else math.inf


def reservoir_offer(state: ReservoirState, item, weight: float) -> ReservoirState:
    """Considers one stream item; zero-weight items are ignored entirely."""
    if not weight > 0:
        return state
    ordinal = state.offered
    state.offered += 1
    state.total_weight += weight
    heap = state.heap
    if len(heap) < state.capacity:
        heapq.heappush(heap, (math.log(state.uniforms.open()) / weight, -ordinal, item, weight))
        if state.jumps and len(heap) == state.capacity:
            state.skip_weight = state._draw_jump()
        return state
    if state.jumps:
        state.skip_weight -= weight
        if state.skip_weight > 0:
            return state
        # key conditioned to beat the current threshold: u ~ U(T^w, 1)
        lo = math.exp(weight * heap[0][0])
        u = lo + (1.0 - lo) * state.uniforms.open()
        key = math.log(u) / weight if u < 1.0 else 0.0
        heapq.heapreplace(heap, (key, -ordinal, item, weight))
        state.skip_weight = state._draw_jump()
        return state
    key = math.log(state.uniforms.open()) / weight
    if (key, -ordinal) > heap[0][:2]:
        heapq.heapreplace(heap, (key, -ordinal, item, weight))
    return state


class DistinctSet:
    """Distinct previously selected items with a growable cumulative weight."""

    def __init__(self):
        self.items: list = []
        self.weights: list[float] = []
        self.cumulative: list[float] = []

    def __len__(self):
        return len(self.items)

    @property
    def total(self) -> float:
        return self.cumulative[-1] if self.cumulative else 0.0

    def add(self, item, weight: float) -> None:
        self.items.append(item)
        self.weights.append(weight)
        self.cumulative.append(self.total + weight)


def redraw_previous(distinct: DistinctSet, u: float) -> Any:
    """A previously selected item, chosen with probability ``w / W_M`` (``u`` in [0, 1))."""
    if not distinct.items:
        raise EmptyDistinctSet("no item selected yet")
    i = bisect.bisect_right(distinct.cumulative, u * distinct.total)
    return distinct.items[min(i, len(distinct.items) - 1)]


@dataclass
class MultinomialDraws:
    draws: list                 # M_1..M_n
    distinct: DistinctSet
    population_weight: float    # W_P

    @property
    def selected_weight(self) -> float:   # W_M
        return self.distinct.total


def online_multinomial(stream: Iterable[tuple[Any, float]], n: int, seed=0,
                       jumps: bool = True) -> MultinomialDraws:
    """``n`` independent draws with ``Pr(item) = w / W_P`` from one pass over ``stream``."""
    ss_keys, ss_draws = spawn(seed, 2)
    state = ReservoirState(n, Uniforms(make_rng(ss_keys)), jumps)
    for item, weight in stream:
        reservoir_offer(state, item, weight)
    if not state.total_weight > 0:
        raise EmptyPopulation("population has no positive weight")
    return multinomial_from_reservoir(state.entries(), state.total_weight, n, make_rng(ss_draws),
                                      complete=state.offered <= n)


def multinomial_from_reservoir(entries: Sequence[tuple[Any, float, float]], total: float, n: int,
                               rng: np.random.Generator, complete: bool = False) -> MultinomialDraws:
    coins = rng.random(n).tolist()
    picks = rng.random(n).tolist()
    distinct = DistinctSet()
    draws = []
    ell = 0
    for j in range(n):
        if coins[j] * total < distinct.total or (ell == len(entries) and distinct.items):
            if ell == len(entries) and not complete and coins[j] * total >= distinct.total:
                raise ReservoirExhausted("reservoir ran out of entries")
            draws.append(redraw_previous(distinct, picks[j]))
        else:
            item, w, _ = entries[ell]
            ell += 1
            distinct.add(item, w)
            draws.append(item)
    return MultinomialDraws(draws, distinct, total)


def inversion_pick(weights: Iterable[float], total: float, u: float, rtol: float = 1e-9) -> int:
    """First (0-based) index whose running cumulative exceeds ``u * total``."""
    target = u * total
    cum = 0.0
    last_positive = -1
    for i, w in enumerate(weights):
        cum += w
        if w > 0:
            last_positive = i
            if cum > target:
                return i
    if last_positive >= 0 and abs(cum - total) <= rtol * abs(total):
        return last_positive
    raise TotalMismatch(f"weights sum to {cum}, expected {total}")


def inversion_pick_many(cumulative: np.ndarray, us: np.ndarray) -> np.ndarray:
    """Vectorised :func:`inversion_pick` over a precomputed cumulative array."""
    total = cumulative[-1]
    idx = np.searchsorted(cumulative, us * total, side="right")
    return np.minimum(idx, len(cumulative) - 1)
