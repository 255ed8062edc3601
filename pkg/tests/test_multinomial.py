import math

import numpy as np
import pytest

from joinsample.errors import EmptyDistinctSet, EmptyPopulation, TotalMismatch
from joinsample.multinomial import (
    DistinctSet,
    ReservoirState,
    Uniforms,
    inversion_pick,
    inversion_pick_many,
    make_rng,
    online_multinomial,
    redraw_previous,
    reservoir_offer,
)


def within(count, n, p, sigmas=4.0):
    return abs(count - n * p) <= sigmas * math.sqrt(n * p * (1 - p))


@pytest.mark.parametrize("jumps", [True, False])
def test_capacity_one_reservoir(jumps):
    rng = make_rng(1)
    hits = 0
    trials = 10_000
    for _ in range(trials):
        st = ReservoirState(1, Uniforms(rng, 16), jumps)
        reservoir_offer(st, "A", 1.0)
        reservoir_offer(st, "B", 1000.0)
        hits += st.entries()[0][0] == "B"
    assert within(hits, trials, 1000 / 1001)


def test_reservoir_keeps_everything_when_large():
    st = ReservoirState(10, Uniforms(make_rng(0)))
    for i in range(5):
        reservoir_offer(st, i, i + 1.0)
    assert sorted(e[0] for e in st.entries()) == [0, 1, 2, 3, 4]
    assert st.total_weight == 15.0


def test_zero_weight_is_ignored():
    st = ReservoirState(3, Uniforms(make_rng(0)))
    reservoir_offer(st, "z", 0.0)
    assert st.entries() == [] and st.total_weight == 0.0


def test_single_item_population():
    d = online_multinomial([("x", 5.0)], 3, seed=4)
    assert d.draws == ["x", "x", "x"]
    assert d.population_weight == 5.0


def test_two_items():
    n = 100_000
    d = online_multinomial([("a", 1.0), ("b", 3.0)], n, seed=2)
    assert within(d.draws.count("b"), n, 0.75)


def test_f1_group_weights():
    n = 100_000
    d = online_multinomial([(0, 16.0), (1, 24.0), (2, 20.0)], n, seed=3)
    counts = np.bincount(d.draws, minlength=3)
    for c, w in zip(counts, (16, 24, 20)):
        assert within(c, n, w / 60)


def test_empty_population():
    with pytest.raises(EmptyPopulation):
        online_multinomial([("a", 0.0)], 2)


def test_deterministic():
    pop = [(i, float(i % 7 + 1)) for i in range(500)]
    assert online_multinomial(pop, 200, seed=9).draws == online_multinomial(pop, 200, seed=9).draws
    assert online_multinomial(pop, 200, seed=9).draws != online_multinomial(pop, 200, seed=10).draws


def test_redraw_previous():
    one = DistinctSet()
    one.add("a", 1.0)
    assert redraw_previous(one, 0.7) == "a"
    with pytest.raises(EmptyDistinctSet):
        redraw_previous(DistinctSet(), 0.5)
    rng = make_rng(5)
    for weights, p_b in (((1.0, 1.0), 0.5), ((2.0, 6.0), 0.75)):
        ds = DistinctSet()
        ds.add("a", weights[0])
        ds.add("b", weights[1])
        hits = sum(redraw_previous(ds, u) == "b" for u in rng.random(10_000).tolist())
        assert within(hits, 10_000, p_b)


def test_inversion_pick():
    # 0-based: the second entry
    assert inversion_pick([1, 2, 1], 4, 0.6) == 1
    assert inversion_pick([0, 3, 1], 4, 0.0) == 1
    assert inversion_pick([0, 0, 5], 5, 0.99) == 2
    with pytest.raises(TotalMismatch):
        inversion_pick([1, 1], 5, 0.9)


def test_inversion_pick_many_agrees():
    w = np.array([0.0, 1.0, 2.0, 0.0, 1.0])
    us = make_rng(0).random(1000)
    fast = inversion_pick_many(np.cumsum(w), us)
    assert fast.tolist() == [inversion_pick(w.tolist(), 4.0, u) for u in us.tolist()]
