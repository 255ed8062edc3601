import math

import numpy as np
import pytest

from helpers import f1, fk_chain, frequencies, key_join, six_table, table, triangle
from joinsample.errors import AcceptanceStall
from joinsample.ingest import PassCounter, key_extractor, open_stream
from joinsample.joinindex import SubtreeWeights, build_indexes
from joinsample.model import JoinEdge, JoinQuery, WeightSpec, validate
from joinsample.oracle import compare_distributions, enumerate_join
from joinsample.pipeline import (
    HashedJoinConfig,
    cyclic_sample,
    fk_economic_sample,
    hashed_join_sample,
    oversample_factor,
    sample,
    sample_plan,
    select_method,
    simplify_join_graph,
    stream_sample,
    superfluous_bound,
    unmerge,
)
from joinsample.pipeline.stream import PendingExtension, PendingGroup, resolve_extensions
from joinsample.sampleset import NULL
from joinsample.stats import PlanStatistics, plan_statistics

ALPHA = 1e-3


def test_stream_f1_frequencies(tmp_path):
    q = f1(tmp_path)
    enum = enumerate_join(q)
    n = 100_000
    s = stream_sample(validate(q), n, seed=1)
    freq = frequencies(s, enum)
    p = enum.probabilities
    assert (np.abs(freq - p) <= 4 * np.sqrt(p * (1 - p) / n)).all()
    assert set(s.passes) == {"AB", "BC"} and s.passes["AB"] == 1


def test_stream_uniform_key_join(tmp_path):
    q = key_join(tmp_path, rows=200)
    q.weights = WeightSpec()
    enum = enumerate_join(q)
    assert np.allclose(enum.weights, 1.0)
    s = stream_sample(validate(q), 50_000, seed=2)
    assert compare_distributions(s, enum).pvalue > ALPHA


def test_stream_six_table(tmp_path):
    q = six_table(tmp_path)
    plan = validate(q)
    enum = enumerate_join(plan)
    s = stream_sample(plan, 100_000, seed=3)
    assert s.tables == enum.tables and "CD" not in s.tables
    assert compare_distributions(s, enum).pvalue > ALPHA
    assert s.passes["AB"] == 1 and max(s.passes.values()) <= 2
    # sampled weights are the exact join-row weights
    pos = enum.position()
    assert all(enum.weights[pos[t]] == pytest.approx(w) for t, w in zip(s.trees()[:200], s.weights[:200]))


def test_stream_is_deterministic(tmp_path):
    plan = validate(six_table(tmp_path))
    a = stream_sample(plan, 500, seed=7)
    b = stream_sample(plan, 500, seed=7)
    assert (a.ordinals == b.ordinals).all()


def _resolve(tmp_path, op, key, label, u):
    plan = validate(f1(tmp_path, op))
    ix = build_indexes(plan)["BC"]
    bc = plan.table("BC")
    pending = PendingExtension(plan.edges[0])
    g = PendingGroup(key, label, [u], np.array([0]))
    g.needs_scan = key in ix.labels
    pending.groups[key] = g
    return resolve_extensions(pending, open_stream(bc), 1, ix, SubtreeWeights(bc, plan.weights, []),
                              key_extractor(bc, ["B"]))


def test_resolve_picks_by_cumulative(tmp_path):
    res = _resolve(tmp_path, "inner", "b1", 8.0, 7.5)
    assert res.choice.tolist() == [1]   # (b1, c2): cumulative 7, then 8
    assert res.rows == {1: ("b1", "c2", "1")}


def test_resolve_null_band(tmp_path):
    res = _resolve(tmp_path, "left-outer", "b9", 1.0, 0.3)
    assert res.choice.tolist() == [NULL] and res.null_started.tolist() == [True]


def test_resolve_skips_scan_without_pending(tmp_path):
    plan = validate(f1(tmp_path))
    ix = build_indexes(plan)["BC"]
    bc = plan.table("BC")

    def rows():
        raise AssertionError("scanned")
        yield

    res = resolve_extensions(PendingExtension(plan.edges[0]), rows(), 0, ix,
                             SubtreeWeights(bc, plan.weights, []), key_extractor(bc, ["B"]))
    assert len(res.choice) == 0


def test_fk_equal_weights(tmp_path):
    s = fk_economic_sample(validate(fk_chain(tmp_path, rows=500)), 200, seed=1)
    assert s.stats["acceptance_rate"] == 1.0 and s.stats["rounds"] == 1
    assert len(s) == 200


def test_fk_linear_acceptance(tmp_path):
    plan = validate(fk_chain(tmp_path, weights="linear"))
    enum = enumerate_join(plan)
    expected = enum.weights.mean() / enum.weights.max()
    s = fk_economic_sample(plan, 1000, seed=2)   # 10^4 proposals
    rate = s.stats["acceptance_rate"]
    assert abs(rate - expected) <= 4 * math.sqrt(expected * (1 - expected) / s.stats["proposed"])


def test_fk_exponential_stalls_and_falls_back(tmp_path):
    plan = validate(fk_chain(tmp_path, weights="exponential"))
    with pytest.raises(AcceptanceStall):
        fk_economic_sample(plan, 1000, seed=3)
    s = sample_plan(plan, 1000, seed=3, method="fk_economic")
    assert s.method == "stream" and s.stats["fallback_from"] == "fk_economic"


def test_hashed_without_collisions(tmp_path):
    plan = validate(key_join(tmp_path, rows=50))
    s = hashed_join_sample(plan, 2000, seed=1, config=HashedJoinConfig(universe=1 << 24))
    assert s.stats["purge_rate"] == 0.0
    assert compare_distributions(s, enumerate_join(plan)).pvalue > ALPHA


def test_hashed_small_universe_is_exact(tmp_path):
    plan = validate(key_join(tmp_path, rows=300))
    s = hashed_join_sample(plan, 20_000, seed=4, config=HashedJoinConfig(universe=64))
    assert s.stats["purge_rate"] > 0.5
    assert s.stats["index_entries"] <= 64
    assert compare_distributions(s, enumerate_join(plan)).pvalue > ALPHA


def test_bound_and_oversample_formulas():
    assert superfluous_bound(1000, 256, 2) == pytest.approx(7812.5)
    assert oversample_factor(10**6, 1 << 16, 2) == pytest.approx(30.52, abs=0.01)
    assert oversample_factor(10, 1 << 16, 2) == 1.0
    with pytest.raises(ValueError):
        HashedJoinConfig(universe=100)


def _triangle_with_fk(tmp_path):
    """R(a,b), S(b,c), T(c,a); S.c is a foreign key into T, R repeats its rows."""
    r = table(tmp_path, "R", ["a", "b"], [("a1", "b1")] * 10 + [("a2", "b2")])
    s = table(tmp_path, "S", ["b", "c"], [("b1", f"c{i}") for i in range(10)] + [("b2", "c10")])
    t = table(tmp_path, "T", ["c", "a"], [(f"c{i}", "a1") for i in range(10)] + [("c10", "a3")])
    edges = [JoinEdge(("R", "b"), ("S", "b")), JoinEdge(("S", "c"), ("T", "c")), JoinEdge(("T", "a"), ("R", "a"))]
    return JoinQuery([r, s, t], edges, "R", WeightSpec())


def test_simplify_fk_merge(tmp_path):
    s = table(tmp_path, "S", ["b", "c"], [("b1", "c1"), ("b2", "c1"), ("b3", "c2")])
    t = table(tmp_path, "T", ["c", "x"], [("c1", "x1"), ("c2", "x2")])
    q = JoinQuery([s, t], [JoinEdge(("S", "c"), ("T", "c"))], "S", WeightSpec())
    out = simplify_join_graph(q, temp_dir=str(tmp_path))
    try:
        assert out.merges == [("S", "T", 3)]
        assert len(out.query.tables) == 1
    finally:
        out.cleanup()


def test_simplify_rejects_blowup(tmp_path):
    a = table(tmp_path, "A", ["k"], [("x",)] * 10)
    b = table(tmp_path, "B", ["k"], [("x",)] * 10)
    q = JoinQuery([a, b], [JoinEdge(("A", "k"), ("B", "k"))], "A", WeightSpec())
    out = simplify_join_graph(q, temp_dir=str(tmp_path))
    assert not out.changed and out.query is q


def test_simplify_triangle_to_two_tables(tmp_path):
    q = _triangle_with_fk(tmp_path)
    out = simplify_join_graph(q, temp_dir=str(tmp_path))
    try:
        assert [m[:2] for m in out.merges] == [("S", "T")]
        plan = validate(out.query)
        assert len(plan.query.tables) == 2 and not plan.residuals
        enum = enumerate_join(q)
        s = unmerge(stream_sample(plan, 20_000, seed=1), out, validate(q).reachable)
        assert s.tables == enum.tables == ["R", "S", "T"]
        assert compare_distributions(s, enum).pvalue > ALPHA
    finally:
        out.cleanup()
    assert not any(p.exists() for p in tmp_path.glob("merged-*"))


def test_economic_entry_point_on_cycle(tmp_path):
    q = _triangle_with_fk(tmp_path)
    s = sample(q, 5000, seed=2, method="economic", temp_dir=str(tmp_path))
    assert s.stats["merges"] == ["S+T"]
    assert set(s.tables) == {"R", "S", "T"}


def test_cyclic_triangle_small(tmp_path):
    q = triangle(tmp_path, nodes=15, p=0.4, seed=1)
    plan = validate(q)
    enum = enumerate_join(q)
    s = cyclic_sample(plan, 10_000, seed=1)
    assert compare_distributions(s, enum).pvalue > ALPHA
    sel = enum.total / s.stats["population_weight"]
    assert abs(s.stats["acceptance_rate"] - sel) < 0.2 * sel


def test_cyclic_without_triangles(tmp_path):
    arcs = [(f"v{i}", f"v{j}") for i in range(6) for j in range(i + 1, 6)]
    tabs = [table(tmp_path, n, ["src", "dst"], arcs) for n in ("E1", "E2", "E3")]
    q = JoinQuery(tabs, [JoinEdge(("E1", "dst"), ("E2", "src")), JoinEdge(("E2", "dst"), ("E3", "src")),
                         JoinEdge(("E3", "dst"), ("E1", "src"))], "E1", WeightSpec())
    with pytest.raises(AcceptanceStall):
        cyclic_sample(validate(q), 100, seed=0)


def test_cyclic_redundant_edge(tmp_path):
    rows = [(f"k{i % 5}", i) for i in range(20)]
    tabs = [table(tmp_path, n, ["k", "v"], rows) for n in ("R", "S", "T")]
    q = JoinQuery(tabs, [JoinEdge(("R", "k"), ("S", "k")), JoinEdge(("S", "k"), ("T", "k")),
                         JoinEdge(("T", "k"), ("R", "k"))], "R", WeightSpec())
    s = cyclic_sample(validate(q), 1000, seed=0)
    assert s.stats["acceptance_rate"] == 1.0


def test_select_method(tmp_path):
    plan = validate(fk_chain(tmp_path, rows=300))
    assert select_method(plan, plan_statistics(plan), 100) == "fk_economic"
    assert select_method(validate(triangle(tmp_path, nodes=6)), PlanStatistics(), 100) == "cyclic"
    many = validate(f1(tmp_path))
    e = many.edges[0].name
    stats = PlanStatistics({"AB": 10**6, "BC": 10**6}, {e: 10**6}, {e: False}, {"AB": 1.0, "BC": 1.0})
    assert select_method(many, stats, 1000) == "hashed_join"
    stats.distinct_keys[e] = 10
    assert select_method(many, stats, 1000) == "stream"


def test_auto_reports_passes(tmp_path):
    counter = PassCounter()
    s = sample(fk_chain(tmp_path, rows=300), 100, seed=0, method="auto", counter=counter)
    assert s.method == "fk_economic" and s.passes == counter.as_dict()
