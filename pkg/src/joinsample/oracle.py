"""Brute-force ground truth for small joins.

Enumerates every join row with its exact weight. Inner-only queries
(including cyclic ones) are evaluated as a plain nested-loop join over the
declared conditions; queries with outer, semi or anti joins are evaluated
recursively along the rooted join tree. Neither path uses the sampler's
indexes.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from scipy import stats as sps

from .errors import ForeignTree, SizeGuardExceeded, ZeroTotalWeight
from .ingest import TableWeigher, open_stream
from .model import COMPARE, FLIPPED, JoinQuery, PlanEdge, ValidatedPlan, parse_number, validate
from .multinomial import inversion_pick_many, make_rng
from .sampleset import NULL, SampleSet

DEFAULT_SIZE_GUARD = 10**7


@dataclass
class EnumeratedJoin:
    tables: list[str]
    columns: dict[str, tuple[str, ...]]
    trees: list[tuple[int, ...]]
    weights: np.ndarray
    rows: dict[str, list[tuple]] = field(repr=False, default_factory=dict)

    @property
    def total(self) -> float:
        return float(self.weights.sum())

    @property
    def probabilities(self) -> np.ndarray:
        return self.weights / self.weights.sum()

    def __len__(self):
        return len(self.trees)

    def position(self) -> dict[tuple[int, ...], int]:
        return {t: i for i, t in enumerate(self.trees)}


def _holds(cmp: str, a: str, b: str) -> bool:
    if a == "" or b == "":
        return False
    if cmp in ("=", "!="):
        return COMPARE[cmp](a, b)
    return COMPARE[cmp](parse_number(a), parse_number(b))


def _load(query: JoinQuery):
    data, weights = {}, {}
    for t in query.tables:
        weigh = TableWeigher(t, query.weights)
        rows = [r.values for r in open_stream(t)]
        data[t.name] = rows
        weights[t.name] = [weigh(v) for v in rows]
    return data, weights


class _Guard:
    def __init__(self, limit):
        self.limit, self.count = limit, 0

    def tick(self, k=1):
        self.count += k
        if self.count > self.limit:
            raise SizeGuardExceeded(f"join has more than {self.limit} rows")


def _enumerate_inner(query: JoinQuery, data, weights, guard) -> list[tuple[tuple, float]]:
    names = query.table_names
    # visiting order: breadth-first from the main table so candidates can be narrowed
    order, seen = [query.main], {query.main}
    while len(order) < len(names):
        for e in query.edges:
            for a, b in ((e.left[0], e.right[0]), (e.right[0], e.left[0])):
                if a in seen and b not in seen:
                    seen.add(b)
                    order.append(b)
        if len(order) < len(names) and not any(
                (e.left[0] in seen) != (e.right[0] in seen) for e in query.edges):
            order += [t for t in names if t not in seen]
    pos = {t: i for i, t in enumerate(order)}
    cols = {t: query.table(t).columns for t in names}
    checks = [[] for _ in order]      # conditions closed at each depth
    probes = [None] * len(order)      # (earlier depth, earlier col, own col index) for '='
    for e in query.edges:
        (lt, lc), (rt, rc) = e.left, e.right
        li, ri = cols[lt].index(lc), cols[rt].index(rc)
        if pos[lt] < pos[rt]:
            depth, cond = pos[rt], (pos[lt], li, ri, e.comparison)
        else:
            depth, cond = pos[lt], (pos[rt], ri, li, FLIPPED[e.comparison])
        checks[depth].append(cond)
        if cond[3] == "=" and probes[depth] is None:
            probes[depth] = cond
    buckets = {}
    for d, p in enumerate(probes):
        if p is not None:
            idx = {}
            for i, v in enumerate(data[order[d]]):
                idx.setdefault(v[p[2]], []).append(i)
            buckets[d] = idx
    out = []
    chosen = [0] * len(order)

    def rec(d, w):
        if d == len(order):
            guard.tick()
            out.append((tuple(chosen), w))
            return
        rows, ws = data[order[d]], weights[order[d]]
        if d in buckets:
            p = probes[d]
            cands = buckets[d].get(data[order[p[0]]][chosen[p[0]]][p[1]], ())
        else:
            cands = range(len(rows))
        for i in cands:
            wi = ws[i]
            if wi <= 0:
                continue
            v = rows[i]
            if all(_holds(c, data[order[od]][chosen[od]][oc], v[mc]) for od, oc, mc, c in checks[d]):
                chosen[d] = i
                rec(d + 1, w * wi)

    rec(0, 1.0)
    result = []
    for ords, w in out:
        if w > 0:
            result.append((tuple(ords[pos[t]] for t in names), w))
    return result


def _enumerate_tree(plan: ValidatedPlan, data, weights, guard) -> list[tuple[dict, float]]:
    cols = {t.name: t.columns for t in plan.tables}

    def keyvals(table, columns, values):
        return tuple(values[cols[table].index(c)] for c in columns)

    def reach_below(t):
        out = [t]
        for e in plan.children[t]:
            if not e.is_filter:
                out += reach_below(e.child)
        return out

    def edge_holds(e: PlanEdge, pv, cv):
        return all(_holds(e.comparison, a, b) for a, b in zip(pv, cv))

    def combine(base, parts):
        res = base
        for part in parts:
            res = [({**a, **b}, wa * wb) for (a, wa), (b, wb) in itertools.product(res, part)]
            res = [r for r in res if r[1] > 0]
            guard.tick(len(res))
        return res

    memo = {}

    def child_results(e: PlanEdge, pv):
        key = (e.child, e.parent_cols, pv)
        if key in memo:
            return memo[key]
        found = []
        for i, v in enumerate(data[e.child]):
            if weights[e.child][i] > 0 and edge_holds(e, pv, keyvals(e.child, e.child_cols, v)):
                found += subtree(e.child, i)
        found = [r for r in found if r[1] > 0]
        if e.operator == "semi":
            res = [({}, 1.0)] if found else []
        elif e.operator == "anti":
            res = [] if found else [({}, 1.0)]
        elif e.child_nullable and not found:
            nw = plan.table(e.child).null_weight
            res = [({t: NULL for t in reach_below(e.child)}, nw)] if nw > 0 else []
        else:
            res = found
        memo[key] = res
        return res

    def subtree(t, i):
        v = data[t][i]
        parts = [child_results(e, keyvals(t, e.parent_cols, v)) for e in plan.children[t]]
        return combine([({t: i}, weights[t][i])], parts)

    root = plan.root
    out = []
    for i in range(len(data[root])):
        if weights[root][i] > 0:
            out += subtree(root, i)

    edges = plan.children[root]
    nw = plan.table(root).null_weight
    if edges and nw > 0 and all(e.parent_nullable for e in edges):
        parts = []
        for e in edges:
            matched = set()
            for i, v in enumerate(data[root]):
                pv = keyvals(root, e.parent_cols, v)
                if weights[root][i] > 0 and "" not in pv:
                    matched.add(pv)
            part = []
            for i, v in enumerate(data[e.child]):
                cv = keyvals(e.child, e.child_cols, v)
                if weights[e.child][i] > 0 and ("" in cv or cv not in matched):
                    part += subtree(e.child, i)
            parts.append([r for r in part if r[1] > 0])
        out += combine([({root: NULL}, nw)], parts)
    return out


def enumerate_join(query: Union[JoinQuery, ValidatedPlan], size_guard: int = DEFAULT_SIZE_GUARD,
                   plan: Optional[ValidatedPlan] = None) -> EnumeratedJoin:
    """Every join row (positive weight only) in canonical order."""
    if isinstance(query, ValidatedPlan):
        plan, query = query, query.query
    data, weights = _load(query)
    guard = _Guard(size_guard)
    if all(e.operator == "inner" for e in query.edges):
        tables = query.table_names
        found = _enumerate_inner(query, data, weights, guard)
    else:
        plan = plan or validate(query)
        tables = list(plan.reachable)
        found = [(tuple(a[t] for t in tables), w) for a, w in _enumerate_tree(plan, data, weights, guard)]
    found.sort(key=lambda item: item[0])
    trees = [t for t, _ in found]
    w = np.array([w for _, w in found], dtype=float)
    return EnumeratedJoin(tables, {t: query.table(t).columns for t in tables}, trees, w,
                          {t: data[t] for t in tables})


def _sample_from(enum: EnumeratedJoin, idx: np.ndarray, seed, method: str) -> SampleSet:
    arr = np.array(enum.trees, dtype=np.int64).reshape(len(enum.trees), len(enum.tables))
    ordinals = arr[idx]
    rows = {}
    for j, t in enumerate(enum.tables):
        used = np.unique(ordinals[:, j])
        rows[t] = {int(o): enum.rows[t][o] for o in used.tolist() if o != NULL}
    return SampleSet(list(enum.tables), dict(enum.columns), ordinals, rows, enum.weights[idx],
                     seed=seed, method=method)


def exact_multinomial(enum: EnumeratedJoin, n: int, seed: int = 0) -> SampleSet:
    """``n`` independent inversion draws over the enumerated join rows."""
    if len(enum) == 0 or not enum.total > 0:
        raise ZeroTotalWeight("the enumerated join has no positive weight")
    rng = make_rng(seed)
    idx = inversion_pick_many(np.cumsum(enum.weights), rng.random(n))
    return _sample_from(enum, idx, seed, "oracle")


def corrupted_multinomial(enum: EnumeratedJoin, n: int, seed: int = 0, power: float = 2.0) -> SampleSet:
    """Deliberately wrong sampler: probabilities raised to ``power``."""
    rng = make_rng(seed)
    idx = inversion_pick_many(np.cumsum(enum.weights ** power), rng.random(n))
    return _sample_from(enum, idx, seed, "corrupted")


def approx_baseline_sample(enum: EnumeratedJoin, fraction: float, n: int, seed: int = 0) -> SampleSet:
    """Sample-then-join: keep each base row with probability ``fraction``, then sample the survivors."""
    rng = make_rng(seed)
    keep = {t: rng.random(len(enum.rows[t])) < fraction for t in enum.tables}
    arr = np.array(enum.trees, dtype=np.int64).reshape(len(enum.trees), len(enum.tables))
    alive = np.ones(len(arr), dtype=bool)
    for j, t in enumerate(enum.tables):
        col = arr[:, j]
        ok = np.ones(len(arr), dtype=bool)
        real = col != NULL
        ok[real] = keep[t][col[real]]
        alive &= ok
    w = np.where(alive, enum.weights, 0.0)
    if not w.sum() > 0:
        raise ZeroTotalWeight("no join row survived the base-table sampling")
    idx = inversion_pick_many(np.cumsum(w), rng.random(n))
    return _sample_from(enum, idx, seed, f"approx{fraction:g}")


def event_indices(sample: SampleSet, enum: EnumeratedJoin) -> np.ndarray:
    """1-based position of every sampled tree in the enumeration order."""
    if list(sample.tables) != list(enum.tables):
        raise ForeignTree(f"sample covers {sample.tables}, enumeration {enum.tables}")
    pos = enum.position()
    out = np.empty(len(sample), dtype=np.int64)
    for j, t in enumerate(sample.trees()):
        try:
            out[j] = pos[t] + 1
        except KeyError:
            raise ForeignTree(f"draw {j} ({t}) is not a join row") from None
    return out


@dataclass
class ChiSquare:
    statistic: float
    pvalue: float
    dof: int
    categories: int


def compare_distributions(sample: SampleSet, enum: EnumeratedJoin, min_expected: float = 5.0) -> ChiSquare:
    """Pearson chi-square of sampled trees against the exact join distribution.

    Categories expected fewer than ``min_expected`` times are pooled.
    """
    idx = event_indices(sample, enum) - 1
    n = len(idx)
    observed = np.bincount(idx, minlength=len(enum)).astype(float)
    expected = n * enum.probabilities
    small = expected < min_expected
    obs = list(observed[~small])
    exp = list(expected[~small])
    if small.any():
        obs.append(observed[small].sum())
        exp.append(expected[small].sum())
    obs, exp = np.array(obs), np.array(exp)
    if len(obs) < 2:
        return ChiSquare(0.0, 1.0, 0, len(obs))
    stat = float(((obs - exp) ** 2 / exp).sum())
    dof = len(obs) - 1
    return ChiSquare(stat, float(sps.chi2.sf(stat, dof)), dof, len(obs))
