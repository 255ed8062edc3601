"""Exact counting statistics gathered with one pass per table."""
from __future__ import annotations

import bisect
from collections import Counter
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .ingest import PassCounter, TableWeigher, key_extractor, open_stream
from .model import JoinQuery, Link, ValidatedPlan, parse_number


def _value_counts(query: JoinQuery, table: str, columns: Sequence[str], counter: PassCounter):
    t = query.table(table)
    key = key_extractor(t, columns)
    counts: Counter = Counter()
    rows = 0
    for row in open_stream(t, counter):
        rows += 1
        k = key(row.values)
        if k is not None:
            counts[k] += 1
    return counts, rows


def two_way_join_size(left_counts: Counter, right_counts: Counter, comparison: str) -> int:
    """Number of row pairs with ``left <comparison> right`` (row counts, no weights)."""
    if comparison == "=":
        if len(left_counts) > len(right_counts):
            left_counts, right_counts = right_counts, left_counts
        return sum(c * right_counts.get(k, 0) for k, c in left_counts.items())
    if comparison == "!=":
        total = sum(left_counts.values()) * sum(right_counts.values())
        return total - two_way_join_size(left_counts, right_counts, "=")
    ys = sorted((parse_number(k), c) for k, c in right_counts.items())
    keys = [y for y, _ in ys]
    cum = [0]
    for _, c in ys:
        cum.append(cum[-1] + c)
    size = 0
    for k, c in left_counts.items():
        x = parse_number(k)
        # pairs with x <cmp> y
        if comparison == "<":
            m = cum[-1] - cum[bisect.bisect_right(keys, x)]
        elif comparison == "<=":
            m = cum[-1] - cum[bisect.bisect_left(keys, x)]
        elif comparison == ">":
            m = cum[bisect.bisect_left(keys, x)]
        else:
            m = cum[bisect.bisect_right(keys, x)]
        size += c * m
    return size


def link_statistics(query: JoinQuery, links: Sequence[Link],
                    counter: Optional[PassCounter] = None):
    """Linkage probabilities ``|X ⋈ Y| / (|X| |Y|)`` per link, and table sizes."""
    counter = counter or PassCounter()
    probabilities, sizes = {}, {}
    for l in links:
        lc, ln = _value_counts(query, l.left, l.left_cols, counter)
        rc, rn = _value_counts(query, l.right, l.right_cols, counter)
        sizes[l.left], sizes[l.right] = ln, rn
        denom = ln * rn
        probabilities[l.name] = two_way_join_size(lc, rc, l.comparison) / denom if denom else 0.0
    return probabilities, sizes


@dataclass
class PlanStatistics:
    """Inputs for automatic method selection."""

    table_rows: dict[str, int] = field(default_factory=dict)
    distinct_keys: dict[str, int] = field(default_factory=dict)   # per edge name, child side
    unique_child_keys: dict[str, bool] = field(default_factory=dict)
    weight_skew: dict[str, float] = field(default_factory=dict)   # max / mean row weight


def plan_statistics(plan: ValidatedPlan, counter: Optional[PassCounter] = None) -> PlanStatistics:
    counter = counter or PassCounter()
    stats = PlanStatistics()
    for t in plan.tables:
        weigh = TableWeigher(t, plan.weights)
        keys = {e.name: key_extractor(t, e.child_cols) for e in plan.edges if e.child == t.name}
        counts = {name: Counter() for name in keys}
        rows, total, peak = 0, 0.0, 0.0
        for row in open_stream(t, counter):
            rows += 1
            w = weigh(row.values)
            total += w
            peak = max(peak, w)
            for name, key in keys.items():
                counts[name][key(row.values)] += 1
        stats.table_rows[t.name] = rows
        stats.weight_skew[t.name] = peak / (total / rows) if total > 0 else float("inf")
        for name, c in counts.items():
            c.pop(None, None)
            stats.distinct_keys[name] = len(c)
            stats.unique_child_keys[name] = all(v == 1 for v in c.values())
    return stats
