"""Subtree-weight indexes for every join edge.

Tables are processed leaf-to-root. Scanning a child table once, every row
``r`` contributes ``w(r) * prod(lookups of r in its own child indexes)`` to
the label of its join value, so afterwards ``label(v)`` is the total weight
of all partial join rows hanging below a parent row with join value ``v``.
A main-table row's group weight is then its own weight times one lookup per
child edge.

Only values that occur are stored; everything else falls back to a
per-operator default (0 for inner joins, ``w(NULL)`` of the child table when
the child may be null-extended). A child row whose contribution is zero is
treated like a filtered row: it does not count as a match.
"""
from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from typing import Callable, Hashable, Iterable, Optional

from .errors import OrderedComparisonOnNonNumeric, NonNumericValue
from .ingest import PassCounter, Row, TableWeigher, key_extractor, open_stream
from .model import FLIPPED, PlanEdge, TableRef, ValidatedPlan, WeightSpec, parse_number

Hasher = Callable[[Hashable], Hashable]


@dataclass
class JoinIndex:
    edge: Optional[PlanEdge]
    labels: dict = field(default_factory=dict)
    default_label: float = 0.0
    mode: str = "eq"            # eq | neq | theta
    comparison: str = "="       # theta: stored y <comparison> queried x
    hasher: Optional[Hasher] = None
    matched: set = field(default_factory=set)
    matched_weight: float = 0.0
    _sorted_keys: list = field(default_factory=list, repr=False)
    _prefix: list = field(default_factory=list, repr=False)
    _suffix: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        self.total_weight = math.fsum(self.labels.values())

    def __len__(self):
        return len(self.labels)

    def key(self, raw):
        """Maps a raw join key into this index's key space."""
        if raw is None or self.hasher is None:
            return raw
        return self.hasher(raw)

    def lookup(self, raw) -> float:
        if raw is None:
            # a NULL join value matches nothing, not even stored NULL keys
            return self.default_label if self.mode == "eq" else 0.0
        if self.mode == "eq":
            return self.labels.get(self.key(raw), self.default_label)
        if self.mode == "neq":
            return lookup_neq(self, raw)
        return self._lookup_theta(raw)

    def _lookup_theta(self, raw) -> float:
        try:
            x = parse_number(raw)
        except NonNumericValue:
            raise OrderedComparisonOnNonNumeric(f"{self.edge.name if self.edge else 'index'}: {raw!r}") from None
        ys = self._sorted_keys
        if self.comparison == "<":
            return self._prefix[bisect.bisect_left(ys, x)]
        if self.comparison == "<=":
            return self._prefix[bisect.bisect_right(ys, x)]
        if self.comparison == ">":
            return self._suffix[bisect.bisect_right(ys, x)]
        return self._suffix[bisect.bisect_left(ys, x)]

    def matches(self, stored, raw) -> bool:
        """Whether a child row with key ``stored`` joins a parent key ``raw``."""
        if stored is None or raw is None:
            return False
        if self.mode == "eq":
            return stored == self.key(raw)
        if self.mode == "neq":
            return stored != raw
        from .model import COMPARE
        return COMPARE[self.comparison](stored, parse_number(raw))

    def mark(self, raw) -> None:
        """Records that a real parent row carries this join key."""
        k = self.key(raw)
        if k is not None and k not in self.matched:
            self.matched.add(k)
            self.matched_weight += self.labels.get(k, 0.0)

    def unmatched_weight(self) -> float:
        """Weight of stored entries no parent row has touched (NULL keys included)."""
        return math.fsum(w for k, w in self.labels.items() if k not in self.matched)

    def reset_matches(self) -> None:
        self.matched = set()
        self.matched_weight = 0.0


def transform_theta(index: JoinIndex, comparison: str) -> JoinIndex:
    """Turns equality labels into range sums: ``lookup(x) = sum(label(y) for y <cmp> x)``."""
    if comparison not in ("<", "<=", ">", ">="):
        raise ValueError(f"not an ordered comparison: {comparison!r}")
    items = []
    for k, w in index.labels.items():
        if k is None:
            continue
        try:
            items.append((parse_number(k) if isinstance(k, str) else float(k), w))
        except (NonNumericValue, TypeError):
            raise OrderedComparisonOnNonNumeric(f"join value {k!r} is not numeric") from None
    merged: dict[float, float] = {}
    for y, w in items:
        merged[y] = merged.get(y, 0.0) + w
    ys = sorted(merged)
    prefix = [0.0]
    for y in ys:
        prefix.append(prefix[-1] + merged[y])
    suffix = [0.0]
    for y in reversed(ys):
        suffix.append(suffix[-1] + merged[y])
    suffix.reverse()
    out = JoinIndex(index.edge, merged, 0.0, "theta", comparison, index.hasher)
    out._sorted_keys, out._prefix, out._suffix = ys, prefix, suffix
    return out


def lookup_neq(index: JoinIndex, value) -> float:
    """Weight of all entries whose value differs from ``value``."""
    if value is None:
        return 0.0
    return index.total_weight - index.labels.get(value, 0.0)


class SubtreeWeights:
    """``values -> (w(row), w(row) * prod(child lookups))`` for one table."""

    def __init__(self, table: TableRef, spec: WeightSpec, child_indexes: Iterable[JoinIndex]):
        self.table = table
        self.weigh = TableWeigher(table, spec)
        self.children = [(ix, key_extractor(table, ix.edge.parent_cols)) for ix in child_indexes]

    def __call__(self, values) -> tuple[float, float]:
        w = self.weigh(values)
        total = w
        if total > 0:
            for ix, key in self.children:
                total *= ix.lookup(key(values))
                if total == 0:
                    break
        return w, total


def build_index(rows: Iterable[Row], child_indexes: Iterable[JoinIndex], edge: PlanEdge,
                spec: WeightSpec, table: TableRef, hasher: Optional[Hasher] = None) -> JoinIndex:
    """Builds the index of ``edge`` from one scan of its child table.

    ``child_indexes`` are the already-built indexes of the child's own child
    edges.
    """
    subtree = SubtreeWeights(table, spec, child_indexes)
    key = key_extractor(table, edge.child_cols)
    keep_null = edge.parent_nullable
    labels: dict = {}
    for row in rows:
        w, total = subtree(row.values)
        if total <= 0:
            continue
        k = key(row.values)
        if k is None:
            if not keep_null:
                continue
        elif hasher is not None:
            k = hasher(k)
        labels[k] = labels.get(k, 0.0) + total

    if edge.operator == "semi":
        return JoinIndex(edge, {k: 1.0 for k in labels if k is not None}, 0.0, hasher=hasher)
    if edge.operator == "anti":
        return JoinIndex(edge, {k: 0.0 for k in labels if k is not None}, 1.0, hasher=hasher)
    default = table.null_weight if edge.child_nullable else 0.0
    if edge.comparison == "=":
        return JoinIndex(edge, labels, default, hasher=hasher)
    base = JoinIndex(edge, labels, 0.0)
    if edge.comparison == "!=":
        base.mode = "neq"
        return base
    return transform_theta(base, FLIPPED[edge.comparison])


def build_indexes(plan: ValidatedPlan, counter: Optional[PassCounter] = None,
                  hasher: Optional[Hasher] = None) -> dict[str, JoinIndex]:
    """All edge indexes, keyed by child table name, built leaf-to-root."""
    counter = counter if counter is not None else PassCounter()
    indexes: dict[str, JoinIndex] = {}
    for t in plan.build_order:
        edge = plan.parent_edge[t]
        table = plan.table(t)
        own = [indexes[e.child] for e in plan.children[t]]
        # only inner equalities may be relaxed: a collision would hide a NULL extension
        h = hasher if (hasher is not None and edge.is_equi and edge.operator == "inner") else None
        indexes[t] = build_index(open_stream(table, counter), own, edge, plan.weights, table, h)
    return indexes


def group_weight(values, main_weights: SubtreeWeights) -> float:
    """Total weight of all join rows that contain this main-table row."""
    return main_weights(values)[1]


def main_groups(plan: ValidatedPlan, indexes: dict[str, JoinIndex], counter: Optional[PassCounter] = None):
    """One scan of the main table yielding ``(row, own weight, group weight)``.

    Marks the join values of every positive-weight main row in the indexes of
    parent-nullable edges, as :func:`null_main_weight` needs.
    """
    root = plan.table(plan.root)
    edges = plan.children[plan.root]
    for e in edges:
        indexes[e.child].reset_matches()
    weights = SubtreeWeights(root, plan.weights, [indexes[e.child] for e in edges])
    marks = [(indexes[e.child], key_extractor(root, e.parent_cols)) for e in edges if e.parent_nullable]
    for row in open_stream(root, counter):
        w, total = weights(row.values)
        if w > 0:
            for ix, key in marks:
                ix.mark(key(row.values))
        yield row, w, total


def group_weights(plan: ValidatedPlan, indexes: Optional[dict[str, JoinIndex]] = None,
                  counter: Optional[PassCounter] = None) -> tuple[dict[int, float], float]:
    """Group weight of every main row, and the weight of the NULL main group."""
    if indexes is None:
        indexes = build_indexes(plan, counter)
    out = {row.ordinal: total for row, _, total in main_groups(plan, indexes, counter)}
    return out, null_main_weight(plan, indexes)


def null_main_weight(plan: ValidatedPlan, indexes: dict[str, JoinIndex]) -> float:
    """Weight of the join rows whose main-table side is NULL.

    Nonzero only when every edge of the main table admits a NULL parent; it is
    then ``w(NULL_main)`` times, per edge, the weight of child entries no main
    row matched. Call after the main scan has marked matches.
    """
    edges = plan.children[plan.root]
    if not edges or not all(e.parent_nullable for e in edges):
        return 0.0
    w = plan.table(plan.root).null_weight
    for e in edges:
        if w == 0:
            break
        w *= indexes[e.child].unmatched_weight()
    return w


def peak_entries(indexes: dict[str, JoinIndex]) -> int:
    return sum(len(ix) for ix in indexes.values())
