"""Query model: tables, join edges, weight expressions, and plan validation.

A :class:`JoinQuery` is a declarative description of a multi-way join. It is
turned into a :class:`ValidatedPlan` by :func:`validate`, which roots the join
graph at the main table, orients every edge parent -> child and, for cyclic
graphs, demotes one edge per cycle to a :class:`ResidualPredicate` that is
checked on sampled join rows afterwards.
"""
from __future__ import annotations

import json
import logging
import math
import operator as _op
import os
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Optional, Sequence

from .errors import (
    DisconnectedGraph,
    MissingStatistics,
    NonNumericValue,
    SpecError,
    UnknownColumn,
    UnknownTable,
    UnsupportedOperatorCombination,
)

log = logging.getLogger(__name__)

OPERATORS = ("inner", "left-outer", "right-outer", "full-outer", "semi", "anti")
COMPARISONS = ("=", "!=", "<", "<=", ">=", ">")

_OPERATOR_ALIASES = {
    "inner": "inner", "join": "inner",
    "left": "left-outer", "left-outer": "left-outer", "left_outer": "left-outer",
    "right": "right-outer", "right-outer": "right-outer", "right_outer": "right-outer",
    "full": "full-outer", "full-outer": "full-outer", "full_outer": "full-outer",
    "semi": "semi", "anti": "anti",
}
_COMPARISON_ALIASES = {
    "=": "=", "==": "=",
    "!=": "!=", "<>": "!=", "≠": "!=",
    "<": "<", "<=": "<=", "≤": "<=",
    ">": ">", ">=": ">=", "≥": ">=",
}
# a ⊙ b  <=>  b flip(⊙) a
FLIPPED = {"=": "=", "!=": "!=", "<": ">", "<=": ">=", ">": "<", ">=": "<="}
# swapping the sides of an edge swaps which side is null-extended
_MIRRORED_OPERATOR = {
    "inner": "inner", "full-outer": "full-outer",
    "left-outer": "right-outer", "right-outer": "left-outer",
}
COMPARE: dict[str, Callable[[object, object], bool]] = {
    "=": _op.eq, "!=": _op.ne, "<": _op.lt, "<=": _op.le, ">": _op.gt, ">=": _op.ge,
}


def normalize_operator(name: str) -> str:
    try:
        return _OPERATOR_ALIASES[name.strip().lower()]
    except KeyError:
        raise SpecError(f"unknown join operator {name!r}") from None


def normalize_comparison(symbol: str) -> str:
    try:
        return _COMPARISON_ALIASES[symbol.strip()]
    except KeyError:
        raise SpecError(f"unknown comparison {symbol!r}") from None


def parse_number(value: str) -> float:
    try:
        return float(value)
    except (TypeError, ValueError):
        raise NonNumericValue(f"value {value!r} is not numeric") from None


# -- tables and edges ---------------------------------------------------------

@dataclass(frozen=True)
class TableRef:
    name: str
    path: str
    columns: tuple[str, ...] = ()
    null_weight: float = 1.0
    delimiter: str = ","

    def __post_init__(self):
        object.__setattr__(self, "columns", tuple(self.columns))
        if len(set(self.columns)) != len(self.columns):
            raise SpecError(f"table {self.name}: duplicate column names")
        if not (self.null_weight >= 0 and math.isfinite(self.null_weight)):
            raise SpecError(f"table {self.name}: null_weight must be finite and >= 0")

    def column_index(self, column: str) -> int:
        try:
            return self.columns.index(column)
        except ValueError:
            raise UnknownColumn(f"{self.name}.{column}") from None


@dataclass(frozen=True)
class JoinEdge:
    """One join condition ``left.column <comparison> right.column``.

    ``operator`` is read in SQL order: ``left-outer`` preserves the left side
    and null-extends the right, ``semi``/``anti`` keep left rows with/without a
    match on the right.
    """

    left: tuple[str, str]
    right: tuple[str, str]
    operator: str = "inner"
    comparison: str = "="

    def __post_init__(self):
        object.__setattr__(self, "left", tuple(self.left))
        object.__setattr__(self, "right", tuple(self.right))
        object.__setattr__(self, "operator", normalize_operator(self.operator))
        object.__setattr__(self, "comparison", normalize_comparison(self.comparison))

    @property
    def name(self) -> str:
        op = "" if self.operator == "inner" else f"[{self.operator}]"
        return f"{self.left[0]}.{self.left[1]}{self.comparison}{self.right[0]}.{self.right[1]}{op}"


# -- weight expressions ---------------------------------------------------------

@dataclass(frozen=True)
class Constant:
    value: float = 1.0

    def __call__(self, cell: str) -> float:
        return self.value


@dataclass(frozen=True)
class Identity:
    def __call__(self, cell: str) -> float:
        return parse_number(cell)


@dataclass(frozen=True)
class Linear:
    """``a * x + b``"""

    a: float
    b: float = 0.0

    def __call__(self, cell: str) -> float:
        return self.a * parse_number(cell) + self.b


@dataclass(frozen=True)
class Power:
    """``base ** (scale * x)``; ``Power(1.2, -1)`` down-weights large x."""

    base: float
    scale: float = 1.0

    def __call__(self, cell: str) -> float:
        try:
            return self.base ** (self.scale * parse_number(cell))
        except OverflowError:
            return math.inf


@dataclass(frozen=True)
class Lookup:
    """Maps raw cell values to weights; unmapped values get ``default``."""

    table: Mapping[str, float]
    default: Optional[float] = None
    source: str = ""

    def __call__(self, cell: str) -> float:
        try:
            return self.table[cell]
        except KeyError:
            if self.default is None:
                raise NonNumericValue(f"lookup {self.source or '<inline>'}: no weight for {cell!r}") from None
            return self.default

    def __hash__(self):
        return hash((self.source, self.default, len(self.table)))

    @classmethod
    def from_file(cls, path: str, default: Optional[float] = None, delimiter: str = ",") -> "Lookup":
        import csv

        table = {}
        with open(path, newline="", encoding="utf-8") as fh:
            for row in csv.reader(fh, delimiter=delimiter):
                if not row:
                    continue
                if len(row) != 2:
                    raise SpecError(f"lookup file {path}: expected 2 fields, got {len(row)}")
                try:
                    table[row[0]] = float(row[1])
                except ValueError:
                    continue  # header line
        return cls(table, default, path)


@dataclass(frozen=True)
class Predicate:
    """Selection as weight: 1 where ``cell <comparison> constant`` holds, else 0."""

    comparison: str
    constant: object

    def __post_init__(self):
        object.__setattr__(self, "comparison", normalize_comparison(self.comparison))

    def __call__(self, cell: str) -> float:
        if isinstance(self.constant, str):
            if self.comparison not in ("=", "!="):
                raise SpecError("string predicates support only = and !=")
            lhs, rhs = cell, self.constant
        else:
            lhs, rhs = parse_number(cell), float(self.constant)
        return 1.0 if COMPARE[self.comparison](lhs, rhs) else 0.0


WeightExpr = Callable[[str], float]


@dataclass
class WeightSpec:
    """Per-(table, column) weight expressions; unspecified columns weigh 1."""

    columns: dict[tuple[str, str], WeightExpr] = field(default_factory=dict)

    def for_table(self, table: TableRef) -> list[tuple[int, WeightExpr]]:
        out = []
        for (tname, column), expr in self.columns.items():
            if tname == table.name:
                out.append((table.column_index(column), expr))
        out.sort(key=lambda item: item[0])
        return out

    def has(self, table: str, column: str) -> bool:
        expr = self.columns.get((table, column))
        return expr is not None and expr != Constant(1.0)


def weight_expr_from_json(obj, base_dir: str = ".") -> WeightExpr:
    if isinstance(obj, (int, float)):
        return Constant(float(obj))
    if isinstance(obj, str):
        obj = {"type": obj}
    kind = obj.get("type")
    if kind == "constant":
        return Constant(float(obj.get("value", 1.0)))
    if kind == "identity":
        return Identity()
    if kind == "linear":
        return Linear(float(obj["a"]), float(obj.get("b", 0.0)))
    if kind == "power":
        return Power(float(obj["base"]), float(obj.get("scale", 1.0)))
    if kind == "lookup":
        path = obj["file"]
        if not os.path.isabs(path):
            path = os.path.join(base_dir, path)
        default = obj.get("default")
        return Lookup.from_file(path, None if default is None else float(default))
    if kind == "predicate":
        return Predicate(obj["comparison"], obj["value"])
    raise SpecError(f"unknown weight expression {obj!r}")


# -- query --------------------------------------------------------------------

@dataclass
class JoinQuery:
    tables: list[TableRef]
    edges: list[JoinEdge]
    main: str
    weights: WeightSpec = field(default_factory=WeightSpec)
    n: int = 1
    seed: int = 0
    method: str = "stream"

    def table(self, name: str) -> TableRef:
        for t in self.tables:
            if t.name == name:
                return t
        raise UnknownTable(name)

    @property
    def table_names(self) -> list[str]:
        return [t.name for t in self.tables]


def read_header(path: str, delimiter: str = ",") -> tuple[str, ...]:
    import csv

    from .errors import IoError

    try:
        with open(path, newline="", encoding="utf-8") as fh:
            header = next(csv.reader(fh, delimiter=delimiter), None)
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    if header is None:
        raise IoError(f"{path}: missing header row")
    return tuple(header)


def _split_ref(ref) -> tuple[str, str]:
    if isinstance(ref, str):
        table, sep, column = ref.partition(".")
        if not sep:
            raise SpecError(f"column reference {ref!r} must look like table.column")
        return table, column
    return tuple(ref)


def query_from_dict(doc: dict, base_dir: str = ".") -> JoinQuery:
    """Builds a query from the JSON document layout (see README)."""
    try:
        default_delim = doc.get("delimiter", ",")
        tables = []
        for t in doc["tables"]:
            path = t["path"]
            if not os.path.isabs(path):
                path = os.path.join(base_dir, path)
            delim = t.get("delimiter", default_delim)
            columns = t.get("columns") or read_header(path, delim)
            tables.append(TableRef(t["name"], path, tuple(columns),
                                   float(t.get("null_weight", 1.0)), delim))
        edges = []
        for j in doc.get("joins", []):
            edges.append(JoinEdge(_split_ref(j["left"]), _split_ref(j["right"]),
                                  j.get("op", j.get("operator", "inner")),
                                  j.get("cmp", j.get("comparison", "="))))
        weights = WeightSpec({_split_ref(ref): weight_expr_from_json(expr, base_dir)
                              for ref, expr in doc.get("weights", {}).items()})
        sample = doc.get("sample", {})
        return JoinQuery(tables, edges, doc["main"], weights,
                         int(sample.get("n", 1)), int(sample.get("seed", 0)),
                         doc.get("method", "stream"))
    except KeyError as exc:
        raise SpecError(f"missing key {exc.args[0]!r} in query spec") from None


def load_query(path: str) -> JoinQuery:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise SpecError(f"{path}: {exc}") from None
    except OSError as exc:
        raise SpecError(f"cannot read query spec {path}: {exc}") from None
    return query_from_dict(doc, os.path.dirname(os.path.abspath(path)))


# -- links (graph edges between table pairs) --------------------------------------

@dataclass(frozen=True)
class Link:
    """A join-graph edge: one or more column conditions between two tables.

    Parallel equality conditions between the same two tables collapse into a
    single composite-key link.
    """

    left: str
    left_cols: tuple[str, ...]
    right: str
    right_cols: tuple[str, ...]
    operator: str = "inner"
    comparison: str = "="

    @property
    def name(self) -> str:
        op = "" if self.operator == "inner" else f"[{self.operator}]"
        return (f"{self.left}.{'+'.join(self.left_cols)}{self.comparison}"
                f"{self.right}.{'+'.join(self.right_cols)}{op}")

    @property
    def tables(self) -> tuple[str, str]:
        return self.left, self.right

    def other(self, table: str) -> str:
        return self.right if table == self.left else self.left

    @classmethod
    def from_edge(cls, e: JoinEdge) -> "Link":
        return cls(e.left[0], (e.left[1],), e.right[0], (e.right[1],), e.operator, e.comparison)


@dataclass(frozen=True)
class ResidualPredicate:
    """Join condition checked on sampled rows instead of inside the join tree."""

    left: str
    left_cols: tuple[str, ...]
    right: str
    right_cols: tuple[str, ...]
    comparison: str = "="

    @property
    def name(self) -> str:
        return (f"{self.left}.{'+'.join(self.left_cols)}{self.comparison}"
                f"{self.right}.{'+'.join(self.right_cols)}")

    @classmethod
    def from_link(cls, link: Link) -> "ResidualPredicate":
        return cls(link.left, link.left_cols, link.right, link.right_cols, link.comparison)

    def holds(self, left_values: Sequence[str], right_values: Sequence[str]) -> bool:
        """``left_values``/``right_values`` are the predicate's columns, in order."""
        for a, b in zip(left_values, right_values):
            if a == "" or b == "":
                return False
            if self.comparison in ("=", "!="):
                if not COMPARE[self.comparison](a, b):
                    return False
            elif not COMPARE[self.comparison](parse_number(a), parse_number(b)):
                return False
        return True


@dataclass(frozen=True)
class PlanEdge:
    """A link oriented away from the main table.

    ``operator`` is expressed with the parent on the left: ``left-outer``
    null-extends the child, ``right-outer`` admits a NULL parent. The
    ``comparison`` reads ``parent <cmp> child``.
    """

    parent: str
    parent_cols: tuple[str, ...]
    child: str
    child_cols: tuple[str, ...]
    operator: str = "inner"
    comparison: str = "="

    @property
    def name(self) -> str:
        op = "" if self.operator == "inner" else f"[{self.operator}]"
        return (f"{self.parent}.{'+'.join(self.parent_cols)}{self.comparison}"
                f"{self.child}.{'+'.join(self.child_cols)}{op}")

    @property
    def child_nullable(self) -> bool:
        return self.operator in ("left-outer", "full-outer")

    @property
    def parent_nullable(self) -> bool:
        return self.operator in ("right-outer", "full-outer")

    @property
    def is_filter(self) -> bool:
        return self.operator in ("semi", "anti")

    @property
    def is_equi(self) -> bool:
        return self.comparison == "="


def orient(link: Link, parent: str) -> PlanEdge:
    if link.left == parent:
        return PlanEdge(link.left, link.left_cols, link.right, link.right_cols,
                        link.operator, link.comparison)
    if link.operator in ("semi", "anti"):
        raise UnsupportedOperatorCombination(
            f"{link.name}: the filtered ({link.right}) side of a semi/anti join must point away from the main table")
    return PlanEdge(link.right, link.right_cols, link.left, link.left_cols,
                    _MIRRORED_OPERATOR[link.operator], FLIPPED[link.comparison])


# -- validated plan -----------------------------------------------------------

@dataclass
class ValidatedPlan:
    query: JoinQuery
    root: str
    edges: list[PlanEdge]
    residuals: list[ResidualPredicate] = field(default_factory=list)

    def __post_init__(self):
        self.parent_edge: dict[str, PlanEdge] = {e.child: e for e in self.edges}
        self.children: dict[str, list[PlanEdge]] = {t: [] for t in self.query.table_names}
        for e in self.edges:
            self.children[e.parent].append(e)
        # leaf-to-root: every child precedes its parent
        order: list[str] = []

        def visit(t):
            for e in self.children[t]:
                visit(e.child)
            order.append(t)

        visit(self.root)
        self.build_order = [t for t in order if t != self.root]
        unreachable = set()

        def hide(t):
            unreachable.add(t)
            for e in self.children[t]:
                hide(e.child)

        for e in self.edges:
            if e.is_filter:
                hide(e.child)
        self.reachable = [t for t in self.query.table_names if t not in unreachable]
        self.pass_budget = {t: (1 if t == self.root or t in unreachable else 2)
                            for t in self.query.table_names}

    def table(self, name: str) -> TableRef:
        return self.query.table(name)

    @property
    def tables(self) -> list[TableRef]:
        return self.query.tables

    @property
    def weights(self) -> WeightSpec:
        return self.query.weights

    @property
    def is_cyclic(self) -> bool:
        return bool(self.residuals)

    def top_down(self) -> list[PlanEdge]:
        """Edges in breadth-first order from the root."""
        out, queue = [], deque([self.root])
        while queue:
            t = queue.popleft()
            for e in self.children[t]:
                out.append(e)
                queue.append(e.child)
        return out


def _group_links(edges: Sequence[JoinEdge]) -> tuple[list[Link], list[ResidualPredicate]]:
    """Collapses parallel conditions between one table pair.

    Pure inner equalities become one composite-key link; otherwise the first
    condition stays a link and the rest are checked as residual predicates.
    """
    groups: dict[frozenset, list[JoinEdge]] = {}
    for e in edges:
        if e.left[0] == e.right[0]:
            raise UnsupportedOperatorCombination(f"{e.name}: self-joins need two table entries")
        groups.setdefault(frozenset((e.left[0], e.right[0])), []).append(e)
    links, residuals = [], []
    for group in groups.values():
        if len(group) == 1:
            links.append(Link.from_edge(group[0]))
            continue
        first = group[0]
        if all(e.operator == "inner" and e.comparison == "=" for e in group):
            lcols, rcols = [], []
            for e in group:
                if e.left[0] == first.left[0]:
                    lcols.append(e.left[1]); rcols.append(e.right[1])
                else:
                    lcols.append(e.right[1]); rcols.append(e.left[1])
            links.append(Link(first.left[0], tuple(lcols), first.right[0], tuple(rcols)))
            continue
        if any(e.operator != "inner" for e in group):
            raise UnsupportedOperatorCombination(
                f"multiple conditions between {first.left[0]} and {first.right[0]} must all be inner joins")
        group = sorted(group, key=lambda e: (e.comparison != "=",))
        links.append(Link.from_edge(group[0]))
        residuals.extend(ResidualPredicate.from_link(Link.from_edge(e)) for e in group[1:])
    return links, residuals


def _shortest_path(links: Sequence[Link], src: str, dst: str, banned: Link) -> Optional[list[Link]]:
    adj: dict[str, list[Link]] = {}
    for l in links:
        if l is banned:
            continue
        adj.setdefault(l.left, []).append(l)
        adj.setdefault(l.right, []).append(l)
    prev: dict[str, Optional[Link]] = {src: None}
    queue = deque([src])
    while queue:
        t = queue.popleft()
        if t == dst:
            path = []
            while prev[t] is not None:
                path.append(prev[t])
                t = prev[t].other(t)
            return path[::-1]
        for l in adj.get(t, ()):
            nxt = l.other(t)
            if nxt not in prev:
                prev[nxt] = l
                queue.append(nxt)
    return None


def choose_break_edge(cycle: Sequence[Link],
                      statistics: Optional[Mapping[str, float]] = None,
                      sizes: Optional[Mapping[str, int]] = None) -> Link:
    """Picks the cycle edge to demote to a residual predicate.

    ``statistics`` maps link names to the linkage probability
    ``|X ⋈ Y| / (|X| |Y|)``; the least likely link is removed. If any link
    lacks a probability, the link whose endpoint tables have the largest size
    product is removed instead. Ties go to the lexicographically first name.
    """
    statistics = statistics or {}
    if all(l.name in statistics and statistics[l.name] is not None for l in cycle):
        return min(cycle, key=lambda l: (statistics[l.name], l.name))
    if not sizes or any(t not in sizes for l in cycle for t in l.tables):
        raise MissingStatistics("neither linkage probabilities nor table sizes available for cycle "
                                + ", ".join(l.name for l in cycle))
    return min(cycle, key=lambda l: (-sizes[l.left] * sizes[l.right], l.name))


def rewrite_cyclic(links: Sequence[Link],
                   statistics: Optional[Mapping[str, float]] = None,
                   sizes: Optional[Mapping[str, int]] = None,
                   nodes: Optional[Sequence[str]] = None) -> tuple[list[Link], list[ResidualPredicate]]:
    """Removes one link per independent cycle.

    For every table and each adjacent link, a shortest path between the link's
    endpoints that avoids the link itself witnesses a cycle; one link of that
    cycle (see :func:`choose_break_edge`) becomes a residual predicate. Acyclic
    input comes back unchanged.
    """
    links = list(links)
    residuals: list[ResidualPredicate] = []
    if nodes is None:
        nodes = list(dict.fromkeys(t for l in links for t in l.tables))
    for node in nodes:
        changed = True
        while changed:
            changed = False
            for link in [l for l in links if node in l.tables]:
                path = _shortest_path(links, link.left, link.right, banned=link)
                if path is None:
                    continue
                cycle = [link] + path
                bad = [l for l in cycle if l.operator != "inner"]
                if bad:
                    raise UnsupportedOperatorCombination(
                        f"cyclic joins support inner joins only ({bad[0].name})")
                victim = choose_break_edge(cycle, statistics, sizes)
                links.remove(victim)
                residuals.append(ResidualPredicate.from_link(victim))
                changed = True
                break
    return links, residuals


def _check_refs(query: JoinQuery) -> None:
    names = query.table_names
    if len(set(names)) != len(names):
        raise SpecError("duplicate table names")
    if query.main not in names:
        raise UnknownTable(f"main table {query.main!r} is not declared")
    if query.n < 1:
        raise SpecError("sample size must be >= 1")
    for e in query.edges:
        for table, column in (e.left, e.right):
            query.table(table).column_index(column)
        if e.operator in ("semi", "anti") and e.comparison != "=":
            raise UnsupportedOperatorCombination(f"{e.name}: semi/anti joins need an equality condition")
        if e.comparison != "=" and e.operator != "inner":
            raise UnsupportedOperatorCombination(f"{e.name}: non-equality conditions need an inner join")
        if query.weights.has(*e.left) and query.weights.has(*e.right):
            log.warning("both sides of %s carry weights; the join value is weighted twice", e.name)
    for (table, column) in query.weights.columns:
        query.table(table).column_index(column)


def validate(query: JoinQuery,
             statistics: Optional[Mapping[str, float]] = None,
             sizes: Optional[Mapping[str, int]] = None) -> ValidatedPlan:
    """Roots the join graph at the main table and orients its edges.

    Cyclic graphs are first reduced to a spanning tree by
    :func:`rewrite_cyclic`; when no ``statistics`` are supplied the exact
    pairwise linkage probabilities are counted from the data.
    """
    _check_refs(query)
    for t in query.tables:
        if not os.path.exists(t.path):
            from .errors import IoError
            raise IoError(f"table {t.name}: file {t.path} does not exist")
    links, residuals = _group_links(query.edges)

    # connectivity
    seen, queue = {query.main}, deque([query.main])
    while queue:
        t = queue.popleft()
        for l in links:
            if t in l.tables and l.other(t) not in seen:
                seen.add(l.other(t))
                queue.append(l.other(t))
    missing = [t for t in query.table_names if t not in seen]
    if missing:
        raise DisconnectedGraph(f"tables not connected to {query.main}: {', '.join(missing)}")

    if len(links) > len(query.tables) - 1:
        if statistics is None:
            from .stats import link_statistics

            statistics, sizes = link_statistics(query, links)
        links, extra = rewrite_cyclic(links, statistics, sizes, nodes=query.table_names)
        residuals = residuals + extra

    edges: list[PlanEdge] = []
    placed, queue = {query.main}, deque([query.main])
    while queue:
        t = queue.popleft()
        for l in links:
            if t in l.tables and l.other(t) not in placed:
                e = orient(l, t)
                edges.append(e)
                placed.add(e.child)
                queue.append(e.child)
    for e in edges:
        if e.parent_nullable and e.parent != query.main:
            raise UnsupportedOperatorCombination(
                f"{e.name}: a NULL parent row is only supported for edges of the main table")
    return ValidatedPlan(query, query.main, edges, residuals)


def plan_links(plan: ValidatedPlan) -> list[Link]:
    """The plan's tree edges as (parent-left) links."""
    return [Link(e.parent, e.parent_cols, e.child, e.child_cols, e.operator, e.comparison)
            for e in plan.edges]


def with_tables(query: JoinQuery, tables: list[TableRef], edges: list[JoinEdge],
                main: str, weights: WeightSpec) -> JoinQuery:
    return replace(query, tables=tables, edges=edges, main=main, weights=weights)
