"""Join-graph simplification by pre-joining cheap table pairs.

Two tables linked by inner equalities are joined up front when their join is
at most ``budget`` times larger than the bigger of the two (foreign-key joins
have ratio 1). The merged table is written to a temporary file whose columns
are ``table.column`` plus a hidden ``#table`` ordinal column per original
table, so samples over the simplified query map back to the original tables.
Merging the two ends of a cycle edge turns the remaining parallel edges into
one composite key, which can make a cyclic query acyclic.
"""
from __future__ import annotations

import csv
import os
import tempfile
from collections import Counter
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..errors import TempStorageError
from ..ingest import PassCounter, key_extractor, open_stream
from ..model import JoinEdge, JoinQuery, TableRef, ValidatedPlan, WeightSpec, validate, with_tables
from ..sampleset import NULL, SampleSet

ORD_PREFIX = "#"


@dataclass
class Member:
    """Where an original table lives inside a working table."""

    ordinal_column: Optional[str]            # None: the working table is the original
    columns: dict[str, str]                  # original column -> working column


@dataclass
class SimplifiedQuery:
    query: JoinQuery
    original: JoinQuery
    members: dict[str, dict[str, Member]]    # working table -> {original table: Member}
    merges: list[tuple[str, str, int]] = field(default_factory=list)   # (a, b, join size)
    temp_files: list[str] = field(default_factory=list)

    @property
    def changed(self) -> bool:
        return bool(self.merges)

    def cleanup(self) -> None:
        for path in self.temp_files:
            try:
                os.remove(path)
            except OSError:
                pass
        self.temp_files.clear()


def _pair_conditions(query: JoinQuery, a: str, b: str) -> Optional[tuple[list[str], list[str]]]:
    """Columns of ``a`` and ``b`` joined by the edges between them, or None if any is not inner '='."""
    acols, bcols = [], []
    for e in query.edges:
        if {e.left[0], e.right[0]} != {a, b}:
            continue
        if e.operator != "inner" or e.comparison != "=":
            return None
        (lt, lc), (rt, rc) = e.left, e.right
        if lt == a:
            acols.append(lc); bcols.append(rc)
        else:
            acols.append(rc); bcols.append(lc)
    return (acols, bcols) if acols else None


def _counts(table: TableRef, cols, counter):
    key = key_extractor(table, cols)
    c: Counter = Counter()
    rows = 0
    for row in open_stream(table, counter):
        rows += 1
        k = key(row.values)
        if k is not None:
            c[k] += 1
    return c, rows


def _is_plain(members, t: str) -> bool:
    return t in members[t] and members[t][t].ordinal_column is None


def _working_column(members, t: str, c: str) -> str:
    """Name of working column ``t.c`` once ``t`` is part of a merged table."""
    return f"{t}.{c}" if _is_plain(members, t) else c


def _merge(query: JoinQuery, members, a: str, b: str, acols, bcols, temp_dir: str, counter):
    ta, tb = query.table(a), query.table(b)
    plain = {t: _is_plain(members, t) for t in (a, b)}
    cols = []
    for t in (ta, tb):
        if plain[t.name]:
            cols.append(ORD_PREFIX + t.name)
        cols.extend(_working_column(members, t.name, c) for c in t.columns)
    # right side held in memory, left side streamed
    bkey = key_extractor(tb, bcols)
    buckets: dict = {}
    for row in open_stream(tb, counter):
        k = bkey(row.values)
        if k is not None:
            buckets.setdefault(k, []).append(((str(row.ordinal),) if plain[b] else ()) + row.values)
    akey = key_extractor(ta, acols)
    written = 0
    try:
        fd, path = tempfile.mkstemp(prefix="merged-", suffix=".csv", dir=temp_dir)
        with os.fdopen(fd, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(cols)
            for row in open_stream(ta, counter):
                k = akey(row.values)
                if k is None:
                    continue
                left = ((str(row.ordinal),) if plain[a] else ()) + row.values
                for right in buckets.get(k, ()):
                    w.writerow(left + right)
                    written += 1
    except OSError as exc:
        raise TempStorageError(f"cannot write merged table for {a} and {b}: {exc}") from exc

    merged_members: dict[str, Member] = {}
    for t in (a, b):
        if plain[t]:
            merged_members[t] = Member(ORD_PREFIX + t, {c: f"{t}.{c}" for c in query.table(t).columns})
        else:
            merged_members.update(members[t])
    return TableRef(f"{a}+{b}", path, tuple(cols), 1.0, ","), merged_members, written


def _rename(query: JoinQuery, members, a: str, b: str, merged: TableRef) -> JoinQuery:
    """The query with tables ``a`` and ``b`` replaced by ``merged``."""

    def column(t, c):
        return (merged.name, _working_column(members, t, c)) if t in (a, b) else (t, c)

    tables = [t for t in query.tables if t.name not in (a, b)]
    tables.insert(min(query.table_names.index(a), query.table_names.index(b)), merged)
    edges = [JoinEdge(column(*e.left), column(*e.right), e.operator, e.comparison)
             for e in query.edges if {e.left[0], e.right[0]} != {a, b}]
    weights = WeightSpec({column(t, c): expr for (t, c), expr in query.weights.columns.items()})
    main = merged.name if query.main in (a, b) else query.main
    return with_tables(query, tables, edges, main, weights)


def simplify_join_graph(query: JoinQuery, budget: float = 1.1, temp_dir: Optional[str] = None,
                        counter: Optional[PassCounter] = None) -> SimplifiedQuery:
    """Greedily pre-joins adjacent table pairs whose join size is at most ``budget * max(|A|, |B|)``.

    The cheapest pair (smallest size ratio) is merged first; statistics are
    recounted after every merge.
    """
    counter = counter if counter is not None else PassCounter()
    temp_dir = temp_dir or tempfile.gettempdir()
    if not os.path.isdir(temp_dir):
        raise TempStorageError(f"temp directory {temp_dir} does not exist")
    members = {t.name: {t.name: Member(None, {c: c for c in t.columns})} for t in query.tables}
    result = SimplifiedQuery(query, query, members)
    current = query
    while True:
        pairs = sorted({tuple(sorted((e.left[0], e.right[0]))) for e in current.edges})
        best = None
        for a, b in pairs:
            cond = _pair_conditions(current, a, b)
            if cond is None:
                continue
            ca, na = _counts(current.table(a), cond[0], counter)
            cb, nb = _counts(current.table(b), cond[1], counter)
            size = sum(c * cb.get(k, 0) for k, c in ca.items())
            biggest = max(na, nb)
            if biggest == 0 or size > budget * biggest:
                continue
            ratio = size / biggest
            if best is None or ratio < best[0]:
                best = (ratio, a, b, cond, size)
        if best is None:
            break
        _, a, b, (acols, bcols), size = best
        merged, merged_members, written = _merge(current, members, a, b, acols, bcols, temp_dir, counter)
        result.temp_files.append(merged.path)
        current = _rename(current, members, a, b, merged)
        members = {k: v for k, v in members.items() if k not in (a, b)}
        members[merged.name] = merged_members
        result.merges.append((a, b, written))
    result.query = current
    result.members = members
    return result


def unmerge(sample: SampleSet, simplified: SimplifiedQuery, reachable: list[str]) -> SampleSet:
    """Maps a sample over the simplified query back to the original tables."""
    original = simplified.original
    ords, rows = {}, {}
    for wt, mem in simplified.members.items():
        if wt not in sample.tables:
            for orig in mem:
                ords[orig] = np.full(len(sample), NULL, dtype=np.int64)
                rows[orig] = {}
            continue
        wi = sample.tables.index(wt)
        wcols = sample.columns[wt]
        wrows = sample.rows[wt]
        for orig, m in mem.items():
            if m.ordinal_column is None:
                ords[orig] = sample.ordinals[:, wi].copy()
                rows[orig] = dict(wrows)
                continue
            oi = wcols.index(m.ordinal_column)
            cidx = [wcols.index(m.columns[c]) for c in original.table(orig).columns]
            mapping, store = {}, {}
            for o, values in wrows.items():
                oo = int(values[oi])
                mapping[o] = oo
                store[oo] = tuple(values[i] for i in cidx)
            ords[orig] = np.fromiter((NULL if o == NULL else mapping[o] for o in sample.ordinals[:, wi].tolist()),
                                     dtype=np.int64, count=len(sample))
            rows[orig] = store
    tables = list(reachable)
    out = SampleSet(tables, {t: original.table(t).columns for t in tables},
                    np.stack([ords[t] for t in tables], axis=1) if tables else np.empty((len(sample), 0), np.int64),
                    {t: rows[t] for t in tables}, sample.weights, sample.seed, sample.method,
                    dict(sample.passes), dict(sample.stats))
    return out


def simplified_plan(simplified: SimplifiedQuery) -> ValidatedPlan:
    return validate(simplified.query)
