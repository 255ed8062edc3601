"""Sequential table access with pass accounting, and row weights."""
from __future__ import annotations

import csv
import math
import os
import threading
from collections import Counter
from typing import Iterator, NamedTuple, Optional, Sequence

from .errors import IoError, NegativeWeight, NonFiniteWeight, SchemaMismatch
from .model import TableRef, WeightSpec

DEFAULT_BUFFER_BYTES = 1 << 20


def buffer_bytes() -> int:
    try:
        return max(1, int(os.environ.get("JOINSAMPLE_BUFFER_BYTES", DEFAULT_BUFFER_BYTES)))
    except ValueError:
        return DEFAULT_BUFFER_BYTES


class Row(NamedTuple):
    ordinal: int
    values: tuple
    is_null_row: bool = False


def null_row(table: TableRef) -> Row:
    return Row(-1, (), True)


class PassCounter:
    """Completed sequential scans per table."""

    def __init__(self):
        self._counts: Counter = Counter()
        self._lock = threading.Lock()

    def completed(self, table: str) -> None:
        with self._lock:
            self._counts[table] += 1

    def __getitem__(self, table: str) -> int:
        return self._counts[table]

    def as_dict(self) -> dict[str, int]:
        with self._lock:
            return dict(self._counts)


class TableStream:
    """Re-iterable view of a table file; every full iteration is one pass."""

    def __init__(self, table: TableRef, counter: Optional[PassCounter] = None):
        self.table = table
        self.counter = counter if counter is not None else PassCounter()

    def __iter__(self) -> Iterator[Row]:
        table = self.table
        width = len(table.columns)
        try:
            fh = open(table.path, newline="", encoding="utf-8", buffering=buffer_bytes())
        except OSError as exc:
            raise IoError(f"table {table.name}: cannot open {table.path}: {exc}") from exc
        with fh:
            reader = csv.reader(fh, delimiter=table.delimiter)
            header = next(reader, None)
            if header is None:
                raise SchemaMismatch(f"table {table.name}: {table.path} has no header row")
            if tuple(header) != table.columns:
                raise SchemaMismatch(
                    f"table {table.name}: header {header} does not match declared columns {list(table.columns)}")
            ordinal = 0
            for values in reader:
                if len(values) != width:
                    if not values:
                        continue
                    raise SchemaMismatch(
                        f"table {table.name}: line {reader.line_num} has {len(values)} fields, expected {width}")
                yield Row(ordinal, tuple(values))
                ordinal += 1
        self.counter.completed(table.name)


def open_stream(table: TableRef, counter: Optional[PassCounter] = None) -> TableStream:
    return TableStream(table, counter)


class TableWeigher:
    """Row weight for one table: the product of its per-column weights."""

    def __init__(self, table: TableRef, spec: WeightSpec):
        self.table = table
        self.terms = spec.for_table(table)

    def __call__(self, row) -> float:
        if isinstance(row, Row):
            if row.is_null_row:
                return self.table.null_weight
            values = row.values
        else:
            values = row
        w = 1.0
        for index, expr in self.terms:
            cw = expr(values[index])
            if cw < 0:
                raise NegativeWeight(
                    f"table {self.table.name}: column {self.table.columns[index]} weighs {cw} for {values[index]!r}")
            w *= cw
        if not math.isfinite(w):
            raise NonFiniteWeight(f"table {self.table.name}: weight of row {values} is not finite")
        return w


def eval_weight(row: Row, spec: WeightSpec, table: TableRef) -> float:
    return TableWeigher(table, spec)(row)


def key_extractor(table: TableRef, columns: Sequence[str]):
    """Returns ``values -> join key``; a key with an empty cell is ``None``.

    Keys are compared as exact strings; NULL cells never match anything.
    """
    idx = tuple(table.column_index(c) for c in columns)
    if len(idx) == 1:
        (i,) = idx

        def key1(values):
            v = values[i]
            return None if v == "" else v

        return key1

    def keyn(values):
        k = tuple(values[i] for i in idx)
        return None if "" in k else k

    return keyn


def write_table(path: str, columns: Sequence[str], rows, delimiter: str = ",") -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
        w.writerow(columns)
        w.writerows(rows)
