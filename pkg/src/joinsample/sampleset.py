from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

NULL = -1


@dataclass
class SampleSet:
    """A with-replacement sample of join rows ("result trees").

    ``ordinals[j, i]`` is the row ordinal of ``tables[i]`` in draw ``j``, or
    ``NULL`` (-1) for a null-extended table. Only the rows that were actually
    sampled are kept, in ``rows[table][ordinal]``.
    """

    tables: list[str]
    columns: dict[str, tuple[str, ...]]
    ordinals: np.ndarray
    rows: dict[str, dict[int, tuple]]
    weights: np.ndarray
    seed: Optional[int] = None
    method: str = "stream"
    passes: dict[str, int] = field(default_factory=dict)
    stats: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.ordinals)

    def trees(self) -> list[tuple[int, ...]]:
        return [tuple(r) for r in self.ordinals.tolist()]

    def values(self, j: int, table: str) -> Optional[tuple]:
        o = int(self.ordinals[j, self.tables.index(table)])
        return None if o == NULL else self.rows[table][o]

    def column(self, table: str, column: str) -> list[Optional[str]]:
        """One column across all draws (None where the table is NULL)."""
        i = self.tables.index(table)
        c = self.columns[table].index(column)
        store = self.rows[table]
        return [None if o == NULL else store[o][c] for o in self.ordinals[:, i].tolist()]

    def select(self, mask_or_index) -> "SampleSet":
        ordinals = self.ordinals[mask_or_index]
        weights = self.weights[mask_or_index]
        return SampleSet(self.tables, self.columns, ordinals, self.rows, weights,
                         self.seed, self.method, dict(self.passes), dict(self.stats))

    @classmethod
    def concat(cls, parts: Sequence["SampleSet"], **meta) -> "SampleSet":
        first = parts[0]
        rows: dict[str, dict[int, tuple]] = {t: {} for t in first.tables}
        for p in parts:
            for t in first.tables:
                rows[t].update(p.rows.get(t, {}))
        out = cls(first.tables, first.columns,
                  np.concatenate([p.ordinals for p in parts]).reshape(-1, len(first.tables)),
                  rows, np.concatenate([p.weights for p in parts]),
                  first.seed, first.method, dict(first.passes), dict(first.stats))
        for k, v in meta.items():
            setattr(out, k, v)
        return out

    def header(self) -> list[str]:
        return ["draw_id"] + [f"{t}.{c}" for t in self.tables for c in self.columns[t]]

    def records(self):
        """Output rows: draw index, then every column of every table ('' for NULL)."""
        blanks = {t: ("",) * len(self.columns[t]) for t in self.tables}
        for j, ords in enumerate(self.ordinals.tolist()):
            out = [str(j)]
            for t, o in zip(self.tables, ords):
                out.extend(blanks[t] if o == NULL else self.rows[t][o])
            yield out
