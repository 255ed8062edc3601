"""Cyclic joins by rejection.

A cyclic query is sampled through its acyclic rewriting: draws from the
spanning-tree join are kept only if they also satisfy the residual predicates
of the removed edges. Kept draws are weighted samples of the cyclic join, and
the expected acceptance rate is the weighted selectivity of the predicates.
"""
from __future__ import annotations

from typing import Optional

import numpy as np

from ..errors import AcceptanceStall
from ..ingest import PassCounter
from ..joinindex import build_indexes
from ..model import COMPARE, ResidualPredicate, ValidatedPlan, parse_number
from ..multinomial import spawn
from ..sampleset import SampleSet
from .stream import stream_sample

STALL_ROUNDS = 3


def residual_mask(sample: SampleSet, residuals: list[ResidualPredicate]) -> np.ndarray:
    """Draws satisfying every residual predicate."""
    ok = np.ones(len(sample), dtype=bool)
    for r in residuals:
        for lc, rc in zip(r.left_cols, r.right_cols):
            a = np.array(sample.column(r.left, lc), dtype=object)
            b = np.array(sample.column(r.right, rc), dtype=object)
            present = (a != None) & (b != None) & (a != "") & (b != "")  # noqa: E711
            hold = np.zeros(len(sample), dtype=bool)
            if r.comparison in ("=", "!="):
                hold[present] = COMPARE[r.comparison](a[present], b[present])
            else:
                fa = np.array([parse_number(x) for x in a[present]], dtype=float)
                fb = np.array([parse_number(x) for x in b[present]], dtype=float)
                hold[present] = COMPARE[r.comparison](fa, fb)
            ok &= hold
    return ok


def cyclic_sample(plan: ValidatedPlan, n: int, seed: int = 0, *,
                  counter: Optional[PassCounter] = None,
                  batch: Optional[int] = None,
                  max_rounds: int = 1000,
                  min_acceptance: float = 0.0) -> SampleSet:
    """``n`` weighted draws from a cyclic join (rejection over the acyclic superset).

    Indexes are built once; every round draws ``batch`` (default ``n``) rows
    with fresh seed material. Raises :class:`AcceptanceStall` when nothing is
    accepted within the first rounds, when the measured acceptance rate falls
    below ``min_acceptance`` after them, or when ``max_rounds`` is exhausted.
    """
    counter = counter if counter is not None else PassCounter()
    batch = batch or n
    indexes = build_indexes(plan, counter)
    kept: list[SampleSet] = []
    have = drawn = 0
    population = None
    for r, ss in enumerate(spawn(seed, max_rounds)):
        s = stream_sample(plan, batch, ss, counter=counter, indexes=indexes, allow_residuals=True)
        population = s.stats.get("population_weight")
        ok = residual_mask(s, plan.residuals)
        drawn += len(s)
        have += int(ok.sum())
        kept.append(s.select(ok))
        rate = have / drawn
        if have >= n:
            break
        if r + 1 >= STALL_ROUNDS and (have == 0 or rate < min_acceptance):
            raise AcceptanceStall(f"cyclic rejection accepted {have} of {drawn} draws "
                                  f"(acceptance {rate:.4g})", rate)
    else:
        raise AcceptanceStall(f"cyclic rejection kept {have} of {n} rows after {max_rounds} rounds "
                              f"(acceptance {have / drawn:.4g})", have / drawn)
    out = SampleSet.concat(kept).select(slice(0, n))
    out.method = "cyclic"
    out.seed = seed
    out.passes = counter.as_dict()
    out.stats = {"acceptance_rate": have / drawn, "rounds": len(kept), "draws": drawn,
                 "index_entries": sum(len(ix) for ix in indexes.values()),
                 "population_weight": population}
    return out
