"""Multistage stream sampler.

Stage 0 builds the edge indexes leaf-to-root (one pass per non-main table).
Stage 1 scans the main table once, feeding every row with its group weight to
the online multinomial sampler. Each later stage extends the sampled partial
rows by one table: every pending draw gets ``u`` uniform in ``[0, label)`` and
one scan of the child table walks the running cumulative weight per join
value until it passes ``u`` (inversion sampling done for all draws at once).
"""
from __future__ import annotations

import bisect
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..errors import UnresolvedDraw, ZeroTotalWeight
from ..ingest import PassCounter, key_extractor, open_stream
from ..joinindex import (
    Hasher,
    JoinIndex,
    SubtreeWeights,
    build_indexes,
    main_groups,
    null_main_weight,
    peak_entries,
)
from ..model import PlanEdge, ValidatedPlan, parse_number
from ..multinomial import make_rng, online_multinomial, spawn
from ..sampleset import NULL, SampleSet

RESOLVE_RTOL = 1e-9


@dataclass
class PendingGroup:
    """Draws waiting for a row of the child table, all sharing one join value."""

    key: object
    label: float
    us: list                  # ascending
    draws: np.ndarray         # draw indices, aligned with ``us``
    needs_scan: bool = True
    ptr: int = 0
    cum: float = 0.0
    last_row: Optional[int] = None


@dataclass
class PendingExtension:
    edge: PlanEdge
    groups: dict = field(default_factory=dict)
    unmatched: Optional[PendingGroup] = None   # draws whose parent is the NULL main row

    def __bool__(self):
        return any(g.needs_scan for g in self.groups.values()) or self.unmatched is not None


@dataclass
class Resolution:
    choice: np.ndarray        # child ordinal per draw (NULL where null-extended)
    rows: dict                # ordinal -> values, sampled rows only
    row_weights: dict         # ordinal -> own weight
    null_started: np.ndarray  # draws whose NULL begins at this table


def plan_pending(edge: PlanEdge, parent_choice: np.ndarray, parent_rows: dict, index: JoinIndex,
                 parent_key, rng: np.random.Generator, parent_is_main: bool) -> PendingExtension:
    """Groups draws by join value and draws their inversion points ``u``."""
    n = len(parent_choice)
    us = rng.random(n)
    pending = PendingExtension(edge)
    uniq, inverse = np.unique(parent_choice, return_inverse=True)
    group_of_uniq: list = []
    labels = np.zeros(len(uniq))
    for i, p in enumerate(uniq.tolist()):
        if p == NULL:
            if parent_is_main and edge.parent_nullable:
                group_of_uniq.append("__unmatched__")
                labels[i] = index.unmatched_weight()
            else:
                group_of_uniq.append(None)
            continue
        raw = parent_key(parent_rows[p])
        labels[i] = index.lookup(raw)
        if index.mode == "eq":
            group_of_uniq.append(("k", index.key(raw)))
        else:
            group_of_uniq.append(("k", raw))
    gids_of_uniq = {}
    gid_arr = np.empty(len(uniq), dtype=np.int64)
    names = []
    for i, g in enumerate(group_of_uniq):
        if g is None:
            gid_arr[i] = -1
            continue
        if g not in gids_of_uniq:
            gids_of_uniq[g] = len(names)
            names.append((g, labels[i]))
        gid_arr[i] = gids_of_uniq[g]
    gids = gid_arr[inverse]
    u_scaled = us * labels[inverse]
    order = np.lexsort((u_scaled, gids))
    gids_sorted = gids[order]
    bounds = np.searchsorted(gids_sorted, np.arange(len(names) + 1), side="left")
    for gid, (g, label) in enumerate(names):
        sl = order[bounds[gid]:bounds[gid + 1]]
        group = PendingGroup(g, float(label), u_scaled[sl].tolist(), sl)
        if g == "__unmatched__":
            pending.unmatched = group
            continue
        key = group.key = g[1]
        if index.mode == "eq":
            group.needs_scan = key is not None and key in index.labels
        pending.groups[key] = group
    return pending


def resolve_extensions(pending: PendingExtension, rows, n: int, index: JoinIndex,
                       subtree: SubtreeWeights, child_key) -> Resolution:
    """Resolves every pending draw of one edge in a single scan of the child table."""
    choice = np.full(n, NULL, dtype=np.int64)
    null_started = np.zeros(n, dtype=bool)
    sampled, own = {}, {}
    edge = pending.edge
    scanning = [g for g in pending.groups.values() if g.needs_scan]
    if pending.unmatched is not None:
        scanning.append(pending.unmatched)

    if scanning:
        mode = index.mode
        eq_groups = {g.key: g for g in pending.groups.values() if g.needs_scan} if mode == "eq" else None
        other_groups = [g for g in pending.groups.values() if g.needs_scan] if mode != "eq" else []
        unmatched = pending.unmatched
        matched = index.matched
        for row in rows:
            values = row.values
            raw = child_key(values)
            hits = []
            if mode == "eq":
                k = index.key(raw)
                g = eq_groups.get(k) if k is not None else None
                if g is not None:
                    hits.append(g)
                if unmatched is not None and k not in matched and (k is not None or edge.parent_nullable):
                    hits.append(unmatched)
            elif raw is not None:
                y = parse_number(raw) if mode == "theta" else raw
                hits = [g for g in other_groups if index.matches(y, g.key)]
            if not hits:
                continue
            w, c = subtree(values)
            if c <= 0:
                continue
            taken = False
            for g in hits:
                if g.ptr == len(g.us):
                    continue
                g.cum += c
                g.last_row = row.ordinal
                # u resolves here when cum_before <= u < cum_after
                hi = bisect.bisect_left(g.us, g.cum, g.ptr)
                if hi > g.ptr:
                    choice[g.draws[g.ptr:hi]] = row.ordinal
                    g.ptr = hi
                    taken = True
            if taken:
                sampled[row.ordinal] = values
                own[row.ordinal] = w
        for g in scanning:
            if g.ptr == len(g.us):
                continue
            if g.last_row is not None and g.label - g.cum <= RESOLVE_RTOL * g.label:
                choice[g.draws[g.ptr:]] = g.last_row
                g.ptr = len(g.us)
                continue
            raise UnresolvedDraw(
                f"{edge.name}: cumulative {g.cum} never reached draw {g.us[g.ptr]} (label {g.label})")
    # draws of unregistered values fall entirely in the NULL band
    for g in pending.groups.values():
        if not g.needs_scan:
            null_started[g.draws] = True
    return Resolution(choice, sampled, own, null_started)


def stream_sample(plan: ValidatedPlan, n: int, seed: int = 0, *,
                  counter: Optional[PassCounter] = None,
                  indexes: Optional[dict[str, JoinIndex]] = None,
                  hasher: Optional[Hasher] = None,
                  allow_residuals: bool = False,
                  jumps: bool = True) -> SampleSet:
    """``n`` join rows drawn independently with probability proportional to weight."""
    if plan.residuals and not allow_residuals:
        raise ValueError("plan has residual predicates; use cyclic_sample")
    counter = counter if counter is not None else PassCounter()
    ss_main, ss_ext = spawn(seed, 2)
    if indexes is None:
        indexes = build_indexes(plan, counter, hasher)
    null_item = (NULL, None, plan.table(plan.root).null_weight)

    def population():
        for row, w, total in main_groups(plan, indexes, counter):
            if total > 0:
                yield (row.ordinal, row.values, w), total
        nw = null_main_weight(plan, indexes)
        if nw > 0:
            yield null_item, nw

    try:
        drawn = online_multinomial(population(), n, ss_main, jumps=jumps)
    except ZeroTotalWeight:
        raise ZeroTotalWeight("the join is empty or all join rows weigh 0") from None

    choice = {plan.root: np.fromiter((it[0] for it in drawn.draws), dtype=np.int64, count=n)}
    rows = {plan.root: {it[0]: it[1] for it in drawn.distinct.items if it[0] != NULL}}
    weight = np.array([it[2] for it in drawn.draws], dtype=float)

    reachable = set(plan.reachable)
    rng = make_rng(ss_ext)
    for e in plan.top_down():
        if e.child not in reachable:
            continue
        parent_choice = choice[e.parent]
        child = plan.table(e.child)
        index = indexes[e.child]
        pending = plan_pending(e, parent_choice, rows[e.parent], index,
                               key_extractor(plan.table(e.parent), e.parent_cols), rng,
                               parent_is_main=(e.parent == plan.root))
        stream = open_stream(child, counter) if pending else ()
        subtree = SubtreeWeights(child, plan.weights, [indexes[c.child] for c in plan.children[e.child]])
        res = resolve_extensions(pending, stream, n, index, subtree, key_extractor(child, e.child_cols))
        choice[e.child] = res.choice
        rows[e.child] = res.rows
        if res.row_weights:
            ords = res.choice
            picked = ords != NULL
            lookup = res.row_weights
            weight[picked] *= np.fromiter((lookup[o] for o in ords[picked].tolist()), dtype=float)
        weight[res.null_started] *= child.null_weight

    ordinals = np.stack([choice[t] for t in plan.reachable], axis=1) if plan.reachable else np.empty((n, 0))
    return SampleSet(
        tables=list(plan.reachable),
        columns={t: plan.table(t).columns for t in plan.reachable},
        ordinals=ordinals.astype(np.int64),
        rows={t: rows[t] for t in plan.reachable},
        weights=weight,
        seed=seed,
        method="stream",
        passes=counter.as_dict(),
        stats={"index_entries": peak_entries(indexes), "population_weight": drawn.population_weight},
    )
