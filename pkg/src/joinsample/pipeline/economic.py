"""Memory-lean samplers.

``fk_economic_sample`` handles many-to-one joins: it samples main rows
uniformly, follows each one to its unique continuation and then corrects for
the weights by rejection. ``hashed_join_sample`` relaxes equi-joins to equal
hash buckets so the indexes hold at most ``u`` entries per edge; join rows
produced only by bucket collisions are purged afterwards.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from ..errors import AcceptanceStall, KeyViolation, RetryBudgetExceeded, UnsupportedOperatorCombination
from ..ingest import PassCounter, TableWeigher, key_extractor, open_stream
from ..joinindex import build_indexes, group_weights
from ..model import PlanEdge, ValidatedPlan, WeightSpec
from ..multinomial import make_rng, online_multinomial, spawn
from ..sampleset import NULL, SampleSet
from .stream import stream_sample

FK_OVERSAMPLE = 10
FK_MAX_ROUNDS = 3

_MASK64 = (1 << 64) - 1


# -- foreign-key joins ----------------------------------------------------------

def _require_fk_shape(plan: ValidatedPlan) -> None:
    if plan.residuals:
        raise UnsupportedOperatorCombination("foreign-key sampling needs an acyclic plan")
    for e in plan.edges:
        if e.operator != "inner" or e.comparison != "=":
            raise UnsupportedOperatorCombination(f"{e.name}: foreign-key sampling needs inner equi-joins")


def _extend(plan: ValidatedPlan, e: PlanEdge, parent_choice: np.ndarray, parent_rows: dict,
            counter: PassCounter):
    """Looks up the unique child row of every sampled parent row (one scan)."""
    pkey = key_extractor(plan.table(e.parent), e.parent_cols)
    child = plan.table(e.child)
    ckey = key_extractor(child, e.child_cols)
    wanted: dict = {}
    for p in set(parent_choice.tolist()):
        k = pkey(parent_rows[p])
        if k is None:
            raise KeyViolation(f"{e.name}: parent row {p} has a NULL join value")
        wanted[k] = None
    weigh = TableWeigher(child, plan.weights)
    found: dict = {}
    rows, own, peak = {}, {}, 0.0
    for row in open_stream(child, counter):
        w = weigh(row.values)
        peak = max(peak, w)
        k = ckey(row.values)
        if k in wanted:
            if k in found:
                raise KeyViolation(f"{e.name}: value {k!r} matches more than one {e.child} row")
            found[k] = row.ordinal
            rows[row.ordinal] = row.values
            own[row.ordinal] = w
    missing = [k for k in wanted if k not in found]
    if missing:
        raise KeyViolation(f"{e.name}: value {missing[0]!r} has no {e.child} row")
    lookup = {p: found[pkey(parent_rows[p])] for p in set(parent_choice.tolist())}
    choice = np.fromiter((lookup[p] for p in parent_choice.tolist()), dtype=np.int64, count=len(parent_choice))
    return choice, rows, own, peak


def fk_economic_sample(plan: ValidatedPlan, n: int, seed: int = 0, *,
                       counter: Optional[PassCounter] = None,
                       oversample: int = FK_OVERSAMPLE,
                       max_rounds: int = FK_MAX_ROUNDS) -> SampleSet:
    """Uniform over-sample of main rows, extended by lookups, then rejection.

    Every main row must have exactly one continuation along every edge, so a
    uniform main row is a uniform join row; accepting it with probability
    ``prod(w) / prod(max w)`` makes the kept rows weighted. Raises
    :class:`AcceptanceStall` if ``max_rounds`` rounds do not yield ``n`` rows.
    """
    _require_fk_shape(plan)
    counter = counter if counter is not None else PassCounter()
    root = plan.table(plan.root)
    weigh_root = TableWeigher(root, plan.weights)
    kept: list[SampleSet] = []
    have, proposed, accepted = 0, 0, 0
    for r, ss in enumerate(spawn(seed, max_rounds)):
        ss_main, ss_acc = ss.spawn(2)
        m = oversample * n
        peak = {plan.root: 0.0}

        def population():
            for row in open_stream(root, counter):
                w = weigh_root(row.values)
                peak[plan.root] = max(peak[plan.root], w)
                yield (row.ordinal, row.values, w), 1.0

        drawn = online_multinomial(population(), m, ss_main)
        choice = {plan.root: np.fromiter((d[0] for d in drawn.draws), dtype=np.int64, count=m)}
        rows = {plan.root: {d[0]: d[1] for d in drawn.distinct.items}}
        weight = np.array([d[2] for d in drawn.draws])
        for e in plan.top_down():
            c, rws, own, pk = _extend(plan, e, choice[e.parent], rows[e.parent], counter)
            choice[e.child], rows[e.child], peak[e.child] = c, rws, pk
            weight *= np.fromiter((own[o] for o in c.tolist()), dtype=float, count=m)
        bound = math.prod(peak.values())
        if not bound > 0:
            raise AcceptanceStall("every join row weighs 0", 0.0)
        keep = make_rng(ss_acc).random(m) * bound < weight
        proposed += m
        accepted += int(keep.sum())
        tables = list(plan.reachable)
        ords = np.stack([choice[t] for t in tables], axis=1)[keep]
        kept.append(SampleSet(tables, {t: plan.table(t).columns for t in tables}, ords,
                              rows, weight[keep], seed, "fk_economic"))
        have += len(ords)
        if have >= n:
            break
    rate = accepted / proposed
    if have < n:
        raise AcceptanceStall(f"foreign-key rejection kept {have} of {n} rows after {max_rounds} rounds "
                              f"(acceptance {rate:.4g})", rate)
    out = SampleSet.concat(kept).select(slice(0, n))
    out.passes = counter.as_dict()
    out.stats = {"acceptance_rate": rate, "rounds": len(kept), "proposed": proposed,
                 "index_entries": 0}
    return out


# -- equi-hash joins ------------------------------------------------------------

def _fingerprint(key) -> int:
    if isinstance(key, tuple):
        key = "\x1f".join(key)
    return int.from_bytes(hashlib.blake2b(key.encode("utf-8"), digest_size=8).digest(), "little")


class MultiplyShift:
    """``h(x) = ((a * fp(x) + b) mod 2**64) >> (64 - bits)`` onto ``2**bits`` buckets."""

    def __init__(self, universe: int, seed):
        bits = int(universe).bit_length() - 1
        if universe < 2 or 1 << bits != universe:
            raise ValueError(f"universe must be a power of two >= 2, got {universe}")
        self.universe, self.bits = universe, bits
        a, b = make_rng(seed).integers(0, 1 << 63, size=2, dtype=np.uint64).tolist()
        self.a = (2 * a + 1) & _MASK64
        self.b = b
        self._cache: dict = {}

    def __call__(self, key) -> int:
        h = self._cache.get(key)
        if h is None:
            h = ((self.a * _fingerprint(key) + self.b) & _MASK64) >> (64 - self.bits)
            self._cache[key] = h
        return h


@dataclass
class HashedJoinConfig:
    universe: int = 1 << 16
    seed: Optional[int] = None          # hash seed; defaults to the sampling seed
    oversample: Optional[float] = None  # None: from the table sizes
    max_rounds: int = 20
    max_draws: int = 10**7              # memory limit on one round's draws

    def __post_init__(self):
        if self.universe < 2 or self.universe & (self.universe - 1):
            raise ValueError("universe must be a power of two >= 2")
        if self.oversample is not None and self.oversample < 1:
            raise ValueError("oversample factor must be >= 1")


def superfluous_bound(m: int, universe: int, k: int) -> float:
    """Expected superfluous rows of a k-table hash-relaxed key join: ``2 m (m/u)^(k-1)``."""
    return 2.0 * m * (m / universe) ** (k - 1)


def oversample_factor(m: int, universe: int, k: int) -> float:
    return max(1.0, 2.0 * (m / universe) ** (k - 1))


def join_size(plan: ValidatedPlan, hasher=None, counter: Optional[PassCounter] = None) -> float:
    """Number of join rows (unit weights); with ``hasher``, of the hash-relaxed join."""
    unit = ValidatedPlan(replace(plan.query, weights=WeightSpec()), plan.root, plan.edges, plan.residuals)
    indexes = build_indexes(unit, counter, hasher)
    groups, null = group_weights(unit, indexes, counter)
    return math.fsum(groups.values()) + null


def hashed_edges(plan: ValidatedPlan) -> list[PlanEdge]:
    return [e for e in plan.edges if e.operator == "inner" and e.comparison == "="]


def _table_rows(plan: ValidatedPlan, names, counter: PassCounter) -> dict[str, int]:
    out = {}
    for t in names:
        out[t] = sum(1 for _ in open_stream(plan.table(t), counter))
    return out


def exact_rows(sample: SampleSet, plan: ValidatedPlan, edges) -> np.ndarray:
    """Mask of draws that satisfy every given edge with the original values."""
    ok = np.ones(len(sample), dtype=bool)
    for e in edges:
        pi, ci = sample.tables.index(e.parent), sample.tables.index(e.child)
        pkey = key_extractor(plan.table(e.parent), e.parent_cols)
        ckey = key_extractor(plan.table(e.child), e.child_cols)
        prows, crows = sample.rows[e.parent], sample.rows[e.child]
        same: dict = {}
        for j, (p, c) in enumerate(zip(sample.ordinals[:, pi].tolist(), sample.ordinals[:, ci].tolist())):
            if p == NULL or c == NULL:
                continue
            v = same.get((p, c))
            if v is None:
                v = same[(p, c)] = pkey(prows[p]) == ckey(crows[c])
            if not v:
                ok[j] = False
    return ok


def hashed_join_sample(plan: ValidatedPlan, n: int, seed: int = 0,
                       config: Optional[HashedJoinConfig] = None, *,
                       counter: Optional[PassCounter] = None) -> SampleSet:
    """Samples the hash-relaxed join and purges rows that break an original equality.

    Each round draws ``ceil(f * n)`` rows with a fresh hash function; rounds
    repeat until ``n`` exact join rows are collected.
    """
    if plan.residuals:
        raise UnsupportedOperatorCombination("hashed join sampling needs an acyclic plan")
    config = config or HashedJoinConfig()
    counter = counter if counter is not None else PassCounter()
    edges = [e for e in hashed_edges(plan) if e.child in plan.reachable]
    f = config.oversample
    if f is None:
        involved = sorted({t for e in edges for t in (e.parent, e.child)})
        sizes = _table_rows(plan, involved, counter) if involved else {}
        m = max(sizes.values(), default=0)
        f = oversample_factor(m, config.universe, len(involved)) if involved else 1.0
    per_round = min(max(n, math.ceil(f * n)), max(config.max_draws, n))
    hash_seed = seed if config.seed is None else config.seed
    kept: list[SampleSet] = []
    have, drawn, purged, peak = 0, 0, 0, 0
    hseeds = spawn(hash_seed, config.max_rounds)
    sseeds = spawn(seed, config.max_rounds)
    for r in range(config.max_rounds):
        hasher = MultiplyShift(config.universe, hseeds[r])
        s = stream_sample(plan, per_round, sseeds[r], counter=counter, hasher=hasher)
        peak = max(peak, s.stats.get("index_entries", 0))
        ok = exact_rows(s, plan, edges)
        drawn += len(s)
        purged += int((~ok).sum())
        kept.append(s.select(ok))
        have += int(ok.sum())
        if have >= n:
            break
    if have < n:
        raise RetryBudgetExceeded(f"hashed join kept {have} of {n} rows after {config.max_rounds} rounds "
                                  f"(purge rate {purged / max(drawn, 1):.4g})")
    out = SampleSet.concat(kept).select(slice(0, n))
    out.method = "hashed_join"
    out.seed = seed
    out.passes = counter.as_dict()
    out.stats = {"purge_rate": purged / drawn, "rounds": len(kept), "oversample": f,
                 "draws": drawn, "index_entries": peak, "universe": config.universe}
    return out
