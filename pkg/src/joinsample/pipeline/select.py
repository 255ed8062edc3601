"""Method selection and the sampling entry point."""
from __future__ import annotations

import logging
import math
from typing import Optional

from ..errors import AcceptanceStall, KeyViolation, UnsupportedOperatorCombination
from ..ingest import PassCounter
from ..model import JoinQuery, ValidatedPlan, validate
from ..sampleset import SampleSet
from ..stats import PlanStatistics, plan_statistics
from .cyclic import cyclic_sample
from .economic import HashedJoinConfig, fk_economic_sample, hashed_edges, hashed_join_sample, oversample_factor
from .simplify import simplify_join_graph, unmerge
from .stream import stream_sample

log = logging.getLogger(__name__)

METHODS = ("stream", "economic", "auto", "fk_economic", "hashed_join", "cyclic")

# FK rejection keeps prod(mean w) / prod(max w) of its proposals
MAX_FK_SKEW = 4.0
# relax keys once an edge has this many distinct values per requested draw
HASH_KEYS_PER_DRAW = 64


def is_fk_shaped(plan: ValidatedPlan, stats: PlanStatistics) -> bool:
    if plan.residuals or not plan.edges:
        return False
    return all(e.operator == "inner" and e.comparison == "=" and stats.unique_child_keys.get(e.name, False)
               for e in plan.edges)


def fk_skew(plan: ValidatedPlan, stats: PlanStatistics) -> float:
    return math.prod(stats.weight_skew.get(t, math.inf) for t in plan.query.table_names)


def choose_universe(plan: ValidatedPlan, stats: PlanStatistics, n: int) -> int:
    """Power of two minimising ``edges * u + f(u) * n`` (index entries plus draws)."""
    edges = hashed_edges(plan)
    involved = {t for e in edges for t in (e.parent, e.child)}
    m = max((stats.table_rows.get(t, 0) for t in involved), default=0)
    k = len(involved)
    best = None
    for bits in range(1, 63):
        u = 1 << bits
        cost = len(edges) * u + oversample_factor(m, u, k) * n
        if best is None or cost < best[0]:
            best = (cost, u)
        if u > 4 * max(m, n):
            break
    return best[1]


def select_method(plan: ValidatedPlan, stats: PlanStatistics, n: int) -> str:
    """``cyclic``, ``fk_economic``, ``hashed_join`` or ``stream``."""
    if plan.residuals:
        return "cyclic"
    if is_fk_shaped(plan, stats) and fk_skew(plan, stats) <= MAX_FK_SKEW:
        return "fk_economic"
    equi = hashed_edges(plan)
    if equi and max(stats.distinct_keys.get(e.name, 0) for e in equi) >= HASH_KEYS_PER_DRAW * n:
        return "hashed_join"
    return "stream"


def sample_plan(plan: ValidatedPlan, n: int, seed: int = 0, method: str = "stream", *,
                counter: Optional[PassCounter] = None,
                hashed: Optional[HashedJoinConfig] = None,
                stats: Optional[PlanStatistics] = None) -> SampleSet:
    """Runs one sampler on a validated plan, falling back to the stream sampler
    when foreign-key rejection stalls or the keys are not unique."""
    counter = counter if counter is not None else PassCounter()
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}")
    if method in ("auto", "economic"):
        stats = stats or plan_statistics(plan, counter)
        picked = select_method(plan, stats, n)
        # the economic sampler trades scans for memory on every acyclic plan
        if method == "economic" and picked == "stream" and hashed_edges(plan):
            picked = "hashed_join"
        method = picked
    if method == "cyclic" or plan.residuals:
        return cyclic_sample(plan, n, seed, counter=counter)
    if method == "fk_economic":
        try:
            return fk_economic_sample(plan, n, seed, counter=counter)
        except (AcceptanceStall, KeyViolation, UnsupportedOperatorCombination) as exc:
            log.warning("foreign-key sampler gave up (%s); using the stream sampler", exc)
            out = stream_sample(plan, n, seed, counter=counter)
            out.stats["fallback_from"] = "fk_economic"
            out.stats["fallback_reason"] = exc.category
            if isinstance(exc, AcceptanceStall):
                out.stats["acceptance_rate"] = exc.acceptance_rate
            return out
    if method == "hashed_join":
        if hashed is None:
            stats = stats or plan_statistics(plan, counter)
            hashed = HashedJoinConfig(universe=choose_universe(plan, stats, n))
        return hashed_join_sample(plan, n, seed, hashed, counter=counter)
    return stream_sample(plan, n, seed, counter=counter)


def sample(query: JoinQuery, n: Optional[int] = None, seed: Optional[int] = None,
           method: Optional[str] = None, *, hashed: Optional[HashedJoinConfig] = None,
           temp_dir: Optional[str] = None, counter: Optional[PassCounter] = None) -> SampleSet:
    """Validates ``query`` and draws its sample.

    With ``economic`` a cyclic query is first simplified by pre-joining cheap
    table pairs; the sample is mapped back to the original tables.
    """
    n = query.n if n is None else n
    seed = query.seed if seed is None else seed
    method = method or query.method
    counter = counter if counter is not None else PassCounter()
    if method == "economic":
        plan = validate(query)
        if plan.residuals:
            simplified = simplify_join_graph(query, temp_dir=temp_dir, counter=counter)
            if simplified.changed:
                try:
                    splan = validate(simplified.query)
                    out = sample_plan(splan, n, seed, "economic", counter=counter, hashed=hashed)
                    out = unmerge(out, simplified, plan.reachable)
                    out.stats["merges"] = [f"{a}+{b}" for a, b, _ in simplified.merges]
                    out.passes = counter.as_dict()
                    return out
                finally:
                    simplified.cleanup()
        return sample_plan(plan, n, seed, "economic", counter=counter, hashed=hashed)
    plan = validate(query)
    return sample_plan(plan, n, seed, method, counter=counter, hashed=hashed)
