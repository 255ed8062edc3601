# coding: utf-8

# # Lean sampling paths
#
# Three samplers that avoid holding every join value in memory, or that
# handle cycles: foreign-key rejection, the hash-relaxed key join and
# triangle sampling by rejection.

# In[1]:

import os
import random
import tempfile

from joinsample.errors import AcceptanceStall
from joinsample.ingest import write_table
from joinsample.model import Identity, JoinEdge, JoinQuery, Power, TableRef, WeightSpec, validate
from joinsample.oracle import compare_distributions, enumerate_join
from joinsample.pipeline import (
    HashedJoinConfig,
    MultiplyShift,
    cyclic_sample,
    fk_economic_sample,
    hashed_join_sample,
    join_size,
    sample_plan,
    superfluous_bound,
)

work = tempfile.mkdtemp(prefix="joinsample-demo-")
rng = random.Random(1)

def make(name, columns, rows):
    path = os.path.join(work, f"{name}.csv")
    write_table(path, columns, rows)
    return TableRef(name, path, tuple(columns))


# ## Foreign keys
#
# Every order has exactly one customer, so a uniform order is a uniform join
# row. The weight is corrected by rejection: keep a row with probability
# w / max w.

# In[2]:

customers = make("C", ["ckey", "nation"], [(f"c{i}", f"n{i % 5}") for i in range(100)])
orders = make("O", ["okey", "ckey", "x"], [(f"o{i}", f"c{rng.randrange(100)}", (i % 100 + 0.5) / 50) for i in range(1000)])
fk = JoinQuery([orders, customers], [JoinEdge(("O", "ckey"), ("C", "ckey"))], "O", WeightSpec({("O", "x"): Identity()}))
s = fk_economic_sample(validate(fk), 2000, seed=3)
print("acceptance rate:", round(s.stats["acceptance_rate"], 4), "(mean/max weight is 0.5)")


# With weights 2^x, x up to 60, almost everything is rejected. The sampler
# stops after a few rounds, and the dispatcher falls back to the stream sampler.

# In[3]:

skewed = make("OX", ["okey", "ckey", "x"], [(f"o{i}", f"c{rng.randrange(100)}", rng.randrange(61)) for i in range(1000)])
fk2 = JoinQuery([skewed, customers], [JoinEdge(("OX", "ckey"), ("C", "ckey"))], "OX", WeightSpec({("OX", "x"): Power(2.0)}))
try:
    fk_economic_sample(validate(fk2), 2000, seed=3)
except AcceptanceStall as exc:
    print("stalled:", exc)
s = sample_plan(validate(fk2), 2000, seed=3, method="fk_economic")
print("ran as", s.method, "after", s.stats["fallback_from"])


# ## Hash-relaxed key join
#
# Joining on h(key) instead of key keeps at most u labels per edge. The price
# is superfluous rows from hash collisions, which are purged after sampling.

# In[4]:

keys = [f"k{i}" for i in range(1000)]
t1 = make("T1", ["k", "w"], [(k, rng.randint(1, 5)) for k in keys])
t2 = make("T2", ["k", "w"], [(k, rng.randint(1, 5)) for k in rng.sample(keys, len(keys))])
kj = JoinQuery([t1, t2], [JoinEdge(("T1", "k"), ("T2", "k"))], "T1", WeightSpec())
plan = validate(kj)
u = 256
extra = [join_size(plan, MultiplyShift(u, seed)) - join_size(plan) for seed in range(5)]
print("superfluous rows per hash function:", extra, " bound:", superfluous_bound(1000, u, 2))

s = hashed_join_sample(plan, 20_000, seed=5, config=HashedJoinConfig(universe=u))
print(f"purge rate {s.stats['purge_rate']:.3f}, oversample {s.stats['oversample']:.2f}, "
      f"index entries {s.stats['index_entries']}")
print("chi-square p:", round(compare_distributions(s, enumerate_join(plan)).pvalue, 3))


# ## Triangles
#
# The cycle E1 -> E2 -> E3 -> E1 is cut at one edge. Sampling runs on the
# remaining path, and the cut edge is checked on every drawn row.

# In[5]:

arcs = [(f"v{i}", f"v{j}") for i in range(25) for j in range(25) if i != j and rng.random() < 0.3]
edges_tables = [make(n, ["src", "dst"], arcs) for n in ("E1", "E2", "E3")]
tri = JoinQuery(edges_tables, [JoinEdge(("E1", "dst"), ("E2", "src")), JoinEdge(("E2", "dst"), ("E3", "src")),
                               JoinEdge(("E3", "dst"), ("E1", "src"))], "E1", WeightSpec())
plan = validate(tri)
print("residual predicate:", plan.residuals)
s = cyclic_sample(plan, 5000, seed=2)
enum = enumerate_join(tri)
print(f"{len(enum)} triangles; acceptance {s.stats['acceptance_rate']:.4f} "
      f"vs selectivity {enum.total / s.stats['population_weight']:.4f}")
print("chi-square p:", round(compare_distributions(s, enum).pvalue, 3))
