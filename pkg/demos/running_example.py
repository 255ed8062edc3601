# coding: utf-8

# # Weighted sampling over a six-way join
#
# We build a small outer/semi/inner join over six tables, look at the weights
# the sampler computes for every main-table row, draw a sample and check it
# against a brute-force enumeration of the join.
#
# Run from the repository root: `python3 demos/running_example.py`

# In[1]:

import os
import tempfile

import numpy as np

from joinsample import gof
from joinsample.ingest import PassCounter, write_table
from joinsample.joinindex import build_indexes, group_weights
from joinsample.model import Identity, JoinEdge, JoinQuery, TableRef, WeightSpec, validate
from joinsample.multinomial import make_rng
from joinsample.oracle import compare_distributions, enumerate_join, event_indices
from joinsample.pipeline import stream_sample


# Every table is a CSV file with a header. The `w` column of each table is its
# row weight, and a NULL row of a table weighs `null_weight`.

# In[2]:

work = tempfile.mkdtemp(prefix="joinsample-demo-")

def make(name, columns, rows, null_weight=1.0):
    path = os.path.join(work, f"{name}.csv")
    write_table(path, columns, rows)
    return TableRef(name, path, tuple(columns), null_weight)

ab = make("AB", ["A", "B", "w"], [("a1", "b1", 3), ("a1", "b2", 1), ("a3", "b3", 2), ("a2", "b4", 5), ("a5", "b9", 1)], 2.0)
fa = make("FA", ["F", "A", "w"], [("f1", "a1", 2), ("f2", "a2", 1), ("f3", "a2", 4), ("f4", "a4", 3)], 1.5)
bc = make("BC", ["B", "C", "w"], [("b1", "c1", 1), ("b2", "c1", 3), ("b3", "c2", 2), ("b3", "c3", 1), ("b4", "c3", 6)], 0.5)
cd = make("CD", ["C", "D", "w"], [("c1", "d1", 1), ("c2", "d2", 2), ("c2", "d3", 1), ("c4", "d4", 1)])
bg = make("BG", ["B", "G", "w"], [("b1", "g1", 1), ("b2", "g2", 2), ("b3", "g1", 3), ("b4", "g3", 1), ("b9", "g1", 1)])
gh = make("GH", ["G", "H", "w"], [("g1", "h1", 2), ("g2", "h2", 1), ("g3", "h3", 4)])
tables = [ab, fa, bc, cd, bg, gh]


# FA is full-outer joined to AB, BC is left-outer joined, CD only filters BC
# (semi join), BG and GH are plain inner joins. AB is the main table.

# In[3]:

query = JoinQuery(
    tables,
    [
        JoinEdge(("FA", "A"), ("AB", "A"), "full-outer"),
        JoinEdge(("AB", "B"), ("BC", "B"), "left-outer"),
        JoinEdge(("BC", "C"), ("CD", "C"), "semi"),
        JoinEdge(("AB", "B"), ("BG", "B")),
        JoinEdge(("BG", "G"), ("GH", "G")),
    ],
    "AB",
    WeightSpec({(t.name, "w"): Identity() for t in tables}),
)
plan = validate(query)
for e in plan.top_down():
    print(f"{e.parent:>3} -> {e.child:<3} {e.operator:<11} on {e.parent_cols} {e.comparison} {e.child_cols}")
print("columns in the output:", plan.reachable)


# The indexes are built bottom-up, one scan per table. Each label is the total
# weight hanging below a join value.

# In[4]:

indexes = build_indexes(plan)
for child, ix in indexes.items():
    print(f"{child}: default {ix.default_label}, labels {dict(sorted(ix.labels.items()))}")


# A main row's group weight is its own weight times one lookup per child edge.
# The NULL main row (created by the full outer join with FA) gets a group too.

# In[5]:

groups, null_group = group_weights(plan, indexes)
print("group weights:", groups, " NULL main row:", null_group)

enum = enumerate_join(plan)
print(f"brute force: {len(enum)} join rows, total weight {enum.total}")
print("sum of group weights:", sum(groups.values()) + null_group)


# Now draw 10^5 join rows. The main table is scanned once, every other table at
# most twice.

# In[6]:

counter = PassCounter()
sample = stream_sample(plan, 100_000, seed=42, counter=counter)
print("passes per table:", counter.as_dict())
print(sample.header())
for rec in list(sample.records())[:5]:
    print(rec)


# Compare the sample frequencies with the exact probabilities.

# In[7]:

chi = compare_distributions(sample, enum)
print(f"chi-square {chi.statistic:.1f} on {chi.dof} dof, p = {chi.pvalue:.3f}")

idx = event_indices(sample, enum) - 1
freq = np.bincount(idx, minlength=len(enum)) / len(idx)
worst = np.argmax(np.abs(freq - enum.probabilities))
print(f"largest gap: row {worst}, sampled {freq[worst]:.4f} vs exact {enum.probabilities[worst]:.4f}")


# The same check as a KS test: add a uniform offset to each event index and
# compare with the piecewise-linear reference CDF. A correct sampler is still
# rejected at level alpha in about a fraction alpha of runs.

# In[8]:

cdf = gof.ReferenceCdf.from_weights(enum.weights)
values = gof.continuous_convert(event_indices(sample, enum), make_rng(7), cdf.support)
report = gof.ks_report(values, cdf)
print(f"D = {report.d:.5f}")
for alpha, crit in report.critical.items():
    print(f"  alpha {alpha}: critical {crit:.5f} -> {'pass' if report.passed[alpha] else 'reject'}")
