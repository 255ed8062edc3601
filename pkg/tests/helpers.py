"""Fixture builders shared by the test modules."""
from __future__ import annotations

import os
import random

import numpy as np

from joinsample.ingest import write_table
from joinsample.model import Constant, Identity, JoinEdge, JoinQuery, TableRef, WeightSpec


def table(dirpath, name, columns, rows, null_weight=1.0) -> TableRef:
    path = os.path.join(str(dirpath), f"{name}.csv")
    write_table(path, columns, rows)
    return TableRef(name, path, tuple(columns), null_weight)


def f1(dirpath, op="inner") -> JoinQuery:
    """AB(A,B,w) joined to BC(B,C,w) on B; five join rows weighing 14, 2, 21, 3, 20."""
    ab = table(dirpath, "AB", ["A", "B", "w"], [("a1", "b1", 2), ("a2", "b1", 3), ("a3", "b2", 5)])
    bc = table(dirpath, "BC", ["B", "C", "w"], [("b1", "c1", 7), ("b1", "c2", 1), ("b2", "c1", 4)])
    weights = WeightSpec({("AB", "w"): Identity(), ("BC", "w"): Identity()})
    return JoinQuery([ab, bc], [JoinEdge(("AB", "B"), ("BC", "B"), op)], "AB", weights)


def six_table(dirpath, extra: bool = True, seed: int = 0) -> JoinQuery:
    """(FA full AB left BC semi CD) inner BG inner GH, main AB.

    The first four rows of every table are fixed by hand; ``extra`` adds
    deterministic random rows of the same shape (B is a key of BC and BG, G a
    key of GH) so the join has a few hundred rows.
    """
    rng = random.Random(seed)
    ab_rows = [("a1", "b1", 3), ("a1", "b2", 1), ("a3", "b3", 2), ("a2", "b4", 5)]
    fa_rows = [("f1", "a1", 2), ("f2", "a2", 1), ("f3", "a2", 4), ("f4", "a4", 3)]
    bc_rows = [("b1", "c1", 1), ("b2", "c1", 3), ("b3", "c2", 2), ("b4", "c3", 6)]
    cd_rows = [("c1", "d1", 1), ("c2", "d2", 2), ("c2", "d3", 1), ("c4", "d4", 1)]
    bg_rows = [("b1", "g1", 1), ("b2", "g2", 2), ("b3", "g1", 3), ("b4", "g3", 1)]
    gh_rows = [("g1", "h1", 2), ("g2", "h2", 1), ("g3", "h3", 4)]
    if extra:
        ab_rows += [(f"a{rng.randint(1, 8)}", f"b{rng.randint(1, 10)}", rng.randint(0, 5)) for _ in range(30)]
        fa_rows += [(f"f{i}", f"a{rng.randint(1, 9)}", rng.randint(1, 4)) for i in range(5, 25)]
        # b9 has no BC row, so AB rows with b9 are null-extended
        bc_rows += [(f"b{i}", f"c{rng.randint(1, 6)}", rng.randint(1, 6)) for i in (5, 6, 7, 8, 10)]
        cd_rows += [(f"c{rng.randint(1, 5)}", f"d{i}", 1) for i in range(5, 10)]
        bg_rows += [(f"b{i}", f"g{rng.randint(1, 4)}", rng.randint(1, 3)) for i in range(5, 11)]
        gh_rows += [("g4", "h4", 3)]
    ab = table(dirpath, "AB", ["A", "B", "w"], ab_rows, null_weight=2.0)
    fa = table(dirpath, "FA", ["F", "A", "w"], fa_rows, null_weight=1.5)
    bc = table(dirpath, "BC", ["B", "C", "w"], bc_rows, null_weight=0.5)
    cd = table(dirpath, "CD", ["C", "D", "w"], cd_rows)
    bg = table(dirpath, "BG", ["B", "G", "w"], bg_rows)
    gh = table(dirpath, "GH", ["G", "H", "w"], gh_rows)
    tables = [ab, fa, bc, cd, bg, gh]
    weights = WeightSpec({(t.name, "w"): Identity() for t in tables})
    edges = [
        JoinEdge(("FA", "A"), ("AB", "A"), "full-outer"),
        JoinEdge(("AB", "B"), ("BC", "B"), "left-outer"),
        JoinEdge(("BC", "C"), ("CD", "C"), "semi"),
        JoinEdge(("AB", "B"), ("BG", "B")),
        JoinEdge(("BG", "G"), ("GH", "G")),
    ]
    return JoinQuery(tables, edges, "AB", weights)


def triangle(dirpath, nodes=50, p=0.3, seed=0) -> JoinQuery:
    """Directed triangles a->b->c->a over one random digraph stored three times."""
    rng = random.Random(seed)
    arcs = [(f"v{i}", f"v{j}") for i in range(nodes) for j in range(nodes) if i != j and rng.random() < p]
    tables = [table(dirpath, name, ["src", "dst"], arcs) for name in ("E1", "E2", "E3")]
    edges = [
        JoinEdge(("E1", "dst"), ("E2", "src")),
        JoinEdge(("E2", "dst"), ("E3", "src")),
        JoinEdge(("E3", "dst"), ("E1", "src")),
    ]
    return JoinQuery(tables, edges, "E1", WeightSpec())


def fk_chain(dirpath, rows=2000, weights="equal", seed=0) -> JoinQuery:
    """Orders -> customers -> nations, each order with exactly one customer.

    ``weights``: ``equal``; ``linear`` (order weight spread evenly over
    (0, 2), so max/mean = 2); ``exponential`` (``2^x`` with x up to 200).
    """
    rng = random.Random(seed)
    nations = [(f"n{i}", f"name{i}") for i in range(5)]
    customers = [(f"c{i}", f"n{rng.randrange(5)}") for i in range(200)]
    orders = []
    for i in range(rows):
        if weights == "linear":
            x = (i % 1000 + 0.5) / 500
        elif weights == "exponential":
            x = rng.randrange(201)
        else:
            x = 1
        orders.append((f"o{i}", f"c{rng.randrange(200)}", repr(float(x))))
    t_o = table(dirpath, "O", ["okey", "ckey", "x"], orders)
    t_c = table(dirpath, "C", ["ckey", "nkey"], customers)
    t_n = table(dirpath, "N", ["nkey", "name"], nations)
    if weights == "exponential":
        from joinsample.model import Power
        spec = WeightSpec({("O", "x"): Power(2.0)})
    elif weights == "linear":
        spec = WeightSpec({("O", "x"): Identity()})
    else:
        spec = WeightSpec()
    edges = [JoinEdge(("O", "ckey"), ("C", "ckey")), JoinEdge(("C", "nkey"), ("N", "nkey"))]
    return JoinQuery([t_o, t_c, t_n], edges, "O", spec)


def key_join(dirpath, rows=1000, seed=0) -> JoinQuery:
    """Two tables with unique, identical key sets (a 1:1 key join)."""
    rng = random.Random(seed)
    keys = [f"k{i}" for i in range(rows)]
    left = [(k, rng.randint(1, 5)) for k in keys]
    shuffled = keys[:]
    rng.shuffle(shuffled)
    right = [(k, rng.randint(1, 5)) for k in shuffled]
    t1 = table(dirpath, "T1", ["k", "w"], left)
    t2 = table(dirpath, "T2", ["k", "w"], right)
    spec = WeightSpec({("T1", "w"): Identity(), ("T2", "w"): Identity()})
    return JoinQuery([t1, t2], [JoinEdge(("T1", "k"), ("T2", "k"))], "T1", spec)


# -- random acyclic fixtures ------------------------------------------------------

_EDGE_KINDS = [
    ("inner", "="), ("left-outer", "="), ("right-outer", "="), ("full-outer", "="),
    ("semi", "="), ("anti", "="), ("inner", "<"), ("inner", "!="), ("inner", ">="),
]


def random_fixture(dirpath, rng: random.Random, max_tables=6, max_rows=40, domain=6) -> JoinQuery:
    """A random join tree with mixed operators, small value domains and zero weights.

    Parent-nullable operators are only placed on edges of the main table.
    Values are small integers so ordered comparisons apply everywhere; some
    cells are empty (NULL).
    """
    k = rng.randint(2, max_tables)
    names = [f"T{i}" for i in range(k)]
    tables = []
    for name in names:
        nrows = rng.randint(0, max_rows) if rng.random() < 0.1 else rng.randint(1, max_rows)
        rows = []
        for r in range(nrows):
            x = "" if rng.random() < 0.05 else str(rng.randrange(domain))
            y = "" if rng.random() < 0.05 else str(rng.randrange(domain))
            w = rng.choice([0, 1, 2, 3, 0.5, 7]) if rng.random() < 0.9 else 0
            rows.append((f"{name}r{r}", x, y, w))
        nw = rng.choice([0.0, 1.0, 2.5])
        tables.append(table(dirpath, name, ["id", "x", "y", "w"], rows, null_weight=nw))
    edges = []
    for i in range(1, k):
        parent = names[rng.randrange(i)]
        child = names[i]
        op, cmp = rng.choice(_EDGE_KINDS)
        if op in ("right-outer", "full-outer") and parent != names[0]:
            op = "left-outer" if op == "full-outer" else "inner"
        pc, cc = rng.choice("xy"), rng.choice("xy")
        if rng.random() < 0.5 and op in ("inner", "full-outer"):
            # declare from the child's side; validation flips it
            edges.append(JoinEdge((child, cc), (parent, pc), op,
                                  {"<": ">", ">": "<", "<=": ">=", ">=": "<="}.get(cmp, cmp)))
        else:
            edges.append(JoinEdge((parent, pc), (child, cc), op, cmp))
    weights = WeightSpec({(t.name, "w"): Identity() for t in tables})
    return JoinQuery(tables, edges, names[0], weights)


def frequencies(sample, enum) -> np.ndarray:
    from joinsample.oracle import event_indices

    idx = event_indices(sample, enum) - 1
    return np.bincount(idx, minlength=len(enum)) / len(idx)


def write_spec(dirpath, doc: dict, name="q.json") -> str:
    import json

    path = os.path.join(str(dirpath), name)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
    return path


def f1_spec(dirpath, op="inner", n=5, seed=0) -> str:
    """F1 on disk plus a JSON spec pointing at it."""
    f1(dirpath, op)
    return write_spec(dirpath, {
        "tables": [{"name": "AB", "path": "AB.csv"}, {"name": "BC", "path": "BC.csv"}],
        "joins": [{"left": "AB.B", "right": "BC.B", "op": op}],
        "main": "AB",
        "weights": {"AB.w": "identity", "BC.w": "identity"},
        "sample": {"n": n, "seed": seed},
    })


def many_to_many(dirpath, rows=500, domain=50, seed=0) -> JoinQuery:
    """Two weighted tables over a shared small key domain (a few thousand join rows)."""
    rng = random.Random(seed)

    def make():
        return [(f"k{rng.randrange(domain)}", rng.randint(1, 9)) for _ in range(rows)]

    left = table(dirpath, "L", ["k", "w"], make())
    right = table(dirpath, "R", ["k", "w"], make())
    spec = WeightSpec({("L", "w"): Identity(), ("R", "w"): Identity()})
    return JoinQuery([left, right], [JoinEdge(("L", "k"), ("R", "k"))], "L", spec)


def six_table_spec(dirpath, n=1000, seed=0) -> str:
    six_table(dirpath)
    nulls = {"AB": 2.0, "FA": 1.5, "BC": 0.5}
    return write_spec(dirpath, {
        "tables": [{"name": t, "path": f"{t}.csv", "null_weight": nulls.get(t, 1.0)}
                   for t in ("AB", "FA", "BC", "CD", "BG", "GH")],
        "joins": [
            {"left": "FA.A", "right": "AB.A", "op": "full-outer"},
            {"left": "AB.B", "right": "BC.B", "op": "left-outer"},
            {"left": "BC.C", "right": "CD.C", "op": "semi"},
            {"left": "AB.B", "right": "BG.B"},
            {"left": "BG.G", "right": "GH.G"},
        ],
        "main": "AB",
        "weights": {f"{t}.w": "identity" for t in ("AB", "FA", "BC", "CD", "BG", "GH")},
        "sample": {"n": n, "seed": seed},
    })
