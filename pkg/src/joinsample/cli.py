"""Command line: ``joinsample {sample,validate,oracle} SPEC``.

Exit codes: 0 success, 2 spec error, 3 data error, 4 statistical stall,
5 oracle size guard. Errors are reported on stderr as one JSON object with
``error`` (category) and ``message``.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from dataclasses import asdict, dataclass, field
from typing import Optional

from . import gof
from .errors import JoinSampleError
from .ingest import PassCounter
from .model import load_query, validate
from .multinomial import make_rng, spawn
from .oracle import corrupted_multinomial, enumerate_join, event_indices
from .pipeline import HashedJoinConfig, sample
from .sampleset import SampleSet

log = logging.getLogger("joinsample")


@dataclass
class RunReport:
    method: str
    seed: int
    n: int
    passes: dict = field(default_factory=dict)
    index_entries: int = 0
    acceptance_rate: Optional[float] = None
    purge_rate: Optional[float] = None
    wall_time: float = 0.0
    extra: dict = field(default_factory=dict)

    @classmethod
    def of(cls, s: SampleSet, wall: float) -> "RunReport":
        stats = dict(s.stats)
        return cls(s.method, int(s.seed or 0), len(s), dict(sorted(s.passes.items())),
                   int(stats.pop("index_entries", 0) or 0),
                   stats.pop("acceptance_rate", None), stats.pop("purge_rate", None),
                   round(wall, 6), {k: v for k, v in stats.items() if _jsonable(v)})


def _jsonable(v) -> bool:
    try:
        json.dumps(v)
        return True
    except TypeError:
        return False


def _open_out(path: Optional[str]):
    if path is None or path == "-":
        return sys.stdout, False
    return open(path, "w", newline="", encoding="utf-8"), True


def _emit_report(obj: dict, path: Optional[str]) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True)
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        print(text, file=sys.stderr)


def _query(args):
    q = load_query(args.spec)
    if args.n is not None:
        q.n = args.n
    if args.seed is not None:
        q.seed = args.seed
    if getattr(args, "method", None):
        q.method = args.method
    return q


def cmd_sample(args) -> int:
    q = _query(args)
    hashed = HashedJoinConfig(universe=args.universe) if args.universe else None
    method = "hashed_join" if args.universe and q.method == "stream" else q.method
    counter = PassCounter()
    t0 = time.perf_counter()
    s = sample(q, method=method, hashed=hashed, temp_dir=args.temp_dir, counter=counter)
    wall = time.perf_counter() - t0
    out, close = _open_out(args.output)
    try:
        w = csv.writer(out, delimiter="\t", lineterminator="\n")
        w.writerow(s.header())
        w.writerows(s.records())
    finally:
        if close:
            out.close()
    _emit_report(asdict(RunReport.of(s, wall)), args.report)
    return 0


def cmd_validate(args) -> int:
    q = _query(args)
    enum = enumerate_join(q)
    if len(enum) == 0:
        log.warning("the join is empty; nothing to validate")
        _emit_report({"runs": [], "pass_fraction": None}, args.report)
        return 0
    cdf = gof.ReferenceCdf.from_weights(enum.weights)
    runs = []
    seeds = [q.seed + i for i in range(args.validate_runs)]
    for seed in seeds:
        if args.corrupt:
            s = corrupted_multinomial(enum, q.n, seed)
        else:
            s = sample(q, seed=seed, temp_dir=args.temp_dir)
        events = event_indices(s, enum)
        (conv,) = spawn(seed, 1)
        values = gof.continuous_convert(events, make_rng(conv), cdf.support)
        rep = gof.ks_report(values, cdf, sorted(set(gof.ALPHAS) | {args.alpha}))
        runs.append({"seed": seed, **rep.as_dict(), "pass_at_alpha": rep.passed[args.alpha]})
    frac = sum(r["pass_at_alpha"] for r in runs) / len(runs)
    _emit_report({"alpha": args.alpha, "n": q.n, "method": "corrupted" if args.corrupt else q.method,
                  "events": len(enum), "runs": runs, "pass_fraction": frac}, args.report)
    print(f"KS pass fraction at alpha={args.alpha}: {frac:.3f} over {len(runs)} runs")
    return 0


def cmd_oracle(args) -> int:
    q = _query(args)
    enum = enumerate_join(q)
    if len(enum) == 0:
        log.warning("the join is empty")
    total = enum.total
    out, close = _open_out(args.output)
    try:
        w = csv.writer(out, delimiter="\t", lineterminator="\n")
        w.writerow([f"{t}.{c}" for t in enum.tables for c in enum.columns[t]] + ["weight", "probability"])
        for tree, weight in zip(enum.trees, enum.weights.tolist()):
            row = []
            for t, o in zip(enum.tables, tree):
                row.extend([""] * len(enum.columns[t]) if o < 0 else enum.rows[t][o])
            w.writerow(row + [repr(weight), repr(weight / total)])
    finally:
        if close:
            out.close()
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="joinsample", description="Weighted random sampling over joins.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("spec", help="JSON query spec")
        sp.add_argument("--n", type=int, help="sample size (overrides the spec)")
        sp.add_argument("--seed", type=int, help="random seed (overrides the spec)")
        sp.add_argument("--temp-dir", help="directory for merged tables")
        sp.add_argument("--report", help="write the JSON report here instead of stderr")

    s = sub.add_parser("sample", help="draw a weighted sample of join rows")
    common(s)
    s.add_argument("--method", choices=("stream", "economic", "auto", "fk_economic", "hashed_join", "cyclic"))
    s.add_argument("--universe", type=int, help="hash universe size (power of two) for the hashed join")
    s.add_argument("-o", "--output", help="output file (default stdout)")
    s.set_defaults(func=cmd_sample)

    v = sub.add_parser("validate", help="KS-test the sampler against the exact join distribution")
    common(v)
    v.add_argument("--method", choices=("stream", "economic", "auto", "fk_economic", "hashed_join", "cyclic"))
    v.add_argument("--validate-runs", type=int, default=10)
    v.add_argument("--alpha", type=float, default=0.01)
    v.add_argument("--corrupt", action="store_true", help=argparse.SUPPRESS)
    v.set_defaults(func=cmd_validate)

    o = sub.add_parser("oracle", help="enumerate the join with exact weights")
    common(o)
    o.add_argument("-o", "--output", help="output file (default stdout)")
    o.set_defaults(func=cmd_oracle)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except JoinSampleError as exc:
        print(json.dumps({"error": exc.category, "message": str(exc)}), file=sys.stderr)
        return exc.exit_code
    except ValueError as exc:
        print(json.dumps({"error": "SpecError", "message": str(exc)}), file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
