"""Command-line entry point.

Exit codes: 0 ok, 2 input error, 3 configuration error, 4 internal
cross-check failure.
"""

from __future__ import annotations

import argparse
import csv
import math
import os
import sys
from pathlib import Path

from . import dtree as dt
from .mapmpe import HypothesisOverflow, HypothesisSet, MapDtreeError, rc_map, rc_mpe
from .netio import ParseError, parse_evidence, parse_names, parse_network, parse_order
from .rc import (
    CacheFactor, Session, exact_calls_check, full_cache_cells, predicted_calls,
    rc_query, rc_query_forgetting, tradeoff_curve,
)
from .ve import REPORT_HEADER, memory_report, ve_prob

INPUT_ERROR, CONFIG_ERROR, CHECK_FAILED = 2, 3, 4


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _read(path: str, what: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise CliError(f"cannot read {what} file {path!r}: {exc.strerror}", INPUT_ERROR) from None


def _load(args):
    net = parse_network(_read(args.network, "network"))
    order = parse_order(_read(args.order, "order"), net)
    evidence = parse_evidence(getattr(args, "evidence", "") or "", net)
    return net, order, evidence


def _cache_factor(spec: str, tree: dt.Dtree, seed: int) -> CacheFactor:
    if spec == "full":
        return CacheFactor.full(tree, seed)
    if spec == "none":
        return CacheFactor.none(tree, seed)
    if spec.startswith("frac="):
        try:
            f = float(spec[5:])
        except ValueError:
            raise CliError(f"bad cache fraction {spec[5:]!r}", CONFIG_ERROR) from None
        if not 0.0 <= f <= 1.0:
            raise CliError(f"cache fraction {f} outside [0, 1]", CONFIG_ERROR)
        return CacheFactor.uniform(tree, f, seed)
    # per-node file: "<node-id> <fraction>" per line
    values = {}
    for lineno, line in enumerate(_read(spec, "cache factor").splitlines(), start=1):
        words = line.split("#", 1)[0].split()
        if not words:
            continue
        try:
            nid, f = int(words[0]), float(words[1])
        except (ValueError, IndexError):
            raise CliError(f"{spec}:{lineno}: expected '<node> <fraction>'", INPUT_ERROR) from None
        values[nid] = f
    cf = CacheFactor(values, seed)
    try:
        cf.check(tree)
    except ValueError as exc:
        raise CliError(str(exc), CONFIG_ERROR) from None
    return cf


def _build(args, net, order, sdt: bool | None = None) -> dt.Dtree:
    if sdt is None:
        sdt = getattr(args, "sdt", False)
    try:
        return dt.el2sdt(net, order) if sdt else dt.el2dt(net, order)
    except ValueError as exc:
        raise CliError(str(exc), INPUT_ERROR) from None


def _writer():
    return csv.writer(sys.stdout, lineterminator="\n")


def _fmt(x: float) -> str:
    return f"{x:.12g}"


def cmd_prob(args) -> int:
    net, order, evidence = _load(args)
    tree = _build(args, net, order)
    cf = _cache_factor(args.cache, tree, args.seed)
    if args.forget and not cf.is_discrete:
        raise CliError("--forget needs a discrete cache factor (full, none or a 0/1 file)", CONFIG_ERROR)
    if args.forget and args.fast:
        raise CliError("--forget and --fast cannot be combined", CONFIG_ERROR)
    s = Session(tree, cf)
    if args.forget:
        p, _ = rc_query_forgetting(s, evidence)
    else:
        p = rc_query(s, evidence, fast=args.fast)
    if args.format == "csv":
        w = _writer()
        w.writerow(["probability", "peak_cells"])
        w.writerow([_fmt(p), s.peak_cells])
        if args.stats:
            w.writerow([])
            w.writerow(["node", "calls", "hits", "misses", "cached", "evicted"])
            for i, st in enumerate(s.stats):
                w.writerow([i, st.calls, st.hits, st.misses, st.cached, st.evicted])
    else:
        print(f"p={_fmt(p)}")
        print(f"peak_cells={s.peak_cells}")
        if args.stats:
            print(s.dump_stats())
    return 0


def _print_hypotheses(args, hs: HypothesisSet, net) -> None:
    if args.format == "csv":
        w = _writer()
        w.writerow(["p", *(net.variables[v].name for v in hs.scope)])
        for values, p in hs.entries:
            w.writerow([_fmt(p), *(net.variables[v].labels[x] for v, x in zip(hs.scope, values))])
    else:
        print("\n".join(hs.lines(net)))


def _run_hypotheses(args, query) -> HypothesisSet:
    try:
        hs = query()
    except HypothesisOverflow as exc:
        raise CliError(f"{exc}; rerun with --single or a larger --cap", CONFIG_ERROR) from None
    except MapDtreeError as exc:
        raise CliError(str(exc), CHECK_FAILED) from None
    return hs


def cmd_mpe(args) -> int:
    net, order, evidence = _load(args)
    tree = _build(args, net, order, sdt=True)
    s = Session(tree, _cache_factor(args.cache, tree, args.seed))
    hs = _run_hypotheses(args, lambda: rc_mpe(s, evidence, single=args.single, cap=args.cap))
    _print_hypotheses(args, hs, net)
    return 0


def cmd_map(args) -> int:
    net, order, evidence = _load(args)
    map_vars = parse_names(args.map, net)
    if not map_vars:
        raise CliError("map needs at least one variable (-m)", CONFIG_ERROR)
    clash = set(map_vars) & set(evidence)
    if clash:
        names = " ".join(net.variables[v].name for v in sorted(clash))
        raise CliError(f"MAP variables also carry evidence: {names}", CONFIG_ERROR)
    m = set(map_vars)
    reordered = [v for v in order if v not in m] + [v for v in order if v in m]
    if reordered != order:
        names = " ".join(net.variables[v].name for v in reordered)
        print(f"warning: reordered elimination order to eliminate MAP variables last: {names}", file=sys.stderr)
    tree = _build(args, net, reordered, sdt=True)
    s = Session(tree, _cache_factor(args.cache, tree, args.seed))
    hs = _run_hypotheses(args, lambda: rc_map(s, map_vars, evidence, single=args.single, cap=args.cap))
    _print_hypotheses(args, hs, net)
    return 0


def cmd_predict(args) -> int:
    net, order, evidence = _load(args)
    tree = _build(args, net, order)
    cf = _cache_factor(args.cache, tree, args.seed)
    ave = predicted_calls(tree, cf)
    total = sum(ave)
    if args.format == "csv":
        w = _writer()
        w.writerow(["node", "predicted_calls"])
        for i, a in enumerate(ave):
            w.writerow([i, _fmt(a)])
        w.writerow(["total", _fmt(total)])
    else:
        for i, a in enumerate(ave):
            print(f"node={i} ave={_fmt(a)}")
        print(f"total={_fmt(total)}")
    if args.verify:
        if not cf.is_discrete or evidence:
            raise CliError("--verify needs a discrete cache factor and no evidence", CONFIG_ERROR)
        s = Session(tree, cf)
        rc_query(s)
        actual = exact_calls_check(s)
        wrong = [i for i, (a, b) in enumerate(zip(ave, actual)) if a != b]
        if wrong:
            raise CliError(f"call counts differ from prediction at nodes {wrong}", CHECK_FAILED)
        print("verify=ok", file=sys.stderr)
    return 0


def _budgets(text: str, tree) -> list[int]:
    out = []
    for tok in text.replace(",", " ").split():
        if tok == "max":
            out.append(full_cache_cells(tree))
            continue
        try:
            out.append(int(tok))
        except ValueError:
            raise CliError(f"bad budget {tok!r}", CONFIG_ERROR) from None
    if any(b < 0 for b in out) or out != sorted(out):
        raise CliError("budgets must be nonnegative and ascending", CONFIG_ERROR)
    return out


def cmd_curve(args) -> int:
    net, order, _ = _load(args)
    tree = _build(args, net, order)
    budgets = _budgets(args.budgets, tree)
    w = _writer()
    w.writerow(["budget_cells", "predicted_calls"])
    for point in tradeoff_curve(tree, budgets, args.seed):
        w.writerow([point.budget, _fmt(point.predicted_calls)])
    return 0


def cmd_compare(args) -> int:
    net, order, evidence = _load(args)
    if evidence:
        raise CliError("compare measures the evidence-free case; drop -e", CONFIG_ERROR)
    tree = _build(args, net, order)
    ve = ve_prob(net, order)
    p, rc_cells = rc_query_forgetting(Session(tree, CacheFactor.full(tree, args.seed)))
    if not math.isclose(p, ve.result, rel_tol=1e-9, abs_tol=0.0) and not (p == ve.result == 0.0):
        raise CliError(f"RC gives {p!r} but VE gives {ve.result!r}", CHECK_FAILED)
    name = args.name or Path(args.network).stem
    w = _writer()
    w.writerow(REPORT_HEADER)
    w.writerow(memory_report(ve, rc_cells).row(name))
    return 0


def cmd_dtree(args) -> int:
    net, order, _ = _load(args)
    tree = _build(args, net, order, sdt=not args.dt)
    print(dt.dump(tree))
    width, owidth = dt.dtree_width(tree), dt.order_width(net, order)
    print(f"width(dtree)={width}")
    print(f"width(order)={owidth}")
    for k, ok in dt.sdt_properties(tree, order).items():
        print(f"property {k}: {'pass' if ok else 'fail'}")
    if width > owidth:
        raise CliError("dtree is wider than its elimination order", CHECK_FAILED)
    return 0


def _default_seed() -> int:
    try:
        return int(os.environ.get("ANYSPACE_SEED", "0"))
    except ValueError:
        return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="anyspace", description="Any-space exact inference by recursive conditioning.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, evidence=True, cache=True):
        p.add_argument("-n", "--network", required=True, help="network file")
        p.add_argument("-o", "--order", required=True, help="elimination order file")
        if evidence:
            p.add_argument("-e", "--evidence", default="", help="name=label[,name=label]*")
        if cache:
            p.add_argument("--cache", default="full", help="full | none | frac=<f> | per-node file")
        p.add_argument("--seed", type=int, default=_default_seed(), help="cache admission seed")
        p.add_argument("--format", choices=("text", "csv"), default="text")

    def shape(p):
        g = p.add_mutually_exclusive_group()
        g.add_argument("--dt", action="store_true", help="plain el2dt dtree (default)")
        g.add_argument("--sdt", action="store_true", help="el2sdt dtree with singleton cutsets")

    p = sub.add_parser("prob", help="probability of evidence")
    common(p)
    shape(p)
    p.add_argument("--forget", action="store_true", help="evict cache entries after their last lookup")
    p.add_argument("--stats", action="store_true", help="print per-node counters")
    p.add_argument("--fast", action="store_true", help="skip the right child when the left is zero")
    p.set_defaults(func=cmd_prob)

    for name, func, helptext in (("mpe", cmd_mpe, "most probable explanation"), ("map", cmd_map, "maximum a posteriori hypotheses")):
        p = sub.add_parser(name, help=helptext)
        common(p)
        if name == "map":
            p.add_argument("-m", "--map", required=True, help="MAP variables, comma separated")
        p.add_argument("--single", action="store_true", help="report one hypothesis only")
        p.add_argument("--cap", type=int, default=1024, help="maximum number of tied hypotheses")
        p.set_defaults(func=func)

    p = sub.add_parser("predict", help="predicted recursive calls per node")
    common(p)
    shape(p)
    p.add_argument("--verify", action="store_true", help="run the query and check the counts")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("curve", help="time-space tradeoff curve as CSV")
    common(p, evidence=False, cache=False)
    shape(p)
    p.add_argument("--budgets", default="", help="ascending cell budgets, e.g. 0,16,max")
    p.set_defaults(func=cmd_curve)

    p = sub.add_parser("compare", help="peak memory of RC with forgetting against VE")
    common(p, cache=False)
    shape(p)
    p.add_argument("--name", default="", help="network name for the report row")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("dtree", help="dump a dtree and check its structural properties")
    common(p, evidence=False, cache=False)
    shape(p)
    p.set_defaults(func=cmd_dtree)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except ParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return INPUT_ERROR
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return CONFIG_ERROR


if __name__ == "__main__":
    sys.exit(main())
